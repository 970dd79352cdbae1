#pragma once

// Independent BLEU-4 reference: n-grams keyed by joined strings, n-major loop
// order, sentence-inner accumulation. Same definition, different mechanics.

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

namespace testutil {

inline double reference_bleu(const std::vector<std::vector<std::string>>& refs,
                             const std::vector<std::vector<std::string>>& hyps, bool smooth) {
    auto grams = [](const std::vector<std::string>& toks, int n) {
        std::unordered_map<std::string, long long> m;
        for (int i = 0; i + n <= static_cast<int>(toks.size()); ++i) {
            std::string key;
            for (int j = 0; j < n; ++j) {
                key += toks[static_cast<size_t>(i + j)];
                key += '\x1f';
            }
            ++m[key];
        }
        return m;
    };
    double logp = 0;
    for (int n = 1; n <= 4; ++n) {
        double num = 0, den = 0;
        for (size_t s = 0; s < hyps.size(); ++s) {
            auto hg = grams(hyps[s], n);
            auto rg = grams(refs[s], n);
            for (auto& [k, c] : hg) {
                den += static_cast<double>(c);
                auto it = rg.find(k);
                if (it != rg.end()) num += static_cast<double>(std::min(c, it->second));
            }
        }
        if (smooth && n > 1) {
            num += 1;
            den += 1;
        }
        if (num <= 0 || den <= 0) return 0.0;
        logp += std::log(num / den) / 4.0;
    }
    double c = 0, r = 0;
    for (size_t s = 0; s < hyps.size(); ++s) {
        c += static_cast<double>(hyps[s].size());
        r += static_cast<double>(refs[s].size());
    }
    if (c <= 0) return 0.0;
    double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return 100.0 * bp * std::exp(logp);
}

}  // namespace testutil
