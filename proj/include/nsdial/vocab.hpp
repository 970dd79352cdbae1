#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsdial/kb.hpp"

namespace nsdial {

// Lowercase whitespace tokenizer; sentence punctuation becomes its own token.
// Entity surfaces are underscore-joined, so they survive as single tokens.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::isspace(u)) {
            flush();
        } else if (c == '?' || c == '!' || c == '.' || c == ',' || c == ';') {
            flush();
            out.emplace_back(1, c);
        } else {
            cur.push_back(static_cast<char>(std::tolower(u)));
        }
    }
    flush();
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out.push_back(' ');
        out += toks[i];
    }
    return out;
}

// Word table for the generation side. Ids 0..3 are reserved.
class Vocabulary {
public:
    static constexpr int kUnk = 0, kSos = 1, kEos = 2, kCls = 3;

    Vocabulary() {
        for (const char* s : {"<unk>", "<sos>", "<eos>", "<cls>"}) add(s);
    }

    int add(const std::string& tok) {
        auto it = index_.find(tok);
        if (it != index_.end()) return it->second;
        int id = static_cast<int>(surfaces_.size());
        surfaces_.push_back(tok);
        index_.emplace(tok, id);
        return id;
    }

    int id(const std::string& tok) const {
        auto it = index_.find(tok);
        return it == index_.end() ? kUnk : it->second;
    }

    bool has(const std::string& tok) const { return index_.count(tok) > 0; }

    const std::string& surface(int id) const {
        if (id < 0 || id >= size()) throw std::out_of_range("vocab: bad id");
        return surfaces_[static_cast<size_t>(id)];
    }

    int size() const { return static_cast<int>(surfaces_.size()); }

private:
    std::vector<std::string> surfaces_;
    std::unordered_map<std::string, int> index_;
};

// Output space of the fused distribution: V followed by the KB tokens whose
// surfaces are not already vocabulary words. Shared surfaces map to their V
// slot so both channels' mass lands on one token.
class JointVocab {
public:
    JointVocab() = default;
    JointVocab(const Vocabulary& vocab, const KnowledgeBase& kb) : vocab_(vocab) {
        kb_to_joint_.resize(static_cast<size_t>(kb.n_tokens()));
        for (int i = 0; i < kb.n_tokens(); ++i) {
            const std::string& s = kb.surface(i);
            if (vocab_.has(s)) {
                kb_to_joint_[static_cast<size_t>(i)] = vocab_.id(s);
            } else {
                kb_to_joint_[static_cast<size_t>(i)] = vocab_.size() + static_cast<int>(extra_.size());
                extra_.push_back(s);
            }
        }
    }

    int vocab_size() const { return vocab_.size(); }
    int size() const { return vocab_.size() + static_cast<int>(extra_.size()); }
    const std::vector<int>& kb_to_joint() const { return kb_to_joint_; }

    const std::string& surface(int joint_id) const {
        if (joint_id < vocab_.size()) return vocab_.surface(joint_id);
        int k = joint_id - vocab_.size();
        if (k < 0 || k >= static_cast<int>(extra_.size()))
            throw std::out_of_range("joint vocab: bad id");
        return extra_[static_cast<size_t>(k)];
    }

    // joint id of a surface; <unk> when it is neither a word nor a KB token
    int id(const std::string& tok) const {
        if (vocab_.has(tok)) return vocab_.id(tok);
        for (size_t k = 0; k < extra_.size(); ++k)
            if (extra_[k] == tok) return vocab_.size() + static_cast<int>(k);
        return Vocabulary::kUnk;
    }

    const Vocabulary& words() const { return vocab_; }

private:
    Vocabulary vocab_;
    std::vector<std::string> extra_;
    std::vector<int> kb_to_joint_;
};

}  // namespace nsdial
