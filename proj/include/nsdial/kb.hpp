#pragma once

#include <algorithm>
#include <deque>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace nsdial {

enum class TokenKind { Entity, Relation };

inline const char* kind_name(TokenKind k) {
    return k == TokenKind::Entity ? "entity" : "relation";
}

struct Triple {
    int head, relation, tail;
    bool operator==(const Triple& o) const {
        return head == o.head && relation == o.relation && tail == o.tail;
    }
};

struct HopResult {
    int k;
    std::vector<Triple> path;
};

// Directed triple store. Ids are dense and assigned in first-appearance
// order, so loading the same file always yields the same ids.
class KnowledgeBase {
public:
    int intern(const std::string& surface, TokenKind kind) {
        auto it = index_.find(surface);
        if (it != index_.end()) {
            int id = it->second;
            if (kinds_[static_cast<size_t>(id)] != kind)
                throw std::runtime_error("kb: token '" + surface + "' used as both " +
                                         kind_name(kinds_[static_cast<size_t>(id)]) + " and " +
                                         kind_name(kind));
            return id;
        }
        int id = static_cast<int>(surfaces_.size());
        surfaces_.push_back(surface);
        kinds_.push_back(kind);
        index_.emplace(surface, id);
        adj_.emplace_back();
        return id;
    }

    int find(const std::string& surface) const {
        auto it = index_.find(surface);
        return it == index_.end() ? -1 : it->second;
    }

    bool has(const std::string& surface) const { return index_.count(surface) > 0; }

    // Returns false when the triple was already present.
    bool add_triple(const std::string& h, const std::string& r, const std::string& t) {
        int hi = intern(h, TokenKind::Entity);
        int ri = intern(r, TokenKind::Relation);
        int ti = intern(t, TokenKind::Entity);
        if (!seen_.insert(std::tuple<int, int, int>{hi, ri, ti}).second) return false;
        int tix = static_cast<int>(triples_.size());
        triples_.push_back({hi, ri, ti});
        auto& a = adj_[static_cast<size_t>(hi)];
        auto pos = std::lower_bound(a.begin(), a.end(), tix, [&](int x, int y) {
            const Triple& tx = triples_[static_cast<size_t>(x)];
            const Triple& ty = triples_[static_cast<size_t>(y)];
            return std::tie(tx.tail, tx.relation) < std::tie(ty.tail, ty.relation);
        });
        a.insert(pos, tix);
        return true;
    }

    int n_tokens() const { return static_cast<int>(surfaces_.size()); }
    int n_triples() const { return static_cast<int>(triples_.size()); }
    const std::vector<Triple>& triples() const { return triples_; }

    const std::string& surface(int id) const {
        check_id(id);
        return surfaces_[static_cast<size_t>(id)];
    }
    TokenKind kind(int id) const {
        check_id(id);
        return kinds_[static_cast<size_t>(id)];
    }

    std::vector<int> ids_of_kind(TokenKind k) const {
        std::vector<int> out;
        for (int i = 0; i < n_tokens(); ++i)
            if (kinds_[static_cast<size_t>(i)] == k) out.push_back(i);
        return out;
    }

    // All triples with the given head, optionally filtered by relation,
    // ordered by (tail, relation) id.
    std::vector<Triple> neighbors(int entity, int relation = -1) const {
        check_id(entity);
        std::vector<Triple> out;
        for (int tix : adj_[static_cast<size_t>(entity)]) {
            const Triple& t = triples_[static_cast<size_t>(tix)];
            if (relation >= 0 && t.relation != relation) continue;
            out.push_back(t);
        }
        return out;
    }

    // Shortest directed path within max_hops. Among equally short paths the
    // one whose node sequence (then relation sequence) has the smallest token
    // ids wins, so results are stable across runs.
    std::optional<HopResult> hop_distance(int head, int tail, int max_hops) const {
        check_id(head);
        check_id(tail);
        if (kind(head) == TokenKind::Relation || kind(tail) == TokenKind::Relation)
            throw std::invalid_argument("kb: hop_distance endpoint is a relation token");
        if (max_hops < 0) throw std::invalid_argument("kb: max_hops must be >= 0");
        if (head == tail) return HopResult{0, {}};

        // distance-to-target over reversed edges
        std::vector<int> dist_t(static_cast<size_t>(n_tokens()), -1);
        {
            std::vector<std::vector<int>> radj(static_cast<size_t>(n_tokens()));
            for (const auto& t : triples_) radj[static_cast<size_t>(t.tail)].push_back(t.head);
            std::deque<int> q{tail};
            dist_t[static_cast<size_t>(tail)] = 0;
            while (!q.empty()) {
                int u = q.front();
                q.pop_front();
                if (dist_t[static_cast<size_t>(u)] >= max_hops) continue;
                for (int v : radj[static_cast<size_t>(u)])
                    if (dist_t[static_cast<size_t>(v)] < 0) {
                        dist_t[static_cast<size_t>(v)] = dist_t[static_cast<size_t>(u)] + 1;
                        q.push_back(v);
                    }
            }
        }
        int k = dist_t[static_cast<size_t>(head)];
        if (k < 0 || k > max_hops) return std::nullopt;

        // greedy walk: adjacency is (tail, relation)-sorted, so the first
        // admissible edge is the lexicographically smallest continuation
        HopResult res{k, {}};
        int cur = head;
        for (int step = 0; step < k; ++step) {
            int remaining = k - step - 1;
            bool advanced = false;
            for (int tix : adj_[static_cast<size_t>(cur)]) {
                const Triple& t = triples_[static_cast<size_t>(tix)];
                if (dist_t[static_cast<size_t>(t.tail)] == remaining) {
                    res.path.push_back(t);
                    cur = t.tail;
                    advanced = true;
                    break;
                }
            }
            if (!advanced) throw std::logic_error("kb: path reconstruction lost the trail");
        }
        return res;
    }

private:
    void check_id(int id) const {
        if (id < 0 || id >= n_tokens())
            throw std::out_of_range("kb: unknown token id " + std::to_string(id));
    }

    std::vector<std::string> surfaces_;
    std::vector<TokenKind> kinds_;
    std::unordered_map<std::string, int> index_;
    std::vector<Triple> triples_;
    std::set<std::tuple<int, int, int>> seen_;
    std::vector<std::vector<int>> adj_;  // head -> triple index, (tail, relation)-sorted
};

namespace detail {
inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}
}  // namespace detail

// Text format: one `head|relation|tail` per line, `#` starts a comment line,
// blank lines skipped. A leading `[` switches to a JSON array of
// {head, relation, tail} records.
inline KnowledgeBase parse_kb(std::istream& in, const std::string& name) {
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    KnowledgeBase kb;
    size_t first = content.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && content[first] == '[') {
        nlohmann::json arr;
        try {
            arr = nlohmann::json::parse(content);
        } catch (const std::exception& ex) {
            throw std::runtime_error(name + ": bad JSON: " + ex.what());
        }
        if (!arr.is_array()) throw std::runtime_error(name + ": expected a JSON array");
        for (size_t i = 0; i < arr.size(); ++i) {
            const auto& rec = arr[i];
            if (!rec.is_object() || !rec.contains("head") || !rec.contains("relation") ||
                !rec.contains("tail"))
                throw std::runtime_error(name + ": record " + std::to_string(i) +
                                         " needs head/relation/tail");
            kb.add_triple(rec["head"].get<std::string>(), rec["relation"].get<std::string>(),
                          rec["tail"].get<std::string>());
        }
        return kb;
    }
    std::istringstream ss(content);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> fields;
        size_t pos = 0;
        while (true) {
            size_t bar = t.find('|', pos);
            fields.push_back(detail::trim(t.substr(pos, bar - pos)));
            if (bar == std::string::npos) break;
            pos = bar + 1;
        }
        if (fields.size() != 3)
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected 3 '|' fields, got " +
                                     std::to_string(fields.size()));
        for (const auto& f : fields)
            if (f.empty())
                throw std::runtime_error(name + ":" + std::to_string(lineno) + ": empty field");
        try {
            kb.add_triple(fields[0], fields[1], fields[2]);
        } catch (const std::exception& ex) {
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return kb;
}

inline KnowledgeBase load_kb(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("kb: cannot open " + path);
    return parse_kb(f, path);
}

}  // namespace nsdial
