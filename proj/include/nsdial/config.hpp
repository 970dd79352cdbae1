#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "nsdial/kb.hpp"

namespace nsdial {

// Flat key = value text config. Every field has a CLI flag twin.
struct Config {
    int hidden = 128;
    int emb_dim = 128;
    float dropout = 0.1f;
    float tau = 0.1f;
    int depth = 1;        // proof-tree depth limit D
    int candidates = 5;   // K
    float lr = 1e-3f;
    float gamma_g = 1.0f;
    float gamma_c = 1.0f;
    int batch = 16;
    int epochs = 30;
    uint64_t seed = 1;
    float clip = 5.0f;
    std::string ablation = "full";          // full | no_reasoner | no_softswitch
    std::string belief_mode = "best_depth"; // best_depth | fixed_depth
    bool mask_relation_slots = false;
    bool straight_through = false;
    int max_decode_len = 16;
    int eval_every = 1;

    void validate() const {
        if (depth < 1 || depth > 5) throw std::invalid_argument("config: depth outside [1,5]");
        if (candidates < 1 || candidates > 10)
            throw std::invalid_argument("config: candidates outside [1,10]");
        if (tau <= 0) throw std::invalid_argument("config: tau must be > 0");
        if (lr <= 0) throw std::invalid_argument("config: lr must be > 0");
        if (dropout < 0 || dropout > 0.5f)
            throw std::invalid_argument("config: dropout outside [0, 0.5]");
        if (hidden < 1 || emb_dim < 1) throw std::invalid_argument("config: bad sizes");
        if (batch < 1 || epochs < 0) throw std::invalid_argument("config: bad schedule");
        if (ablation != "full" && ablation != "no_reasoner" && ablation != "no_softswitch")
            throw std::invalid_argument("config: unknown ablation '" + ablation + "'");
        if (belief_mode != "best_depth" && belief_mode != "fixed_depth")
            throw std::invalid_argument("config: unknown belief_mode '" + belief_mode + "'");
    }
};

inline void apply_config_line(Config& c, const std::string& key, const std::string& val) {
    auto as_int = [&] { return std::stoi(val); };
    auto as_float = [&] { return std::stof(val); };
    auto as_bool = [&] {
        if (val == "true" || val == "1") return true;
        if (val == "false" || val == "0") return false;
        throw std::invalid_argument("config: bad bool '" + val + "'");
    };
    if (key == "hidden") c.hidden = as_int();
    else if (key == "emb_dim") c.emb_dim = as_int();
    else if (key == "dropout") c.dropout = as_float();
    else if (key == "tau") c.tau = as_float();
    else if (key == "depth") c.depth = as_int();
    else if (key == "candidates") c.candidates = as_int();
    else if (key == "lr") c.lr = as_float();
    else if (key == "gamma_g") c.gamma_g = as_float();
    else if (key == "gamma_c") c.gamma_c = as_float();
    else if (key == "batch") c.batch = as_int();
    else if (key == "epochs") c.epochs = as_int();
    else if (key == "seed") c.seed = std::stoull(val);
    else if (key == "clip") c.clip = as_float();
    else if (key == "ablation") c.ablation = val;
    else if (key == "belief_mode") c.belief_mode = val;
    else if (key == "mask_relation_slots") c.mask_relation_slots = as_bool();
    else if (key == "straight_through") c.straight_through = as_bool();
    else if (key == "max_decode_len") c.max_decode_len = as_int();
    else if (key == "eval_every") c.eval_every = as_int();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline Config parse_config(std::istream& in, const std::string& name) {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(t.substr(0, eq));
        std::string val = detail::trim(t.substr(eq + 1));
        try {
            apply_config_line(c, key, val);
        } catch (const std::exception& ex) {
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    return parse_config(f, path);
}

inline std::string config_to_text(const Config& c) {
    std::ostringstream os;
    os << "hidden = " << c.hidden << "\n";
    os << "emb_dim = " << c.emb_dim << "\n";
    os << "dropout = " << c.dropout << "\n";
    os << "tau = " << c.tau << "\n";
    os << "depth = " << c.depth << "\n";
    os << "candidates = " << c.candidates << "\n";
    os << "lr = " << c.lr << "\n";
    os << "gamma_g = " << c.gamma_g << "\n";
    os << "gamma_c = " << c.gamma_c << "\n";
    os << "batch = " << c.batch << "\n";
    os << "epochs = " << c.epochs << "\n";
    os << "seed = " << c.seed << "\n";
    os << "clip = " << c.clip << "\n";
    os << "ablation = " << c.ablation << "\n";
    os << "belief_mode = " << c.belief_mode << "\n";
    os << "mask_relation_slots = " << (c.mask_relation_slots ? "true" : "false") << "\n";
    os << "straight_through = " << (c.straight_through ? "true" : "false") << "\n";
    os << "max_decode_len = " << c.max_decode_len << "\n";
    os << "eval_every = " << c.eval_every << "\n";
    return os.str();
}

}  // namespace nsdial
