#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsdial/vocab.hpp"

namespace nsdial {

struct Turn {
    std::string user, system;
    std::vector<std::string> entities;  // gold entity surfaces in the response
    int hop = 0;                        // 0 when the turn needs no KB fact
};

struct Dialogue {
    std::string domain;
    std::vector<Turn> turns;
    std::string kb_file;
};

struct Dataset {
    std::vector<Dialogue> dialogues;

    int n_turns() const {
        int n = 0;
        for (const auto& d : dialogues) n += static_cast<int>(d.turns.size());
        return n;
    }
};

inline nlohmann::ordered_json dialogue_to_json(const Dialogue& d) {
    nlohmann::ordered_json j;
    j["domain"] = d.domain;
    auto turns = nlohmann::ordered_json::array();
    for (const auto& t : d.turns) {
        nlohmann::ordered_json tj;
        tj["user"] = t.user;
        tj["system"] = t.system;
        tj["entities"] = t.entities;
        tj["hop"] = t.hop;
        turns.push_back(tj);
    }
    j["turns"] = turns;
    j["kb_file"] = d.kb_file;
    return j;
}

inline Dialogue dialogue_from_json(const nlohmann::ordered_json& j) {
    Dialogue d;
    d.domain = j.at("domain").get<std::string>();
    d.kb_file = j.value("kb_file", "");
    for (const auto& tj : j.at("turns")) {
        Turn t;
        t.user = tj.at("user").get<std::string>();
        t.system = tj.at("system").get<std::string>();
        t.entities = tj.value("entities", std::vector<std::string>{});
        t.hop = tj.value("hop", 0);
        d.turns.push_back(std::move(t));
    }
    return d;
}

inline void save_jsonl(const std::string& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("dataset: cannot write " + path);
    for (const auto& d : ds.dialogues) f << dialogue_to_json(d).dump() << "\n";
}

inline Dataset load_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("dataset: cannot open " + path);
    Dataset ds;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            ds.dialogues.push_back(dialogue_from_json(nlohmann::ordered_json::parse(line)));
        } catch (const std::exception& ex) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return ds;
}

// Vocabulary over every token of a dataset, first-appearance order.
inline Vocabulary build_vocab(const Dataset& ds) {
    Vocabulary v;
    for (const auto& d : ds.dialogues)
        for (const auto& t : d.turns) {
            for (const auto& tok : tokenize(t.user)) v.add(tok);
            for (const auto& tok : tokenize(t.system)) v.add(tok);
        }
    return v;
}

// One training example: response turn plus the full dialogue history before it.
struct Example {
    std::vector<std::string> history;   // concatenated prior turns + current user
    std::vector<std::string> response;  // tokenized system response
    std::vector<std::string> entities;
    int hop = 0;
    int dialogue_index = 0, turn_index = 0;
    std::string domain;
};

inline std::vector<Example> to_examples(const Dataset& ds) {
    std::vector<Example> out;
    for (size_t di = 0; di < ds.dialogues.size(); ++di) {
        const auto& d = ds.dialogues[di];
        std::vector<std::string> history;
        for (size_t ti = 0; ti < d.turns.size(); ++ti) {
            const auto& t = d.turns[ti];
            for (const auto& tok : tokenize(t.user)) history.push_back(tok);
            Example ex;
            ex.history = history;
            ex.response = tokenize(t.system);
            ex.entities = t.entities;
            ex.hop = t.hop;
            ex.dialogue_index = static_cast<int>(di);
            ex.turn_index = static_cast<int>(ti);
            ex.domain = d.domain;
            out.push_back(std::move(ex));
            for (const auto& tok : tokenize(t.system)) history.push_back(tok);
        }
    }
    return out;
}

}  // namespace nsdial
