#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "nsdial/errors.hpp"
#include "nsdial/forge.hpp"
#include "nsdial/metrics.hpp"
#include "nsdial/model.hpp"
#include "nsdial/render.hpp"
#include "nsdial/split.hpp"
#include "nsdial/trainer.hpp"

namespace fs = std::filesystem;
using namespace nsdial;

namespace {

// ---- shared helpers ----

KnowledgeBase extended_kb_from_files(const std::string& kb_path, const std::string& places_path,
                                     const std::string& domain, uint64_t seed) {
    auto kb = load_kb(kb_path);
    auto places = load_places(places_path, domain);
    Rng rng(seed);
    return extend_kb_with_hierarchy(kb, places, rng);
}

// A model plus everything it needs to stay alive and decode.
struct LoadedModel {
    Config cfg;
    KnowledgeBase kb;
    Vocabulary vocab;
    JointVocab jv;
    std::unique_ptr<Model> model;
    nlohmann::ordered_json meta;
};

LoadedModel load_model(const std::string& manifest_path, const std::string& kb_path) {
    LoadedModel lm;
    std::ifstream mf(manifest_path);
    if (!mf) throw std::runtime_error("cannot open checkpoint manifest " + manifest_path);
    nlohmann::ordered_json man;
    mf >> man;
    lm.meta = man.value("meta", nlohmann::ordered_json::object());
    if (!lm.meta.contains("config") || !lm.meta.contains("vocab_words"))
        throw std::runtime_error("checkpoint meta lacks config/vocab_words; was it written by "
                                 "'nsdial train'?");
    std::istringstream cfg_in(lm.meta["config"].get<std::string>());
    lm.cfg = parse_config(cfg_in, manifest_path + ":meta.config");
    lm.kb = load_kb(kb_path);
    for (const auto& w : lm.meta["vocab_words"]) lm.vocab.add(w.get<std::string>());
    lm.jv = JointVocab(lm.vocab, lm.kb);
    lm.model = std::make_unique<Model>(lm.cfg, lm.kb, lm.jv);
    load_checkpoint(manifest_path, lm.model->params());
    return lm;
}

std::vector<std::vector<std::string>> decode_all(Model& model, const std::vector<Example>& exs,
                                                 std::vector<DecodeTrace>* traces = nullptr) {
    Rng base(model.config().seed);
    std::vector<std::vector<std::string>> preds;
    preds.reserve(exs.size());
    for (size_t i = 0; i < exs.size(); ++i) {
        Rng r = base.fork(i);
        auto res = model.greedy_decode(exs[i].history, r, model.config().max_decode_len,
                                       traces != nullptr);
        preds.push_back(res.tokens);
        if (traces) traces->push_back(std::move(res.trace));
    }
    return preds;
}

const TraceTree* find_tree(const DecodeTrace& tr, int id) {
    for (const auto& t : tr.trees)
        if (t.id == id) return &t;
    return nullptr;
}

void print_step_detail(const TraceStep& s, const DecodeTrace& tr, std::ostream& out) {
    out << "  structure " << s.structure << ", query states (" << s.k0 << ", " << s.k1
        << "), p_gen " << s.p_gen << "\n";
    out << "    " << std::left << std::setw(16) << "candidate" << std::setw(14) << "cp_prob"
        << std::setw(12) << "belief" << std::setw(6) << "depth"
        << "triple\n";
    const TraceHyp* best = nullptr;
    for (const auto& h : s.hyps) {
        out << "    " << std::left << std::setw(16) << h.candidate << std::setw(14) << h.cp_prob
            << std::setw(12) << h.alpha << std::setw(6) << h.best_depth << "(" << h.head << ", "
            << h.relation << ", " << h.tail << ")\n";
        if (!best || h.alpha > best->alpha) best = &h;
    }
    if (best && best->tree_id >= 0) {
        if (const TraceTree* t = find_tree(tr, best->tree_id)) {
            out << "  best hypothesis proof:\n";
            std::istringstream lines(render_proof_ascii(*t));
            std::string line;
            while (std::getline(lines, line)) out << "    " << line << "\n";
        }
    }
}

int self_check(LoadedModel& lm, const std::vector<Example>& exs) {
    size_t n = std::min<size_t>(exs.size(), 8);
    std::vector<Example> sub(exs.begin(), exs.begin() + static_cast<long>(n));
    std::vector<DecodeTrace> traces;
    auto first = decode_all(*lm.model, sub, &traces);
    auto second = decode_all(*lm.model, sub);
    bool full = lm.cfg.ablation == "full";
    for (size_t i = 0; i < n; ++i) {
        if (first[i] != second[i]) {
            std::cerr << "check failed: decode not deterministic on example " << i << "\n";
            return 2;
        }
        const auto& tr = traces[i];
        if (tr.tokens.size() != tr.steps.size()) {
            std::cerr << "check failed: trace length mismatch on example " << i << "\n";
            return 2;
        }
        for (size_t sidx = 0; sidx < tr.steps.size(); ++sidx) {
            const auto& s = tr.steps[sidx];
            std::string where =
                "example " + std::to_string(i) + " step " + std::to_string(sidx);
            if (s.structure != "H-Hypothesis" && s.structure != "T-Hypothesis" &&
                s.structure != "R-Hypothesis") {
                std::cerr << "check failed: bad structure at " << where << "\n";
                return 2;
            }
            if (s.k0.empty() || s.k1.empty()) {
                std::cerr << "check failed: missing query states at " << where << "\n";
                return 2;
            }
            if (s.hyps.size() != static_cast<size_t>(lm.cfg.candidates)) {
                std::cerr << "check failed: expected " << lm.cfg.candidates << " hypotheses at "
                          << where << "\n";
                return 2;
            }
            if (s.p_kb.size() != static_cast<size_t>(lm.kb.n_tokens())) {
                std::cerr << "check failed: KB channel incomplete at " << where << "\n";
                return 2;
            }
            for (const auto& h : s.hyps) {
                if (h.candidate.empty() || h.cp_prob < 0 || h.cp_prob > 1) {
                    std::cerr << "check failed: bad hypothesis candidate at " << where << "\n";
                    return 2;
                }
                if (full && (h.alpha < 0 || h.alpha > 1 || h.tree_id < 0 ||
                             !find_tree(tr, h.tree_id))) {
                    std::cerr << "check failed: hypothesis without belief/proof at " << where
                              << "\n";
                    return 2;
                }
            }
        }
    }
    std::cout << "self-check passed on " << n << " examples\n";
    return 0;
}

// config flag twins: applied over (defaults or --config file)
struct ConfigFlags {
    std::optional<int> hidden, emb_dim, depth, candidates, batch, epochs, max_decode_len,
        eval_every;
    std::optional<double> dropout, tau, lr, gamma_g, gamma_c, clip;
    std::optional<uint64_t> seed;
    std::optional<std::string> ablation, belief_mode;
    std::optional<bool> mask_relation_slots, straight_through;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--hidden", hidden, "hidden state width");
        cmd->add_option("--emb-dim", emb_dim, "word embedding width");
        cmd->add_option("--dropout", dropout, "embedding dropout rate");
        cmd->add_option("--tau", tau, "Gumbel-Softmax temperature");
        cmd->add_option("--depth", depth, "proof tree depth limit D");
        cmd->add_option("--candidates", candidates, "hypotheses per step K");
        cmd->add_option("--lr", lr, "Adam learning rate");
        cmd->add_option("--gamma-g", gamma_g, "generation loss weight");
        cmd->add_option("--gamma-c", gamma_c, "concept loss weight");
        cmd->add_option("--batch", batch, "batch size");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--seed", seed, "base RNG seed");
        cmd->add_option("--clip", clip, "gradient norm clip");
        cmd->add_option("--ablation", ablation, "full | no_reasoner | no_softswitch");
        cmd->add_option("--belief-mode", belief_mode, "best_depth | fixed_depth");
        cmd->add_option("--mask-relation-slots", mask_relation_slots,
                        "restrict relation slots to relation tokens");
        cmd->add_option("--straight-through", straight_through, "hard Gumbel samples");
        cmd->add_option("--max-decode-len", max_decode_len, "decoding length cap");
        cmd->add_option("--eval-every", eval_every, "dev evaluation period");
    }

    void apply(Config& c) const {
        if (hidden) c.hidden = *hidden;
        if (emb_dim) c.emb_dim = *emb_dim;
        if (dropout) c.dropout = static_cast<float>(*dropout);
        if (tau) c.tau = static_cast<float>(*tau);
        if (depth) c.depth = *depth;
        if (candidates) c.candidates = *candidates;
        if (lr) c.lr = static_cast<float>(*lr);
        if (gamma_g) c.gamma_g = static_cast<float>(*gamma_g);
        if (gamma_c) c.gamma_c = static_cast<float>(*gamma_c);
        if (batch) c.batch = *batch;
        if (epochs) c.epochs = *epochs;
        if (seed) c.seed = *seed;
        if (clip) c.clip = static_cast<float>(*clip);
        if (ablation) c.ablation = *ablation;
        if (belief_mode) c.belief_mode = *belief_mode;
        if (mask_relation_slots) c.mask_relation_slots = *mask_relation_slots;
        if (straight_through) c.straight_through = *straight_through;
        if (max_decode_len) c.max_decode_len = *max_decode_len;
        if (eval_every) c.eval_every = *eval_every;
    }
};

// ---- subcommand bodies ----

int cmd_extend_kb(const std::string& kb_path, const std::string& places_path,
                  const std::string& domain, uint64_t seed, const std::string& out) {
    auto kb = extended_kb_from_files(kb_path, places_path, domain, seed);
    if (!out.empty() && fs::path(out).has_parent_path())
        fs::create_directories(fs::path(out).parent_path());
    save_kb(kb, out);
    std::cout << "extended kb: " << kb.n_tokens() << " tokens, " << kb.n_triples()
              << " facts -> " << out << "\n";
    return 0;
}

int cmd_gen_data(const std::string& kb_path, const std::string& places_path,
                 const std::string& templates_path, const std::string& domain, int n_train,
                 int n_dev, int n_test, uint64_t seed, double pronoun_rate,
                 std::vector<double> mix, const std::string& out_dir) {
    if (mix.size() != 3) throw std::invalid_argument("--mix needs exactly 3 fractions");
    auto kb = extended_kb_from_files(kb_path, places_path, domain, seed);
    auto tpls = load_templates(templates_path);

    fs::create_directories(out_dir);
    std::string kb_name = "kb_" + domain + ".txt";
    save_kb(kb, out_dir + "/" + kb_name);

    ForgeConfig fc;
    fc.domain = domain;
    fc.n_train = n_train;
    fc.n_dev = n_dev;
    fc.n_test = n_test;
    fc.hop_mix = {mix[0], mix[1], mix[2]};
    fc.pronoun_rate = pronoun_rate;
    fc.seed = seed;
    fc.kb_file = kb_name;
    auto res = generate_dataset(fc, kb, tpls);

    save_jsonl(out_dir + "/train.jsonl", res.train);
    save_jsonl(out_dir + "/dev.jsonl", res.dev);
    save_jsonl(out_dir + "/test.jsonl", res.test);

    int turns = 0;
    for (const auto& [h, c] : res.hop_counts) turns += c;
    nlohmann::ordered_json rep;
    rep["domain"] = domain;
    rep["seed"] = seed;
    rep["sizes"] = {{"train", res.train.dialogues.size()},
                    {"dev", res.dev.dialogues.size()},
                    {"test", res.test.dialogues.size()}};
    rep["turns"] = turns;
    auto hops = nlohmann::ordered_json::object();
    for (const auto& [h, c] : res.hop_counts)
        hops[std::to_string(h)] = {{"count", c},
                                   {"share", turns ? static_cast<double>(c) / turns : 0.0}};
    rep["hop_counts"] = hops;
    rep["pronoun_edits"] = res.pronoun_edits.size();
    rep["quota_retries"] = res.retries;
    std::ofstream rf(out_dir + "/forge_report.json");
    rf << rep.dump(2) << "\n";

    std::cout << "wrote " << res.train.dialogues.size() << "/" << res.dev.dialogues.size() << "/"
              << res.test.dialogues.size() << " dialogues (" << turns << " turns) to " << out_dir
              << "\n";
    for (const auto& [h, c] : res.hop_counts)
        std::cout << "  hop " << h << ": " << c << " turns ("
                  << (turns ? 100.0 * c / turns : 0.0) << "%)\n";
    std::cout << "  pronoun substitutions: " << res.pronoun_edits.size() << "\n";

    auto check = [&](const Dataset& ds, const char* name) {
        auto v = verify_dataset(ds, kb);
        if (!v.ok) {
            std::cerr << "generation invariant violated in " << name << ": " << v.issues[0]
                      << "\n";
            return false;
        }
        return true;
    };
    if (!check(res.train, "train") || !check(res.dev, "dev") || !check(res.test, "test"))
        return 2;
    return 0;
}

int cmd_split_unseen(const std::vector<std::string>& inputs, double target, uint64_t seed,
                     double dev_frac, const std::string& out_dir) {
    Dataset all;
    for (const auto& p : inputs) {
        auto part = load_jsonl(p);
        for (auto& d : part.dialogues) all.dialogues.push_back(std::move(d));
    }
    auto s = make_unseen_split(all, target, seed, dev_frac);
    fs::create_directories(out_dir);
    save_jsonl(out_dir + "/train.jsonl", s.train);
    save_jsonl(out_dir + "/dev.jsonl", s.dev);
    save_jsonl(out_dir + "/test.jsonl", s.test);
    std::ofstream sf(out_dir + "/split.json");
    sf << split_to_json(s).dump(2) << "\n";
    std::cout << "entity split: " << s.train.dialogues.size() << " train / "
              << s.dev.dialogues.size() << " dev / " << s.test.dialogues.size() << " test\n";
    std::cout << "achieved overlap " << s.achieved_overlap << " (target " << target << ")\n";
    if (std::abs(s.achieved_overlap - target) > 0.5 * target + 1e-9)
        std::cout << "note: target not reachable exactly; this is the closest cut\n";
    return 0;
}

int cmd_train(const std::string& train_path, const std::string& dev_path,
              const std::string& kb_path, const std::string& config_path,
              const ConfigFlags& flags, const std::string& out_dir) {
    Config cfg = config_path.empty() ? Config{} : load_config(config_path);
    flags.apply(cfg);
    cfg.validate();

    auto kb = load_kb(kb_path);
    auto train_ds = load_jsonl(train_path);
    Dataset dev_ds;
    if (!dev_path.empty()) dev_ds = load_jsonl(dev_path);
    auto vocab = build_vocab(train_ds);
    JointVocab jv(vocab, kb);
    auto train_ex = to_examples(train_ds);
    auto dev_ex = to_examples(dev_ds);

    fs::create_directories(out_dir);
    {
        std::ofstream cf(out_dir + "/config.txt");
        cf << config_to_text(cfg);
    }

    std::cout << "training on " << train_ex.size() << " turns (" << train_ds.dialogues.size()
              << " dialogues), dev " << dev_ex.size() << " turns\n";
    std::cout << "vocab " << vocab.size() << " words, joint " << jv.size() << ", kb "
              << kb.n_tokens() << " tokens / " << kb.n_triples() << " facts\n";
    std::cout << "ablation " << cfg.ablation << ", hidden " << cfg.hidden << ", depth "
              << cfg.depth << ", K " << cfg.candidates << ", epochs " << cfg.epochs << "\n";

    Model model(cfg, kb, jv);
    TrainerT<float> trainer(model);
    nlohmann::ordered_json extra;
    auto words = nlohmann::ordered_json::array();
    for (int i = 0; i < vocab.size(); ++i) words.push_back(vocab.surface(i));
    extra["vocab_words"] = words;
    extra["kb_file"] = kb_path;
    auto result = trainer.fit(train_ex, dev_ex, out_dir + "/checkpoint.json",
                              out_dir + "/metrics.csv", extra);

    for (const auto& e : result.epochs) {
        std::cout << "epoch " << e.epoch << ": l_gen " << e.l_gen << ", l_cp " << e.l_cp
                  << ", l_total " << e.l_total;
        if (e.evaluated) std::cout << ", dev_f1 " << e.dev_f1;
        std::cout << "\n";
    }
    if (result.best_epoch >= 0)
        std::cout << "best dev F1 " << result.best_dev_f1 << " at epoch " << result.best_epoch
                  << "\n";
    std::cout << "checkpoint -> " << out_dir << "/checkpoint.json\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& kb_path, const std::string& data_path,
             bool smooth, bool check, bool triage, const std::string& json_out,
             const std::string& traces_out) {
    auto lm = load_model(ckpt, kb_path);
    auto ds = load_jsonl(data_path);
    auto exs = to_examples(ds);
    if (exs.empty()) throw std::runtime_error("eval: dataset has no turns");

    if (check) {
        int rc = self_check(lm, exs);
        if (rc != 0) return rc;
    }

    bool want_traces = triage || !traces_out.empty();
    std::vector<DecodeTrace> traces;
    auto preds = decode_all(*lm.model, exs, want_traces ? &traces : nullptr);
    auto rep = bucketed_eval(exs, preds, lm.kb, smooth);
    std::cout << report_table(rep);

    if (!json_out.empty()) {
        if (fs::path(json_out).has_parent_path())
            fs::create_directories(fs::path(json_out).parent_path());
        std::ofstream jf(json_out);
        jf << report_to_json(rep).dump(2) << "\n";
        std::cout << "report -> " << json_out << "\n";
    }
    if (!traces_out.empty()) {
        if (fs::path(traces_out).has_parent_path())
            fs::create_directories(fs::path(traces_out).parent_path());
        std::ofstream tf(traces_out);
        for (size_t i = 0; i < traces.size(); ++i) {
            nlohmann::ordered_json row;
            row["example"] = i;
            row["domain"] = exs[i].domain;
            row["hop"] = exs[i].hop;
            row["gold"] = join_tokens(exs[i].response);
            row["predicted"] = join_tokens(preds[i]);
            row["trace"] = trace_to_json(traces[i]);
            tf << row.dump() << "\n";
        }
        std::cout << "traces -> " << traces_out << "\n";
    }
    if (triage) {
        std::map<std::string, int> totals{
            {"structure", 0}, {"query_states", 0}, {"candidates", 0}, {"belief", 0}};
        int failing = 0;
        for (size_t i = 0; i < traces.size(); ++i) {
            auto recs = categorize_errors(traces[i], exs[i].response, lm.kb);
            failing += static_cast<int>(recs.size());
            for (const auto& [k, v] : summarize_errors(recs)) totals[k] += v;
        }
        std::cout << "error triage over " << failing << " failing KB steps:\n";
        for (const auto& [k, v] : totals)
            std::cout << "  " << std::left << std::setw(14) << k << v << "\n";
    }
    return 0;
}

int cmd_trace(const std::string& ckpt, const std::string& kb_path) {
    auto lm = load_model(ckpt, kb_path);
    std::cout << "interactive trace; type an utterance, or /reset, /save <file>, /quit\n";
    std::vector<std::string> history;
    DecodeTrace last;
    bool have_last = false;
    uint64_t turn = 0;
    std::string line;
    while (true) {
        std::cout << "> " << std::flush;
        if (!std::getline(std::cin, line)) break;
        if (line == "/quit") break;
        if (line == "/reset") {
            history.clear();
            std::cout << "history cleared\n";
            continue;
        }
        if (line.rfind("/save", 0) == 0) {
            std::istringstream ss(line);
            std::string cmd, path;
            ss >> cmd >> path;
            if (path.empty() || !have_last) {
                std::cout << "nothing to save yet or missing path\n";
                continue;
            }
            std::ofstream f(path);
            f << trace_to_json(last).dump(2) << "\n";
            std::cout << "trace -> " << path << "\n";
            continue;
        }
        if (line.empty()) continue;
        for (const auto& tok : tokenize(line)) history.push_back(tok);
        Rng r = Rng(lm.cfg.seed).fork(turn++);
        auto res = lm.model->greedy_decode(history, r, lm.cfg.max_decode_len, true);
        last = res.trace;
        have_last = true;
        std::cout << "response: " << join_tokens(res.tokens) << "\n";
        for (size_t i = 0; i < last.steps.size(); ++i) {
            const auto& s = last.steps[i];
            std::cout << "step " << i << ": '" << s.chosen << "'"
                      << (s.from_kb_channel ? " [kb channel]" : "") << "\n";
            if (s.from_kb_channel) print_step_detail(s, last, std::cout);
        }
        for (const auto& tok : res.tokens) history.push_back(tok);
    }
    return 0;
}

int cmd_render_proof(const std::string& trace_path, int line_no, int tree_id,
                     const std::string& format, const std::string& out_path) {
    std::ifstream f(trace_path);
    if (!f) throw std::runtime_error("cannot open trace file " + trace_path);
    nlohmann::ordered_json j;
    if (fs::path(trace_path).extension() == ".jsonl") {
        std::string line;
        int cur = 0;
        bool found = false;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            if (cur++ == line_no) {
                j = nlohmann::ordered_json::parse(line);
                found = true;
                break;
            }
        }
        if (!found)
            throw std::runtime_error("trace file has no line " + std::to_string(line_no));
    } else {
        f >> j;
    }
    if (j.contains("trace")) j = j["trace"];
    auto tr = trace_from_json(j);
    if (tr.trees.empty()) throw std::runtime_error("trace contains no proof trees");

    std::ostringstream out;
    if (tree_id >= 0) {
        const TraceTree* t = find_tree(tr, tree_id);
        if (!t) throw std::runtime_error("no proof tree with id " + std::to_string(tree_id));
        out << (format == "dot" ? render_proof_dot(*t) : render_proof_ascii(*t));
    } else if (format == "dot") {
        out << render_proof_dot(tr.trees[0]);  // one digraph per file
    } else {
        for (const auto& t : tr.trees) out << render_proof_ascii(t) << "\n";
    }
    if (out_path.empty()) {
        std::cout << out.str();
    } else {
        std::ofstream of(out_path);
        of << out.str();
        std::cout << "rendered -> " << out_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nsdial: KB-grounded dialogue toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-hop dialogue corpus");
    std::string g_kb, g_places = "data/places.json", g_templates = "data/templates.json";
    std::string g_domain = "movie", g_out = "out";
    int g_train = 300, g_dev = 50, g_test = 50;
    uint64_t g_seed = 1;
    double g_pron = 0.3;
    std::vector<double> g_mix{0.7, 0.15, 0.15};
    gen->add_option("--kb", g_kb, "base KB file (head|relation|tail)")->required();
    gen->add_option("--places", g_places, "places hierarchy json");
    gen->add_option("--templates", g_templates, "QA template file");
    gen->add_option("--domain", g_domain, "movie | hotel | restaurant");
    gen->add_option("--train", g_train, "train dialogues");
    gen->add_option("--dev", g_dev, "dev dialogues");
    gen->add_option("--test", g_test, "test dialogues");
    gen->add_option("--seed", g_seed, "generation seed");
    gen->add_option("--pronoun-rate", g_pron, "pronoun substitution rate");
    gen->add_option("--mix", g_mix, "hop bucket shares for 1/2/3 hops")->expected(3);
    gen->add_option("--out-dir", g_out, "output directory");

    // extend-kb
    auto* ext = app.add_subcommand("extend-kb", "attach the place hierarchy to a base KB");
    std::string e_kb, e_places = "data/places.json", e_domain = "movie", e_out;
    uint64_t e_seed = 1;
    ext->add_option("--kb", e_kb, "base KB file")->required();
    ext->add_option("--places", e_places, "places hierarchy json");
    ext->add_option("--domain", e_domain, "domain key in the places file");
    ext->add_option("--seed", e_seed, "attachment seed");
    ext->add_option("--out", e_out, "output KB file")->required();

    // split-unseen
    auto* spl = app.add_subcommand("split-unseen", "re-split a corpus by entity overlap");
    std::vector<std::string> s_in;
    std::string s_out = "out_unseen";
    double s_target = 0.05, s_devfrac = 0.15;
    uint64_t s_seed = 1;
    spl->add_option("--in", s_in, "input jsonl files (merged)")->required()->expected(-1);
    spl->add_option("--target-overlap", s_target, "desired train/test entity overlap");
    spl->add_option("--seed", s_seed, "dev carve seed");
    spl->add_option("--dev-frac", s_devfrac, "dev fraction of the train side");
    spl->add_option("--out-dir", s_out, "output directory");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string t_train, t_dev, t_kb, t_config, t_out = "run";
    ConfigFlags t_flags;
    tr->add_option("--train", t_train, "training jsonl")->required();
    tr->add_option("--dev", t_dev, "dev jsonl");
    tr->add_option("--kb", t_kb, "KB file (the extended one the data references)")->required();
    tr->add_option("--config", t_config, "key = value config file");
    tr->add_option("--out-dir", t_out, "run directory");
    t_flags.add_to(tr);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string v_ckpt, v_kb, v_data, v_json, v_traces;
    bool v_smooth = false, v_check = false, v_triage = false;
    ev->add_option("--checkpoint", v_ckpt, "checkpoint manifest (.json)")->required();
    ev->add_option("--kb", v_kb, "KB file")->required();
    ev->add_option("--data", v_data, "evaluation jsonl")->required();
    ev->add_flag("--smooth", v_smooth, "smoothed 4-gram overlap score");
    ev->add_flag("--check", v_check, "run decoding self-checks; nonzero exit on failure");
    ev->add_flag("--triage", v_triage, "categorize failing KB steps by reasoning stage");
    ev->add_option("--json", v_json, "write the report as JSON");
    ev->add_option("--traces", v_traces, "write per-example decode traces (jsonl)");

    // trace
    auto* tc = app.add_subcommand("trace", "interactive reasoning REPL");
    std::string c_ckpt, c_kb;
    tc->add_option("--checkpoint", c_ckpt, "checkpoint manifest (.json)")->required();
    tc->add_option("--kb", c_kb, "KB file")->required();

    // render-proof
    auto* rp = app.add_subcommand("render-proof", "render proof trees from a saved trace");
    std::string r_trace, r_format = "ascii", r_out;
    int r_line = 0, r_tree = -1;
    rp->add_option("--trace", r_trace, "trace .json or eval --traces .jsonl")->required();
    rp->add_option("--line", r_line, "line index for jsonl input");
    rp->add_option("--tree", r_tree, "proof tree id (default: all for ascii, first for dot)");
    rp->add_option("--format", r_format, "ascii | dot")
        ->check(CLI::IsMember({"ascii", "dot"}));
    rp->add_option("--out", r_out, "output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(g_kb, g_places, g_templates, g_domain, g_train, g_dev, g_test,
                                g_seed, g_pron, g_mix, g_out);
        if (ext->parsed()) return cmd_extend_kb(e_kb, e_places, e_domain, e_seed, e_out);
        if (spl->parsed()) return cmd_split_unseen(s_in, s_target, s_seed, s_devfrac, s_out);
        if (tr->parsed()) return cmd_train(t_train, t_dev, t_kb, t_config, t_flags, t_out);
        if (ev->parsed())
            return cmd_eval(v_ckpt, v_kb, v_data, v_smooth, v_check, v_triage, v_json, v_traces);
        if (tc->parsed()) return cmd_trace(c_ckpt, c_kb);
        if (rp->parsed()) return cmd_render_proof(r_trace, r_line, r_tree, r_format, r_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
