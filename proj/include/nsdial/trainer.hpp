#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "nsdial/adam.hpp"
#include "nsdial/checkpoint.hpp"
#include "nsdial/metrics.hpp"
#include "nsdial/model.hpp"

namespace nsdial {

struct BatchReport {
    double l_gen = 0, l_cp = 0, l_total = 0;  // means per batch element
};

struct EpochReport {
    int epoch = 0;
    double l_gen = 0, l_cp = 0, l_total = 0;
    double dev_f1 = 0;
    bool evaluated = false;
};

struct TrainResult {
    std::vector<EpochReport> epochs;
    int best_epoch = -1;
    double best_dev_f1 = -1;
};

template <class S>
class TrainerT {
public:
    explicit TrainerT(ModelT<S>& model)
        : model_(&model),
          adam_(static_cast<S>(model.config().lr)),
          rng_(model.config().seed) {}

    // One optimizer step over a batch: per-example losses (each a sum over
    // response tokens) averaged across the batch.
    BatchReport train_batch(const std::vector<Example>& examples, const std::vector<size_t>& idx) {
        if (idx.empty()) throw std::invalid_argument("train_batch: empty batch");
        TapeT<S> t;
        auto& ps = model_->params();
        auto total = t.constant(TensorT<S>({1}));
        double sg = 0, sc = 0;
        for (size_t i : idx) {
            auto lo = model_->teacher_forced(t, examples[i], rng_, true);
            total = add(total, lo.total);
            sg += static_cast<double>(lo.l_gen.value()[0]);
            sc += static_cast<double>(lo.l_cp.value()[0]);
        }
        double B = static_cast<double>(idx.size());
        auto mean = scale(total, static_cast<S>(1.0 / B));
        BatchReport rep;
        rep.l_gen = sg / B;
        rep.l_cp = sc / B;
        rep.l_total = static_cast<double>(mean.value()[0]);
        if (!std::isfinite(rep.l_total))
            throw std::runtime_error("training aborted: non-finite batch loss (l_gen=" +
                                     std::to_string(rep.l_gen) + ", l_cp=" +
                                     std::to_string(rep.l_cp) + ", first example index " +
                                     std::to_string(idx.front()) + ")");
        ps.zero_grads();
        t.backward(mean);
        clip_grad_norm(ps, static_cast<double>(model_->config().clip));
        adam_.step(ps);
        return rep;
    }

    BatchReport train_epoch(const std::vector<Example>& examples) {
        if (examples.empty()) throw std::invalid_argument("train_epoch: empty dataset");
        std::vector<size_t> order(examples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(rng_.below(static_cast<uint32_t>(i)))]);
        int bsz = model_->config().batch;
        BatchReport acc;
        size_t done = 0;
        while (done < order.size()) {
            size_t take = std::min(static_cast<size_t>(bsz), order.size() - done);
            std::vector<size_t> idx(order.begin() + done, order.begin() + done + take);
            auto rep = train_batch(examples, idx);
            acc.l_gen += rep.l_gen * static_cast<double>(take);
            acc.l_cp += rep.l_cp * static_cast<double>(take);
            acc.l_total += rep.l_total * static_cast<double>(take);
            done += take;
        }
        double n = static_cast<double>(order.size());
        acc.l_gen /= n;
        acc.l_cp /= n;
        acc.l_total /= n;
        return acc;
    }

    // Greedy decode of every example; per-example rngs are forked from the
    // config seed so results do not depend on evaluation order.
    std::vector<std::vector<std::string>> predict(const std::vector<Example>& examples) {
        std::vector<std::vector<std::string>> preds;
        preds.reserve(examples.size());
        Rng base(model_->config().seed);
        for (size_t i = 0; i < examples.size(); ++i) {
            Rng erng = base.fork(i);
            preds.push_back(
                model_->greedy_decode(examples[i].history, erng, model_->config().max_decode_len)
                    .tokens);
        }
        return preds;
    }

    double eval_f1(const std::vector<Example>& examples) {
        auto preds = predict(examples);
        std::vector<std::vector<std::string>> golds;
        for (const auto& e : examples) golds.push_back(e.entities);
        return entity_f1(golds, preds, model_->kb());
    }

    // Full loop: metrics CSV per epoch, checkpoint kept at the best dev F1.
    TrainResult fit(const std::vector<Example>& train, const std::vector<Example>& dev,
                    const std::string& checkpoint_path = "", const std::string& csv_path = "",
                    const nlohmann::ordered_json& extra_meta = nlohmann::ordered_json::object()) {
        TrainResult result;
        std::ofstream csv;
        if (!csv_path.empty()) {
            csv.open(csv_path);
            if (!csv) throw std::runtime_error("cannot open metrics log " + csv_path);
            csv << "epoch,l_gen,l_cp,l_total,dev_f1\n";
        }
        const auto& cfg = model_->config();
        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            auto rep = train_epoch(train);
            EpochReport er;
            er.epoch = epoch;
            er.l_gen = rep.l_gen;
            er.l_cp = rep.l_cp;
            er.l_total = rep.l_total;
            bool last = epoch == cfg.epochs;
            if (!dev.empty() && (epoch % cfg.eval_every == 0 || last)) {
                er.dev_f1 = eval_f1(dev);
                er.evaluated = true;
                if (er.dev_f1 > result.best_dev_f1) {
                    result.best_dev_f1 = er.dev_f1;
                    result.best_epoch = epoch;
                    if (!checkpoint_path.empty()) {
                        nlohmann::ordered_json meta;
                        meta["epoch"] = epoch;
                        meta["dev_f1"] = er.dev_f1;
                        meta["config"] = config_to_text(cfg);
                        for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
                        save_checkpoint(checkpoint_path, model_->params(), meta);
                    }
                }
            }
            if (csv.is_open())
                csv << epoch << ',' << er.l_gen << ',' << er.l_cp << ',' << er.l_total << ','
                    << (er.evaluated ? std::to_string(er.dev_f1) : std::string("")) << "\n";
            result.epochs.push_back(er);
        }
        // a model that never improved still leaves a usable checkpoint
        if (!checkpoint_path.empty() && result.best_epoch < 0) {
            nlohmann::ordered_json meta;
            meta["epoch"] = cfg.epochs;
            meta["dev_f1"] = 0.0;
            meta["config"] = config_to_text(cfg);
            for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
            save_checkpoint(checkpoint_path, model_->params(), meta);
        }
        return result;
    }

    AdamT<S>& optimizer() { return adam_; }
    Rng& rng() { return rng_; }

private:
    ModelT<S>* model_;
    AdamT<S> adam_;
    Rng rng_;
};

using Trainer = TrainerT<float>;

}  // namespace nsdial
