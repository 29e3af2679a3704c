#include "persona/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace persona {

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "gradient_descent" || s == "sgd") return Optimizer::gradient_descent;
    if (s == "momentum") return Optimizer::momentum;
    if (s == "adam") return Optimizer::adam;
    throw Error("unknown optimizer: " + s);
}

void TrainConfig::check() const {
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (batch_size < 1) throw Error("batch size must be >= 1");
    if (clip_norm < 0.0) throw Error("clip_norm must be >= 0");
}

double cross_entropy(const std::array<double, 2>& probs, int label, bool* clamped) {
    if (label != 0 && label != 1) throw Error("label must be 0 or 1");
    double p = probs[label];
    if (p < 1e-12) {
        p = 1e-12;
        if (clamped) *clamped = true;
    }
    return -std::log(p);
}

double model_gradients(const ModelParams& params, const std::vector<TrainRecord>& batch,
                       CombineMode mode, ModelParams& grads) {
    if (batch.empty()) throw Error("gradient batch must be non-empty");
    double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    ForwardCache cache;
    for (const auto& rec : batch) {
        ForwardResult res = forward(rec.seq, rec.tab, params, mode, &cache);
        loss += cross_entropy(res.probs, rec.label) * inv;
        // d(mean CE)/d(logits) for softmax + cross-entropy.
        std::array<double, 2> dlogits{cache.probs[0] * inv, cache.probs[1] * inv};
        dlogits[rec.label] -= inv;
        backward(params, rec.seq, rec.tab, cache, dlogits, grads);
    }
    for (auto& [name, tensor] : grads.named_tensors()) {
        for (double g : tensor->v) {
            if (!std::isfinite(g)) throw Error("non-finite gradient in " + name);
        }
    }
    return loss;
}

namespace {

// Same as model_gradients but with dropout masks drawn from `dropout_rng`.
double training_step_gradients(const ModelParams& params, const std::vector<TrainRecord>& batch,
                               CombineMode mode, ModelParams& grads, Rng* dropout_rng,
                               bool* clamped) {
    double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    ForwardCache cache;
    DropoutCtx ctx{dropout_rng};
    DropoutCtx* ctx_ptr = dropout_rng ? &ctx : nullptr;
    for (const auto& rec : batch) {
        ForwardResult res = forward(rec.seq, rec.tab, params, mode, &cache, ctx_ptr);
        loss += cross_entropy(res.probs, rec.label, clamped) * inv;
        std::array<double, 2> dlogits{cache.probs[0] * inv, cache.probs[1] * inv};
        dlogits[rec.label] -= inv;
        backward(params, rec.seq, rec.tab, cache, dlogits, grads);
    }
    return loss;
}

struct OptimizerState {
    ModelParams m;  // momentum / first moment
    ModelParams v;  // second moment (adam)
    long long step = 0;
};

void apply_update(ModelParams& params, ModelParams& grads, OptimizerState& state,
                  const TrainConfig& cfg) {
    if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto& [name, g] : grads.named_tensors()) {
            for (double x : g->v) sq += x * x;
        }
        double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
            double scale = cfg.clip_norm / norm;
            for (auto& [name, g] : grads.named_tensors()) {
                for (double& x : g->v) x *= scale;
            }
        }
    }

    auto param_tensors = params.named_tensors();
    auto grad_tensors = grads.named_tensors();
    switch (cfg.optimizer) {
        case Optimizer::gradient_descent: {
            for (std::size_t t = 0; t < param_tensors.size(); ++t) {
                Tensor* p = param_tensors[t].second;
                Tensor* g = grad_tensors[t].second;
                for (std::size_t i = 0; i < p->v.size(); ++i) p->v[i] -= cfg.learning_rate * g->v[i];
            }
            break;
        }
        case Optimizer::momentum: {
            auto m_tensors = state.m.named_tensors();
            for (std::size_t t = 0; t < param_tensors.size(); ++t) {
                Tensor* p = param_tensors[t].second;
                Tensor* g = grad_tensors[t].second;
                Tensor* m = m_tensors[t].second;
                for (std::size_t i = 0; i < p->v.size(); ++i) {
                    m->v[i] = cfg.momentum_mu * m->v[i] + g->v[i];
                    p->v[i] -= cfg.learning_rate * m->v[i];
                }
            }
            break;
        }
        case Optimizer::adam: {
            state.step++;
            double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
            double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
            auto m_tensors = state.m.named_tensors();
            auto v_tensors = state.v.named_tensors();
            for (std::size_t t = 0; t < param_tensors.size(); ++t) {
                Tensor* p = param_tensors[t].second;
                Tensor* g = grad_tensors[t].second;
                Tensor* m = m_tensors[t].second;
                Tensor* v = v_tensors[t].second;
                for (std::size_t i = 0; i < p->v.size(); ++i) {
                    m->v[i] = cfg.adam_beta1 * m->v[i] + (1.0 - cfg.adam_beta1) * g->v[i];
                    v->v[i] = cfg.adam_beta2 * v->v[i] + (1.0 - cfg.adam_beta2) * g->v[i] * g->v[i];
                    double mhat = m->v[i] / bc1;
                    double vhat = v->v[i] / bc2;
                    p->v[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
                }
            }
            break;
        }
    }
}

}  // namespace

TrainResult train_model(ModelParams initial, const std::vector<TrainRecord>& train_records,
                        const std::vector<TrainRecord>& val_records, const TrainConfig& config) {
    config.check();
    if (train_records.empty()) throw Error("training split is empty");

    TrainResult result;
    result.params = std::move(initial);

    OptimizerState state;
    if (config.optimizer != Optimizer::gradient_descent) {
        state.m = ModelParams::zeros(result.params.cfg);
        if (config.optimizer == Optimizer::adam) state.v = ModelParams::zeros(result.params.cfg);
    }

    Rng shuffle_rng(config.seed);
    Rng dropout_rng(config.seed ^ 0x5deece66dULL);
    bool dropout_active = config.use_dropout && (result.params.cfg.encoder.dropout > 0.0 ||
                                                 result.params.cfg.mlp_dropout > 0.0);

    std::vector<std::size_t> order(train_records.size());
    std::iota(order.begin(), order.end(), 0);
    ModelParams grads = ModelParams::zeros(result.params.cfg);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<TrainRecord> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(train_records[order[i]]);

            for (auto& [name, tensor] : grads.named_tensors()) tensor->zero();
            double batch_loss;
            try {
                batch_loss =
                    training_step_gradients(result.params, batch, config.mode, grads,
                                            dropout_active ? &dropout_rng : nullptr,
                                            &result.loss_clamped);
            } catch (const Error& e) {
                // Exploding activations / gradients surface as non-finite
                // errors from the forward or backward pass.
                if (std::string(e.what()).find("non-finite") != std::string::npos)
                    throw Error("training diverged at epoch " + std::to_string(epoch) + ": " +
                                e.what());
                throw;
            }
            if (!std::isfinite(batch_loss))
                throw Error("training diverged at epoch " + std::to_string(epoch) +
                            ": non-finite loss");
            epoch_loss += batch_loss * static_cast<double>(batch.size());
            seen += batch.size();
            apply_update(result.params, grads, state, config);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(seen);
        stats.val_f1 =
            val_records.empty() ? 0.0 : positive_f1(result.params, val_records, config.mode);
        result.history.push_back(stats);
    }
    return result;
}

MetricsReport MetricsReport::from_confusion(std::size_t tp, std::size_t fp, std::size_t fn,
                                            std::size_t tn) {
    MetricsReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.tn = tn;
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    auto f1_of = [](double p, double rec) {
        return (p + rec) == 0.0 ? 0.0 : 2.0 * p * rec / (p + rec);
    };

    r.positive.precision = ratio(tp, tp + fp);
    r.positive.recall = ratio(tp, tp + fn);
    r.positive.f1 = f1_of(r.positive.precision, r.positive.recall);
    r.positive.support = tp + fn;

    r.negative.precision = ratio(tn, tn + fn);
    r.negative.recall = ratio(tn, tn + fp);
    r.negative.f1 = f1_of(r.negative.precision, r.negative.recall);
    r.negative.support = tn + fp;

    std::size_t total = tp + fp + fn + tn;
    r.accuracy = ratio(tp + tn, total);

    r.macro_avg.precision = (r.positive.precision + r.negative.precision) / 2.0;
    r.macro_avg.recall = (r.positive.recall + r.negative.recall) / 2.0;
    r.macro_avg.f1 = (r.positive.f1 + r.negative.f1) / 2.0;
    r.macro_avg.support = total;

    double wp = static_cast<double>(r.positive.support);
    double wn = static_cast<double>(r.negative.support);
    double wt = wp + wn;
    if (wt > 0) {
        r.weighted_avg.precision = (wp * r.positive.precision + wn * r.negative.precision) / wt;
        r.weighted_avg.recall = (wp * r.positive.recall + wn * r.negative.recall) / wt;
        r.weighted_avg.f1 = (wp * r.positive.f1 + wn * r.negative.f1) / wt;
    }
    r.weighted_avg.support = total;
    return r;
}

MetricsReport metrics_from_predictions(const std::vector<int>& labels,
                                       const std::vector<int>& predictions) {
    if (labels.size() != predictions.size()) throw Error("labels/predictions size mismatch");
    if (labels.empty()) throw Error("cannot evaluate an empty split");
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i] == 1) {
            (labels[i] == 1 ? tp : fp)++;
        } else {
            (labels[i] == 0 ? tn : fn)++;
        }
    }
    return MetricsReport::from_confusion(tp, fp, fn, tn);
}

std::vector<int> predict(const ModelParams& params, const std::vector<TrainRecord>& records,
                         CombineMode mode) {
    std::vector<int> preds;
    preds.reserve(records.size());
    for (const auto& rec : records) {
        ForwardResult res = forward(rec.seq, rec.tab, params, mode);
        preds.push_back(res.probs[1] > res.probs[0] ? 1 : 0);
    }
    return preds;
}

MetricsReport evaluate_model(const ModelParams& params, const std::vector<TrainRecord>& records,
                             CombineMode mode) {
    std::vector<int> labels;
    labels.reserve(records.size());
    for (const auto& rec : records) labels.push_back(rec.label);
    return metrics_from_predictions(labels, predict(params, records, mode));
}

double positive_f1(const ModelParams& params, const std::vector<TrainRecord>& records,
                   CombineMode mode) {
    return evaluate_model(params, records, mode).positive.f1;
}

std::string MetricsReport::to_json(const std::string& meta_kind, const std::string& config_hash,
                                   std::uint64_t seed) const {
    nlohmann::ordered_json j;
    j["meta"] = {{"kind", meta_kind}, {"config_hash", config_hash}, {"seed", seed}};
    auto cls = [](const ClassMetrics& c) {
        return nlohmann::ordered_json{{"precision", c.precision},
                                      {"recall", c.recall},
                                      {"f1", c.f1},
                                      {"support", c.support}};
    };
    j["negative"] = cls(negative);
    j["positive"] = cls(positive);
    j["accuracy"] = accuracy;
    j["macro_avg"] = cls(macro_avg);
    j["weighted_avg"] = cls(weighted_avg);
    j["confusion"] = {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}};
    return j.dump(2) + "\n";
}

EncodedSplits encode_splits(const std::vector<DataRow>& train_rows,
                            const std::vector<DataRow>& test_rows, const TabularSchema& schema,
                            const EncodeSettings& settings) {
    EncodedSplits out;
    std::vector<std::string> train_texts;
    train_texts.reserve(train_rows.size());
    for (const auto& row : train_rows) train_texts.push_back(row.text_norm);
    out.vocab = Vocabulary::build(train_texts, settings.vocab_size);

    std::vector<RawFeatureRow> train_features;
    train_features.reserve(train_rows.size());
    for (const auto& row : train_rows) train_features.push_back(row.features);
    out.transform = fit_transform(schema, train_features);

    auto encode = [&](const std::vector<DataRow>& rows) {
        std::vector<TrainRecord> records;
        records.reserve(rows.size());
        for (const auto& row : rows) {
            TrainRecord rec;
            rec.seq = tokenize_pad(row.text_norm, out.vocab, settings.capacity);
            rec.tab = apply_transform(out.transform, row.features);
            rec.label = row.label;
            rec.user_id = row.user_id;
            records.push_back(std::move(rec));
        }
        return records;
    };
    out.train = encode(train_rows);
    out.test = encode(test_rows);
    return out;
}

KFoldResult kfold(const std::vector<DataRow>& rows, int k, const TabularSchema& schema,
                  const EncodeSettings& settings, const ModelConfig& model_cfg,
                  const TrainConfig& config) {
    if (k < 2) throw Error("kfold requires k >= 2");
    std::vector<std::string> users;
    {
        std::vector<std::string> seen_order;
        std::unordered_map<std::string, bool> seen;
        for (const auto& row : rows) {
            if (!seen[row.user_id]) {
                seen[row.user_id] = true;
                seen_order.push_back(row.user_id);
            }
        }
        users = std::move(seen_order);
    }
    if (static_cast<int>(users.size()) < k)
        throw Error("kfold: fewer users than folds (" + std::to_string(users.size()) + " < " +
                    std::to_string(k) + ")");

    Rng rng(config.seed);
    rng.shuffle(users);
    std::unordered_map<std::string, int> fold_of;
    for (std::size_t i = 0; i < users.size(); ++i)
        fold_of[users[i]] = static_cast<int>(i % static_cast<std::size_t>(k));

    KFoldResult result;
    std::vector<double> accs, precs, recs, f1s;
    for (int fold = 0; fold < k; ++fold) {
        std::vector<DataRow> train_rows, test_rows;
        for (const auto& row : rows) {
            (fold_of[row.user_id] == fold ? test_rows : train_rows).push_back(row);
        }
        EncodedSplits enc = encode_splits(train_rows, test_rows, schema, settings);
        ModelConfig cfg = model_cfg;
        cfg.vocab_size = static_cast<int>(enc.vocab.size());
        cfg.cat_dim = static_cast<int>(enc.transform.categorical_width());
        cfg.num_dim = static_cast<int>(enc.transform.numerical.size());
        TrainConfig fold_cfg = config;
        fold_cfg.seed = config.seed + static_cast<std::uint64_t>(fold);
        ModelParams init = ModelParams::init(cfg, fold_cfg.seed);
        TrainResult trained = train_model(std::move(init), enc.train, {}, fold_cfg);
        MetricsReport report = evaluate_model(trained.params, enc.test, config.mode);
        accs.push_back(report.accuracy);
        precs.push_back(report.positive.precision);
        recs.push_back(report.positive.recall);
        f1s.push_back(report.positive.f1);
        result.folds.push_back(report);
    }

    auto mean_std = [](const std::vector<double>& xs, double* mean, double* sd) {
        double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - m) * (x - m);
        var /= static_cast<double>(xs.size());
        *mean = m;
        *sd = std::sqrt(var);
    };
    mean_std(accs, &result.aggregate.accuracy_mean, &result.aggregate.accuracy_std);
    mean_std(precs, &result.aggregate.precision_mean, &result.aggregate.precision_std);
    mean_std(recs, &result.aggregate.recall_mean, &result.aggregate.recall_std);
    mean_std(f1s, &result.aggregate.f1_mean, &result.aggregate.f1_std);
    return result;
}

double paired_significance(const std::vector<int>& labels, const std::vector<int>& preds_a,
                           const std::vector<int>& preds_b, int resamples, std::uint64_t seed) {
    std::size_t n = labels.size();
    if (preds_a.size() != n || preds_b.size() != n)
        throw Error("paired_significance: row sets must match");
    if (n == 0) throw Error("paired_significance: empty row set");
    if (resamples < 1) throw Error("paired_significance: resamples must be >= 1");

    auto f1_of_sample = [&](const std::vector<std::size_t>& idx, const std::vector<int>& preds) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i : idx) {
            if (preds[i] == 1 && labels[i] == 1) tp++;
            if (preds[i] == 1 && labels[i] == 0) fp++;
            if (preds[i] == 0 && labels[i] == 1) fn++;
        }
        double denom = static_cast<double>(2 * tp + fp + fn);
        return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
    };

    Rng rng(seed);
    std::vector<std::size_t> idx(n);
    long long count_le = 0, count_ge = 0;
    for (int r = 0; r < resamples; ++r) {
        for (std::size_t i = 0; i < n; ++i) idx[i] = rng.index(n);
        double diff = f1_of_sample(idx, preds_a) - f1_of_sample(idx, preds_b);
        if (diff <= 0.0) count_le++;
        if (diff >= 0.0) count_ge++;
    }
    double tail = static_cast<double>(std::min(count_le, count_ge) + 1) /
                  static_cast<double>(resamples + 1);
    return std::min(1.0, 2.0 * tail);
}

}  // namespace persona
