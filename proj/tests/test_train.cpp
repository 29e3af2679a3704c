#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "persona/train.hpp"

using namespace persona;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.encoder.d_model = 8;
    cfg.encoder.n_heads = 2;
    cfg.encoder.n_layers = 2;
    cfg.encoder.ffn_multiplier = 2;
    cfg.encoder.capacity = 4;
    cfg.vocab_size = 8;
    cfg.d_f = 4;
    cfg.cat_dim = 2;
    cfg.num_dim = 2;
    cfg.mlp_dropout = 0.0;
    return cfg;
}

TrainRecord record_of(std::vector<int> ids, std::vector<double> c, std::vector<double> n,
                      int label, std::size_t capacity = 4) {
    TrainRecord rec;
    rec.seq.length = ids.size();
    ids.resize(capacity, 0);
    rec.seq.ids = std::move(ids);
    rec.tab.c = std::move(c);
    rec.tab.n = std::move(n);
    rec.label = label;
    return rec;
}

std::vector<TrainRecord> toy_batch() {
    return {
        record_of({2, 3}, {1.0, 0.0}, {0.4, -1.2}, 0),
        record_of({4, 5}, {0.0, 1.0}, {-0.7, 0.9}, 1),
        record_of({6, 2, 7}, {1.0, 0.0}, {1.5, 0.2}, 1),
        record_of({}, {0.0, 1.0}, {-0.3, -0.5}, 0),  // empty text exercises the bypass
    };
}

double batch_loss_only(const ModelParams& params, const std::vector<TrainRecord>& batch,
                       CombineMode mode) {
    double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& rec : batch) {
        loss += cross_entropy(forward(rec.seq, rec.tab, params, mode).probs, rec.label) * inv;
    }
    return loss;
}

// Smallest |pre-activation| across every ReLU / LeakyReLU site in the batch;
// the finite-difference step must stay well clear of these kinks. Exact
// zeros are structurally pinned (an empty text fixes the fusion score at 0
// for every parameter value), so they cannot be crossed and are skipped.
double min_kink_distance(const ModelParams& params, const std::vector<TrainRecord>& batch,
                         CombineMode mode) {
    double min_abs = 1e300;
    auto consider = [&](double z) {
        if (z != 0.0) min_abs = std::min(min_abs, std::abs(z));
    };
    for (const auto& rec : batch) {
        ForwardCache cache;
        forward(rec.seq, rec.tab, params, mode, &cache);
        for (const auto& layer : cache.enc.layers) {
            for (double z : layer.ffn_z1) consider(z);
        }
        if (mode == CombineMode::attention_fusion) {
            for (double z : cache.cat_mlp.z1) consider(z);
            for (double z : cache.cat_mlp.z2) consider(z);
            for (double z : cache.num_mlp.z1) consider(z);
            for (double z : cache.num_mlp.z2) consider(z);
            for (double z : cache.fusion.z) consider(z);
        }
    }
    return min_abs;
}

struct FdWorst {
    double rel_err = 0.0;
    std::string tensor;
};

FdWorst finite_difference_check(ModelParams& params, const std::vector<TrainRecord>& batch,
                                CombineMode mode, double h) {
    ModelParams grads = ModelParams::zeros(params.cfg);
    model_gradients(params, batch, mode, grads);

    FdWorst worst;
    auto param_tensors = params.named_tensors();
    auto grad_tensors = grads.named_tensors();
    for (std::size_t t = 0; t < param_tensors.size(); ++t) {
        Tensor* pt = param_tensors[t].second;
        Tensor* gt = grad_tensors[t].second;
        for (std::size_t i = 0; i < pt->v.size(); ++i) {
            double old = pt->v[i];
            pt->v[i] = old + h;
            double lp = batch_loss_only(params, batch, mode);
            pt->v[i] = old - h;
            double lm = batch_loss_only(params, batch, mode);
            pt->v[i] = old;
            double fd = (lp - lm) / (2.0 * h);
            double g = gt->v[i];
            double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-3});
            if (rel > worst.rel_err) {
                worst.rel_err = rel;
                worst.tensor = param_tensors[t].first;
            }
        }
    }
    return worst;
}

// Linearly separable synthetic records: one class-marker token plus an
// informative numeric feature.
std::vector<TrainRecord> separable_records(int n, std::uint64_t seed, std::size_t capacity = 6) {
    Rng rng(seed);
    std::vector<TrainRecord> records;
    for (int i = 0; i < n; ++i) {
        int label = static_cast<int>(rng.index(2));
        std::vector<int> ids;
        for (int w = 0; w < 4; ++w) {
            if (rng.uniform() < 0.6) {
                ids.push_back(label == 1 ? 2 : 3);
            } else {
                ids.push_back(4 + static_cast<int>(rng.index(3)));
            }
        }
        std::vector<double> c = label == 1 ? std::vector<double>{0.0, 1.0}
                                           : std::vector<double>{1.0, 0.0};
        std::vector<double> n = {label == 1 ? 1.0 + rng.normal() * 0.1
                                            : -1.0 + rng.normal() * 0.1,
                                 rng.normal()};
        TrainRecord rec = record_of(ids, c, n, label, capacity);
        rec.user_id = "u" + std::to_string(i % 12);
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace

TEST_CASE("cross_entropy loss examples") {
    CHECK(cross_entropy({0.0, 1.0}, 1) == 0.0);  // perfect prediction
    CHECK(cross_entropy({0.5, 0.5}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    bool clamped = false;
    double loss = cross_entropy({1.0, 0.0}, 1, &clamped);
    CHECK(clamped);
    CHECK(loss == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, 2), Error);

    // Batch mean on an all-zero model: every prediction is (0.5, 0.5).
    ModelConfig cfg = toy_config();
    ModelParams zeros = ModelParams::zeros(cfg);
    ModelParams grads = ModelParams::zeros(cfg);
    double mean_loss =
        model_gradients(zeros, toy_batch(), CombineMode::attention_fusion, grads);
    CHECK(mean_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences (oracle)") {
    ModelConfig cfg = toy_config();
    std::vector<TrainRecord> batch = toy_batch();
    const double h = 1e-4;

    SUBCASE("attention_fusion covers every tensor including a, W_x, W_c, W_n") {
        ModelParams params = ModelParams::init(cfg, 2024);
        // The fixture must keep every kink comfortably beyond the FD step.
        REQUIRE(min_kink_distance(params, batch, CombineMode::attention_fusion) > 5 * h);
        FdWorst worst = finite_difference_check(params, batch, CombineMode::attention_fusion, h);
        CAPTURE(worst.tensor);
        CHECK(worst.rel_err <= 1e-4);
    }
    SUBCASE("text_only path") {
        ModelParams params = ModelParams::init(cfg, 77);
        REQUIRE(min_kink_distance(params, batch, CombineMode::text_only) > 5 * h);
        FdWorst worst = finite_difference_check(params, batch, CombineMode::text_only, h);
        CAPTURE(worst.tensor);
        CHECK(worst.rel_err <= 1e-4);
    }
}

TEST_CASE("zero-weight head with symmetric classes has zero head-bias gradient") {
    ModelConfig cfg = toy_config();
    ModelParams params = ModelParams::init(cfg, 5);
    params.head_w.zero();
    params.head_b.zero();
    // One example per class with identical inputs: dlogits cancel pairwise.
    std::vector<TrainRecord> batch = {
        record_of({2, 3}, {1.0, 0.0}, {0.5, 0.5}, 0),
        record_of({2, 3}, {1.0, 0.0}, {0.5, 0.5}, 1),
    };
    ModelParams grads = ModelParams::zeros(cfg);
    model_gradients(params, batch, CombineMode::attention_fusion, grads);
    CHECK(grads.head_b.v[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(grads.head_b.v[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("one small full-batch gradient-descent step strictly decreases the loss") {
    ModelConfig cfg = toy_config();
    ModelParams params = ModelParams::init(cfg, 11);
    std::vector<TrainRecord> batch = toy_batch();

    ModelParams grads = ModelParams::zeros(cfg);
    double loss_before = model_gradients(params, batch, CombineMode::attention_fusion, grads);
    auto pt = params.named_tensors();
    auto gt = grads.named_tensors();
    for (std::size_t t = 0; t < pt.size(); ++t) {
        for (std::size_t i = 0; i < pt[t].second->v.size(); ++i)
            pt[t].second->v[i] -= 1e-3 * gt[t].second->v[i];
    }
    double loss_after = batch_loss_only(params, batch, CombineMode::attention_fusion);
    CHECK(loss_after < loss_before);
}

TEST_CASE("train_model determinism and learning-rate-zero history") {
    ModelConfig cfg = toy_config();
    std::vector<TrainRecord> records = separable_records(40, 3);
    TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 8;
    tcfg.learning_rate = 5e-3;
    tcfg.seed = 9;

    SUBCASE("seed-fixed double run -> identical history and parameters") {
        TrainResult a = train_model(ModelParams::init(cfg, 1), records, records, tcfg);
        TrainResult b = train_model(ModelParams::init(cfg, 1), records, records, tcfg);
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t i = 0; i < a.history.size(); ++i) {
            CHECK(a.history[i].train_loss == b.history[i].train_loss);
            CHECK(a.history[i].val_f1 == b.history[i].val_f1);
        }
        auto at = a.params.named_tensors();
        auto bt = b.params.named_tensors();
        for (std::size_t t = 0; t < at.size(); ++t) CHECK(at[t].second->v == bt[t].second->v);
    }
    SUBCASE("learning rate ~0 keeps the loss history constant") {
        TrainConfig frozen = tcfg;
        frozen.learning_rate = 1e-300;  // positive but has no effect
        frozen.optimizer = Optimizer::gradient_descent;
        TrainResult r = train_model(ModelParams::init(cfg, 1), records, {}, frozen);
        for (std::size_t i = 1; i < r.history.size(); ++i) {
            CHECK(r.history[i].train_loss ==
                  doctest::Approx(r.history[0].train_loss).epsilon(1e-12));
        }
    }
}

TEST_CASE("overfit check: separable records reach high training accuracy") {
    ModelConfig cfg = toy_config();
    cfg.encoder.capacity = 6;
    std::vector<TrainRecord> records = separable_records(60, 21, 6);
    TrainConfig tcfg;
    tcfg.epochs = 25;
    tcfg.batch_size = 10;
    tcfg.learning_rate = 5e-3;
    tcfg.optimizer = Optimizer::adam;
    tcfg.seed = 4;
    TrainResult r = train_model(ModelParams::init(cfg, 2), records, {}, tcfg);
    MetricsReport report = evaluate_model(r.params, records, CombineMode::attention_fusion);
    CHECK(report.accuracy >= 0.9);
}

TEST_CASE("optimizers: momentum and clipping run deterministically") {
    ModelConfig cfg = toy_config();
    std::vector<TrainRecord> records = separable_records(30, 8);
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 8;
    tcfg.optimizer = Optimizer::momentum;
    tcfg.clip_norm = 5.0;
    TrainResult a = train_model(ModelParams::init(cfg, 3), records, {}, tcfg);
    TrainResult b = train_model(ModelParams::init(cfg, 3), records, {}, tcfg);
    CHECK(a.history.back().train_loss == b.history.back().train_loss);
}

TEST_CASE("metrics: hand-computed confusion fixtures") {
    SUBCASE("TP=2 FP=1 FN=1 TN=2") {
        MetricsReport r = MetricsReport::from_confusion(2, 1, 1, 2);
        CHECK(r.positive.precision == doctest::Approx(2.0 / 3.0));
        CHECK(r.positive.recall == doctest::Approx(2.0 / 3.0));
        CHECK(r.positive.f1 == doctest::Approx(2.0 / 3.0));
        CHECK(r.negative.precision == doctest::Approx(2.0 / 3.0));
        CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
        CHECK(r.macro_avg.f1 == doctest::Approx(2.0 / 3.0));
        CHECK(r.weighted_avg.f1 == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("all correct -> everything 1") {
        MetricsReport r = MetricsReport::from_confusion(5, 0, 0, 5);
        CHECK(r.accuracy == 1.0);
        CHECK(r.positive.f1 == 1.0);
        CHECK(r.negative.f1 == 1.0);
        CHECK(r.macro_avg.precision == 1.0);
        CHECK(r.weighted_avg.recall == 1.0);
    }
    SUBCASE("asymmetric fixture TP=3 FP=2 FN=1 TN=4 (hand-computed)") {
        MetricsReport r = MetricsReport::from_confusion(3, 2, 1, 4);
        CHECK(r.positive.precision == doctest::Approx(3.0 / 5.0));
        CHECK(r.positive.recall == doctest::Approx(3.0 / 4.0));
        CHECK(r.positive.f1 == doctest::Approx(2.0 / 3.0));
        CHECK(r.negative.precision == doctest::Approx(4.0 / 5.0));
        CHECK(r.negative.recall == doctest::Approx(2.0 / 3.0));
        CHECK(r.negative.f1 == doctest::Approx(8.0 / 11.0));
        CHECK(r.accuracy == doctest::Approx(0.7));
        CHECK(r.macro_avg.precision == doctest::Approx(0.7));
        CHECK(r.macro_avg.recall == doctest::Approx(17.0 / 24.0));
        CHECK(r.macro_avg.f1 == doctest::Approx(23.0 / 33.0));
        CHECK(r.weighted_avg.precision == doctest::Approx(0.72));
        CHECK(r.weighted_avg.recall == doctest::Approx(0.7));
        CHECK(r.weighted_avg.f1 == doctest::Approx(116.0 / 165.0));
    }
    SUBCASE("weighted recall equals accuracy for the 2-class case (property)") {
        Rng rng(6);
        for (int trial = 0; trial < 100; ++trial) {
            std::size_t tp = rng.index(20), fp = rng.index(20), fn = rng.index(20),
                        tn = 1 + rng.index(20);
            MetricsReport r = MetricsReport::from_confusion(tp, fp, fn, tn);
            CHECK(r.weighted_avg.recall == doctest::Approx(r.accuracy).epsilon(1e-12));
        }
    }
    SUBCASE("metrics_from_predictions wires the confusion correctly") {
        std::vector<int> labels{1, 1, 0, 0, 1, 0};
        std::vector<int> preds{1, 0, 0, 1, 1, 0};
        MetricsReport r = metrics_from_predictions(labels, preds);
        CHECK(r.tp == 2);
        CHECK(r.fn == 1);
        CHECK(r.fp == 1);
        CHECK(r.tn == 2);
    }
    SUBCASE("report renders Table-style JSON with the expected field names") {
        MetricsReport r = MetricsReport::from_confusion(2, 1, 1, 2);
        std::string json = r.to_json("metrics", "abcd", 7);
        for (const char* key : {"\"negative\"", "\"positive\"", "\"accuracy\"", "\"macro_avg\"",
                                "\"weighted_avg\"", "\"precision\"", "\"recall\"", "\"f1\"",
                                "\"support\""}) {
            CAPTURE(key);
            CHECK(json.find(key) != std::string::npos);
        }
    }
}

TEST_CASE("encode_splits builds the vocabulary from the training side only") {
    DataRow train1{"u1", 1, "alpha beta", {}};
    train1.features.numeric["f"] = 1.0;
    DataRow train2{"u2", 0, "beta gamma", {}};
    train2.features.numeric["f"] = -1.0;
    DataRow test1{"u3", 1, "delta beta", {}};  // delta unseen in training
    test1.features.numeric["f"] = 0.5;

    TabularSchema schema;
    schema.numerical = {"f"};
    EncodeSettings settings{10, 4};
    EncodedSplits enc = encode_splits({train1, train2}, {test1}, schema, settings);
    CHECK(enc.vocab.id_of("delta") == Vocabulary::kOovId);
    CHECK(enc.test[0].seq.ids[0] == Vocabulary::kOovId);
    CHECK(enc.test[0].seq.ids[1] == enc.vocab.id_of("beta"));
}

TEST_CASE("kfold partitions users and aggregates deterministically") {
    ModelConfig cfg = toy_config();
    cfg.encoder.capacity = 6;
    // 9 users, a handful of rows each.
    std::vector<DataRow> rows;
    Rng rng(14);
    for (int u = 0; u < 9; ++u) {
        for (int i = 0; i < 4; ++i) {
            DataRow row;
            row.user_id = "user" + std::to_string(u);
            row.label = u % 2;
            row.text_norm = row.label == 1 ? "happy day alpha" : "gloomy day beta";
            row.features.numeric["f"] = row.label == 1 ? 1.0 + rng.normal() * 0.1
                                                       : -1.0 + rng.normal() * 0.1;
            row.features.categorical["is_late_night"] = row.label == 0 ? "true" : "false";
            rows.push_back(row);
        }
    }
    TabularSchema schema;
    schema.numerical = {"f"};
    schema.categorical = {"is_late_night"};
    EncodeSettings settings{16, 6};
    TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 8;
    tcfg.learning_rate = 5e-3;
    tcfg.seed = 2;

    KFoldResult result = kfold(rows, 3, schema, settings, cfg, tcfg);
    REQUIRE(result.folds.size() == 3);

    // Partition: every fold holds 3 users' worth of rows (12 each) and the
    // supports over folds cover all 36 rows exactly once.
    std::size_t total = 0;
    for (const auto& fold : result.folds) total += fold.macro_avg.support;
    CHECK(total == rows.size());
    for (const auto& fold : result.folds) CHECK(fold.macro_avg.support == 12);

    CHECK(result.aggregate.f1_std >= 0.0);
    CHECK(result.aggregate.accuracy_mean >= 0.0);
    CHECK(result.aggregate.accuracy_mean <= 1.0);

    KFoldResult again = kfold(rows, 3, schema, settings, cfg, tcfg);
    CHECK(again.aggregate.f1_mean == result.aggregate.f1_mean);
    CHECK(again.aggregate.f1_std == result.aggregate.f1_std);

    CHECK_THROWS_AS(kfold(rows, 10, schema, settings, cfg, tcfg), Error);  // 9 users < 10 folds
}

TEST_CASE("paired bootstrap significance") {
    std::size_t n = 200;
    std::vector<int> labels(n), perfect(n), noisy(n);
    Rng rng(19);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(rng.index(2));
        perfect[i] = labels[i];
        noisy[i] = rng.uniform() < 0.5 ? labels[i] : 1 - labels[i];
    }

    SUBCASE("identical systems -> p close to 1") {
        CHECK(paired_significance(labels, noisy, noisy, 1000, 7) == doctest::Approx(1.0));
    }
    SUBCASE("strict dominance on every row -> p < 0.05") {
        CHECK(paired_significance(labels, perfect, noisy, 1000, 7) < 0.05);
    }
    SUBCASE("deterministic for a fixed seed") {
        double p1 = paired_significance(labels, perfect, noisy, 500, 11);
        double p2 = paired_significance(labels, perfect, noisy, 500, 11);
        CHECK(p1 == p2);
    }
    SUBCASE("mismatched row sets -> error") {
        std::vector<int> shorter(labels.begin(), labels.end() - 1);
        CHECK_THROWS_AS(paired_significance(labels, perfect, shorter), Error);
    }
}
