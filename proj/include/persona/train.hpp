#pragma once
// Cross-entropy training of every model tensor, deterministic mini-batching,
// Table-style evaluation metrics, user-disjoint k-fold, and the paired
// bootstrap significance test.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "persona/model.hpp"

namespace persona {

enum class Optimizer { gradient_descent, momentum, adam };

Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 10;
    int batch_size = 16;
    std::uint64_t seed = 7;
    CombineMode mode = CombineMode::attention_fusion;
    Optimizer optimizer = Optimizer::adam;
    double momentum_mu = 0.9;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 0.0;  // 0 disables clipping
    bool use_dropout = false;

    void check() const;
};

struct TrainRecord {
    TokenSequence seq;
    TabularVector tab;
    int label = 0;
    std::string user_id;
};

// -ln p[label]; probabilities clamped at 1e-12 (sets *clamped when hit).
double cross_entropy(const std::array<double, 2>& probs, int label, bool* clamped = nullptr);

// Exact analytic gradient of the mean batch loss w.r.t. every tensor;
// returns the mean loss.
double model_gradients(const ModelParams& params, const std::vector<TrainRecord>& batch,
                       CombineMode mode, ModelParams& grads);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_f1 = 0.0;  // positive-class F1 on the validation split
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
    bool loss_clamped = false;
};

TrainResult train_model(ModelParams initial, const std::vector<TrainRecord>& train_records,
                        const std::vector<TrainRecord>& val_records, const TrainConfig& config);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    ClassMetrics negative;  // class 0
    ClassMetrics positive;  // class 1
    double accuracy = 0.0;
    ClassMetrics macro_avg;     // unweighted mean (support = total)
    ClassMetrics weighted_avg;  // support-weighted mean
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    static MetricsReport from_confusion(std::size_t tp, std::size_t fp, std::size_t fn,
                                        std::size_t tn);
    std::string to_json(const std::string& meta_kind, const std::string& config_hash,
                        std::uint64_t seed) const;
};

MetricsReport metrics_from_predictions(const std::vector<int>& labels,
                                       const std::vector<int>& predictions);

// Argmax prediction (ties toward class 0).
std::vector<int> predict(const ModelParams& params, const std::vector<TrainRecord>& records,
                         CombineMode mode);

MetricsReport evaluate_model(const ModelParams& params, const std::vector<TrainRecord>& records,
                             CombineMode mode);

double positive_f1(const ModelParams& params, const std::vector<TrainRecord>& records,
                   CombineMode mode);

struct MetricAggregate {
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double precision_mean = 0.0, precision_std = 0.0;
    double recall_mean = 0.0, recall_std = 0.0;
    double f1_mean = 0.0, f1_std = 0.0;  // positive-class metrics
};

struct KFoldResult {
    std::vector<MetricsReport> folds;
    MetricAggregate aggregate;  // mean +/- population std over folds
};

// Raw per-post rows used by k-fold and the harness (featurized text plus raw
// tabular feature values; encoding happens per fold / per variant).
struct DataRow {
    std::string user_id;
    int label = 0;
    std::string text_norm;
    RawFeatureRow features;
};

struct EncodeSettings {
    std::size_t vocab_size = 10000;
    std::size_t capacity = 300;
};

// Builds vocab + transform on the training rows only, then encodes both
// sides into TrainRecords.
struct EncodedSplits {
    Vocabulary vocab;
    FittedTransform transform;
    std::vector<TrainRecord> train;
    std::vector<TrainRecord> test;
};
EncodedSplits encode_splits(const std::vector<DataRow>& train_rows,
                            const std::vector<DataRow>& test_rows, const TabularSchema& schema,
                            const EncodeSettings& settings);

// User-disjoint k-fold: users shuffled by seed and dealt round-robin; each
// fold refits vocab and transform on its own training side. Fold i trains
// with seed (config.seed + i).
KFoldResult kfold(const std::vector<DataRow>& rows, int k, const TabularSchema& schema,
                  const EncodeSettings& settings, const ModelConfig& model_cfg,
                  const TrainConfig& config);

// Two-sided paired bootstrap over rows on the positive-F1 difference.
double paired_significance(const std::vector<int>& labels, const std::vector<int>& preds_a,
                           const std::vector<int>& preds_b, int resamples = 1000,
                           std::uint64_t seed = 7);

}  // namespace persona
