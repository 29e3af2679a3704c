#pragma once
// Baselines (TF-IDF + Gaussian NB, Gini decision tree) in tabular-only /
// text-only / text-tabular setups, and the seeded ablation driver over the
// hybrid model.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "persona/train.hpp"

namespace persona {

// ---------------------------------------------------------------------------
// TF-IDF

struct TfidfModel {
    std::vector<std::string> terms;  // top max_features by df, ties lexicographic
    std::unordered_map<std::string, int> index;
    std::vector<double> idf;  // ln((1+N)/(1+df)) + 1
};

TfidfModel tfidf_fit(const std::vector<std::string>& training_texts, int max_features = 300);
// Raw term counts times idf, L2-normalized (dense, |terms| wide).
std::vector<double> tfidf_apply(const TfidfModel& model, const std::string& text);

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

struct GaussianNb {
    std::array<double, 2> log_prior{};
    std::vector<std::array<double, 2>> mean;      // per feature per class
    std::vector<std::array<double, 2>> variance;  // floored at 1e-9
};

GaussianNb gaussian_nb_fit(const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels);
// (p(class0|x), p(class1|x)) via log-sum-exp.
std::array<double, 2> gaussian_nb_posterior(const GaussianNb& model,
                                            const std::vector<double>& x);
// Max posterior, ties toward class 0.
int gaussian_nb_predict(const GaussianNb& model, const std::vector<double>& x);

// ---------------------------------------------------------------------------
// Decision tree (Gini)

struct DecisionTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        int leaf_class = 0;
    };
    std::vector<Node> nodes;

    int predict(const std::vector<double>& x) const;
};

// Greedy binary splits minimizing weighted Gini impurity; thresholds are the
// midpoints between consecutive sorted unique values; ties break toward the
// lowest feature index, then the lowest threshold.
DecisionTree decision_tree_fit(const std::vector<std::vector<double>>& features,
                               const std::vector<int>& labels, int max_depth = 8);

// ---------------------------------------------------------------------------
// Setups

enum class Setup { tabular_only, text_only, text_tabular };
enum class Learner { nb, dt, transformer };

Setup setup_from_string(const std::string& s);
Learner learner_from_string(const std::string& s);

struct RunSettings {
    TabularSchema schema;
    EncodeSettings encode;
    int tfidf_max_features = 300;
    ModelConfig model_cfg;    // transformer only
    TrainConfig train_cfg;    // transformer only
    int dt_max_depth = 8;
};

struct RunOutput {
    MetricsReport report;
    std::vector<int> labels;
    std::vector<int> predictions;
};

// Assembles features per setup (tabular vectors; TF-IDF vectors; their
// concatenation for the classic learners; combine-mode switch for the
// transformer) and evaluates on the test rows. tabular_only + transformer is
// an invalid combination.
RunOutput run_setup(Setup setup, Learner learner, const std::vector<DataRow>& train_rows,
                    const std::vector<DataRow>& test_rows, const RunSettings& settings);

// ---------------------------------------------------------------------------
// Ablation

struct AblationPlan {
    // Variant names: "text_only" or "drop:<feature>". The attention-fusion
    // baseline always runs first.
    std::vector<std::string> variants;

    static AblationPlan default_plan(const TabularSchema& schema);
};

struct AblationRow {
    std::string variant;
    double f1_mean = 0.0;
    double f1_std = 0.0;  // population std over seeds
    std::vector<double> f1_per_seed;
};

struct AblationResult {
    std::vector<AblationRow> rows;  // baseline first, then plan order
    std::vector<std::uint64_t> seeds;
    // Test predictions of the first-seed run, keyed by variant (baseline
    // included) — inputs for the paired significance test.
    std::vector<std::vector<int>> first_seed_predictions;
    std::vector<int> test_labels;
};

// Trains and evaluates every variant with identical seeds and identical
// splits; set `parallel` to run variants on separate threads (results are
// ordered, so output is identical either way).
AblationResult run_ablation(const AblationPlan& plan, const std::vector<DataRow>& train_rows,
                            const std::vector<DataRow>& test_rows, const RunSettings& settings,
                            const std::vector<std::uint64_t>& seeds, bool parallel = false);

void write_ablation_csv(std::ostream& out, const AblationResult& result,
                        const std::string& meta_comment);

}  // namespace persona
