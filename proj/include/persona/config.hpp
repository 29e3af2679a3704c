#pragma once
// One human-readable config file with dotted keys drives the whole pipeline.
// Unknown keys are validation errors; every artifact embeds the config hash
// (computed over everything except the workdir location) plus the seed.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "persona/context.hpp"
#include "persona/corpus.hpp"
#include "persona/harness.hpp"
#include "persona/model.hpp"
#include "persona/synth.hpp"
#include "persona/tabular.hpp"
#include "persona/train.hpp"

namespace persona {

struct PipelineConfig {
    // paths
    std::string workdir = "work";
    std::string corpus_source;
    std::string expansion_table;
    std::string lexicon_primary;
    std::string lexicon_secondary;
    std::string valence_table;
    std::string stopwords;

    // corpus schema
    CorpusSchema schema;
    std::size_t min_posts = 10;
    double balance_threshold = 0.05;
    std::size_t balance_budget = 1000000;
    double train_fraction = 0.8;
    std::uint64_t split_seed = 7;

    // textprep
    bool stemmer = false;
    std::size_t vocab_size = 10000;
    std::size_t capacity = 300;

    // context
    HourWindow late_night{1, 6};
    double sentiment_alpha = 15.0;
    std::size_t top_k_words = 10;

    // tabular
    TabularSchema tabular = TabularSchema::defaults();

    // model
    ModelConfig model;  // vocab/cat/num dims filled at train time
    std::uint64_t init_seed = 7;
    double gating_beta = 0.2;  // recorded for config fidelity; no gating
                               // combine method is implemented

    // train
    TrainConfig train;

    // explain
    std::size_t background_cap = 1024;
    std::size_t max_instances = 25;
    std::uint64_t explain_seed = 7;

    // ablation
    std::vector<std::string> ablation_variants;  // empty -> default plan
    std::vector<std::uint64_t> ablation_seeds = {7, 8, 9};
    bool ablation_parallel = false;
    int tfidf_max_features = 300;

    // synth
    SynthParams synth;

    static PipelineConfig parse_file(const std::string& path);
    static PipelineConfig parse_text(const std::string& text);

    // Violations, one per line item; empty means valid. File-existence checks
    // are included.
    std::vector<std::string> validate() const;

    // Canonical "key=value" rendering of all semantic settings (workdir
    // excluded) — the fingerprint embedded in artifact headers.
    std::string canonical() const;
    std::string hash() const;
    std::string artifact_meta() const;  // "config_hash=<hex> seed=<split seed>"

    std::string path_in_workdir(const std::string& name) const;
};

// Standard artifact file names inside the workdir.
namespace artifact {
inline constexpr const char* kSynthCorpus = "synthetic.tsv";
inline constexpr const char* kCorpusAll = "corpus_all.tsv";
inline constexpr const char* kCorpusTrain = "corpus_train.tsv";
inline constexpr const char* kCorpusTest = "corpus_test.tsv";
inline constexpr const char* kBalanceReport = "balance_report.json";
inline constexpr const char* kStoreTrain = "store_train.tsv";
inline constexpr const char* kStoreTest = "store_test.tsv";
inline constexpr const char* kTransform = "transform.tsv";
inline constexpr const char* kRowsTrain = "rows_train.tsv";
inline constexpr const char* kRowsTest = "rows_test.tsv";
inline constexpr const char* kVocab = "vocab.tsv";
inline constexpr const char* kCheckpoint = "checkpoint.tsv";
inline constexpr const char* kHistory = "history.csv";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kStoreAnnotated = "store_annotated.tsv";
inline constexpr const char* kAttributions = "attributions.json";
inline constexpr const char* kShapSummary = "shap_summary.csv";
inline constexpr const char* kCorrelation = "correlation.csv";
inline constexpr const char* kAblation = "ablation.csv";
inline constexpr const char* kSignificance = "significance.json";
inline constexpr const char* kReport = "report.json";
}  // namespace artifact

}  // namespace persona
