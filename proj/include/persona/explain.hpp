#pragma once
// Exact Shapley attribution of the tabular contextual features (text held
// fixed per instance), global importance summaries, and the Pearson
// correlation leakage diagnostic.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "persona/common.hpp"

namespace persona {

// Maps a raw tabular feature vector to the positive-class probability.
using ModelFn = std::function<double(const std::vector<double>&)>;

struct Attribution {
    std::string instance_id;
    double base_value = 0.0;  // v(empty) — all features at background means
    std::vector<std::string> feature_names;
    std::vector<double> phi;

    double model_output() const;  // base_value + sum(phi), i.e. v(full)
};

// Exact coalition enumeration with the mean-imputation value function:
// v(S) evaluates model_fn with features outside S replaced by their
// background means. Limited to <= 15 features (2^F evaluations).
Attribution shapley_exact(const ModelFn& model_fn, const std::vector<double>& instance,
                          const std::vector<std::vector<double>>& background,
                          const std::vector<std::string>& feature_names,
                          const std::string& instance_id = "");

struct GlobalSummary {
    std::vector<std::string> feature_names;
    std::vector<double> mean_abs_phi;
    // Indices into feature_names, descending mean |phi|, ties lexicographic.
    std::vector<std::size_t> ranking;
};

GlobalSummary global_summary(const std::vector<Attribution>& attributions);

struct CorrelationMatrix {
    std::vector<std::string> names;  // features plus target, in row order
    std::vector<std::vector<double>> r;
    std::vector<bool> constant;  // flagged columns (coefficients forced to 0)
};

// Sample Pearson coefficients over rows of (features..., target).
// Needs at least 2 rows; constant columns are flagged and get 0 off-diagonal.
CorrelationMatrix pearson_matrix(const std::vector<std::vector<double>>& rows,
                                 const std::vector<std::string>& names);

// Plot-ready CSV/JSON emission (meta comment first line).
void write_attributions_json(std::ostream& out, const std::vector<Attribution>& attributions,
                             const std::string& config_hash, std::uint64_t seed,
                             const std::string& model_id);
void write_summary_csv(std::ostream& out, const GlobalSummary& summary,
                       const std::string& meta_comment);
void write_correlation_csv(std::ostream& out, const CorrelationMatrix& matrix,
                           const std::string& meta_comment);

}  // namespace persona
