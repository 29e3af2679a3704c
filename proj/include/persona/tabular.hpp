#pragma once
// Contextual feature encoding: the categorical vector c (one-hot over
// training-frozen categories) and the numerical vector n (Yeo-Johnson power
// transform fitted by profile likelihood, then standardization).

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "persona/common.hpp"

namespace persona {

struct TabularSchema {
    std::vector<std::string> numerical;
    std::vector<std::string> categorical;

    static TabularSchema defaults();
    TabularSchema without(const std::string& feature) const;
    // All feature names, numericals first, categoricals after.
    std::vector<std::string> feature_names() const;
};

// One raw feature row before encoding.
struct RawFeatureRow {
    std::map<std::string, double> numeric;
    std::map<std::string, std::string> categorical;

    double numeric_value(const std::string& name) const;
    const std::string& categorical_value(const std::string& name) const;
};

// Yeo-Johnson power transform; total function of (x, lambda).
double yeo_johnson(double x, double lambda);

struct YjFit {
    double lambda = 1.0;
    bool constant = false;
};

// Maximizes the profile log-likelihood
//   l(lambda) = -(N/2) ln sigma^2_lambda + (lambda-1) sum sign(x) ln(|x|+1)
// by golden-section search over [-2, 2] to a 1e-4 interval tolerance.
YjFit fit_yeo_johnson(const std::vector<double>& values);

// The likelihood objective, exposed for diagnostics and oracle checks.
double yeo_johnson_log_likelihood(const std::vector<double>& values, double lambda);

struct NumericTransform {
    double lambda = 1.0;
    double mean = 0.0;
    double std_dev = 1.0;
    bool constant = false;
};

struct FittedTransform {
    std::vector<std::string> numerical_names;
    std::vector<NumericTransform> numerical;
    std::vector<std::string> categorical_names;
    std::vector<std::vector<std::string>> categories;  // frozen, lexicographic

    std::size_t categorical_width() const;
    void save(const std::string& path, const std::string& header_extras) const;
    static FittedTransform load(const std::string& path,
                                std::map<std::string, std::string>* header_kv = nullptr);
};

// Fits lambdas, post-transform mean/std (population), and category lists on
// training rows only. Throws on an empty training set.
FittedTransform fit_transform(const TabularSchema& schema,
                              const std::vector<RawFeatureRow>& training_rows);

struct TabularVector {
    std::vector<double> c;  // one-hot blocks, schema order
    std::vector<double> n;  // standardized transformed numericals
};

using WarnFn = std::function<void(const std::string&)>;

// Encodes one row. Unseen categories yield an all-zero block plus a warning;
// a missing feature value is an error naming the feature.
TabularVector apply_transform(const FittedTransform& fitted, const RawFeatureRow& row,
                              const WarnFn& warn = nullptr);

// Encoding for mean-imputed feature vectors from the explainer: numericals in
// schema order, then one "trueness" in [0,1] per boolean categorical, encoded
// as the expected one-hot block. Categorical features must be boolean
// ("false"/"true") for this path.
TabularVector apply_transform_soft(const FittedTransform& fitted,
                                   const std::vector<double>& numeric_values,
                                   const std::vector<double>& categorical_trueness);

}  // namespace persona
