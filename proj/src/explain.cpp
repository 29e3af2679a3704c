#include "persona/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <ostream>

#include "json.hpp"

namespace persona {

double Attribution::model_output() const {
    return base_value + std::accumulate(phi.begin(), phi.end(), 0.0);
}

Attribution shapley_exact(const ModelFn& model_fn, const std::vector<double>& instance,
                          const std::vector<std::vector<double>>& background,
                          const std::vector<std::string>& feature_names,
                          const std::string& instance_id) {
    std::size_t f = instance.size();
    if (f == 0) throw Error("shapley_exact: no features");
    if (f > 15)
        throw Error("shapley_exact handles at most 15 features (2^F enumeration); "
                    "use a sampling estimator for larger feature sets");
    if (feature_names.size() != f) throw Error("shapley_exact: name/feature count mismatch");
    if (background.empty()) throw Error("shapley_exact: background must be non-empty");

    std::vector<double> means(f, 0.0);
    for (const auto& row : background) {
        if (row.size() != f) throw Error("shapley_exact: background row width mismatch");
        for (std::size_t i = 0; i < f; ++i) means[i] += row[i];
    }
    for (double& m : means) m /= static_cast<double>(background.size());

    // v(S) for every coalition mask: features in S keep the instance value,
    // the rest are imputed with background means.
    std::size_t n_masks = std::size_t{1} << f;
    std::vector<double> value(n_masks);
    std::vector<double> point(f);
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
        for (std::size_t i = 0; i < f; ++i) {
            point[i] = (mask >> i) & 1 ? instance[i] : means[i];
        }
        value[mask] = model_fn(point);
        if (!std::isfinite(value[mask]))
            throw Error("shapley_exact: model returned a non-finite value");
    }

    // phi_i = sum over S not containing i of |S|!(F-|S|-1)!/F! (v(S+i)-v(S)).
    std::vector<double> factorial(f + 1, 1.0);
    for (std::size_t i = 1; i <= f; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);
    std::vector<double> weight(f);
    for (std::size_t s = 0; s < f; ++s) {
        weight[s] = factorial[s] * factorial[f - s - 1] / factorial[f];
    }

    Attribution attr;
    attr.instance_id = instance_id;
    attr.feature_names = feature_names;
    attr.base_value = value[0];
    attr.phi.assign(f, 0.0);
    for (std::size_t i = 0; i < f; ++i) {
        std::size_t bit = std::size_t{1} << i;
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            std::size_t s = static_cast<std::size_t>(std::popcount(mask));
            attr.phi[i] += weight[s] * (value[mask | bit] - value[mask]);
        }
    }
    return attr;
}

GlobalSummary global_summary(const std::vector<Attribution>& attributions) {
    if (attributions.empty()) throw Error("global_summary: no attributions");
    const auto& names = attributions.front().feature_names;
    GlobalSummary summary;
    summary.feature_names = names;
    summary.mean_abs_phi.assign(names.size(), 0.0);
    for (const auto& attr : attributions) {
        if (attr.feature_names != names)
            throw Error("global_summary: inconsistent feature sets across attributions");
        for (std::size_t i = 0; i < names.size(); ++i)
            summary.mean_abs_phi[i] += std::abs(attr.phi[i]);
    }
    for (double& v : summary.mean_abs_phi) v /= static_cast<double>(attributions.size());

    summary.ranking.resize(names.size());
    std::iota(summary.ranking.begin(), summary.ranking.end(), std::size_t{0});
    std::sort(summary.ranking.begin(), summary.ranking.end(), [&](std::size_t a, std::size_t b) {
        if (summary.mean_abs_phi[a] != summary.mean_abs_phi[b])
            return summary.mean_abs_phi[a] > summary.mean_abs_phi[b];
        return names[a] < names[b];
    });
    return summary;
}

CorrelationMatrix pearson_matrix(const std::vector<std::vector<double>>& rows,
                                 const std::vector<std::string>& names) {
    if (rows.size() < 2) throw Error("pearson_matrix: need at least 2 rows");
    std::size_t cols = names.size();
    for (const auto& row : rows) {
        if (row.size() != cols) throw Error("pearson_matrix: row width mismatch");
    }
    double n = static_cast<double>(rows.size());

    std::vector<double> mean(cols, 0.0);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < cols; ++i) mean[i] += row[i];
    }
    for (double& m : mean) m /= n;

    std::vector<double> sd(cols, 0.0);
    CorrelationMatrix out;
    out.names = names;
    out.constant.assign(cols, false);
    for (std::size_t i = 0; i < cols; ++i) {
        double var = 0.0;
        for (const auto& row : rows) var += (row[i] - mean[i]) * (row[i] - mean[i]);
        sd[i] = std::sqrt(var);
        if (sd[i] < 1e-12) out.constant[i] = true;
    }

    out.r.assign(cols, std::vector<double>(cols, 0.0));
    for (std::size_t i = 0; i < cols; ++i) {
        out.r[i][i] = 1.0;
        for (std::size_t j = i + 1; j < cols; ++j) {
            double value = 0.0;
            if (!out.constant[i] && !out.constant[j]) {
                double cov = 0.0;
                for (const auto& row : rows) cov += (row[i] - mean[i]) * (row[j] - mean[j]);
                value = cov / (sd[i] * sd[j]);
                value = std::clamp(value, -1.0, 1.0);
            }
            out.r[i][j] = value;
            out.r[j][i] = value;
        }
    }
    return out;
}

void write_attributions_json(std::ostream& out, const std::vector<Attribution>& attributions,
                             const std::string& config_hash, std::uint64_t seed,
                             const std::string& model_id) {
    nlohmann::ordered_json j;
    j["meta"] = {{"kind", "attributions"},
                 {"config_hash", config_hash},
                 {"seed", seed},
                 {"model_id", model_id}};
    j["instances"] = nlohmann::ordered_json::array();
    for (const auto& attr : attributions) {
        nlohmann::ordered_json inst;
        inst["instance_id"] = attr.instance_id;
        inst["base_value"] = attr.base_value;
        nlohmann::ordered_json phi;
        for (std::size_t i = 0; i < attr.feature_names.size(); ++i)
            phi[attr.feature_names[i]] = attr.phi[i];
        inst["phi"] = phi;
        inst["model_output"] = attr.model_output();
        j["instances"].push_back(inst);
    }
    out << j.dump(2) << '\n';
}

void write_summary_csv(std::ostream& out, const GlobalSummary& summary,
                       const std::string& meta_comment) {
    if (!meta_comment.empty()) out << "# " << meta_comment << '\n';
    out << "feature,mean_abs_phi,rank\n";
    std::vector<std::size_t> rank_of(summary.feature_names.size());
    for (std::size_t pos = 0; pos < summary.ranking.size(); ++pos)
        rank_of[summary.ranking[pos]] = pos + 1;
    for (std::size_t pos = 0; pos < summary.ranking.size(); ++pos) {
        std::size_t i = summary.ranking[pos];
        out << summary.feature_names[i] << ',' << fmt_g17(summary.mean_abs_phi[i]) << ','
            << (pos + 1) << '\n';
    }
}

void write_correlation_csv(std::ostream& out, const CorrelationMatrix& matrix,
                           const std::string& meta_comment) {
    if (!meta_comment.empty()) out << "# " << meta_comment << '\n';
    out << "feature";
    for (const auto& name : matrix.names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < matrix.names.size(); ++i) {
        out << matrix.names[i];
        for (std::size_t j = 0; j < matrix.names.size(); ++j)
            out << ',' << fmt_g17(matrix.r[i][j]);
        out << '\n';
    }
}

}  // namespace persona
