#include "persona/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

namespace persona {

TfidfModel tfidf_fit(const std::vector<std::string>& training_texts, int max_features) {
    if (max_features < 1) throw Error("tfidf max_features must be >= 1");
    std::unordered_map<std::string, int> df;
    for (const auto& text : training_texts) {
        std::set<std::string> seen;
        for (const auto& tok : split_ws(text)) seen.insert(tok);
        for (const auto& tok : seen) df[tok]++;
    }
    if (df.empty()) throw Error("tfidf vocabulary is empty");

    std::vector<std::pair<std::string, int>> ranked(df.begin(), df.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > max_features) ranked.resize(max_features);

    TfidfModel model;
    double n = static_cast<double>(training_texts.size());
    for (const auto& [term, term_df] : ranked) {
        model.index[term] = static_cast<int>(model.terms.size());
        model.terms.push_back(term);
        model.idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(term_df))) + 1.0);
    }
    return model;
}

std::vector<double> tfidf_apply(const TfidfModel& model, const std::string& text) {
    std::vector<double> vec(model.terms.size(), 0.0);
    for (const auto& tok : split_ws(text)) {
        auto it = model.index.find(tok);
        if (it != model.index.end()) vec[it->second] += 1.0;  // raw term count
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < vec.size(); ++i) {
        vec[i] *= model.idf[i];
        sq += vec[i] * vec[i];
    }
    if (sq > 0.0) {
        double inv = 1.0 / std::sqrt(sq);
        for (double& v : vec) v *= inv;
    }
    return vec;
}

GaussianNb gaussian_nb_fit(const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels) {
    if (features.size() != labels.size() || features.empty())
        throw Error("gaussian_nb_fit: bad inputs");
    std::size_t width = features.front().size();
    std::array<std::size_t, 2> counts{0, 0};
    for (int label : labels) {
        if (label != 0 && label != 1) throw Error("gaussian_nb_fit: labels must be 0/1");
        counts[label]++;
    }
    if (counts[0] == 0 || counts[1] == 0)
        throw Error("gaussian_nb_fit: need at least one sample per class");

    GaussianNb model;
    model.mean.assign(width, {0.0, 0.0});
    model.variance.assign(width, {0.0, 0.0});
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != width) throw Error("gaussian_nb_fit: ragged features");
        for (std::size_t j = 0; j < width; ++j) model.mean[j][labels[i]] += features[i][j];
    }
    for (std::size_t j = 0; j < width; ++j) {
        for (int c = 0; c < 2; ++c) model.mean[j][c] /= static_cast<double>(counts[c]);
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            double d = features[i][j] - model.mean[j][labels[i]];
            model.variance[j][labels[i]] += d * d;
        }
    }
    for (std::size_t j = 0; j < width; ++j) {
        for (int c = 0; c < 2; ++c) {
            model.variance[j][c] =
                std::max(model.variance[j][c] / static_cast<double>(counts[c]), 1e-9);
        }
    }
    double total = static_cast<double>(labels.size());
    model.log_prior = {std::log(static_cast<double>(counts[0]) / total),
                       std::log(static_cast<double>(counts[1]) / total)};
    return model;
}

std::array<double, 2> gaussian_nb_posterior(const GaussianNb& model,
                                            const std::vector<double>& x) {
    if (x.size() != model.mean.size()) throw Error("gaussian_nb: feature width mismatch");
    constexpr double kLog2Pi = 1.8378770664093453;
    std::array<double, 2> lp = model.log_prior;
    for (std::size_t j = 0; j < x.size(); ++j) {
        for (int c = 0; c < 2; ++c) {
            double var = model.variance[j][c];
            double d = x[j] - model.mean[j][c];
            lp[c] += -0.5 * (kLog2Pi + std::log(var) + d * d / var);
        }
    }
    double mx = std::max(lp[0], lp[1]);
    double e0 = std::exp(lp[0] - mx);
    double e1 = std::exp(lp[1] - mx);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

int gaussian_nb_predict(const GaussianNb& model, const std::vector<double>& x) {
    auto post = gaussian_nb_posterior(model, x);
    return post[1] > post[0] ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Decision tree

namespace {

double gini(std::size_t n0, std::size_t n1) {
    double total = static_cast<double>(n0 + n1);
    if (total == 0.0) return 0.0;
    double p0 = static_cast<double>(n0) / total;
    double p1 = static_cast<double>(n1) / total;
    return 1.0 - p0 * p0 - p1 * p1;
}

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
};

SplitChoice best_split(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
    std::size_t width = features.front().size();
    SplitChoice best;
    for (std::size_t f = 0; f < width; ++f) {
        std::vector<std::pair<double, int>> values;
        values.reserve(idx.size());
        for (std::size_t i : idx) values.push_back({features[i][f], labels[i]});
        std::sort(values.begin(), values.end());

        std::size_t total1 = 0;
        for (const auto& [v, y] : values) total1 += static_cast<std::size_t>(y);
        std::size_t total0 = values.size() - total1;
        std::size_t left0 = 0, left1 = 0;
        for (std::size_t i = 0; i + 1 < values.size(); ++i) {
            (values[i].second == 1 ? left1 : left0)++;
            if (values[i].first == values[i + 1].first) continue;
            double threshold = (values[i].first + values[i + 1].first) / 2.0;
            double n = static_cast<double>(values.size());
            double wl = static_cast<double>(left0 + left1) / n;
            double wr = 1.0 - wl;
            double impurity =
                wl * gini(left0, left1) + wr * gini(total0 - left0, total1 - left1);
            // Strictly-better keeps the first (lowest feature, lowest
            // threshold) among ties.
            if (!best.found || impurity < best.impurity - 1e-12) {
                best.found = true;
                best.feature = static_cast<int>(f);
                best.threshold = threshold;
                best.impurity = impurity;
            }
        }
    }
    return best;
}

int build_node(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
               const std::vector<std::size_t>& idx, int depth, int max_depth,
               DecisionTree* tree) {
    std::size_t n1 = 0;
    for (std::size_t i : idx) n1 += static_cast<std::size_t>(labels[i]);
    std::size_t n0 = idx.size() - n1;

    int node_id = static_cast<int>(tree->nodes.size());
    tree->nodes.push_back({});
    tree->nodes[node_id].leaf_class = n1 > n0 ? 1 : 0;  // majority, ties toward 0

    if (depth >= max_depth || n0 == 0 || n1 == 0 || idx.size() < 2) return node_id;
    // CART-style: split on the best candidate even when the weighted Gini
    // only ties the parent (XOR-shaped data needs the zero-gain first cut).
    SplitChoice split = best_split(features, labels, idx);
    if (!split.found) return node_id;

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : idx) {
        (features[i][split.feature] < split.threshold ? left_idx : right_idx).push_back(i);
    }
    if (left_idx.empty() || right_idx.empty()) return node_id;

    int left = build_node(features, labels, left_idx, depth + 1, max_depth, tree);
    int right = build_node(features, labels, right_idx, depth + 1, max_depth, tree);
    tree->nodes[node_id].feature = split.feature;
    tree->nodes[node_id].threshold = split.threshold;
    tree->nodes[node_id].left = left;
    tree->nodes[node_id].right = right;
    return node_id;
}

}  // namespace

DecisionTree decision_tree_fit(const std::vector<std::vector<double>>& features,
                               const std::vector<int>& labels, int max_depth) {
    if (max_depth < 1) throw Error("decision_tree_fit: max_depth must be >= 1");
    if (features.size() != labels.size() || features.empty())
        throw Error("decision_tree_fit: bad inputs");
    DecisionTree tree;
    std::vector<std::size_t> idx(features.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    build_node(features, labels, idx, 0, max_depth, &tree);
    return tree;
}

int DecisionTree::predict(const std::vector<double>& x) const {
    int node = 0;
    while (nodes[node].feature >= 0) {
        node = x[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                              : nodes[node].right;
    }
    return nodes[node].leaf_class;
}

// ---------------------------------------------------------------------------
// Setups

Setup setup_from_string(const std::string& s) {
    if (s == "tabular_only") return Setup::tabular_only;
    if (s == "text_only") return Setup::text_only;
    if (s == "text_tabular") return Setup::text_tabular;
    throw Error("unknown setup: " + s);
}

Learner learner_from_string(const std::string& s) {
    if (s == "nb") return Learner::nb;
    if (s == "dt") return Learner::dt;
    if (s == "transformer") return Learner::transformer;
    throw Error("unknown learner: " + s);
}

namespace {

std::vector<double> tabular_dense(const TabularVector& tab) {
    std::vector<double> out = tab.n;
    out.insert(out.end(), tab.c.begin(), tab.c.end());
    return out;
}

}  // namespace

RunOutput run_setup(Setup setup, Learner learner, const std::vector<DataRow>& train_rows,
                    const std::vector<DataRow>& test_rows, const RunSettings& settings) {
    if (train_rows.empty() || test_rows.empty()) throw Error("run_setup: empty split");
    RunOutput out;
    for (const auto& row : test_rows) out.labels.push_back(row.label);

    if (learner == Learner::transformer) {
        if (setup == Setup::tabular_only)
            throw Error("invalid combination: tabular_only with the transformer learner");
        EncodedSplits enc =
            encode_splits(train_rows, test_rows, settings.schema, settings.encode);
        ModelConfig cfg = settings.model_cfg;
        cfg.vocab_size = static_cast<int>(enc.vocab.size());
        cfg.cat_dim = static_cast<int>(enc.transform.categorical_width());
        cfg.num_dim = static_cast<int>(enc.transform.numerical.size());
        TrainConfig tcfg = settings.train_cfg;
        tcfg.mode = setup == Setup::text_only ? CombineMode::text_only
                                              : CombineMode::attention_fusion;
        ModelParams init = ModelParams::init(cfg, tcfg.seed);
        TrainResult trained = train_model(std::move(init), enc.train, {}, tcfg);
        out.predictions = predict(trained.params, enc.test, tcfg.mode);
        out.report = metrics_from_predictions(out.labels, out.predictions);
        return out;
    }

    // Classic learners operate on dense vectors.
    std::vector<std::vector<double>> train_x(train_rows.size()), test_x(test_rows.size());
    if (setup != Setup::text_only) {
        std::vector<RawFeatureRow> fit_rows;
        fit_rows.reserve(train_rows.size());
        for (const auto& row : train_rows) fit_rows.push_back(row.features);
        FittedTransform transform = fit_transform(settings.schema, fit_rows);
        for (std::size_t i = 0; i < train_rows.size(); ++i)
            train_x[i] = tabular_dense(apply_transform(transform, train_rows[i].features));
        for (std::size_t i = 0; i < test_rows.size(); ++i)
            test_x[i] = tabular_dense(apply_transform(transform, test_rows[i].features));
    }
    if (setup != Setup::tabular_only) {
        std::vector<std::string> train_texts;
        train_texts.reserve(train_rows.size());
        for (const auto& row : train_rows) train_texts.push_back(row.text_norm);
        TfidfModel tfidf = tfidf_fit(train_texts, settings.tfidf_max_features);
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            auto vec = tfidf_apply(tfidf, train_rows[i].text_norm);
            train_x[i].insert(train_x[i].end(), vec.begin(), vec.end());
        }
        for (std::size_t i = 0; i < test_rows.size(); ++i) {
            auto vec = tfidf_apply(tfidf, test_rows[i].text_norm);
            test_x[i].insert(test_x[i].end(), vec.begin(), vec.end());
        }
    }

    std::vector<int> train_y;
    train_y.reserve(train_rows.size());
    for (const auto& row : train_rows) train_y.push_back(row.label);

    if (learner == Learner::nb) {
        GaussianNb model = gaussian_nb_fit(train_x, train_y);
        for (const auto& x : test_x) out.predictions.push_back(gaussian_nb_predict(model, x));
    } else {
        DecisionTree tree = decision_tree_fit(train_x, train_y, settings.dt_max_depth);
        for (const auto& x : test_x) out.predictions.push_back(tree.predict(x));
    }
    out.report = metrics_from_predictions(out.labels, out.predictions);
    return out;
}

// ---------------------------------------------------------------------------
// Ablation

AblationPlan AblationPlan::default_plan(const TabularSchema& schema) {
    AblationPlan plan;
    plan.variants.push_back("text_only");
    for (const auto& name : schema.feature_names()) plan.variants.push_back("drop:" + name);
    return plan;
}

namespace {

struct VariantSpec {
    std::string name;
    TabularSchema schema;
    CombineMode mode = CombineMode::attention_fusion;
};

VariantSpec resolve_variant(const std::string& name, const TabularSchema& base) {
    VariantSpec spec;
    spec.name = name;
    spec.schema = base;
    if (name == "attention_fusion") return spec;
    if (name == "text_only") {
        spec.mode = CombineMode::text_only;
        return spec;
    }
    if (starts_with(name, "drop:")) {
        spec.schema = base.without(name.substr(5));  // throws on unknown features
        return spec;
    }
    throw Error("unknown ablation variant: " + name);
}

}  // namespace

AblationResult run_ablation(const AblationPlan& plan, const std::vector<DataRow>& train_rows,
                            const std::vector<DataRow>& test_rows, const RunSettings& settings,
                            const std::vector<std::uint64_t>& seeds, bool parallel) {
    if (seeds.empty()) throw Error("run_ablation: need at least one seed");

    std::vector<VariantSpec> specs;
    specs.push_back(resolve_variant("attention_fusion", settings.schema));
    for (const auto& name : plan.variants) specs.push_back(resolve_variant(name, settings.schema));

    AblationResult result;
    result.seeds = seeds;
    for (const auto& row : test_rows) result.test_labels.push_back(row.label);
    result.rows.resize(specs.size());
    result.first_seed_predictions.resize(specs.size());

    auto run_variant = [&](std::size_t vi) {
        const VariantSpec& spec = specs[vi];
        AblationRow row;
        row.variant = spec.name;
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            RunSettings vs = settings;
            vs.schema = spec.schema;
            vs.train_cfg.seed = seeds[si];
            Setup setup =
                spec.mode == CombineMode::text_only ? Setup::text_only : Setup::text_tabular;
            RunOutput out = run_setup(setup, Learner::transformer, train_rows, test_rows, vs);
            row.f1_per_seed.push_back(out.report.positive.f1);
            if (si == 0) result.first_seed_predictions[vi] = out.predictions;
        }
        double mean = std::accumulate(row.f1_per_seed.begin(), row.f1_per_seed.end(), 0.0) /
                      static_cast<double>(row.f1_per_seed.size());
        double var = 0.0;
        for (double f : row.f1_per_seed) var += (f - mean) * (f - mean);
        var /= static_cast<double>(row.f1_per_seed.size());
        row.f1_mean = mean;
        row.f1_std = std::sqrt(var);
        result.rows[vi] = std::move(row);
    };

    if (parallel) {
        std::vector<std::thread> workers;
        workers.reserve(specs.size());
        for (std::size_t vi = 0; vi < specs.size(); ++vi)
            workers.emplace_back(run_variant, vi);
        for (auto& w : workers) w.join();
    } else {
        for (std::size_t vi = 0; vi < specs.size(); ++vi) run_variant(vi);
    }
    return result;
}

void write_ablation_csv(std::ostream& out, const AblationResult& result,
                        const std::string& meta_comment) {
    if (!meta_comment.empty()) out << "# " << meta_comment << '\n';
    out << "variant,f1_mean,f1_std,seed_list\n";
    std::vector<std::string> seed_strs;
    for (auto s : result.seeds) seed_strs.push_back(std::to_string(s));
    std::string seed_list = join(seed_strs, ";");
    for (const auto& row : result.rows) {
        out << row.variant << ',' << fmt_g17(row.f1_mean) << ',' << fmt_g17(row.f1_std) << ','
            << seed_list << '\n';
    }
}

}  // namespace persona
