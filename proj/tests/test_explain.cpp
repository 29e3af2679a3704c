#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "persona/explain.hpp"
#include "persona/common.hpp"

using namespace persona;

namespace {

// Independent oracle: Shapley values via the permutation-average definition
// (mean marginal contribution over all F! orderings), with its own local
// mean-imputation value function.
std::vector<double> permutation_oracle(const ModelFn& f, const std::vector<double>& instance,
                                       const std::vector<double>& means) {
    std::size_t n = instance.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> phi(n, 0.0);
    std::size_t count = 0;
    do {
        std::vector<double> point = means;
        double prev = f(point);
        for (std::size_t i : order) {
            point[i] = instance[i];
            double next = f(point);
            phi[i] += next - prev;
            prev = next;
        }
        ++count;
    } while (std::next_permutation(order.begin(), order.end()));
    for (double& p : phi) p /= static_cast<double>(count);
    return phi;
}

std::vector<std::string> names_for(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("f" + std::to_string(i));
    return names;
}

}  // namespace

TEST_CASE("shapley_exact on the linear-model worked example") {
    ModelFn f = [](const std::vector<double>& x) { return 2.0 * x[0] + 3.0 * x[1]; };
    // Background rows average to (0, 0).
    std::vector<std::vector<double>> background{{1.0, -1.0}, {-1.0, 1.0}};
    Attribution attr = shapley_exact(f, {1.0, 1.0}, background, names_for(2), "example");

    CHECK(attr.base_value == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(attr.phi[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(attr.phi[1] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(attr.model_output() == doctest::Approx(5.0));
}

TEST_CASE("shapley_exact axioms") {
    SUBCASE("single feature: phi = f(x) - base (forced by efficiency)") {
        ModelFn f = [](const std::vector<double>& x) { return std::tanh(x[0]); };
        std::vector<std::vector<double>> background{{0.2}, {0.6}};
        Attribution attr = shapley_exact(f, {1.5}, background, names_for(1));
        CHECK(attr.phi[0] == doctest::Approx(std::tanh(1.5) - std::tanh(0.4)).epsilon(1e-12));
    }
    SUBCASE("symmetry: identical symmetric features get equal phi") {
        ModelFn f = [](const std::vector<double>& x) {
            return std::sin(x[0] + x[1]) + 0.5 * x[2];
        };
        std::vector<std::vector<double>> background{{0.0, 0.0, 1.0}, {0.4, 0.4, -1.0}};
        Attribution attr = shapley_exact(f, {0.9, 0.9, 0.3}, background, names_for(3));
        CHECK(attr.phi[0] == doctest::Approx(attr.phi[1]).epsilon(1e-12));
    }
    SUBCASE("dummy: a feature the model ignores gets phi = 0 exactly") {
        ModelFn f = [](const std::vector<double>& x) { return x[0] * x[0]; };
        std::vector<std::vector<double>> background{{0.1, 5.0}, {0.7, -3.0}};
        Attribution attr = shapley_exact(f, {2.0, 9.0}, background, names_for(2));
        CHECK(attr.phi[1] == 0.0);
    }
    SUBCASE("efficiency on random nonlinear models (property)") {
        Rng rng(31);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> w(4), instance(4);
            for (auto& v : w) v = rng.normal();
            for (auto& v : instance) v = rng.normal();
            ModelFn f = [&w](const std::vector<double>& x) {
                double dot = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) dot += w[i] * x[i];
                return std::tanh(dot) + 0.3 * x[0] * x[1];
            };
            std::vector<std::vector<double>> background;
            for (int b = 0; b < 5; ++b) {
                std::vector<double> row(4);
                for (auto& v : row) v = rng.normal();
                background.push_back(row);
            }
            Attribution attr = shapley_exact(f, instance, background, names_for(4));
            CHECK(std::abs(attr.model_output() - f(instance)) < 1e-6);
        }
    }
    SUBCASE("linearity: phi(af + bg) = a phi_f + b phi_g within 1e-9") {
        ModelFn f = [](const std::vector<double>& x) { return std::tanh(x[0]) + x[1] * x[2]; };
        ModelFn g = [](const std::vector<double>& x) { return x[0] * x[1] - 0.5 * x[2]; };
        double a = 1.7, b = -0.6;
        ModelFn combined = [&](const std::vector<double>& x) { return a * f(x) + b * g(x); };
        std::vector<std::vector<double>> background{{0.2, -0.3, 0.5}, {-0.1, 0.8, 0.0}};
        std::vector<double> instance{1.2, -0.7, 0.4};
        Attribution phi_f = shapley_exact(f, instance, background, names_for(3));
        Attribution phi_g = shapley_exact(g, instance, background, names_for(3));
        Attribution phi_c = shapley_exact(combined, instance, background, names_for(3));
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(phi_c.phi[i] ==
                  doctest::Approx(a * phi_f.phi[i] + b * phi_g.phi[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("shapley_exact agrees with the permutation-average oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t n = 2 + rng.index(3);  // 2..4 features -> at most 24 orderings
        std::vector<double> w(n), instance(n), mean_row(n);
        for (auto& v : w) v = rng.normal();
        for (auto& v : instance) v = rng.normal();
        for (auto& v : mean_row) v = rng.normal() * 0.5;
        ModelFn f = [&w](const std::vector<double>& x) {
            double dot = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) dot += w[i] * x[i];
            double inter = x.size() >= 2 ? 0.4 * x[0] * x[1] : 0.0;
            return 1.0 / (1.0 + std::exp(-dot)) + inter;
        };
        std::vector<std::vector<double>> background{mean_row};  // mean == the row
        Attribution attr = shapley_exact(f, instance, background, names_for(n));
        std::vector<double> oracle = permutation_oracle(f, instance, mean_row);
        for (std::size_t i = 0; i < n; ++i) {
            CAPTURE(trial);
            CAPTURE(i);
            CHECK(attr.phi[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("shapley_exact guards") {
    ModelFn f = [](const std::vector<double>& x) { return x[0]; };
    SUBCASE("more than 15 features -> error directing to sampling") {
        std::vector<double> instance(16, 0.0);
        std::vector<std::vector<double>> background{instance};
        CHECK_THROWS_AS(shapley_exact(f, instance, background, names_for(16)), Error);
    }
    SUBCASE("empty background -> error") {
        CHECK_THROWS_AS(shapley_exact(f, {1.0}, {}, names_for(1)), Error);
    }
    SUBCASE("non-finite model output -> error") {
        ModelFn bad = [](const std::vector<double>&) {
            return std::numeric_limits<double>::quiet_NaN();
        };
        std::vector<std::vector<double>> background{{0.0}};
        CHECK_THROWS_AS(shapley_exact(bad, {1.0}, background, names_for(1)), Error);
    }
}

TEST_CASE("global_summary") {
    auto attr_of = [](std::vector<double> phi) {
        Attribution a;
        a.feature_names = names_for(phi.size());
        a.phi = std::move(phi);
        return a;
    };

    SUBCASE("single attribution ranks by |phi|") {
        GlobalSummary s = global_summary({attr_of({0.1, -0.9, 0.4})});
        CHECK(s.ranking == std::vector<std::size_t>{1, 2, 0});
        CHECK(s.mean_abs_phi[1] == doctest::Approx(0.9));
    }
    SUBCASE("opposite signs, same magnitude -> mean |phi| is the magnitude") {
        GlobalSummary s = global_summary({attr_of({0.5, 0.0}), attr_of({-0.5, 0.0})});
        CHECK(s.mean_abs_phi[0] == doctest::Approx(0.5));
    }
    SUBCASE("all-zero phi -> lexicographic ranking") {
        GlobalSummary s = global_summary({attr_of({0.0, 0.0, 0.0})});
        CHECK(s.ranking == std::vector<std::size_t>{0, 1, 2});
    }
    SUBCASE("inconsistent feature sets -> error") {
        Attribution a = attr_of({0.1});
        Attribution b = attr_of({0.1, 0.2});
        CHECK_THROWS_AS(global_summary({a, b}), Error);
    }
}

TEST_CASE("pearson_matrix") {
    SUBCASE("feature equal to the target -> coefficient 1; negated -> -1") {
        std::vector<std::vector<double>> rows{{1.0, -1.0, 1.0},
                                              {0.0, 0.0, 0.0},
                                              {1.0, -1.0, 1.0},
                                              {0.0, 0.0, 0.0},
                                              {1.0, -1.0, 1.0}};
        CorrelationMatrix m = pearson_matrix(rows, {"same", "neg", "target"});
        CHECK(m.r[0][2] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m.r[1][2] == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("5-point hand-computed pair") {
        // x = (1..5), y = (2,1,4,3,6): r = 10 / sqrt(10 * 14.8)
        std::vector<std::vector<double>> rows{{1, 2}, {2, 1}, {3, 4}, {4, 3}, {5, 6}};
        CorrelationMatrix m = pearson_matrix(rows, {"x", "y"});
        CHECK(m.r[0][1] == doctest::Approx(10.0 / std::sqrt(148.0)).epsilon(1e-9));
    }
    SUBCASE("symmetric with unit diagonal within 1e-12 (property)") {
        Rng rng(41);
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 30; ++i) {
            rows.push_back({rng.normal(), rng.normal(), rng.normal() * 2.0 + 1.0});
        }
        CorrelationMatrix m = pearson_matrix(rows, {"a", "b", "c"});
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(std::abs(m.r[i][i] - 1.0) <= 1e-12);
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(std::abs(m.r[i][j] - m.r[j][i]) <= 1e-12);
                CHECK(m.r[i][j] >= -1.0);
                CHECK(m.r[i][j] <= 1.0);
            }
        }
    }
    SUBCASE("constant column flagged with zero coefficients") {
        std::vector<std::vector<double>> rows{{1.0, 7.0}, {2.0, 7.0}, {3.0, 7.0}};
        CorrelationMatrix m = pearson_matrix(rows, {"x", "const"});
        CHECK(m.constant[1]);
        CHECK(m.r[0][1] == 0.0);
        CHECK(m.r[1][1] == 1.0);  // diagonal stays 1 by convention
    }
    SUBCASE("fewer than 2 rows -> error") {
        CHECK_THROWS_AS(pearson_matrix({{1.0}}, {"x"}), Error);
    }
}

TEST_CASE("CSV and JSON writers are deterministic and carry metadata") {
    Attribution a;
    a.instance_id = "u1#0";
    a.base_value = 0.25;
    a.feature_names = {"night_ratio", "avg_top_sent"};
    a.phi = {0.1, -0.2};

    std::ostringstream json1, json2;
    write_attributions_json(json1, {a}, "beef", 7, "model1");
    write_attributions_json(json2, {a}, "beef", 7, "model1");
    CHECK(json1.str() == json2.str());
    CHECK(json1.str().find("\"base_value\"") != std::string::npos);
    CHECK(json1.str().find("night_ratio") != std::string::npos);

    GlobalSummary s = global_summary({a});
    std::ostringstream csv;
    write_summary_csv(csv, s, "meta config_hash=beef");
    CHECK(csv.str().find("feature,mean_abs_phi,rank") != std::string::npos);
    CHECK(csv.str().find("avg_top_sent,") != std::string::npos);

    CorrelationMatrix m = pearson_matrix({{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}}, {"a", "b"});
    std::ostringstream corr;
    write_correlation_csv(corr, m, "meta");
    CHECK(corr.str().find("feature,a,b") != std::string::npos);
}
