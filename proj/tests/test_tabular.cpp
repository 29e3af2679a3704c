#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "persona/tabular.hpp"
#include "persona/common.hpp"

using namespace persona;

namespace {

// Independent oracle: the Yeo-Johnson profile log-likelihood recomputed from
// the formula, maximized by a dense grid search.
double oracle_ll(const std::vector<double>& xs, double lambda) {
    std::vector<double> t;
    t.reserve(xs.size());
    for (double x : xs) {
        double y;
        if (x >= 0.0) {
            y = std::abs(lambda) < 1e-12 ? std::log1p(x)
                                         : (std::pow(x + 1.0, lambda) - 1.0) / lambda;
        } else {
            y = std::abs(2.0 - lambda) < 1e-12
                    ? -std::log1p(-x)
                    : -(std::pow(1.0 - x, 2.0 - lambda) - 1.0) / (2.0 - lambda);
        }
        t.push_back(y);
    }
    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    var /= static_cast<double>(t.size());
    if (var <= 0.0) return -1e300;
    double jac = 0.0;
    for (double x : xs) {
        double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        jac += sign * std::log(std::abs(x) + 1.0);
    }
    return -0.5 * static_cast<double>(t.size()) * std::log(var) + (lambda - 1.0) * jac;
}

double oracle_grid_search(const std::vector<double>& xs, double step = 1e-3) {
    double best_lambda = -2.0;
    double best = -1e301;
    for (double lam = -2.0; lam <= 2.0 + 1e-12; lam += step) {
        double ll = oracle_ll(xs, lam);
        if (ll > best) {
            best = ll;
            best_lambda = lam;
        }
    }
    return best_lambda;
}

std::vector<double> seeded_normal_sample(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> xs(n);
    for (auto& x : xs) x = rng.normal();
    return xs;
}

RawFeatureRow row_of(double a, double b, const std::string& cat) {
    RawFeatureRow row;
    row.numeric = {{"f1", a}, {"f2", b}};
    row.categorical = {{"is_late_night", cat}};
    return row;
}

TabularSchema two_feature_schema() {
    TabularSchema schema;
    schema.numerical = {"f1", "f2"};
    schema.categorical = {"is_late_night"};
    return schema;
}

}  // namespace

TEST_CASE("yeo_johnson branch values (exact)") {
    CHECK(yeo_johnson(3.0, 1.0) == doctest::Approx(3.0).epsilon(1e-15));        // identity
    CHECK(yeo_johnson(std::exp(1.0) - 1.0, 0.0) == doctest::Approx(1.0));       // ln branch
    CHECK(yeo_johnson(-(std::exp(1.0) - 1.0), 2.0) == doctest::Approx(-1.0));   // neg ln branch
    CHECK(yeo_johnson(0.0, 0.7) == 0.0);
    // lambda=2, x>=0: ((x+1)^2 - 1)/2
    CHECK(yeo_johnson(2.0, 2.0) == doctest::Approx(4.0));
    // lambda=0, x<0: -((1-x)^2 - 1)/2
    CHECK(yeo_johnson(-2.0, 0.0) == doctest::Approx(-4.0));
}

TEST_CASE("yeo_johnson continuity at lambda 0 and 2") {
    // Both one-sided limits at |dl| = 1e-6 agree with the branch value
    // within 1e-5 (and hence with each other within 2e-5).
    for (double x : {-3.0, -0.5, 0.0, 0.4, 2.5}) {
        CAPTURE(x);
        double delta = 1e-6;
        for (double at : {0.0, 2.0}) {
            CAPTURE(at);
            double center = yeo_johnson(x, at);
            CHECK(std::abs(yeo_johnson(x, at + delta) - center) < 1e-5);
            CHECK(std::abs(yeo_johnson(x, at - delta) - center) < 1e-5);
            CHECK(std::abs(yeo_johnson(x, at + delta) - yeo_johnson(x, at - delta)) < 2e-5);
        }
    }
}

TEST_CASE("yeo_johnson strictly monotone in x (property)") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        double lambda = -2.0 + 4.0 * rng.uniform();
        double a = (rng.uniform() - 0.5) * 20.0;
        double b = a + 1e-6 + rng.uniform() * 5.0;
        CAPTURE(lambda);
        CAPTURE(a);
        CHECK(yeo_johnson(a, lambda) < yeo_johnson(b, lambda));
    }
}

TEST_CASE("fit_yeo_johnson against the grid-search oracle") {
    SUBCASE("normal-like sample: lambda close to 1") {
        auto xs = seeded_normal_sample(200, 12);
        YjFit fit = fit_yeo_johnson(xs);
        CHECK_FALSE(fit.constant);
        CHECK(std::abs(fit.lambda - 1.0) < 0.15);
        CHECK(std::abs(fit.lambda - oracle_grid_search(xs)) < 2e-3);
    }
    SUBCASE("right-skewed sample exp(normal)-1: lambda < 1") {
        auto xs = seeded_normal_sample(200, 34);
        for (auto& x : xs) x = std::exp(x) - 1.0;
        YjFit fit = fit_yeo_johnson(xs);
        CHECK(fit.lambda < 1.0);
        double grid = oracle_grid_search(xs);
        CHECK(grid < 1.0);  // oracle confirms the direction
        CHECK(std::abs(fit.lambda - grid) < 2e-3);
    }
    SUBCASE("left-skewed sample: lambda > 1, matches oracle") {
        auto xs = seeded_normal_sample(150, 56);
        for (auto& x : xs) x = -(std::exp(x) - 1.0);
        YjFit fit = fit_yeo_johnson(xs);
        CHECK(std::abs(fit.lambda - oracle_grid_search(xs)) < 2e-3);
    }
    SUBCASE("constant column -> lambda 1, flagged") {
        YjFit fit = fit_yeo_johnson({4.0, 4.0, 4.0});
        CHECK(fit.lambda == 1.0);
        CHECK(fit.constant);
    }
}

TEST_CASE("fit_transform standardizes training columns exactly") {
    TabularSchema schema = two_feature_schema();
    std::vector<RawFeatureRow> rows;
    Rng rng(9);
    for (int i = 0; i < 64; ++i) {
        rows.push_back(row_of(std::exp(rng.normal()) - 1.0, rng.normal() * 3.0 + 5.0,
                              i % 3 == 0 ? "true" : "false"));
    }
    FittedTransform fitted = fit_transform(schema, rows);

    // Standardized training column: |mean| < 1e-9 and |std - 1| < 1e-9.
    for (std::size_t f = 0; f < 2; ++f) {
        double mean = 0.0;
        std::vector<double> encoded;
        for (const auto& row : rows) {
            TabularVector vec = apply_transform(fitted, row);
            encoded.push_back(vec.n[f]);
            mean += vec.n[f];
        }
        mean /= static_cast<double>(encoded.size());
        double var = 0.0;
        for (double e : encoded) var += (e - mean) * (e - mean);
        var /= static_cast<double>(encoded.size());
        CAPTURE(f);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
    CHECK(fitted.categories[0] == std::vector<std::string>{"false", "true"});

    SUBCASE("apply does not mutate the fitted transform") {
        FittedTransform before = fitted;
        apply_transform(fitted, row_of(123.0, -456.0, "true"));
        for (std::size_t i = 0; i < fitted.numerical.size(); ++i) {
            CHECK(fitted.numerical[i].lambda == before.numerical[i].lambda);
            CHECK(fitted.numerical[i].mean == before.numerical[i].mean);
            CHECK(fitted.numerical[i].std_dev == before.numerical[i].std_dev);
        }
    }
}

TEST_CASE("fit_transform edge cases") {
    TabularSchema schema = two_feature_schema();

    SUBCASE("empty training set -> error") {
        CHECK_THROWS_AS(fit_transform(schema, {}), Error);
    }
    SUBCASE("single-row set -> constant flags, encodes to 0") {
        std::vector<RawFeatureRow> rows{row_of(3.0, 4.0, "false")};
        FittedTransform fitted = fit_transform(schema, rows);
        CHECK(fitted.numerical[0].constant);
        CHECK(fitted.numerical[1].constant);
        TabularVector vec = apply_transform(fitted, rows[0]);
        CHECK(vec.n == std::vector<double>{0.0, 0.0});
    }
    SUBCASE("schema with no features -> empty transform and vectors") {
        TabularSchema empty;
        std::vector<RawFeatureRow> rows{row_of(1.0, 2.0, "false")};
        FittedTransform fitted = fit_transform(empty, rows);
        CHECK(fitted.numerical.empty());
        CHECK(fitted.categories.empty());
        TabularVector vec = apply_transform(fitted, rows[0]);
        CHECK(vec.n.empty());
        CHECK(vec.c.empty());
    }
}

TEST_CASE("apply_transform categorical behaviour") {
    TabularSchema schema = two_feature_schema();
    std::vector<RawFeatureRow> rows{row_of(1.0, 1.0, "false"), row_of(2.0, 2.0, "true"),
                                    row_of(3.0, 3.0, "false")};
    FittedTransform fitted = fit_transform(schema, rows);

    SUBCASE("one-hot block over frozen categories [false,true]") {
        TabularVector vec = apply_transform(fitted, row_of(1.0, 1.0, "true"));
        CHECK(vec.c == std::vector<double>{0.0, 1.0});
    }
    SUBCASE("unseen category -> zero block plus warning") {
        std::vector<std::string> warnings;
        TabularVector vec = apply_transform(fitted, row_of(1.0, 1.0, "maybe"),
                                            [&](const std::string& w) { warnings.push_back(w); });
        CHECK(vec.c == std::vector<double>{0.0, 0.0});
        REQUIRE(warnings.size() == 1);
        CHECK(warnings[0].find("is_late_night") != std::string::npos);
    }
    SUBCASE("missing feature value -> error naming the feature") {
        RawFeatureRow bad;
        bad.numeric = {{"f1", 1.0}};  // f2 missing
        bad.categorical = {{"is_late_night", "false"}};
        try {
            apply_transform(fitted, bad);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("f2") != std::string::npos);
        }
    }
    SUBCASE("training-mean value encodes to approximately 0") {
        // f1 values 1,2,3 with lambda fitted; feeding the value whose
        // transform equals the training mean must land at 0. Use the middle
        // row and check the encoded value is small rather than exact.
        TabularVector vec = apply_transform(fitted, row_of(2.0, 2.0, "true"));
        CHECK(std::abs(vec.n[0]) < 0.5);
    }
}

TEST_CASE("soft encoding matches hard encoding at the corners") {
    TabularSchema schema = two_feature_schema();
    std::vector<RawFeatureRow> rows{row_of(1.0, 5.0, "false"), row_of(2.0, 6.0, "true"),
                                    row_of(3.0, 7.0, "false")};
    FittedTransform fitted = fit_transform(schema, rows);

    TabularVector hard = apply_transform(fitted, row_of(2.0, 6.0, "true"));
    TabularVector soft = apply_transform_soft(fitted, {2.0, 6.0}, {1.0});
    CHECK(soft.n == hard.n);
    CHECK(soft.c == hard.c);

    TabularVector mixed = apply_transform_soft(fitted, {2.0, 6.0}, {0.25});
    CHECK(mixed.c == std::vector<double>{0.75, 0.25});
}

TEST_CASE("transform save/load round-trip") {
    TabularSchema schema = two_feature_schema();
    std::vector<RawFeatureRow> rows{row_of(1.0, 5.0, "false"), row_of(2.0, 6.0, "true"),
                                    row_of(7.0, 3.0, "true")};
    FittedTransform fitted = fit_transform(schema, rows);
    auto path = (std::filesystem::temp_directory_path() / "persona_transform_test.tsv").string();
    fitted.save(path, "config_hash=cd seed=2");
    FittedTransform loaded = FittedTransform::load(path);
    REQUIRE(loaded.numerical.size() == 2);
    CHECK(loaded.numerical[0].lambda == fitted.numerical[0].lambda);
    CHECK(loaded.numerical[0].mean == fitted.numerical[0].mean);
    CHECK(loaded.numerical[0].std_dev == fitted.numerical[0].std_dev);
    CHECK(loaded.categories == fitted.categories);
    CHECK(loaded.categorical_width() == 2);
    std::filesystem::remove(path);
}
