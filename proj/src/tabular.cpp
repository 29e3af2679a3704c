#include "persona/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace persona {

TabularSchema TabularSchema::defaults() {
    TabularSchema s;
    s.numerical = {"night_ratio", "avg_top_sent", "lexicon_based", "junyeop_lex", "anxious_dep"};
    s.categorical = {"is_late_night"};
    return s;
}

TabularSchema TabularSchema::without(const std::string& feature) const {
    TabularSchema out;
    for (const auto& f : numerical) {
        if (f != feature) out.numerical.push_back(f);
    }
    for (const auto& f : categorical) {
        if (f != feature) out.categorical.push_back(f);
    }
    if (out.numerical.size() == numerical.size() &&
        out.categorical.size() == categorical.size())
        throw Error("schema has no feature named '" + feature + "'");
    return out;
}

std::vector<std::string> TabularSchema::feature_names() const {
    std::vector<std::string> names = numerical;
    names.insert(names.end(), categorical.begin(), categorical.end());
    return names;
}

double RawFeatureRow::numeric_value(const std::string& name) const {
    auto it = numeric.find(name);
    if (it == numeric.end()) throw Error("missing numeric feature value: " + name);
    return it->second;
}

const std::string& RawFeatureRow::categorical_value(const std::string& name) const {
    auto it = categorical.find(name);
    if (it == categorical.end()) throw Error("missing categorical feature value: " + name);
    return it->second;
}

double yeo_johnson(double x, double lambda) {
    if (x >= 0.0) {
        if (std::abs(lambda) < 1e-12) return std::log1p(x);
        return (std::pow(x + 1.0, lambda) - 1.0) / lambda;
    }
    double two_minus = 2.0 - lambda;
    if (std::abs(two_minus) < 1e-12) return -std::log1p(-x);
    return -(std::pow(1.0 - x, two_minus) - 1.0) / two_minus;
}

double yeo_johnson_log_likelihood(const std::vector<double>& values, double lambda) {
    std::size_t n = values.size();
    if (n == 0) throw Error("yeo_johnson_log_likelihood: empty column");
    double mean = 0.0;
    std::vector<double> transformed(n);
    for (std::size_t i = 0; i < n; ++i) {
        transformed[i] = yeo_johnson(values[i], lambda);
        mean += transformed[i];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double t : transformed) var += (t - mean) * (t - mean);
    var /= static_cast<double>(n);
    if (var < 1e-30) return -std::numeric_limits<double>::infinity();

    double jacobian = 0.0;
    for (double x : values) {
        double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        jacobian += sign * std::log(std::abs(x) + 1.0);
    }
    return -0.5 * static_cast<double>(n) * std::log(var) + (lambda - 1.0) * jacobian;
}

YjFit fit_yeo_johnson(const std::vector<double>& values) {
    std::set<double> distinct(values.begin(), values.end());
    if (distinct.size() < 2) return {1.0, true};

    // Golden-section maximization over [-2, 2] to 1e-4.
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = -2.0, b = 2.0;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = yeo_johnson_log_likelihood(values, c);
    double fd = yeo_johnson_log_likelihood(values, d);
    while (b - a > 1e-4) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = yeo_johnson_log_likelihood(values, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = yeo_johnson_log_likelihood(values, d);
        }
    }
    return {(a + b) / 2.0, false};
}

std::size_t FittedTransform::categorical_width() const {
    std::size_t w = 0;
    for (const auto& cats : categories) w += cats.size();
    return w;
}

FittedTransform fit_transform(const TabularSchema& schema,
                              const std::vector<RawFeatureRow>& training_rows) {
    if (training_rows.empty()) throw Error("fit_transform: empty training set");
    FittedTransform fitted;
    fitted.numerical_names = schema.numerical;
    fitted.categorical_names = schema.categorical;

    for (const auto& name : schema.numerical) {
        std::vector<double> column;
        column.reserve(training_rows.size());
        for (const auto& row : training_rows) column.push_back(row.numeric_value(name));
        YjFit fit = fit_yeo_johnson(column);
        NumericTransform nt;
        nt.lambda = fit.lambda;
        nt.constant = fit.constant;
        double mean = 0.0;
        for (double x : column) mean += yeo_johnson(x, nt.lambda);
        mean /= static_cast<double>(column.size());
        double var = 0.0;
        for (double x : column) {
            double t = yeo_johnson(x, nt.lambda) - mean;
            var += t * t;
        }
        var /= static_cast<double>(column.size());
        nt.mean = mean;
        nt.std_dev = std::sqrt(var);
        if (!(nt.std_dev > 1e-12)) {
            nt.constant = true;
            nt.std_dev = 1.0;
        }
        fitted.numerical.push_back(nt);
    }

    for (const auto& name : schema.categorical) {
        std::set<std::string> values;
        for (const auto& row : training_rows) values.insert(row.categorical_value(name));
        fitted.categories.emplace_back(values.begin(), values.end());
    }
    return fitted;
}

TabularVector apply_transform(const FittedTransform& fitted, const RawFeatureRow& row,
                              const WarnFn& warn) {
    TabularVector out;
    out.n.reserve(fitted.numerical.size());
    for (std::size_t i = 0; i < fitted.numerical.size(); ++i) {
        const NumericTransform& nt = fitted.numerical[i];
        double x = row.numeric_value(fitted.numerical_names[i]);
        if (nt.constant) {
            out.n.push_back(0.0);
        } else {
            out.n.push_back((yeo_johnson(x, nt.lambda) - nt.mean) / nt.std_dev);
        }
        if (!std::isfinite(out.n.back()))
            throw Error("non-finite encoded value for feature " + fitted.numerical_names[i]);
    }
    out.c.reserve(fitted.categorical_width());
    for (std::size_t i = 0; i < fitted.categories.size(); ++i) {
        const auto& cats = fitted.categories[i];
        const std::string& value = row.categorical_value(fitted.categorical_names[i]);
        auto it = std::find(cats.begin(), cats.end(), value);
        if (it == cats.end() && warn)
            warn("unseen category '" + value + "' for feature " +
                 fitted.categorical_names[i]);
        for (const auto& cat : cats) out.c.push_back(it != cats.end() && cat == value ? 1.0 : 0.0);
    }
    return out;
}

TabularVector apply_transform_soft(const FittedTransform& fitted,
                                   const std::vector<double>& numeric_values,
                                   const std::vector<double>& categorical_trueness) {
    if (numeric_values.size() != fitted.numerical.size() ||
        categorical_trueness.size() != fitted.categories.size())
        throw Error("apply_transform_soft: value count does not match transform");
    TabularVector out;
    for (std::size_t i = 0; i < fitted.numerical.size(); ++i) {
        const NumericTransform& nt = fitted.numerical[i];
        out.n.push_back(nt.constant ? 0.0
                                    : (yeo_johnson(numeric_values[i], nt.lambda) - nt.mean) /
                                          nt.std_dev);
    }
    for (std::size_t i = 0; i < fitted.categories.size(); ++i) {
        double p = categorical_trueness[i];
        for (const auto& cat : fitted.categories[i]) {
            if (cat == "true") {
                out.c.push_back(p);
            } else if (cat == "false") {
                out.c.push_back(1.0 - p);
            } else {
                throw Error("soft encoding requires boolean categories, got '" + cat + "'");
            }
        }
    }
    return out;
}

void FittedTransform::save(const std::string& path, const std::string& header_extras) const {
    std::ostringstream out;
    out << "# persona-transform v1";
    if (!header_extras.empty()) out << ' ' << header_extras;
    out << '\n';
    for (std::size_t i = 0; i < numerical.size(); ++i) {
        const NumericTransform& nt = numerical[i];
        out << "NUM\t" << numerical_names[i] << '\t' << fmt_g17(nt.lambda) << '\t'
            << fmt_g17(nt.mean) << '\t' << fmt_g17(nt.std_dev) << '\t' << (nt.constant ? 1 : 0)
            << '\n';
    }
    for (std::size_t i = 0; i < categories.size(); ++i) {
        out << "CAT\t" << categorical_names[i] << '\t' << join(categories[i], ";") << '\n';
    }
    write_text_file(path, out.str());
}

FittedTransform FittedTransform::load(const std::string& path,
                                      std::map<std::string, std::string>* header_kv) {
    if (!file_exists(path)) throw MissingArtifactError("missing transform file: " + path);
    std::ifstream in(path);
    if (!in) throw Error("cannot open transform file: " + path);
    FittedTransform fitted;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line_no == 1) {
                if (!starts_with(line, "# persona-transform"))
                    throw Error("not a transform file: " + path);
                if (header_kv) *header_kv = parse_header_kv(line);
            }
            continue;
        }
        auto fields = split(line, '\t');
        if (fields[0] == "NUM" && fields.size() == 6) {
            fitted.numerical_names.push_back(fields[1]);
            NumericTransform nt;
            nt.lambda = parse_double(fields[2], "lambda");
            nt.mean = parse_double(fields[3], "mean");
            nt.std_dev = parse_double(fields[4], "std");
            nt.constant = fields[5] == "1";
            fitted.numerical.push_back(nt);
        } else if (fields[0] == "CAT" && fields.size() == 3) {
            fitted.categorical_names.push_back(fields[1]);
            fitted.categories.push_back(fields[2].empty() ? std::vector<std::string>{}
                                                          : split(fields[2], ';'));
        } else {
            throw Error("transform line " + std::to_string(line_no) + ": bad record");
        }
    }
    return fitted;
}

}  // namespace persona
