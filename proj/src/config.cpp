#include "persona/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

namespace persona {

namespace {

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key " + key + ": expected a boolean, got '" + s + "'");
}

char parse_delimiter(const std::string& s) {
    if (s == "comma") return ',';
    if (s == "tab") return '\t';
    if (s.size() == 1) return s[0];
    throw ConfigError("corpus.delimiter must be 'comma', 'tab', or a single character");
}

std::string delimiter_name(char c) {
    if (c == ',') return "comma";
    if (c == '\t') return "tab";
    return std::string(1, c);
}

std::map<std::string, int> parse_label_map(const std::string& s) {
    std::map<std::string, int> out;
    for (const auto& pair : split(s, ',')) {
        auto colon = pair.find(':');
        if (colon == std::string::npos)
            throw ConfigError("corpus.label_map entries must look like raw:mapped");
        int mapped = static_cast<int>(parse_int(trim(pair.substr(colon + 1)), "label_map"));
        if (mapped != 0 && mapped != 1)
            throw ConfigError("corpus.label_map values must map to 0 or 1");
        out[trim(pair.substr(0, colon))] = mapped;
    }
    if (out.empty()) throw ConfigError("corpus.label_map must not be empty");
    return out;
}

std::vector<std::string> parse_list(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& item : split(s, ',')) {
        std::string v = trim(item);
        if (!v.empty()) out.push_back(v);
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s, const std::string& key) {
    std::vector<std::uint64_t> out;
    for (const auto& item : parse_list(s))
        out.push_back(static_cast<std::uint64_t>(parse_int(item, key)));
    return out;
}

}  // namespace

PipelineConfig PipelineConfig::parse_file(const std::string& path) {
    if (!file_exists(path)) throw ConfigError("config file not found: " + path);
    return parse_text(read_text_file(path));
}

PipelineConfig PipelineConfig::parse_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (kv.count(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " + key);
        kv[key] = value;
    }

    auto geti = [&](const std::string& key, auto deflt) {
        using T = decltype(deflt);
        auto it = kv.find(key);
        if (it == kv.end()) return deflt;
        auto v = static_cast<T>(parse_int(it->second, key));
        kv.erase(it);
        return v;
    };
    auto getd = [&](const std::string& key, double deflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return deflt;
        double v = parse_double(it->second, key);
        kv.erase(it);
        return v;
    };
    auto gets = [&](const std::string& key, const std::string& deflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return deflt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto getb = [&](const std::string& key, bool deflt) {
        auto it = kv.find(key);
        if (it == kv.end()) return deflt;
        bool v = parse_bool(it->second, key);
        kv.erase(it);
        return v;
    };

    cfg.workdir = gets("paths.workdir", cfg.workdir);
    if (const char* env = std::getenv("PERSONA_WORKDIR")) cfg.workdir = env;
    cfg.corpus_source = gets("paths.corpus_source", "");
    cfg.expansion_table = gets("paths.expansion_table", "data/expansion_table.tsv");
    cfg.lexicon_primary = gets("paths.lexicon_primary", "data/lexicon_depression.tsv");
    cfg.lexicon_secondary = gets("paths.lexicon_secondary", "data/lexicon_junyeop.tsv");
    cfg.valence_table = gets("paths.valence", "data/valence.tsv");
    cfg.stopwords = gets("paths.stopwords", "data/stopwords.txt");

    cfg.schema.delimiter = parse_delimiter(gets("corpus.delimiter", "comma"));
    cfg.schema.quoted = getb("corpus.quoted", cfg.schema.delimiter == ',');
    cfg.schema.col_user = geti("corpus.col_user", cfg.schema.col_user);
    cfg.schema.col_timestamp = geti("corpus.col_timestamp", cfg.schema.col_timestamp);
    cfg.schema.col_label = geti("corpus.col_label", cfg.schema.col_label);
    cfg.schema.col_text = geti("corpus.col_text", cfg.schema.col_text);
    if (kv.count("corpus.label_map")) {
        cfg.schema.label_map = parse_label_map(kv["corpus.label_map"]);
        kv.erase("corpus.label_map");
    }
    std::string ts_format = gets("corpus.timestamp_format", "sentiment140");
    if (ts_format == "iso8601") {
        cfg.schema.timestamp_format = TimestampFormat::iso8601;
    } else if (ts_format == "sentiment140") {
        cfg.schema.timestamp_format = TimestampFormat::sentiment140;
    } else {
        throw ConfigError("corpus.timestamp_format must be iso8601 or sentiment140");
    }

    cfg.min_posts = geti("corpus.min_posts", cfg.min_posts);
    cfg.balance_threshold = getd("balance.threshold", cfg.balance_threshold);
    cfg.balance_budget = geti("balance.budget", cfg.balance_budget);
    cfg.train_fraction = getd("split.train_fraction", cfg.train_fraction);
    cfg.split_seed = geti("split.seed", cfg.split_seed);

    cfg.stemmer = getb("textprep.stemmer", cfg.stemmer);
    cfg.vocab_size = geti("tokenizer.vocab_size", cfg.vocab_size);
    cfg.capacity = geti("tokenizer.capacity", cfg.capacity);

    cfg.late_night.start_hour = geti("context.late_night_start", cfg.late_night.start_hour);
    cfg.late_night.end_hour = geti("context.late_night_end", cfg.late_night.end_hour);
    cfg.sentiment_alpha = getd("context.alpha", cfg.sentiment_alpha);
    cfg.top_k_words = geti("profile.top_k", cfg.top_k_words);

    if (kv.count("tabular.numerical")) {
        cfg.tabular.numerical = parse_list(kv["tabular.numerical"]);
        kv.erase("tabular.numerical");
    }
    if (kv.count("tabular.categorical")) {
        cfg.tabular.categorical = parse_list(kv["tabular.categorical"]);
        kv.erase("tabular.categorical");
    }

    cfg.model.encoder.d_model = geti("model.d_model", cfg.model.encoder.d_model);
    cfg.model.encoder.n_heads = geti("model.n_heads", cfg.model.encoder.n_heads);
    cfg.model.encoder.n_layers = geti("model.n_layers", cfg.model.encoder.n_layers);
    cfg.model.encoder.ffn_multiplier =
        geti("model.ffn_multiplier", cfg.model.encoder.ffn_multiplier);
    cfg.model.encoder.dropout = getd("model.dropout", cfg.model.encoder.dropout);
    cfg.model.d_f = geti("model.d_f", cfg.model.d_f);
    cfg.model.mlp_division = geti("model.mlp_division", cfg.model.mlp_division);
    cfg.model.mlp_dropout = getd("model.mlp_dropout", cfg.model.mlp_dropout);
    cfg.model.leaky_slope = getd("model.leaky_slope", cfg.model.leaky_slope);
    cfg.init_seed = geti("model.init_seed", cfg.init_seed);
    cfg.gating_beta = getd("model.gating_beta", cfg.gating_beta);

    cfg.train.mode = combine_mode_from_string(gets("train.mode", "attention_fusion"));
    cfg.train.optimizer = optimizer_from_string(gets("train.optimizer", "adam"));
    cfg.train.learning_rate = getd("train.lr", cfg.train.learning_rate);
    cfg.train.epochs = geti("train.epochs", cfg.train.epochs);
    cfg.train.batch_size = geti("train.batch_size", cfg.train.batch_size);
    cfg.train.seed = geti("train.seed", cfg.train.seed);
    cfg.train.clip_norm = getd("train.clip_norm", cfg.train.clip_norm);
    cfg.train.use_dropout = getb("train.use_dropout", cfg.train.use_dropout);

    cfg.background_cap = geti("explain.background_cap", cfg.background_cap);
    cfg.max_instances = geti("explain.max_instances", cfg.max_instances);
    cfg.explain_seed = geti("explain.seed", cfg.explain_seed);

    if (kv.count("ablation.variants")) {
        cfg.ablation_variants = parse_list(kv["ablation.variants"]);
        kv.erase("ablation.variants");
    }
    if (kv.count("ablation.seeds")) {
        cfg.ablation_seeds = parse_seed_list(kv["ablation.seeds"], "ablation.seeds");
        kv.erase("ablation.seeds");
    }
    cfg.ablation_parallel = getb("ablation.parallel", cfg.ablation_parallel);
    cfg.tfidf_max_features = geti("baseline.tfidf_max_features", cfg.tfidf_max_features);

    cfg.synth.n_users = geti("synth.n_users", cfg.synth.n_users);
    cfg.synth.min_posts = geti("synth.min_posts", cfg.synth.min_posts);
    cfg.synth.max_posts = geti("synth.max_posts", cfg.synth.max_posts);
    cfg.synth.positive_fraction = getd("synth.positive_fraction", cfg.synth.positive_fraction);
    cfg.synth.signal_ratio = getd("synth.signal_ratio", cfg.synth.signal_ratio);
    cfg.synth.text_strength = getd("synth.text_strength", cfg.synth.text_strength);
    cfg.synth.context_strength = getd("synth.context_strength", cfg.synth.context_strength);
    cfg.synth.label_noise = getd("synth.label_noise", cfg.synth.label_noise);
    cfg.synth.words_min = geti("synth.words_min", cfg.synth.words_min);
    cfg.synth.words_max = geti("synth.words_max", cfg.synth.words_max);
    cfg.synth.small_user_fraction =
        getd("synth.small_user_fraction", cfg.synth.small_user_fraction);
    cfg.synth.small_min = geti("synth.small_min", cfg.synth.small_min);
    cfg.synth.small_max = geti("synth.small_max", cfg.synth.small_max);
    cfg.synth.seed = geti("synth.seed", cfg.synth.seed);

    if (!kv.empty()) {
        std::vector<std::string> unknown;
        for (const auto& [key, _] : kv) unknown.push_back(key);
        throw ConfigError("unknown config keys: " + join(unknown, ", "));
    }
    return cfg;
}

std::vector<std::string> PipelineConfig::validate() const {
    std::vector<std::string> violations;
    auto check_file = [&](const std::string& key, const std::string& path) {
        if (path.empty()) {
            violations.push_back(key + ": path not set");
        } else if (!file_exists(path)) {
            violations.push_back(key + ": file not found: " + path);
        }
    };
    check_file("paths.corpus_source", corpus_source);
    check_file("paths.expansion_table", expansion_table);
    check_file("paths.lexicon_primary", lexicon_primary);
    check_file("paths.lexicon_secondary", lexicon_secondary);
    check_file("paths.valence", valence_table);
    check_file("paths.stopwords", stopwords);

    if (min_posts < 1) violations.push_back("corpus.min_posts: must be >= 1");
    if (!(balance_threshold > 0.0 && balance_threshold < 1.0))
        violations.push_back("balance.threshold: must be in (0,1)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        violations.push_back("split.train_fraction: must be in (0,1)");
    if (vocab_size < 2) violations.push_back("tokenizer.vocab_size: must be >= 2");
    if (capacity < 1) violations.push_back("tokenizer.capacity: must be >= 1");
    if (late_night.start_hour < 0 || late_night.start_hour > 23)
        violations.push_back("context.late_night_start: must be in [0,23]");
    if (late_night.end_hour < 0 || late_night.end_hour > 24)
        violations.push_back("context.late_night_end: must be in [0,24]");
    if (!(sentiment_alpha > 0.0)) violations.push_back("context.alpha: must be positive");
    if (top_k_words < 1) violations.push_back("profile.top_k: must be >= 1");

    if (tabular.numerical.empty() && tabular.categorical.empty())
        violations.push_back("tabular: schema must name at least one feature");
    {
        std::set<std::string> seen;
        for (const auto& name : tabular.numerical) {
            if (!seen.insert(name).second)
                violations.push_back("tabular: duplicate feature name " + name);
        }
        for (const auto& name : tabular.categorical) {
            if (!seen.insert(name).second)
                violations.push_back("tabular: duplicate feature name " + name);
        }
    }

    try {
        ModelConfig probe = model;
        probe.vocab_size = 2;
        probe.cat_dim = 0;
        probe.num_dim = 0;
        probe.encoder.capacity = static_cast<int>(capacity);
        probe.check();
    } catch (const Error& e) {
        violations.push_back(std::string("model: ") + e.what());
    }
    try {
        train.check();
    } catch (const Error& e) {
        violations.push_back(std::string("train: ") + e.what());
    }

    std::size_t n_features = tabular.numerical.size() + tabular.categorical.size();
    if (n_features > 15)
        violations.push_back("explain: more than 15 tabular features; exact Shapley "
                             "enumeration is capped at 15");
    if (max_instances < 1) violations.push_back("explain.max_instances: must be >= 1");
    if (background_cap < 1) violations.push_back("explain.background_cap: must be >= 1");
    if (ablation_seeds.empty()) violations.push_back("ablation.seeds: must not be empty");
    for (const auto& variant : ablation_variants) {
        if (variant == "text_only") continue;
        if (starts_with(variant, "drop:")) {
            std::string f = variant.substr(5);
            auto names = tabular.feature_names();
            if (std::find(names.begin(), names.end(), f) == names.end())
                violations.push_back("ablation.variants: unknown feature in " + variant);
            continue;
        }
        violations.push_back("ablation.variants: unknown variant " + variant);
    }
    return violations;
}

std::string PipelineConfig::canonical() const {
    std::map<std::string, std::string> kv;
    kv["corpus.delimiter"] = delimiter_name(schema.delimiter);
    kv["corpus.quoted"] = schema.quoted ? "true" : "false";
    kv["corpus.col_user"] = std::to_string(schema.col_user);
    kv["corpus.col_timestamp"] = std::to_string(schema.col_timestamp);
    kv["corpus.col_label"] = std::to_string(schema.col_label);
    kv["corpus.col_text"] = std::to_string(schema.col_text);
    {
        std::vector<std::string> pairs;
        for (const auto& [raw, mapped] : schema.label_map)
            pairs.push_back(raw + ":" + std::to_string(mapped));
        kv["corpus.label_map"] = join(pairs, ",");
    }
    kv["corpus.timestamp_format"] =
        schema.timestamp_format == TimestampFormat::iso8601 ? "iso8601" : "sentiment140";
    kv["corpus.min_posts"] = std::to_string(min_posts);
    kv["balance.threshold"] = fmt_g17(balance_threshold);
    kv["balance.budget"] = std::to_string(balance_budget);
    kv["split.train_fraction"] = fmt_g17(train_fraction);
    kv["split.seed"] = std::to_string(split_seed);
    kv["textprep.stemmer"] = stemmer ? "true" : "false";
    kv["tokenizer.vocab_size"] = std::to_string(vocab_size);
    kv["tokenizer.capacity"] = std::to_string(capacity);
    kv["context.late_night_start"] = std::to_string(late_night.start_hour);
    kv["context.late_night_end"] = std::to_string(late_night.end_hour);
    kv["context.alpha"] = fmt_g17(sentiment_alpha);
    kv["profile.top_k"] = std::to_string(top_k_words);
    kv["tabular.numerical"] = join(tabular.numerical, ",");
    kv["tabular.categorical"] = join(tabular.categorical, ",");
    kv["model.d_model"] = std::to_string(model.encoder.d_model);
    kv["model.n_heads"] = std::to_string(model.encoder.n_heads);
    kv["model.n_layers"] = std::to_string(model.encoder.n_layers);
    kv["model.ffn_multiplier"] = std::to_string(model.encoder.ffn_multiplier);
    kv["model.dropout"] = fmt_g17(model.encoder.dropout);
    kv["model.d_f"] = std::to_string(model.d_f);
    kv["model.mlp_division"] = std::to_string(model.mlp_division);
    kv["model.mlp_dropout"] = fmt_g17(model.mlp_dropout);
    kv["model.leaky_slope"] = fmt_g17(model.leaky_slope);
    kv["model.init_seed"] = std::to_string(init_seed);
    kv["model.gating_beta"] = fmt_g17(gating_beta);
    kv["train.mode"] = to_string(train.mode);
    kv["train.optimizer"] = train.optimizer == Optimizer::adam ? "adam"
                            : train.optimizer == Optimizer::momentum ? "momentum"
                                                                     : "gradient_descent";
    kv["train.lr"] = fmt_g17(train.learning_rate);
    kv["train.epochs"] = std::to_string(train.epochs);
    kv["train.batch_size"] = std::to_string(train.batch_size);
    kv["train.seed"] = std::to_string(train.seed);
    kv["train.clip_norm"] = fmt_g17(train.clip_norm);
    kv["train.use_dropout"] = train.use_dropout ? "true" : "false";
    kv["explain.background_cap"] = std::to_string(background_cap);
    kv["explain.max_instances"] = std::to_string(max_instances);
    kv["explain.seed"] = std::to_string(explain_seed);
    kv["ablation.variants"] = join(ablation_variants, ",");
    {
        std::vector<std::string> seeds;
        for (auto s : ablation_seeds) seeds.push_back(std::to_string(s));
        kv["ablation.seeds"] = join(seeds, ",");
    }
    kv["baseline.tfidf_max_features"] = std::to_string(tfidf_max_features);
    kv["synth.n_users"] = std::to_string(synth.n_users);
    kv["synth.min_posts"] = std::to_string(synth.min_posts);
    kv["synth.max_posts"] = std::to_string(synth.max_posts);
    kv["synth.positive_fraction"] = fmt_g17(synth.positive_fraction);
    kv["synth.signal_ratio"] = fmt_g17(synth.signal_ratio);
    kv["synth.text_strength"] = fmt_g17(synth.text_strength);
    kv["synth.context_strength"] = fmt_g17(synth.context_strength);
    kv["synth.label_noise"] = fmt_g17(synth.label_noise);
    kv["synth.words_min"] = std::to_string(synth.words_min);
    kv["synth.words_max"] = std::to_string(synth.words_max);
    kv["synth.small_user_fraction"] = fmt_g17(synth.small_user_fraction);
    kv["synth.small_min"] = std::to_string(synth.small_min);
    kv["synth.small_max"] = std::to_string(synth.small_max);
    kv["synth.seed"] = std::to_string(synth.seed);

    std::ostringstream out;
    for (const auto& [key, value] : kv) out << key << '=' << value << '\n';
    return out.str();
}

std::string PipelineConfig::hash() const { return to_hex(fnv1a64(canonical())); }

std::string PipelineConfig::artifact_meta() const {
    return "config_hash=" + hash() + " seed=" + std::to_string(split_seed);
}

std::string PipelineConfig::path_in_workdir(const std::string& name) const {
    return (std::filesystem::path(workdir) / name).string();
}

}  // namespace persona
