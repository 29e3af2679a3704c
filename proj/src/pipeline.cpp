#include "persona/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "persona/explain.hpp"
#include "persona/profiles.hpp"
#include "persona/synth.hpp"

namespace persona {

namespace {

void ensure_workdir(const PipelineConfig& cfg) {
    std::filesystem::create_directories(cfg.workdir);
}

void require_artifact(const std::string& path) {
    if (!file_exists(path)) throw MissingArtifactError("missing artifact: " + path);
}

void check_hash(const std::map<std::string, std::string>& header, const PipelineConfig& cfg,
                const std::string& path) {
    auto it = header.find("config_hash");
    if (it == header.end() || it->second != cfg.hash())
        throw Error("artifact " + path + " was produced with a different config (hash " +
                    (it == header.end() ? std::string("missing") : it->second) + " != " +
                    cfg.hash() + ")");
}

struct SharedData {
    ExpansionTable expansion;
    Lexicon primary;
    Lexicon secondary;
    ValenceLexicon valence;
    std::unordered_set<std::string> stopwords;
};

SharedData load_shared(const PipelineConfig& cfg) {
    SharedData data;
    data.expansion = load_expansion_table(cfg.expansion_table);
    data.primary = load_lexicon(cfg.lexicon_primary, "dep");
    data.secondary = load_lexicon(cfg.lexicon_secondary, "junyeop");
    data.valence = load_valence(cfg.valence_table);
    data.stopwords = load_stopwords(cfg.stopwords);
    return data;
}

void log_line(const std::string& msg) { std::cerr << "[persona] " << msg << "\n"; }

}  // namespace

void stage_synth(const PipelineConfig& cfg) {
    ensure_workdir(cfg);
    Corpus corpus = synth_corpus_as_corpus(cfg.synth);
    write_canonical_file(cfg.path_in_workdir(artifact::kSynthCorpus), corpus,
                         cfg.artifact_meta());
    log_line("synth: wrote " + std::to_string(corpus.size()) + " posts from " +
             std::to_string(corpus.users().size()) + " users");
}

void stage_ingest(const PipelineConfig& cfg) {
    ensure_workdir(cfg);
    if (cfg.corpus_source.empty()) throw ConfigError("paths.corpus_source not set");
    require_artifact(cfg.corpus_source);
    std::ifstream in(cfg.corpus_source, std::ios::binary);
    if (!in) throw Error("cannot open corpus source: " + cfg.corpus_source);

    ParseStats stats;
    Corpus raw = parse_corpus(in, cfg.schema, &stats);
    Corpus core = filter_min_posts(raw, cfg.min_posts);

    // Candidate pool for balancing: users excluded by the min-post filter.
    Corpus candidates;
    for (const auto& post : raw.posts()) {
        if (raw.posts_of(post.user_id).size() < cfg.min_posts) candidates.add(post);
    }
    auto [balanced, report] =
        balance_classes(core, candidates, cfg.balance_threshold, cfg.balance_budget);

    auto [train, test] = split_by_user(balanced, cfg.train_fraction, cfg.split_seed);

    write_canonical_file(cfg.path_in_workdir(artifact::kCorpusAll), balanced,
                         cfg.artifact_meta());
    write_canonical_file(cfg.path_in_workdir(artifact::kCorpusTrain), train,
                         cfg.artifact_meta());
    write_canonical_file(cfg.path_in_workdir(artifact::kCorpusTest), test, cfg.artifact_meta());

    nlohmann::ordered_json j;
    j["meta"] = {{"kind", "balance_report"},
                 {"config_hash", cfg.hash()},
                 {"seed", cfg.split_seed}};
    j["rows_read"] = stats.rows_read;
    j["rows_skipped"] = stats.skipped;
    j["skipped_breakdown"] = {{"bad_label", stats.bad_label},
                              {"bad_timestamp", stats.bad_timestamp},
                              {"bad_row", stats.bad_row},
                              {"empty_text", stats.empty_text}};
    j["pos_count"] = report.pos_count;
    j["neg_count"] = report.neg_count;
    j["imbalance"] = report.imbalance;
    j["threshold"] = report.threshold;
    j["threshold_unmet"] = report.threshold_unmet;
    j["users_added"] = report.users_added;
    j["posts_added"] = report.posts_added;
    j["train_users"] = train.users().size();
    j["test_users"] = test.users().size();
    write_text_file(cfg.path_in_workdir(artifact::kBalanceReport), j.dump(2) + "\n");
    log_line("ingest: " + std::to_string(balanced.size()) + " posts kept, imbalance " +
             fmt_fixed(report.imbalance, 4));
}

FeaturizeOutput featurize_split(const Corpus& corpus, const PipelineConfig& cfg,
                                bool store_labels) {
    SharedData shared = load_shared(cfg);
    FeaturizeOutput out;
    std::vector<const Lexicon*> lexicons{&shared.primary, &shared.secondary};

    std::vector<std::string> normalized(corpus.size());
    for (const auto& user : corpus.users()) {
        std::vector<ProfilePost> posts;
        for (std::size_t idx : corpus.posts_of(user)) {
            const RawPost& raw = corpus.posts()[idx];
            normalized[idx] = normalize_text(raw.text, shared.expansion, cfg.stemmer);
            ProfilePost post;
            post.timestamp = raw.timestamp;
            post.label = store_labels ? raw.label : -1;
            post.text_norm = normalized[idx];
            post.ctx =
                make_post_context(post.text_norm, raw.timestamp, lexicons, cfg.late_night);
            posts.push_back(std::move(post));
        }
        out.store.upsert_posts(user, posts);
    }

    for (const auto& user : corpus.users()) {
        ProfileFeatures feats = out.store.aggregate_features(
            user, cfg.top_k_words, shared.stopwords, shared.valence, shared.primary,
            shared.secondary, cfg.sentiment_alpha);
        auto named = feats.named();
        for (std::size_t idx : corpus.posts_of(user)) {
            const RawPost& raw = corpus.posts()[idx];
            DataRow row;
            row.user_id = user;
            row.label = raw.label;
            row.text_norm = normalized[idx];
            for (const auto& name : cfg.tabular.numerical) {
                auto it = named.find(name);
                if (it == named.end())
                    throw Error("tabular schema names unknown profile feature: " + name);
                row.features.numeric[name] = it->second;
            }
            for (const auto& name : cfg.tabular.categorical) {
                if (name == "is_late_night") {
                    row.features.categorical[name] =
                        is_late_night(raw.timestamp, cfg.late_night) ? "true" : "false";
                } else {
                    throw Error("tabular schema names unknown categorical feature: " + name);
                }
            }
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

void write_rows_file(const std::string& path, const std::vector<DataRow>& rows,
                     const TabularSchema& schema, const std::string& header_extras) {
    std::ostringstream out;
    out << "# persona-rows v1";
    if (!header_extras.empty()) out << ' ' << header_extras;
    out << '\n';
    out << "user_id\tlabel";
    for (const auto& name : schema.categorical) out << '\t' << name;
    for (const auto& name : schema.numerical) out << '\t' << name;
    out << "\ttext\n";
    for (const auto& row : rows) {
        out << row.user_id << '\t' << row.label;
        for (const auto& name : schema.categorical)
            out << '\t' << row.features.categorical_value(name);
        for (const auto& name : schema.numerical)
            out << '\t' << fmt_g17(row.features.numeric_value(name));
        out << '\t' << escape_field(row.text_norm) << '\n';
    }
    write_text_file(path, out.str());
}

std::vector<DataRow> read_rows_file(const std::string& path, TabularSchema* schema_out,
                                    std::map<std::string, std::string>* header_kv) {
    if (!file_exists(path)) throw MissingArtifactError("missing rows file: " + path);
    std::ifstream in(path);
    if (!in) throw Error("cannot open rows file: " + path);
    std::string line;
    if (!std::getline(in, line) || !starts_with(line, "# persona-rows v1"))
        throw Error("not a rows file: " + path);
    if (header_kv) *header_kv = parse_header_kv(line);
    if (!std::getline(in, line)) throw Error("rows file missing column header: " + path);
    auto columns = split(line, '\t');
    if (columns.size() < 3 || columns[0] != "user_id" || columns[1] != "label" ||
        columns.back() != "text")
        throw Error("rows file has a malformed column header: " + path);

    // Columns between label and text are categorical ("is_late_night") or
    // numeric feature names; recover the split from known categoricals.
    std::vector<std::string> feature_columns(columns.begin() + 2, columns.end() - 1);
    TabularSchema schema;
    for (const auto& name : feature_columns) {
        if (name == "is_late_night") {
            schema.categorical.push_back(name);
        } else {
            schema.numerical.push_back(name);
        }
    }
    if (schema_out) *schema_out = schema;

    std::vector<DataRow> rows;
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != columns.size())
            throw Error("rows file line " + std::to_string(line_no) + ": expected " +
                        std::to_string(columns.size()) + " fields");
        DataRow row;
        row.user_id = fields[0];
        row.label = static_cast<int>(parse_int(fields[1], "label"));
        for (std::size_t i = 0; i < feature_columns.size(); ++i) {
            const std::string& name = feature_columns[i];
            const std::string& value = fields[2 + i];
            if (name == "is_late_night") {
                row.features.categorical[name] = value;
            } else {
                row.features.numeric[name] = parse_double(value, name);
            }
        }
        row.text_norm = unescape_field(fields.back());
        rows.push_back(std::move(row));
    }
    return rows;
}

void stage_featurize(const PipelineConfig& cfg) {
    ensure_workdir(cfg);
    Corpus train = read_canonical_file(cfg.path_in_workdir(artifact::kCorpusTrain));
    Corpus test = read_canonical_file(cfg.path_in_workdir(artifact::kCorpusTest));

    FeaturizeOutput train_out = featurize_split(train, cfg, /*store_labels=*/true);
    // Test labels stay out of the feature-extraction store.
    FeaturizeOutput test_out = featurize_split(test, cfg, /*store_labels=*/false);

    train_out.store.save(cfg.path_in_workdir(artifact::kStoreTrain), cfg.artifact_meta());
    test_out.store.save(cfg.path_in_workdir(artifact::kStoreTest), cfg.artifact_meta());

    std::vector<RawFeatureRow> train_features;
    for (const auto& row : train_out.rows) train_features.push_back(row.features);
    FittedTransform transform = fit_transform(cfg.tabular, train_features);
    transform.save(cfg.path_in_workdir(artifact::kTransform), cfg.artifact_meta());

    write_rows_file(cfg.path_in_workdir(artifact::kRowsTrain), train_out.rows, cfg.tabular,
                    cfg.artifact_meta());
    write_rows_file(cfg.path_in_workdir(artifact::kRowsTest), test_out.rows, cfg.tabular,
                    cfg.artifact_meta());
    log_line("featurize: " + std::to_string(train_out.rows.size()) + " train rows, " +
             std::to_string(test_out.rows.size()) + " test rows");
}

namespace {

struct LoadedData {
    std::vector<DataRow> train_rows;
    std::vector<DataRow> test_rows;
    FittedTransform transform;
};

LoadedData load_featurized(const PipelineConfig& cfg) {
    LoadedData data;
    std::map<std::string, std::string> header;
    data.train_rows = read_rows_file(cfg.path_in_workdir(artifact::kRowsTrain), nullptr, &header);
    check_hash(header, cfg, artifact::kRowsTrain);
    data.test_rows = read_rows_file(cfg.path_in_workdir(artifact::kRowsTest), nullptr, &header);
    check_hash(header, cfg, artifact::kRowsTest);
    data.transform = FittedTransform::load(cfg.path_in_workdir(artifact::kTransform), &header);
    check_hash(header, cfg, artifact::kTransform);
    return data;
}

std::vector<TrainRecord> encode_rows(const std::vector<DataRow>& rows, const Vocabulary& vocab,
                                     const FittedTransform& transform,
                                     const PipelineConfig& cfg) {
    std::vector<TrainRecord> records;
    records.reserve(rows.size());
    for (const auto& row : rows) {
        TrainRecord rec;
        rec.seq = tokenize_pad(row.text_norm, vocab, cfg.capacity);
        rec.tab = apply_transform(transform, row.features);
        rec.label = row.label;
        rec.user_id = row.user_id;
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace

void stage_train(const PipelineConfig& cfg) {
    ensure_workdir(cfg);
    LoadedData data = load_featurized(cfg);

    std::vector<std::string> train_texts;
    for (const auto& row : data.train_rows) train_texts.push_back(row.text_norm);
    Vocabulary vocab = Vocabulary::build(train_texts, cfg.vocab_size);
    vocab.save(cfg.path_in_workdir(artifact::kVocab), cfg.artifact_meta());

    ModelConfig mcfg = cfg.model;
    mcfg.encoder.capacity = static_cast<int>(cfg.capacity);
    mcfg.vocab_size = static_cast<int>(vocab.size());
    mcfg.cat_dim = static_cast<int>(data.transform.categorical_width());
    mcfg.num_dim = static_cast<int>(data.transform.numerical.size());

    std::vector<TrainRecord> train_records =
        encode_rows(data.train_rows, vocab, data.transform, cfg);
    std::vector<TrainRecord> val_records =
        encode_rows(data.test_rows, vocab, data.transform, cfg);

    ModelParams init = ModelParams::init(mcfg, cfg.init_seed);
    TrainResult result = train_model(std::move(init), train_records, val_records, cfg.train);

    result.params.save(cfg.path_in_workdir(artifact::kCheckpoint), cfg.artifact_meta());
    std::ostringstream history;
    history << "# persona-history v1 " << cfg.artifact_meta() << '\n';
    history << "epoch,train_loss,val_f1\n";
    for (const auto& row : result.history) {
        history << row.epoch << ',' << fmt_g17(row.train_loss) << ',' << fmt_g17(row.val_f1)
                << '\n';
    }
    write_text_file(cfg.path_in_workdir(artifact::kHistory), history.str());
    log_line("train: final loss " + fmt_fixed(result.history.back().train_loss, 4) +
             ", val F1 " + fmt_fixed(result.history.back().val_f1, 4));
}

void stage_eval(const PipelineConfig& cfg) {
    ensure_workdir(cfg);
    LoadedData data = load_featurized(cfg);
    std::map<std::string, std::string> header;
    Vocabulary vocab = Vocabulary::load(cfg.path_in_workdir(artifact::kVocab));
    ModelParams params = ModelParams::load(cfg.path_in_workdir(artifact::kCheckpoint), &header);
    check_hash(header, cfg, artifact::kCheckpoint);

    std::vector<TrainRecord> test_records =
        encode_rows(data.test_rows, vocab, data.transform, cfg);
    MetricsReport report = evaluate_model(params, test_records, cfg.train.mode);
    write_text_file(cfg.path_in_workdir(artifact::kMetrics),
                    report.to_json("metrics", cfg.hash(), cfg.split_seed));

    // Persona write-back: majority predicted class per user, appended to a
    // copy of the test-split store as a new annotation cycle.
    ProfileStore store = ProfileStore::load(cfg.path_in_workdir(artifact::kStoreTest));
    std::vector<int> preds = predict(params, test_records, cfg.train.mode);
    std::map<std::string, std::pair<int, int>> votes;  // user -> (neg, pos)
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& v = votes[test_records[i].user_id];
        (preds[i] == 1 ? v.second : v.first)++;
    }
    int cycle = store.next_cycle();
    for (const auto& [user, v] : votes) {
        store.annotate_persona(user, v.second > v.first ? "positive" : "negative", cycle);
    }
    store.save(cfg.path_in_workdir(artifact::kStoreAnnotated), cfg.artifact_meta());
    log_line("eval: accuracy " + fmt_fixed(report.accuracy, 4) + ", positive F1 " +
             fmt_fixed(report.positive.f1, 4));
}

void stage_explain(const PipelineConfig& cfg) {
    ensure_workdir(cfg);
    LoadedData data = load_featurized(cfg);
    Vocabulary vocab = Vocabulary::load(cfg.path_in_workdir(artifact::kVocab));
    std::map<std::string, std::string> header;
    ModelParams params = ModelParams::load(cfg.path_in_workdir(artifact::kCheckpoint), &header);
    check_hash(header, cfg, artifact::kCheckpoint);

    const TabularSchema& schema = cfg.tabular;
    std::vector<std::string> feature_names = schema.feature_names();

    auto row_to_vector = [&](const DataRow& row) {
        std::vector<double> vec;
        for (const auto& name : schema.numerical) vec.push_back(row.features.numeric_value(name));
        for (const auto& name : schema.categorical)
            vec.push_back(row.features.categorical_value(name) == "true" ? 1.0 : 0.0);
        return vec;
    };

    // Background: training rows, seeded subsample when above the cap.
    std::vector<std::size_t> bg_idx(data.train_rows.size());
    for (std::size_t i = 0; i < bg_idx.size(); ++i) bg_idx[i] = i;
    if (bg_idx.size() > cfg.background_cap) {
        Rng rng(cfg.explain_seed);
        rng.shuffle(bg_idx);
        bg_idx.resize(cfg.background_cap);
        std::sort(bg_idx.begin(), bg_idx.end());
    }
    std::vector<std::vector<double>> background;
    background.reserve(bg_idx.size());
    for (std::size_t i : bg_idx) background.push_back(row_to_vector(data.train_rows[i]));

    std::size_t n_num = schema.numerical.size();
    std::vector<Attribution> attributions;
    std::size_t n_instances = std::min(cfg.max_instances, data.test_rows.size());
    for (std::size_t i = 0; i < n_instances; ++i) {
        const DataRow& row = data.test_rows[i];
        TokenSequence seq = tokenize_pad(row.text_norm, vocab, cfg.capacity);
        std::vector<double> x = encode_text(seq, params);
        ModelFn model_fn = [&](const std::vector<double>& features) {
            std::vector<double> numeric(features.begin(),
                                        features.begin() + static_cast<std::ptrdiff_t>(n_num));
            std::vector<double> trueness(features.begin() + static_cast<std::ptrdiff_t>(n_num),
                                         features.end());
            TabularVector tab = apply_transform_soft(data.transform, numeric, trueness);
            return forward_from_encoded(x, tab, params, cfg.train.mode).probs[1];
        };
        attributions.push_back(shapley_exact(model_fn, row_to_vector(row), background,
                                             feature_names,
                                             row.user_id + "#" + std::to_string(i)));
    }

    std::ostringstream attr_out;
    write_attributions_json(attr_out, attributions, cfg.hash(), cfg.split_seed,
                            "checkpoint:" + cfg.hash());
    write_text_file(cfg.path_in_workdir(artifact::kAttributions), attr_out.str());

    GlobalSummary summary = global_summary(attributions);
    std::ostringstream summary_out;
    write_summary_csv(summary_out, summary, "persona-shap-summary v1 " + cfg.artifact_meta());
    write_text_file(cfg.path_in_workdir(artifact::kShapSummary), summary_out.str());

    // Leakage diagnostic over training rows: features plus the target.
    std::vector<std::vector<double>> corr_rows;
    corr_rows.reserve(data.train_rows.size());
    for (const auto& row : data.train_rows) {
        auto vec = row_to_vector(row);
        vec.push_back(static_cast<double>(row.label));
        corr_rows.push_back(std::move(vec));
    }
    std::vector<std::string> corr_names = feature_names;
    corr_names.push_back("target");
    CorrelationMatrix matrix = pearson_matrix(corr_rows, corr_names);
    std::ostringstream corr_out;
    write_correlation_csv(corr_out, matrix, "persona-correlation v1 " + cfg.artifact_meta());
    write_text_file(cfg.path_in_workdir(artifact::kCorrelation), corr_out.str());
    log_line("explain: " + std::to_string(attributions.size()) + " instances attributed");
}

void stage_ablate(const PipelineConfig& cfg) {
    ensure_workdir(cfg);
    LoadedData data = load_featurized(cfg);

    RunSettings settings;
    settings.schema = cfg.tabular;
    settings.encode.vocab_size = cfg.vocab_size;
    settings.encode.capacity = cfg.capacity;
    settings.tfidf_max_features = cfg.tfidf_max_features;
    settings.model_cfg = cfg.model;
    settings.model_cfg.encoder.capacity = static_cast<int>(cfg.capacity);
    settings.train_cfg = cfg.train;

    AblationPlan plan;
    plan.variants = cfg.ablation_variants.empty()
                        ? AblationPlan::default_plan(cfg.tabular).variants
                        : cfg.ablation_variants;

    AblationResult result = run_ablation(plan, data.train_rows, data.test_rows, settings,
                                         cfg.ablation_seeds, cfg.ablation_parallel);

    std::ostringstream out;
    write_ablation_csv(out, result, "persona-ablation v1 " + cfg.artifact_meta());
    write_text_file(cfg.path_in_workdir(artifact::kAblation), out.str());

    // Paired bootstrap of each variant against the attention-fusion baseline
    // on the first-seed predictions (the markers next to headline scores).
    nlohmann::ordered_json sig;
    sig["meta"] = {{"kind", "significance"},
                   {"config_hash", cfg.hash()},
                   {"seed", cfg.split_seed},
                   {"baseline", "attention_fusion"},
                   {"resamples", 1000}};
    for (std::size_t vi = 1; vi < result.rows.size(); ++vi) {
        sig["p_values"][result.rows[vi].variant] = paired_significance(
            result.test_labels, result.first_seed_predictions[0],
            result.first_seed_predictions[vi], 1000, cfg.ablation_seeds.front());
    }
    write_text_file(cfg.path_in_workdir(artifact::kSignificance), sig.dump(2) + "\n");
    log_line("ablate: " + std::to_string(result.rows.size()) + " variants evaluated");
}

void stage_report(const PipelineConfig& cfg) {
    ensure_workdir(cfg);
    nlohmann::ordered_json report;
    report["meta"] = {{"kind", "report"}, {"config_hash", cfg.hash()}, {"seed", cfg.split_seed}};

    auto merge_json = [&](const char* name, const char* key) {
        std::string path = cfg.path_in_workdir(name);
        require_artifact(path);
        auto j = nlohmann::ordered_json::parse(read_text_file(path));
        if (!j.contains("meta") || j["meta"]["config_hash"] != cfg.hash())
            throw Error("report: artifact " + path + " has a mismatched config hash");
        j.erase("meta");
        report[key] = j;
    };
    merge_json(artifact::kBalanceReport, "balance");
    merge_json(artifact::kMetrics, "metrics");
    merge_json(artifact::kSignificance, "significance");

    auto read_csv_artifact = [&](const char* name) {
        std::string path = cfg.path_in_workdir(name);
        require_artifact(path);
        std::string content = read_text_file(path);
        if (content.find("config_hash=" + cfg.hash()) == std::string::npos)
            throw Error("report: artifact " + path + " has a mismatched config hash");
        return content;
    };

    {
        std::string ablation = read_csv_artifact(artifact::kAblation);
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        std::istringstream in(ablation);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || starts_with(line, "variant,")) continue;
            auto fields = split(line, ',');
            rows.push_back({{"variant", fields[0]},
                            {"f1_mean", parse_double(fields[1], "f1_mean")},
                            {"f1_std", parse_double(fields[2], "f1_std")}});
        }
        report["ablation"] = rows;
    }
    {
        std::string summary = read_csv_artifact(artifact::kShapSummary);
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        std::istringstream in(summary);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || starts_with(line, "feature,")) continue;
            auto fields = split(line, ',');
            rows.push_back({{"feature", fields[0]},
                            {"mean_abs_phi", parse_double(fields[1], "mean_abs_phi")},
                            {"rank", parse_int(fields[2], "rank")}});
        }
        report["shap_global"] = rows;
    }

    write_text_file(cfg.path_in_workdir(artifact::kReport), report.dump(2) + "\n");
    log_line("report: merged artifact summaries");
}

}  // namespace persona
