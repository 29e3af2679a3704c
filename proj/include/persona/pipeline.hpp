#pragma once
// Pipeline stages behind the CLI. Stages communicate only through files in
// the workdir; each stage checks its predecessor's artifacts and embeds the
// config hash + seed in everything it writes.

#include <string>
#include <vector>

#include "persona/config.hpp"
#include "persona/profiles.hpp"
#include "persona/train.hpp"

namespace persona {

void stage_synth(const PipelineConfig& cfg);
void stage_ingest(const PipelineConfig& cfg);
void stage_featurize(const PipelineConfig& cfg);
void stage_train(const PipelineConfig& cfg);
void stage_eval(const PipelineConfig& cfg);
void stage_explain(const PipelineConfig& cfg);
void stage_ablate(const PipelineConfig& cfg);
void stage_report(const PipelineConfig& cfg);

// Row-file IO (user, label, categorical values, numeric features, text).
void write_rows_file(const std::string& path, const std::vector<DataRow>& rows,
                     const TabularSchema& schema, const std::string& header_extras);
std::vector<DataRow> read_rows_file(const std::string& path, TabularSchema* schema_out = nullptr,
                                    std::map<std::string, std::string>* header_kv = nullptr);

// Featurization used by stage_featurize and the tests: builds the profile
// store and the per-post rows for one split.
struct FeaturizeOutput {
    ProfileStore store;
    std::vector<DataRow> rows;
};
FeaturizeOutput featurize_split(const Corpus& corpus, const PipelineConfig& cfg,
                                bool store_labels);

}  // namespace persona
