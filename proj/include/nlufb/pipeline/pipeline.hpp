#pragma once
// End-to-end pipeline: simulate -> annotate -> train-dim -> select-targets
// -> train-dcm -> curate -> train-reranker -> evaluate. Stages communicate
// only through files in the output directory; a manifest written after
// every stage records artifact hashes and doubles as the resume
// checkpoint.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlufb/pipeline/config.hpp"

namespace nlufb::pipeline {

struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_name, const std::string& what)
        : std::runtime_error("stage " + stage_name + ": " + what), stage(std::move(stage_name)) {}
};

struct ResumeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArtifactRef {
    std::string path;  // relative to the output directory
    std::string hash;
};

struct StageRecord {
    std::string name;
    std::vector<std::string> inputs;  // relative paths read
    std::vector<ArtifactRef> outputs;
};

struct Manifest {
    std::string config_hash;
    std::vector<StageRecord> stages;        // completed stages, pipeline order
    nlohmann::ordered_json summary;         // filled by the final stage

    nlohmann::ordered_json to_json() const;
    static Manifest from_json(const nlohmann::ordered_json& j);

    void save(const std::filesystem::path& path) const;
    static Manifest load(const std::filesystem::path& path);

    const StageRecord* find(const std::string& stage_name) const;
};

// Pipeline order.
const std::vector<std::string>& stage_names();

struct RunOptions {
    std::optional<uint64_t> seed_override;
    bool verbose = false;
};

// Runs every stage in order, writing artifacts and the manifest under
// `out_dir`. Deterministic given the config. Throws StageError on a stage
// failure (completed stages stay checkpointed in the manifest).
Manifest run_pipeline(const std::filesystem::path& config_path,
                      const std::filesystem::path& out_dir, const RunOptions& opts = {});

// Re-executes from `from_stage` onward. Requires a manifest from a prior
// run whose config hash matches and whose upstream artifacts still hash
// clean; otherwise throws ResumeError with a diff summary.
Manifest stage_resume(const std::filesystem::path& config_path,
                      const std::filesystem::path& out_dir, const std::string& from_stage,
                      const RunOptions& opts = {});

// Runs one stage standalone (no manifest bookkeeping); upstream artifacts
// must already exist in `out_dir`.
void run_single_stage(const std::string& stage_name, const PipelineConfig& cfg,
                      const std::filesystem::path& out_dir, bool verbose = false);

}  // namespace nlufb::pipeline
