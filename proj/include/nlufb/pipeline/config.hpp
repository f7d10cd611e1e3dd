#pragma once
// Pipeline configuration: a sectioned key=value text file covering the
// simulator, annotator, and all three model stages. One file drives a
// whole reproducible run.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlufb/dcm/dcm.hpp"
#include "nlufb/dim/dim.hpp"
#include "nlufb/feedback/feedback.hpp"
#include "nlufb/rerank/rerank.hpp"
#include "nlufb/simgen/simgen.hpp"

namespace nlufb::pipeline {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parsed [section] blocks in file order; repeated section names are kept
// as separate blocks (used for catalog entries and confusion rules).
struct IniSection {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(const std::string& key) const;
};

struct IniDoc {
    std::vector<IniSection> sections;

    static IniDoc parse_file(const std::filesystem::path& path);
    static IniDoc parse_string(const std::string& text, const std::string& origin = "<string>");

    const IniSection* find(const std::string& name) const;  // first match
    std::vector<const IniSection*> find_all(const std::string& name) const;
};

struct PipelineConfig {
    simgen::SimConfig sim;  // seed field unused; the week seeds below apply
    uint64_t sim_seed_week1 = 11;
    uint64_t sim_seed_week2 = 12;

    feedback::FeedbackConfig feedback;

    dim::DimHyperparams dim;
    uint64_t dim_seed = 101;
    double lambda = 0.9;
    double epsilon = 0.01;

    int dcm_k = 5;
    int dcm_q = 3;
    dcm::DcmHyperparams dcm;
    uint64_t dcm_seed = 202;

    rerank::RerankHyperparams rerank;
    uint64_t rerank_seed = 303;

    std::string config_hash;  // hex of the config file bytes (+ seed override)
};

// Loads and validates a pipeline config. A master seed override remaps all
// stage seeds deterministically and is folded into the config hash.
PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    std::optional<uint64_t> seed_override = {});

std::string hash_file_hex(const std::filesystem::path& path);

}  // namespace nlufb::pipeline
