#include "nlufb/pipeline/pipeline.hpp"

#include <fstream>
#include <iostream>
#include <set>

#include "nlufb/core/jsonl.hpp"
#include "nlufb/core/rng.hpp"

namespace nlufb::pipeline {

namespace fs = std::filesystem;
using core::Dataset;
using core::Session;
using core::Turn;
using ojson = nlohmann::ordered_json;

namespace artifacts {
constexpr const char* week1 = "week1.jsonl";
constexpr const char* week2 = "week2.jsonl";
constexpr const char* week1_annotated = "week1_annotated.jsonl";
constexpr const char* dim_model = "dim_model.json";
constexpr const char* dim_valid = "dim_valid.jsonl";
constexpr const char* thres = "thres_search.json";
constexpr const char* targets = "targets.jsonl";
constexpr const char* dcm_instances = "dcm_instances.jsonl";
constexpr const char* dcm_model = "dcm_model.json";
constexpr const char* curated = "curated.jsonl";
constexpr const char* reranker_model = "reranker_model.json";
constexpr const char* eval_json = "eval_report.json";
constexpr const char* eval_text = "eval_report.txt";
constexpr const char* attribution = "attribution.json";
constexpr const char* manifest = "manifest.json";
}  // namespace artifacts

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {
        "simulate",  "annotate", "train-dim",      "select-targets",
        "train-dcm", "curate",   "train-reranker", "evaluate"};
    return names;
}

// --- manifest ----------------------------------------------------------

ojson Manifest::to_json() const {
    ojson j;
    j["format"] = "nlufb-manifest";
    j["version"] = 1;
    j["config_hash"] = config_hash;
    ojson stages_json = ojson::array();
    for (const StageRecord& s : stages) {
        ojson outputs = ojson::array();
        for (const ArtifactRef& a : s.outputs)
            outputs.push_back({{"path", a.path}, {"hash", a.hash}});
        stages_json.push_back(
            {{"name", s.name}, {"inputs", s.inputs}, {"outputs", std::move(outputs)}});
    }
    j["stages"] = std::move(stages_json);
    j["summary"] = summary.is_null() ? ojson::object() : summary;
    return j;
}

Manifest Manifest::from_json(const ojson& j) {
    Manifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& sj : j.at("stages")) {
        StageRecord s;
        s.name = sj.at("name").get<std::string>();
        s.inputs = sj.at("inputs").get<std::vector<std::string>>();
        for (const auto& aj : sj.at("outputs"))
            s.outputs.push_back(
                {aj.at("path").get<std::string>(), aj.at("hash").get<std::string>()});
        m.stages.push_back(std::move(s));
    }
    if (j.contains("summary")) m.summary = j.at("summary");
    return m;
}

void Manifest::save(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
    out << to_json().dump(1) << "\n";
}

Manifest Manifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
    return from_json(ojson::parse(in));
}

const StageRecord* Manifest::find(const std::string& stage_name) const {
    for (const StageRecord& s : stages)
        if (s.name == stage_name) return &s;
    return nullptr;
}

// --- stage implementations ---------------------------------------------

namespace {

void write_json_artifact(const ojson& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path.string());
    out << j.dump(1) << "\n";
}

ojson read_json_artifact(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing artifact: " + path.string());
    return ojson::parse(in);
}

std::map<std::string, std::string> provenance_for(const PipelineConfig& cfg,
                                                  const std::string& stage) {
    return {{"stage", stage}, {"config_hash", cfg.config_hash}};
}

struct StageContext {
    const PipelineConfig& cfg;
    fs::path out;
    bool verbose;

    fs::path path(const char* name) const { return out / name; }
    void log(const std::string& msg) const {
        if (verbose) std::cerr << "[" << msg << "]\n";
    }
};

StageRecord stage_simulate(const StageContext& ctx) {
    simgen::SimConfig week = ctx.cfg.sim;
    week.seed = ctx.cfg.sim_seed_week1;
    core::write_session_log(simgen::generate_traffic(week), ctx.path(artifacts::week1));
    week.seed = ctx.cfg.sim_seed_week2;
    core::write_session_log(simgen::generate_traffic(week), ctx.path(artifacts::week2));
    return {"simulate", {}, {}};
}

StageRecord stage_annotate(const StageContext& ctx) {
    auto sessions = core::read_session_log(ctx.path(artifacts::week1));
    sessions = feedback::annotate_sessions(std::move(sessions), ctx.cfg.feedback);
    core::write_session_log(sessions, ctx.path(artifacts::week1_annotated));
    return {"annotate", {artifacts::week1}, {}};
}

StageRecord stage_train_dim(const StageContext& ctx) {
    Dataset d_live = core::read_turn_log(ctx.path(artifacts::week1_annotated));
    dim::DimTrainResult result = dim::train_dim(d_live, ctx.cfg.dim, ctx.cfg.dim_seed);
    nn::save_model(result.model, ctx.path(artifacts::dim_model),
                   provenance_for(ctx.cfg, "train-dim"));
    core::write_turn_log(result.valid.records, ctx.path(artifacts::dim_valid));
    return {"train-dim", {artifacts::week1_annotated}, {}};
}

StageRecord stage_select_targets(const StageContext& ctx) {
    nn::Model model = nn::load_model(ctx.path(artifacts::dim_model));
    Dataset d_valid =
        core::read_turn_log(ctx.path(artifacts::dim_valid), core::Provenance::valid_split);
    dim::ThresSearchResult ts =
        dim::thres_search(model, d_valid, ctx.cfg.lambda, ctx.cfg.epsilon, ctx.cfg.dim.features);

    ojson tj;
    tj["tau"] = ts.tau;
    tj["achieved_accuracy"] = ts.achieved_accuracy;
    tj["iterations"] = ts.iterations;
    tj["lambda"] = ctx.cfg.lambda;
    tj["epsilon"] = ctx.cfg.epsilon;
    tj["provenance"] = provenance_for(ctx.cfg, "select-targets");
    write_json_artifact(tj, ctx.path(artifacts::thres));

    // The model filters the annotated defects down to target defects.
    Dataset d_live = core::read_turn_log(ctx.path(artifacts::week1_annotated));
    Dataset defects;
    defects.provenance = core::Provenance::live;
    for (const Turn& t : d_live.records)
        if (t.defect_label.has_value() && *t.defect_label) defects.records.push_back(t);
    Dataset targets = dim::select_targets(model, defects, ts.tau, ctx.cfg.dim.features);
    core::write_turn_log(targets.records, ctx.path(artifacts::targets));
    ctx.log("select-targets: " + std::to_string(targets.records.size()) + " of " +
            std::to_string(defects.records.size()) + " defects");
    return {"select-targets", {artifacts::dim_model, artifacts::dim_valid, artifacts::week1_annotated}, {}};
}

StageRecord stage_train_dcm(const StageContext& ctx) {
    auto sessions = core::read_session_log(ctx.path(artifacts::week1_annotated));
    auto pairs = dcm::extract_high_value_pairs(sessions);
    if (pairs.empty()) throw std::runtime_error("empty high-value set: no (defect, non-defective rephrase) pairs found");

    Dataset d_live = core::flatten(sessions);
    auto catalog = core::InterpretationCatalog::from_dataset(d_live);
    auto instances =
        dcm::generate_dcm_training_data(pairs, ctx.cfg.dcm_k, ctx.cfg.dcm_q, catalog, ctx.cfg.dcm_seed);

    {
        std::ofstream out(ctx.path(artifacts::dcm_instances));
        if (!out) throw std::runtime_error("cannot write instance dump");
        for (const dcm::DcmInstance& inst : instances) {
            ojson j;
            j["turn_id"] = inst.turn.turn_id;
            j["candidate"] = core::interpretation_to_json(inst.candidate);
            j["label"] = inst.label;
            out << j.dump() << "\n";
        }
    }

    nn::Model model = dcm::train_dcm(instances, ctx.cfg.dcm, ctx.cfg.dcm_seed);
    nn::save_model(model, ctx.path(artifacts::dcm_model), provenance_for(ctx.cfg, "train-dcm"));
    ctx.log("train-dcm: " + std::to_string(pairs.size()) + " pairs, " +
            std::to_string(instances.size()) + " instances");
    return {"train-dcm", {artifacts::week1_annotated}, {}};
}

StageRecord stage_curate(const StageContext& ctx) {
    Dataset d_sample = core::read_turn_log(ctx.path(artifacts::week1_annotated));
    Dataset d_target =
        core::read_turn_log(ctx.path(artifacts::targets), core::Provenance::target_defects);
    nn::Model dcm_model = nn::load_model(ctx.path(artifacts::dcm_model));
    auto records =
        rerank::build_curated_dataset(d_sample, d_target, dcm_model, ctx.cfg.dcm.turn_features);
    rerank::write_curated(records, ctx.path(artifacts::curated));
    return {"curate", {artifacts::week1_annotated, artifacts::targets, artifacts::dcm_model}, {}};
}

StageRecord stage_train_reranker(const StageContext& ctx) {
    auto records = rerank::read_curated(ctx.path(artifacts::curated));
    nn::Model model = rerank::train_reranker(records, ctx.cfg.rerank, ctx.cfg.rerank_seed);
    nn::save_model(model, ctx.path(artifacts::reranker_model),
                   provenance_for(ctx.cfg, "train-reranker"));
    return {"train-reranker", {artifacts::curated}, {}};
}

StageRecord stage_evaluate(const StageContext& ctx) {
    auto week2 = core::read_session_log(ctx.path(artifacts::week2));
    nn::Model model = nn::load_model(ctx.path(artifacts::reranker_model));
    rerank::EvalReport report =
        rerank::evaluate_shadow(week2, model, ctx.cfg.rerank.turn_features);

    ojson ej = rerank::eval_report_to_json(report);
    ej["provenance"] = provenance_for(ctx.cfg, "evaluate");
    write_json_artifact(ej, ctx.path(artifacts::eval_json));
    {
        std::ofstream out(ctx.path(artifacts::eval_text));
        out << rerank::format_eval_table(report);
    }

    Dataset d_live = core::read_turn_log(ctx.path(artifacts::week1_annotated));
    Dataset defects;
    for (const Turn& t : d_live.records)
        if (t.defect_label.has_value() && *t.defect_label) defects.records.push_back(t);
    Dataset targets =
        core::read_turn_log(ctx.path(artifacts::targets), core::Provenance::target_defects);
    ojson aj = rerank::attribution_to_json(rerank::error_attribution_report(defects, targets));
    aj["provenance"] = provenance_for(ctx.cfg, "evaluate");
    write_json_artifact(aj, ctx.path(artifacts::attribution));

    if (ctx.verbose) std::cerr << rerank::format_eval_table(report);
    return {"evaluate",
            {artifacts::week2, artifacts::reranker_model, artifacts::week1_annotated,
             artifacts::targets},
            {}};
}

const std::map<std::string, StageRecord (*)(const StageContext&)>& stage_table() {
    static const std::map<std::string, StageRecord (*)(const StageContext&)> table = {
        {"simulate", stage_simulate},
        {"annotate", stage_annotate},
        {"train-dim", stage_train_dim},
        {"select-targets", stage_select_targets},
        {"train-dcm", stage_train_dcm},
        {"curate", stage_curate},
        {"train-reranker", stage_train_reranker},
        {"evaluate", stage_evaluate},
    };
    return table;
}

// Declared outputs per stage, used for hashing and resume validation.
const std::map<std::string, std::vector<const char*>>& stage_outputs() {
    static const std::map<std::string, std::vector<const char*>> table = {
        {"simulate", {artifacts::week1, artifacts::week2}},
        {"annotate", {artifacts::week1_annotated}},
        {"train-dim", {artifacts::dim_model, artifacts::dim_valid}},
        {"select-targets", {artifacts::thres, artifacts::targets}},
        {"train-dcm", {artifacts::dcm_instances, artifacts::dcm_model}},
        {"curate", {artifacts::curated}},
        {"train-reranker", {artifacts::reranker_model}},
        {"evaluate", {artifacts::eval_json, artifacts::eval_text, artifacts::attribution}},
    };
    return table;
}

size_t stage_index(const std::string& name) {
    const auto& names = stage_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw ConfigError("unknown stage: " + name);
}

long count_lines(const fs::path& path) {
    std::ifstream in(path);
    long n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

ojson build_summary(const StageContext& ctx) {
    ojson sizes;
    sizes["week1_turns"] = count_lines(ctx.path(artifacts::week1));
    sizes["week2_turns"] = count_lines(ctx.path(artifacts::week2));
    Dataset d_live = core::read_turn_log(ctx.path(artifacts::week1_annotated));
    long defects = 0;
    for (const Turn& t : d_live.records) defects += (t.defect_label.value_or(false)) ? 1 : 0;
    sizes["week1_defects"] = defects;
    sizes["target_defects"] = count_lines(ctx.path(artifacts::targets));
    sizes["dcm_instances"] = count_lines(ctx.path(artifacts::dcm_instances));
    long corrected = 0, total = 0;
    for (const auto& rec : rerank::read_curated(ctx.path(artifacts::curated))) {
        ++total;
        corrected += rec.origin == rerank::Origin::corrected ? 1 : 0;
    }
    sizes["curated_records"] = total;
    sizes["curated_corrected"] = corrected;

    ojson summary;
    summary["dataset_sizes"] = std::move(sizes);
    summary["thres_search"] = read_json_artifact(ctx.path(artifacts::thres));
    summary["eval_report"] = read_json_artifact(ctx.path(artifacts::eval_json));
    return summary;
}

Manifest run_from(const PipelineConfig& cfg, const fs::path& out_dir, size_t first_stage,
                  Manifest manifest, const RunOptions& opts) {
    fs::create_directories(out_dir);
    StageContext ctx{cfg, out_dir, opts.verbose};
    manifest.config_hash = cfg.config_hash;
    manifest.stages.resize(std::min(manifest.stages.size(), first_stage));
    manifest.summary = ojson::object();

    const auto& names = stage_names();
    for (size_t i = first_stage; i < names.size(); ++i) {
        const std::string& name = names[i];
        ctx.log("stage " + name);
        StageRecord record;
        try {
            record = stage_table().at(name)(ctx);
        } catch (const std::exception& e) {
            manifest.save(out_dir / artifacts::manifest);  // checkpoint of completed stages
            throw StageError(name, e.what());
        }
        for (const char* artifact : stage_outputs().at(name)) {
            record.outputs.push_back({artifact, hash_file_hex(out_dir / artifact)});
        }
        manifest.stages.push_back(std::move(record));
        manifest.save(out_dir / artifacts::manifest);
    }
    manifest.summary = build_summary(ctx);
    manifest.save(out_dir / artifacts::manifest);
    return manifest;
}

}  // namespace

Manifest run_pipeline(const fs::path& config_path, const fs::path& out_dir,
                      const RunOptions& opts) {
    PipelineConfig cfg = load_pipeline_config(config_path, opts.seed_override);
    return run_from(cfg, out_dir, 0, Manifest{}, opts);
}

Manifest stage_resume(const fs::path& config_path, const fs::path& out_dir,
                      const std::string& from_stage, const RunOptions& opts) {
    PipelineConfig cfg = load_pipeline_config(config_path, opts.seed_override);
    size_t first = stage_index(from_stage);

    fs::path manifest_path = out_dir / artifacts::manifest;
    if (!fs::exists(manifest_path))
        throw ResumeError("no manifest to resume from: " + manifest_path.string());
    Manifest manifest = Manifest::load(manifest_path);

    std::vector<std::string> diffs;
    if (manifest.config_hash != cfg.config_hash) {
        diffs.push_back("config hash changed: manifest " + manifest.config_hash + " vs current " +
                        cfg.config_hash);
    }
    const auto& names = stage_names();
    for (size_t i = 0; i < first; ++i) {
        const StageRecord* record = manifest.find(names[i]);
        if (!record) {
            diffs.push_back("stage " + names[i] + " has no completed record");
            continue;
        }
        for (const ArtifactRef& a : record->outputs) {
            fs::path p = out_dir / a.path;
            if (!fs::exists(p)) {
                diffs.push_back("missing artifact: " + a.path);
            } else if (hash_file_hex(p) != a.hash) {
                diffs.push_back("artifact changed since last run: " + a.path);
            }
        }
    }
    if (!diffs.empty()) {
        std::string msg = "refusing to resume at " + from_stage + ":";
        for (const std::string& d : diffs) msg += "\n  " + d;
        throw ResumeError(msg);
    }
    return run_from(cfg, out_dir, first, std::move(manifest), opts);
}

void run_single_stage(const std::string& stage_name, const PipelineConfig& cfg,
                      const fs::path& out_dir, bool verbose) {
    fs::create_directories(out_dir);
    StageContext ctx{cfg, out_dir, verbose};
    auto it = stage_table().find(stage_name);
    if (it == stage_table().end()) throw ConfigError("unknown stage: " + stage_name);
    try {
        it->second(ctx);
    } catch (const std::exception& e) {
        throw StageError(stage_name, e.what());
    }
}

}  // namespace nlufb::pipeline
