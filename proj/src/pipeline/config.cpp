#include "nlufb/pipeline/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "nlufb/core/rng.hpp"

namespace nlufb::pipeline {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(trim(item));
    return parts;
}

}  // namespace

const std::string* IniSection::find(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return &v;
    return nullptr;
}

IniDoc IniDoc::parse_string(const std::string& text, const std::string& origin) {
    IniDoc doc;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    IniSection* current = nullptr;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section");
            doc.sections.push_back({trim(t.substr(1, t.size() - 2)), {}});
            current = &doc.sections.back();
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        if (!current)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside any section");
        current->entries.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return doc;
}

IniDoc IniDoc::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path.string());
}

const IniSection* IniDoc::find(const std::string& name) const {
    for (const IniSection& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

std::vector<const IniSection*> IniDoc::find_all(const std::string& name) const {
    std::vector<const IniSection*> out;
    for (const IniSection& s : sections)
        if (s.name == name) out.push_back(&s);
    return out;
}

namespace {

// Typed getters with config-error reporting.

double get_double(const IniSection& s, const std::string& key, double fallback) {
    const std::string* v = s.find(key);
    if (!v) return fallback;
    try {
        return std::stod(*v);
    } catch (...) {
        throw ConfigError("bad number for " + s.name + "." + key + ": " + *v);
    }
}

long get_long(const IniSection& s, const std::string& key, long fallback) {
    const std::string* v = s.find(key);
    if (!v) return fallback;
    try {
        return std::stol(*v);
    } catch (...) {
        throw ConfigError("bad integer for " + s.name + "." + key + ": " + *v);
    }
}

std::string get_string(const IniSection& s, const std::string& key, const std::string& fallback) {
    const std::string* v = s.find(key);
    return v ? *v : fallback;
}

std::string require(const IniSection& s, const std::string& key) {
    const std::string* v = s.find(key);
    if (!v) throw ConfigError("missing key " + s.name + "." + key);
    return *v;
}

std::pair<int, int> parse_ratio(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos) throw ConfigError("ratio must look like 9:1, got " + text);
    try {
        return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
    } catch (...) {
        throw ConfigError("bad ratio: " + text);
    }
}

core::Interpretation parse_interp_or_throw(const std::string& literal, const std::string& where) {
    try {
        return core::parse_interpretation(literal);
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

std::vector<core::Slot> parse_slots(const std::string& text, const std::string& where) {
    std::vector<core::Slot> slots;
    if (trim(text).empty()) return slots;
    for (const std::string& item : split(text, ';')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": slot needs type=value: " + item);
        slots.push_back({trim(item.substr(0, eq)), trim(item.substr(eq + 1))});
    }
    return slots;
}

void apply_sim(const IniDoc& doc, simgen::SimConfig& sim) {
    if (const IniSection* s = doc.find("sim")) {
        sim.n_sessions = static_cast<int>(get_long(*s, "n_sessions", sim.n_sessions));
        sim.k_best = static_cast<int>(get_long(*s, "k_best", sim.k_best));
        sim.min_goals_per_session =
            static_cast<int>(get_long(*s, "min_goals_per_session", sim.min_goals_per_session));
        sim.max_goals_per_session =
            static_cast<int>(get_long(*s, "max_goals_per_session", sim.max_goals_per_session));
        sim.behavior.barge_in_prob_on_error =
            get_double(*s, "barge_in_prob_on_error", sim.behavior.barge_in_prob_on_error);
        sim.behavior.rephrase_prob_after_defect =
            get_double(*s, "rephrase_prob_after_defect", sim.behavior.rephrase_prob_after_defect);
        sim.behavior.random_defect_noise_prob =
            get_double(*s, "random_defect_noise_prob", sim.behavior.random_defect_noise_prob);
        sim.behavior.confusable_in_kbest_prob =
            get_double(*s, "confusable_in_kbest_prob", sim.behavior.confusable_in_kbest_prob);
    }

    auto entries = doc.find_all("sim.intent");
    if (!entries.empty()) {
        sim.catalog.clear();
        for (const IniSection* s : entries) {
            simgen::CatalogEntry e;
            e.id = require(*s, "id");
            e.domain = require(*s, "domain");
            e.intent = require(*s, "intent");
            e.slots = parse_slots(get_string(*s, "slots", ""), "sim.intent " + e.id);
            for (const std::string& tpl : split(require(*s, "templates"), '|'))
                e.templates.push_back(tpl);
            sim.catalog.push_back(std::move(e));
        }
    }
    auto rules = doc.find_all("sim.confusion");
    if (!rules.empty() || !entries.empty()) {
        sim.rules.clear();
        for (const IniSection* s : rules) {
            simgen::ConfusionRule r;
            r.trigger = require(*s, "trigger");
            r.wrong = parse_interp_or_throw(require(*s, "wrong"), "sim.confusion wrong");
            r.correct = parse_interp_or_throw(require(*s, "correct"), "sim.confusion correct");
            r.rate = get_double(*s, "rate", 0.0);
            sim.rules.push_back(std::move(r));
        }
    }
}

}  // namespace

std::string hash_file_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(core::fnv1a64(buf.str())));
    return hex;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    std::optional<uint64_t> seed_override) {
    IniDoc doc = IniDoc::parse_file(path);
    PipelineConfig cfg;
    cfg.sim = simgen::default_sim_config();
    apply_sim(doc, cfg.sim);

    if (const IniSection* s = doc.find("sim")) {
        cfg.sim_seed_week1 = static_cast<uint64_t>(get_long(*s, "seed_week1", 11));
        cfg.sim_seed_week2 = static_cast<uint64_t>(get_long(*s, "seed_week2", 12));
    }

    if (const IniSection* s = doc.find("feedback")) {
        cfg.feedback.rephrase_similarity_threshold = get_double(
            *s, "rephrase_similarity_threshold", cfg.feedback.rephrase_similarity_threshold);
        cfg.feedback.rephrase_window_turns = static_cast<int>(
            get_long(*s, "rephrase_window_turns", cfg.feedback.rephrase_window_turns));
        cfg.feedback.rephrase_window_ms =
            get_long(*s, "rephrase_window_ms", cfg.feedback.rephrase_window_ms);
    }

    if (const IniSection* s = doc.find("dim")) {
        cfg.dim.epochs = static_cast<int>(get_long(*s, "epochs", cfg.dim.epochs));
        cfg.dim.batch_size = static_cast<int>(get_long(*s, "batch_size", cfg.dim.batch_size));
        cfg.dim.learning_rate = get_double(*s, "learning_rate", cfg.dim.learning_rate);
        cfg.dim.hidden_size = static_cast<int>(get_long(*s, "hidden_size", cfg.dim.hidden_size));
        cfg.dim.seq_dim = static_cast<int>(get_long(*s, "seq_dim", cfg.dim.seq_dim));
        cfg.dim.cat_dim = static_cast<int>(get_long(*s, "cat_dim", cfg.dim.cat_dim));
        cfg.dim.split_ratio = parse_ratio(get_string(*s, "split_ratio", "9:1"));
        cfg.dim_seed = static_cast<uint64_t>(get_long(*s, "seed", 101));
        cfg.lambda = get_double(*s, "lambda", cfg.lambda);
        cfg.epsilon = get_double(*s, "epsilon", cfg.epsilon);
    }
    if (cfg.lambda <= 0.0 || cfg.lambda >= 1.0 || cfg.epsilon <= 0.0 || cfg.epsilon >= 1.0)
        throw ConfigError("dim.lambda and dim.epsilon must be in (0,1)");

    if (const IniSection* s = doc.find("dcm")) {
        cfg.dcm_k = static_cast<int>(get_long(*s, "k", cfg.dcm_k));
        cfg.dcm_q = static_cast<int>(get_long(*s, "q", cfg.dcm_q));
        cfg.dcm.epochs = static_cast<int>(get_long(*s, "epochs", cfg.dcm.epochs));
        cfg.dcm.batch_size = static_cast<int>(get_long(*s, "batch_size", cfg.dcm.batch_size));
        cfg.dcm.learning_rate = get_double(*s, "learning_rate", cfg.dcm.learning_rate);
        cfg.dcm.hidden_size = static_cast<int>(get_long(*s, "hidden_size", cfg.dcm.hidden_size));
        cfg.dcm.seq_dim = static_cast<int>(get_long(*s, "seq_dim", cfg.dcm.seq_dim));
        cfg.dcm.cat_dim = static_cast<int>(get_long(*s, "cat_dim", cfg.dcm.cat_dim));
        cfg.dcm_seed = static_cast<uint64_t>(get_long(*s, "seed", 202));
    }

    if (const IniSection* s = doc.find("rerank")) {
        cfg.rerank.epochs = static_cast<int>(get_long(*s, "epochs", cfg.rerank.epochs));
        cfg.rerank.batch_size = static_cast<int>(get_long(*s, "batch_size", cfg.rerank.batch_size));
        cfg.rerank.learning_rate = get_double(*s, "learning_rate", cfg.rerank.learning_rate);
        cfg.rerank.hidden_size =
            static_cast<int>(get_long(*s, "hidden_size", cfg.rerank.hidden_size));
        cfg.rerank.seq_dim = static_cast<int>(get_long(*s, "seq_dim", cfg.rerank.seq_dim));
        cfg.rerank.cat_dim = static_cast<int>(get_long(*s, "cat_dim", cfg.rerank.cat_dim));
        cfg.rerank_seed = static_cast<uint64_t>(get_long(*s, "seed", 303));
    }

    if (seed_override.has_value()) {
        uint64_t s = *seed_override;
        cfg.sim_seed_week1 = s;
        cfg.sim_seed_week2 = s + 1;
        cfg.dim_seed = s + 100;
        cfg.dcm_seed = s + 200;
        cfg.rerank_seed = s + 300;
    }

    try {
        simgen::validate(cfg.sim);
        feedback::validate(cfg.feedback);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    uint64_t h = core::fnv1a64([&] {
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
    }());
    if (seed_override.has_value()) h = core::mix_seed(h, *seed_override);
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    cfg.config_hash = hex;
    return cfg;
}

}  // namespace nlufb::pipeline
