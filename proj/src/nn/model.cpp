#include "nlufb/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "nlufb/core/rng.hpp"
#include "nlufb/nn/internal.hpp"

namespace nlufb::nn {

using core::Rng;
using ojson = nlohmann::ordered_json;

std::string to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::sequential: return "sequential";
        case FeatureKind::categorical: return "categorical";
        case FeatureKind::numerical: return "numerical";
    }
    return "numerical";
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "sequential") return FeatureKind::sequential;
    if (s == "categorical") return FeatureKind::categorical;
    if (s == "numerical") return FeatureKind::numerical;
    throw std::invalid_argument("unknown feature kind: " + s);
}

int FeatureSpec::agg_dim(int hidden_size) const {
    switch (kind) {
        case FeatureKind::sequential: return 2 * hidden_size;
        case FeatureKind::categorical: return dim;
        case FeatureKind::numerical: return dim;
    }
    return 0;
}

int ModelArch::concat_dim() const {
    int d = 0;
    for (const FeatureSpec& f : features) d += f.agg_dim(hidden_size);
    return d;
}

const FeatureSpec& ModelArch::feature(const std::string& name) const {
    for (const FeatureSpec& f : features)
        if (f.name == name) return f;
    throw std::invalid_argument("unknown feature: " + name);
}

void ModelArch::sort_features() {
    std::sort(features.begin(), features.end(),
              [](const FeatureSpec& a, const FeatureSpec& b) { return a.name < b.name; });
}

void RawFeatures::merge(const RawFeatures& other) {
    for (const auto& [k, v] : other.sequential)
        if (!sequential.emplace(k, v).second) throw std::invalid_argument("feature collision: " + k);
    for (const auto& [k, v] : other.categorical)
        if (!categorical.emplace(k, v).second)
            throw std::invalid_argument("feature collision: " + k);
    for (const auto& [k, v] : other.numerical)
        if (!numerical.emplace(k, v).second) throw std::invalid_argument("feature collision: " + k);
}

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    t.shape = std::move(shape);
    t.v.assign(n, 0.0);
    return t;
}

int Vocab::lookup(const std::string& token) const {
    auto begin = tokens.begin() + (tokens.empty() ? 0 : 1);  // skip the OOV slot
    auto it = std::lower_bound(begin, tokens.end(), token);
    if (it != tokens.end() && *it == token)
        return static_cast<int>(it - tokens.begin());
    return kOovId;
}

// --- parameter naming -------------------------------------------------

namespace names {
std::string emb(const std::string& f) { return "emb." + f; }
std::string lstm(const std::string& f, const char* dir, const char* part) {
    return "agg." + f + "." + dir + "." + part;
}
}  // namespace names

Model init_model(const ModelArch& arch_in, uint64_t seed) {
    Model m;
    m.arch = arch_in;
    m.arch.sort_features();
    Rng rng(seed);

    auto uniform_tensor = [&](std::vector<int> shape, double scale) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& x : t.v) x = rng.uniform(-scale, scale);
        return t;
    };

    const int hidden = m.arch.hidden_size;
    for (const FeatureSpec& f : m.arch.features) {
        if (f.kind == FeatureKind::numerical) continue;
        if (f.vocab_size <= 0 || f.dim <= 0)
            throw std::invalid_argument("feature needs vocab_size and dim: " + f.name);
        m.params[names::emb(f.name)] = uniform_tensor({f.vocab_size, f.dim}, 0.1);
        if (f.kind == FeatureKind::sequential) {
            for (const char* dir : {"fw", "bw"}) {
                double sx = 1.0 / std::sqrt(static_cast<double>(f.dim));
                double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
                m.params[names::lstm(f.name, dir, "w_x")] = uniform_tensor({4 * hidden, f.dim}, sx);
                m.params[names::lstm(f.name, dir, "w_h")] = uniform_tensor({4 * hidden, hidden}, sh);
                Tensor b = Tensor::zeros({4 * hidden});
                for (int i = hidden; i < 2 * hidden; ++i) b.v[static_cast<size_t>(i)] = 1.0;  // forget gate
                m.params[names::lstm(f.name, dir, "b")] = std::move(b);
            }
        }
    }

    const int d = m.arch.concat_dim();
    if (d <= 0) throw std::invalid_argument("model has no features");
    double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (const char* layer : {"cls.hw1", "cls.hw2"}) {
        m.params[std::string(layer) + ".w_t"] = uniform_tensor({d, d}, s);
        m.params[std::string(layer) + ".b_t"] = Tensor::zeros({d});
        m.params[std::string(layer) + ".w_g"] = uniform_tensor({d, d}, s);
        Tensor bg = Tensor::zeros({d});
        for (double& x : bg.v) x = -1.0;  // start close to the carry path
        m.params[std::string(layer) + ".b_g"] = std::move(bg);
    }
    m.params["cls.out.w"] = uniform_tensor({d}, s);
    m.params["cls.out.b"] = Tensor::zeros({1});
    return m;
}

// --- forward ----------------------------------------------------------

namespace detail {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LstmCellRef lstm_cell(const Model& m, const std::string& feature, const char* dir) {
    return {&m.params.at(names::lstm(feature, dir, "w_x")),
            &m.params.at(names::lstm(feature, dir, "w_h")),
            &m.params.at(names::lstm(feature, dir, "b"))};
}

// One direction over `inputs` (row t = embedding of token t). Returns the
// final hidden state; records per-step activations when trace != nullptr.
std::vector<double> lstm_run(const LstmCellRef& cell, const Tensor& inputs, int hidden,
                             LstmDirTrace* trace) {
    const int steps = inputs.rows();
    const int in_dim = inputs.cols();
    std::vector<double> h(static_cast<size_t>(hidden), 0.0);
    std::vector<double> c(static_cast<size_t>(hidden), 0.0);
    if (trace) trace->gates.clear();
    std::vector<double> z(static_cast<size_t>(4 * hidden));
    for (int t = 0; t < steps; ++t) {
        for (int r = 0; r < 4 * hidden; ++r) {
            double acc = cell.b->v[static_cast<size_t>(r)];
            const double* wx = &cell.w_x->v[static_cast<size_t>(r) * in_dim];
            for (int j = 0; j < in_dim; ++j) acc += wx[j] * inputs.at(t, j);
            const double* wh = &cell.w_h->v[static_cast<size_t>(r) * hidden];
            for (int j = 0; j < hidden; ++j) acc += wh[j] * h[static_cast<size_t>(j)];
            z[static_cast<size_t>(r)] = acc;
        }
        LstmStep step;
        step.i.resize(static_cast<size_t>(hidden));
        step.f.resize(static_cast<size_t>(hidden));
        step.g.resize(static_cast<size_t>(hidden));
        step.o.resize(static_cast<size_t>(hidden));
        std::vector<double> c_new(static_cast<size_t>(hidden));
        for (int j = 0; j < hidden; ++j) {
            double i_g = sigmoid(z[static_cast<size_t>(j)]);
            double f_g = sigmoid(z[static_cast<size_t>(hidden + j)]);
            double g_g = std::tanh(z[static_cast<size_t>(2 * hidden + j)]);
            double o_g = sigmoid(z[static_cast<size_t>(3 * hidden + j)]);
            step.i[static_cast<size_t>(j)] = i_g;
            step.f[static_cast<size_t>(j)] = f_g;
            step.g[static_cast<size_t>(j)] = g_g;
            step.o[static_cast<size_t>(j)] = o_g;
            c_new[static_cast<size_t>(j)] = f_g * c[static_cast<size_t>(j)] + i_g * g_g;
        }
        if (trace) {
            step.c_prev = c;
            step.h_prev = h;
        }
        c = std::move(c_new);
        for (int j = 0; j < hidden; ++j)
            h[static_cast<size_t>(j)] =
                step.o[static_cast<size_t>(j)] * std::tanh(c[static_cast<size_t>(j)]);
        if (trace) {
            step.c = c;
            trace->gates.push_back(std::move(step));
        }
    }
    return h;
}

std::vector<double> highway_forward(const Model& m, const std::string& layer,
                                    const std::vector<double>& x, HighwayTrace* trace) {
    const Tensor& w_t = m.params.at(layer + ".w_t");
    const Tensor& b_t = m.params.at(layer + ".b_t");
    const Tensor& w_g = m.params.at(layer + ".w_g");
    const Tensor& b_g = m.params.at(layer + ".b_g");
    const int d = static_cast<int>(x.size());
    if (w_t.rows() != d)
        throw std::invalid_argument("highway dimension mismatch: expected " +
                                    std::to_string(w_t.rows()) + ", got " + std::to_string(d));
    std::vector<double> t(static_cast<size_t>(d)), g(static_cast<size_t>(d)),
        y(static_cast<size_t>(d));
    for (int r = 0; r < d; ++r) {
        double at = b_t.v[static_cast<size_t>(r)];
        double ag = b_g.v[static_cast<size_t>(r)];
        const double* wt = &w_t.v[static_cast<size_t>(r) * d];
        const double* wg = &w_g.v[static_cast<size_t>(r) * d];
        for (int j = 0; j < d; ++j) {
            at += wt[j] * x[static_cast<size_t>(j)];
            ag += wg[j] * x[static_cast<size_t>(j)];
        }
        t[static_cast<size_t>(r)] = std::tanh(at);
        g[static_cast<size_t>(r)] = sigmoid(ag);
        y[static_cast<size_t>(r)] = g[static_cast<size_t>(r)] * t[static_cast<size_t>(r)] +
                                    (1.0 - g[static_cast<size_t>(r)]) * x[static_cast<size_t>(r)];
    }
    if (trace) {
        trace->x = x;
        trace->t = t;
        trace->g = g;
    }
    return y;
}

double forward(const Model& m, const FeatureBundle& bundle, ForwardTrace* trace) {
    const int hidden = m.arch.hidden_size;
    std::vector<double> concat;
    concat.reserve(static_cast<size_t>(m.arch.concat_dim()));

    for (const FeatureSpec& f : m.arch.features) {
        switch (f.kind) {
            case FeatureKind::sequential: {
                auto it = bundle.sequential.find(f.name);
                if (it == bundle.sequential.end())
                    throw std::invalid_argument("missing sequential feature: " + f.name);
                Tensor emb = embed(m, f.name, it->second);
                SeqTrace* st = nullptr;
                if (trace) st = &trace->seq[f.name];
                if (st) st->ids = it->second;
                if (emb.rows() == 0) {
                    concat.insert(concat.end(), static_cast<size_t>(2 * hidden), 0.0);
                    break;
                }
                std::vector<double> h_fw =
                    lstm_run(lstm_cell(m, f.name, "fw"), emb, hidden, st ? &st->fw : nullptr);
                Tensor rev = Tensor::zeros({emb.rows(), emb.cols()});
                for (int r = 0; r < emb.rows(); ++r)
                    for (int j = 0; j < emb.cols(); ++j) rev.at(r, j) = emb.at(emb.rows() - 1 - r, j);
                std::vector<double> h_bw =
                    lstm_run(lstm_cell(m, f.name, "bw"), rev, hidden, st ? &st->bw : nullptr);
                if (st) st->emb = emb;
                concat.insert(concat.end(), h_fw.begin(), h_fw.end());
                concat.insert(concat.end(), h_bw.begin(), h_bw.end());
                break;
            }
            case FeatureKind::categorical: {
                auto it = bundle.categorical.find(f.name);
                if (it == bundle.categorical.end())
                    throw std::invalid_argument("missing categorical feature: " + f.name);
                int id = it->second;
                Tensor emb = embed(m, f.name, std::span<const int>(&id, 1));
                if (trace) trace->cat_ids[f.name] = id;
                for (int j = 0; j < emb.cols(); ++j) concat.push_back(emb.at(0, j));
                break;
            }
            case FeatureKind::numerical: {
                auto it = bundle.numerical.find(f.name);
                if (it == bundle.numerical.end())
                    throw std::invalid_argument("missing numerical feature: " + f.name);
                Tensor row = embed_numerical(m, f.name, it->second);
                for (int j = 0; j < row.cols(); ++j) concat.push_back(row.at(0, j));
                break;
            }
        }
    }

    if (static_cast<int>(concat.size()) != m.arch.concat_dim())
        throw std::logic_error("concat width mismatch");

    HighwayTrace* h1 = trace ? &trace->hw1 : nullptr;
    HighwayTrace* h2 = trace ? &trace->hw2 : nullptr;
    std::vector<double> y1 = highway_forward(m, "cls.hw1", concat, h1);
    std::vector<double> y2 = highway_forward(m, "cls.hw2", y1, h2);

    const Tensor& w = m.params.at("cls.out.w");
    double score = m.params.at("cls.out.b").v[0];
    for (size_t j = 0; j < y2.size(); ++j) score += w.v[j] * y2[j];
    double p = sigmoid(score);
    if (trace) {
        trace->concat = std::move(concat);
        trace->y2 = std::move(y2);
        trace->prob = p;
    }
    return p;
}

}  // namespace detail

Tensor embed(const Model& model, const std::string& feature, std::span<const int> token_ids) {
    const FeatureSpec& spec = model.arch.feature(feature);
    if (spec.kind == FeatureKind::numerical)
        throw std::invalid_argument("embed() is for sequential/categorical features: " + feature);
    const Tensor& table = model.params.at(names::emb(feature));
    Tensor out = Tensor::zeros({static_cast<int>(token_ids.size()), spec.dim});
    for (size_t r = 0; r < token_ids.size(); ++r) {
        int id = token_ids[r];
        if (id < 0 || id >= spec.vocab_size)
            throw std::out_of_range("token id " + std::to_string(id) +
                                    " outside vocabulary of feature " + feature);
        for (int j = 0; j < spec.dim; ++j) out.at(static_cast<int>(r), j) = table.at(id, j);
    }
    return out;
}

Tensor embed_numerical(const Model& model, const std::string& feature,
                       std::span<const double> values) {
    const FeatureSpec& spec = model.arch.feature(feature);
    if (spec.kind != FeatureKind::numerical)
        throw std::invalid_argument("feature is not numerical: " + feature);
    if (static_cast<int>(values.size()) != spec.dim)
        throw std::invalid_argument("numerical feature " + feature + " expects width " +
                                    std::to_string(spec.dim));
    Tensor out = Tensor::zeros({1, spec.dim});
    for (int j = 0; j < spec.dim; ++j) {
        if (!std::isfinite(values[static_cast<size_t>(j)]))
            throw std::invalid_argument("non-finite value in numerical feature " + feature);
        out.at(0, j) = values[static_cast<size_t>(j)];
    }
    return out;
}

std::vector<double> aggregate(const Model& model, const std::string& feature,
                              const Tensor& embeddings) {
    const FeatureSpec& spec = model.arch.feature(feature);
    const int hidden = model.arch.hidden_size;
    switch (spec.kind) {
        case FeatureKind::sequential: {
            if (embeddings.rows() == 0)
                return std::vector<double>(static_cast<size_t>(2 * hidden), 0.0);
            std::vector<double> h_fw =
                detail::lstm_run(detail::lstm_cell(model, feature, "fw"), embeddings, hidden, nullptr);
            Tensor rev = Tensor::zeros({embeddings.rows(), embeddings.cols()});
            for (int r = 0; r < embeddings.rows(); ++r)
                for (int j = 0; j < embeddings.cols(); ++j)
                    rev.at(r, j) = embeddings.at(embeddings.rows() - 1 - r, j);
            std::vector<double> h_bw =
                detail::lstm_run(detail::lstm_cell(model, feature, "bw"), rev, hidden, nullptr);
            h_fw.insert(h_fw.end(), h_bw.begin(), h_bw.end());
            return h_fw;
        }
        case FeatureKind::categorical:
        case FeatureKind::numerical: {
            if (embeddings.rows() != 1)
                throw std::invalid_argument("expected a single row for feature " + feature);
            std::vector<double> out(static_cast<size_t>(embeddings.cols()));
            for (int j = 0; j < embeddings.cols(); ++j) out[static_cast<size_t>(j)] = embeddings.at(0, j);
            return out;
        }
    }
    return {};
}

double classify(const Model& model, const std::map<std::string, std::vector<double>>& agg) {
    std::vector<double> concat;
    concat.reserve(static_cast<size_t>(model.arch.concat_dim()));
    for (const FeatureSpec& f : model.arch.features) {
        auto it = agg.find(f.name);
        if (it == agg.end()) throw std::invalid_argument("missing aggregation vector: " + f.name);
        if (static_cast<int>(it->second.size()) != f.agg_dim(model.arch.hidden_size))
            throw std::invalid_argument("aggregation width mismatch for feature " + f.name);
        concat.insert(concat.end(), it->second.begin(), it->second.end());
    }
    std::vector<double> y1 = detail::highway_forward(model, "cls.hw1", concat, nullptr);
    std::vector<double> y2 = detail::highway_forward(model, "cls.hw2", y1, nullptr);
    const Tensor& w = model.params.at("cls.out.w");
    double score = model.params.at("cls.out.b").v[0];
    for (size_t j = 0; j < y2.size(); ++j) score += w.v[j] * y2[j];
    return detail::sigmoid(score);
}

double Model::predict(const FeatureBundle& bundle) const {
    return detail::forward(*this, bundle, nullptr);
}

FeatureBundle Model::encode(const RawFeatures& raw) const {
    FeatureBundle bundle;
    for (const FeatureSpec& f : arch.features) {
        switch (f.kind) {
            case FeatureKind::sequential: {
                auto it = raw.sequential.find(f.name);
                if (it == raw.sequential.end())
                    throw std::invalid_argument("missing sequential feature: " + f.name);
                const Vocab& vocab = vocabs.at(f.name);
                std::vector<int> ids;
                ids.reserve(it->second.size());
                for (const std::string& tok : it->second) ids.push_back(vocab.lookup(tok));
                bundle.sequential[f.name] = std::move(ids);
                break;
            }
            case FeatureKind::categorical: {
                auto it = raw.categorical.find(f.name);
                if (it == raw.categorical.end())
                    throw std::invalid_argument("missing categorical feature: " + f.name);
                bundle.categorical[f.name] = vocabs.at(f.name).lookup(it->second);
                break;
            }
            case FeatureKind::numerical: {
                auto it = raw.numerical.find(f.name);
                if (it == raw.numerical.end())
                    throw std::invalid_argument("missing numerical feature: " + f.name);
                bundle.numerical[f.name] = it->second;
                break;
            }
        }
    }
    return bundle;
}

// --- arch builder -----------------------------------------------------

void ArchBuilder::observe(const RawFeatures& raw) {
    for (const auto& [name, tokens] : raw.sequential) {
        auto& set = seq_tokens_[name];
        set.insert(tokens.begin(), tokens.end());
    }
    for (const auto& [name, token] : raw.categorical) cat_tokens_[name].insert(token);
    for (const auto& [name, values] : raw.numerical) {
        auto [it, inserted] = num_widths_.emplace(name, static_cast<int>(values.size()));
        if (!inserted && it->second != static_cast<int>(values.size()))
            throw std::invalid_argument("inconsistent width for numerical feature " + name);
    }
}

ModelArch ArchBuilder::arch() const {
    ModelArch a;
    a.hidden_size = hidden_;
    for (const auto& [name, tokens] : seq_tokens_)
        a.features.push_back({name, FeatureKind::sequential,
                              static_cast<int>(tokens.size()) + 1, seq_dim_});
    for (const auto& [name, tokens] : cat_tokens_)
        a.features.push_back({name, FeatureKind::categorical,
                              static_cast<int>(tokens.size()) + 1, cat_dim_});
    for (const auto& [name, width] : num_widths_)
        a.features.push_back({name, FeatureKind::numerical, 0, width});
    a.sort_features();
    return a;
}

std::map<std::string, Vocab> ArchBuilder::vocabs() const {
    std::map<std::string, Vocab> out;
    auto build = [&](const std::map<std::string, std::set<std::string>>& sets) {
        for (const auto& [name, tokens] : sets) {
            Vocab v;
            v.tokens.push_back(kOovToken);
            v.tokens.insert(v.tokens.end(), tokens.begin(), tokens.end());
            out[name] = std::move(v);
        }
    };
    build(seq_tokens_);
    build(cat_tokens_);
    return out;
}

// --- persistence ------------------------------------------------------

namespace {
constexpr const char* kModelFormat = "nlufb-model";
constexpr int kModelVersion = 1;
}  // namespace

void save_model(const Model& model, const std::filesystem::path& path,
                const std::map<std::string, std::string>& provenance) {
    ojson j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    ojson arch;
    arch["hidden_size"] = model.arch.hidden_size;
    ojson feats = ojson::array();
    for (const FeatureSpec& f : model.arch.features) {
        feats.push_back({{"name", f.name},
                         {"kind", to_string(f.kind)},
                         {"vocab_size", f.vocab_size},
                         {"dim", f.dim}});
    }
    arch["features"] = std::move(feats);
    j["arch"] = std::move(arch);
    if (!provenance.empty()) j["provenance"] = provenance;
    ojson vocabs;
    for (const auto& [name, vocab] : model.vocabs) vocabs[name] = vocab.tokens;
    j["vocabs"] = std::move(vocabs);
    j["train_info"] = ojson{{"epoch_losses", model.epoch_losses}};
    ojson params;
    for (const auto& [name, tensor] : model.params) {
        params[name] = ojson{{"shape", tensor.shape}, {"data", tensor.v}};
    }
    j["params"] = std::move(params);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path.string());
    out << j.dump(1) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path.string());
    ojson j = ojson::parse(in);
    if (j.at("format").get<std::string>() != kModelFormat)
        throw std::runtime_error("not a model file: " + path.string());
    if (j.at("version").get<int>() != kModelVersion)
        throw std::runtime_error("unsupported model version in " + path.string());

    Model m;
    const auto& arch = j.at("arch");
    m.arch.hidden_size = arch.at("hidden_size").get<int>();
    for (const auto& fj : arch.at("features")) {
        FeatureSpec f;
        f.name = fj.at("name").get<std::string>();
        f.kind = feature_kind_from_string(fj.at("kind").get<std::string>());
        f.vocab_size = fj.at("vocab_size").get<int>();
        f.dim = fj.at("dim").get<int>();
        m.arch.features.push_back(std::move(f));
    }
    m.arch.sort_features();
    for (const auto& [name, tokens] : j.at("vocabs").items()) {
        Vocab v;
        v.tokens = tokens.get<std::vector<std::string>>();
        if (!v.tokens.empty() &&
            !std::is_sorted(v.tokens.begin() + 1, v.tokens.end()))
            throw std::runtime_error("vocabulary for " + name + " is not sorted in " +
                                     path.string());
        m.vocabs[name] = std::move(v);
    }
    if (j.contains("train_info"))
        m.epoch_losses = j.at("train_info").at("epoch_losses").get<std::vector<double>>();
    for (const auto& [name, tj] : j.at("params").items()) {
        Tensor t;
        t.shape = tj.at("shape").get<std::vector<int>>();
        t.v = tj.at("data").get<std::vector<double>>();
        size_t expected = 1;
        for (int d : t.shape) expected *= static_cast<size_t>(d);
        if (t.v.size() != expected)
            throw std::runtime_error("tensor size mismatch for " + name + " in " + path.string());
        m.params[name] = std::move(t);
    }
    return m;
}

}  // namespace nlufb::nn
