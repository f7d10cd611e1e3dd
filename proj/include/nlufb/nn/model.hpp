#pragma once
// Minimal neural kernel: per-feature embeddings, bidirectional LSTM
// aggregation for sequences, and a two-layer highway classifier head with
// a sigmoid output. Everything runs in double precision, single threaded,
// with exact analytic gradients (verified against finite differences).

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace nlufb::nn {

enum class FeatureKind { sequential, categorical, numerical };

std::string to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::numerical;
    int vocab_size = 0;  // sequential/categorical only
    int dim = 0;         // embedding dim, or numeric vector width

    // Width this feature contributes to the concatenated summary vector.
    int agg_dim(int hidden_size) const;
};

struct ModelArch {
    std::vector<FeatureSpec> features;  // sorted by name
    int hidden_size = 32;

    int concat_dim() const;
    const FeatureSpec& feature(const std::string& name) const;
    void sort_features();
};

// Feature values for one sample, already encoded against the model vocabs.
struct FeatureBundle {
    std::map<std::string, std::vector<int>> sequential;
    std::map<std::string, int> categorical;
    std::map<std::string, std::vector<double>> numerical;
};

// Feature values before vocabulary encoding.
struct RawFeatures {
    std::map<std::string, std::vector<std::string>> sequential;
    std::map<std::string, std::string> categorical;
    std::map<std::string, std::vector<double>> numerical;

    void merge(const RawFeatures& other);  // throws on name collision
};

struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    static Tensor zeros(std::vector<int> shape);
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    double& at(int i, int j) { return v[static_cast<size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * cols() + j]; }
    size_t size() const { return v.size(); }
};

// Named parameters; std::map gives a stable iteration order for the
// optimizer, the gradient checker, and serialization.
using ParamMap = std::map<std::string, Tensor>;

// id 0 is reserved for out-of-vocabulary tokens.
inline constexpr int kOovId = 0;
inline constexpr const char* kOovToken = "<unk>";

// Tokens are kept sorted after the reserved OOV slot so lookup is a
// binary search and shared Vocab instances stay safe for concurrent
// readers.
struct Vocab {
    std::vector<std::string> tokens;  // index = id; tokens[0] == "<unk>"

    int lookup(const std::string& token) const;  // kOovId when absent
    int size() const { return static_cast<int>(tokens.size()); }
};

struct Model {
    ModelArch arch;
    ParamMap params;
    std::map<std::string, Vocab> vocabs;  // sequential/categorical features
    std::vector<double> epoch_losses;     // recorded by train()

    // Sigmoid probability in (0,1) for one encoded sample.
    double predict(const FeatureBundle& bundle) const;

    FeatureBundle encode(const RawFeatures& raw) const;
};

// Fresh parameters, deterministic for a given seed.
Model init_model(const ModelArch& arch, uint64_t seed);

// --- forward building blocks (also usable piecewise) ---

// Embedding lookup for a sequential/categorical feature: one row per token
// id. Throws when an id falls outside the feature's vocabulary.
Tensor embed(const Model& model, const std::string& feature, std::span<const int> token_ids);

// Numerical features pass through unchanged (1 x dim).
Tensor embed_numerical(const Model& model, const std::string& feature,
                       std::span<const double> values);

// Aggregation vector for one feature: sequential -> concat of final
// forward/backward LSTM states (zeros for an empty sequence), categorical
// -> the embedding row, numerical -> identity.
std::vector<double> aggregate(const Model& model, const std::string& feature,
                              const Tensor& embeddings);

// Concatenates aggregation vectors in feature-name order, applies the
// two highway layers and the sigmoid output. Throws on dimension mismatch.
double classify(const Model& model, const std::map<std::string, std::vector<double>>& agg);

// Collects vocabularies and numeric widths over raw samples and produces a
// consistent (arch, vocabs) pair. Vocab ids are assigned in sorted token
// order after the reserved OOV slot.
class ArchBuilder {
public:
    ArchBuilder(int seq_dim, int cat_dim, int hidden_size)
        : seq_dim_(seq_dim), cat_dim_(cat_dim), hidden_(hidden_size) {}

    void observe(const RawFeatures& raw);

    ModelArch arch() const;
    std::map<std::string, Vocab> vocabs() const;

private:
    int seq_dim_, cat_dim_, hidden_;
    std::map<std::string, std::set<std::string>> seq_tokens_;
    std::map<std::string, std::set<std::string>> cat_tokens_;
    std::map<std::string, int> num_widths_;
};

// --- persistence (single JSON document, bit-exact round-trip) ---

void save_model(const Model& model, const std::filesystem::path& path,
                const std::map<std::string, std::string>& provenance = {});
Model load_model(const std::filesystem::path& path);

}  // namespace nlufb::nn
