#pragma once
// Forward-pass traces shared between the forward and backward passes.
// Implementation detail of the nn module.

#include <map>
#include <string>
#include <vector>

#include "nlufb/nn/model.hpp"

namespace nlufb::nn::detail {

struct LstmCellRef {
    const Tensor* w_x;
    const Tensor* w_h;
    const Tensor* b;
};

struct LstmStep {
    std::vector<double> i, f, g, o;  // gate activations
    std::vector<double> c, c_prev, h_prev;
};

struct LstmDirTrace {
    std::vector<LstmStep> gates;
};

struct SeqTrace {
    std::vector<int> ids;
    Tensor emb;  // in original token order
    LstmDirTrace fw, bw;
};

struct HighwayTrace {
    std::vector<double> x, t, g;
};

struct ForwardTrace {
    std::map<std::string, SeqTrace> seq;
    std::map<std::string, int> cat_ids;
    std::vector<double> concat;
    HighwayTrace hw1, hw2;
    std::vector<double> y2;
    double prob = 0.0;
};

double sigmoid(double x);
LstmCellRef lstm_cell(const Model& m, const std::string& feature, const char* dir);
std::vector<double> lstm_run(const LstmCellRef& cell, const Tensor& inputs, int hidden,
                             LstmDirTrace* trace);
std::vector<double> highway_forward(const Model& m, const std::string& layer,
                                    const std::vector<double>& x, HighwayTrace* trace);
double forward(const Model& m, const FeatureBundle& bundle, ForwardTrace* trace);

}  // namespace nlufb::nn::detail
