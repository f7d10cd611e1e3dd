#include "nlufb/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nlufb/core/rng.hpp"
#include "nlufb/nn/internal.hpp"

namespace nlufb::nn {

using core::Rng;

namespace {

Tensor& grad_tensor(ParamMap& grads, const ParamMap& params, const std::string& name) {
    auto it = grads.find(name);
    if (it == grads.end()) {
        it = grads.emplace(name, Tensor::zeros(params.at(name).shape)).first;
    }
    return it->second;
}

double bce_loss(double p, int label, double pos_weight) {
    constexpr double eps = 1e-12;
    double pc = std::clamp(p, eps, 1.0 - eps);
    double w = label == 1 ? pos_weight : 1.0;
    return label == 1 ? -w * std::log(pc) : -w * std::log(1.0 - pc);
}

// BPTT for one direction. `inputs` are the embedding rows in the order the
// direction consumed them; d_inputs accumulates gradients in that order.
void lstm_backward(const detail::LstmCellRef& cell, const detail::LstmDirTrace& trace,
                   const Tensor& inputs, const std::vector<double>& dh_final, int hidden,
                   Tensor& d_wx, Tensor& d_wh, Tensor& d_b, Tensor& d_inputs) {
    const int steps = static_cast<int>(trace.gates.size());
    const int in_dim = inputs.cols();
    std::vector<double> dh = dh_final;
    std::vector<double> dc(static_cast<size_t>(hidden), 0.0);
    std::vector<double> dz(static_cast<size_t>(4 * hidden));

    for (int t = steps - 1; t >= 0; --t) {
        const detail::LstmStep& s = trace.gates[static_cast<size_t>(t)];
        for (int j = 0; j < hidden; ++j) {
            size_t sj = static_cast<size_t>(j);
            double tanh_c = std::tanh(s.c[sj]);
            double d_o = dh[sj] * tanh_c;
            dc[sj] += dh[sj] * s.o[sj] * (1.0 - tanh_c * tanh_c);
            double d_i = dc[sj] * s.g[sj];
            double d_g = dc[sj] * s.i[sj];
            double d_f = dc[sj] * s.c_prev[sj];
            dz[sj] = d_i * s.i[sj] * (1.0 - s.i[sj]);
            dz[static_cast<size_t>(hidden) + sj] = d_f * s.f[sj] * (1.0 - s.f[sj]);
            dz[static_cast<size_t>(2 * hidden) + sj] = d_g * (1.0 - s.g[sj] * s.g[sj]);
            dz[static_cast<size_t>(3 * hidden) + sj] = d_o * s.o[sj] * (1.0 - s.o[sj]);
            dc[sj] *= s.f[sj];  // becomes dc_prev
        }
        for (int r = 0; r < 4 * hidden; ++r) {
            double dzr = dz[static_cast<size_t>(r)];
            if (dzr == 0.0) continue;
            double* wx_row = &d_wx.v[static_cast<size_t>(r) * in_dim];
            for (int j = 0; j < in_dim; ++j) wx_row[j] += dzr * inputs.at(t, j);
            double* wh_row = &d_wh.v[static_cast<size_t>(r) * hidden];
            for (int j = 0; j < hidden; ++j) wh_row[j] += dzr * s.h_prev[static_cast<size_t>(j)];
            d_b.v[static_cast<size_t>(r)] += dzr;
        }
        // dx_t and dh_prev
        for (int j = 0; j < in_dim; ++j) {
            double acc = 0.0;
            for (int r = 0; r < 4 * hidden; ++r)
                acc += cell.w_x->v[static_cast<size_t>(r) * in_dim + static_cast<size_t>(j)] *
                       dz[static_cast<size_t>(r)];
            d_inputs.at(t, j) += acc;
        }
        for (int j = 0; j < hidden; ++j) {
            double acc = 0.0;
            for (int r = 0; r < 4 * hidden; ++r)
                acc += cell.w_h->v[static_cast<size_t>(r) * hidden + static_cast<size_t>(j)] *
                       dz[static_cast<size_t>(r)];
            dh[static_cast<size_t>(j)] = acc;
        }
    }
}

// Returns the gradient w.r.t. the layer input.
std::vector<double> highway_backward(const Model& m, const std::string& layer,
                                     const detail::HighwayTrace& trace,
                                     const std::vector<double>& dy, ParamMap& grads) {
    const Tensor& w_t = m.params.at(layer + ".w_t");
    const Tensor& w_g = m.params.at(layer + ".w_g");
    Tensor& d_wt = grad_tensor(grads, m.params, layer + ".w_t");
    Tensor& d_bt = grad_tensor(grads, m.params, layer + ".b_t");
    Tensor& d_wg = grad_tensor(grads, m.params, layer + ".w_g");
    Tensor& d_bg = grad_tensor(grads, m.params, layer + ".b_g");
    const int d = static_cast<int>(dy.size());

    std::vector<double> da_t(static_cast<size_t>(d)), da_g(static_cast<size_t>(d)),
        dx(static_cast<size_t>(d));
    for (int r = 0; r < d; ++r) {
        size_t sr = static_cast<size_t>(r);
        double dt = dy[sr] * trace.g[sr];
        double dg = dy[sr] * (trace.t[sr] - trace.x[sr]);
        dx[sr] = dy[sr] * (1.0 - trace.g[sr]);
        da_t[sr] = dt * (1.0 - trace.t[sr] * trace.t[sr]);
        da_g[sr] = dg * trace.g[sr] * (1.0 - trace.g[sr]);
    }
    for (int r = 0; r < d; ++r) {
        size_t sr = static_cast<size_t>(r);
        double* wt_row = &d_wt.v[sr * static_cast<size_t>(d)];
        double* wg_row = &d_wg.v[sr * static_cast<size_t>(d)];
        for (int j = 0; j < d; ++j) {
            wt_row[j] += da_t[sr] * trace.x[static_cast<size_t>(j)];
            wg_row[j] += da_g[sr] * trace.x[static_cast<size_t>(j)];
        }
        d_bt.v[sr] += da_t[sr];
        d_bg.v[sr] += da_g[sr];
    }
    for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int r = 0; r < d; ++r) {
            acc += w_t.v[static_cast<size_t>(r) * d + static_cast<size_t>(j)] *
                       da_t[static_cast<size_t>(r)] +
                   w_g.v[static_cast<size_t>(r) * d + static_cast<size_t>(j)] *
                       da_g[static_cast<size_t>(r)];
        }
        dx[static_cast<size_t>(j)] += acc;
    }
    return dx;
}

}  // namespace

double sample_loss(const Model& model, const Sample& sample, double pos_weight) {
    double p = detail::forward(model, sample.features, nullptr);
    return bce_loss(p, sample.label, pos_weight);
}

double sample_loss_and_grad(const Model& model, const Sample& sample, double pos_weight,
                            ParamMap& grads) {
    detail::ForwardTrace trace;
    double p = detail::forward(model, sample.features, &trace);
    double loss = bce_loss(p, sample.label, pos_weight);

    double w = sample.label == 1 ? pos_weight : 1.0;
    double dscore = w * (p - static_cast<double>(sample.label));

    // output projection
    const Tensor& w_out = model.params.at("cls.out.w");
    Tensor& d_wout = grad_tensor(grads, model.params, "cls.out.w");
    Tensor& d_bout = grad_tensor(grads, model.params, "cls.out.b");
    std::vector<double> dy2(trace.y2.size());
    for (size_t j = 0; j < trace.y2.size(); ++j) {
        d_wout.v[j] += dscore * trace.y2[j];
        dy2[j] = dscore * w_out.v[j];
    }
    d_bout.v[0] += dscore;

    std::vector<double> dy1 = highway_backward(model, "cls.hw2", trace.hw2, dy2, grads);
    std::vector<double> dconcat = highway_backward(model, "cls.hw1", trace.hw1, dy1, grads);

    // split the concat gradient back over features
    const int hidden = model.arch.hidden_size;
    size_t offset = 0;
    for (const FeatureSpec& f : model.arch.features) {
        const int width = f.agg_dim(hidden);
        std::span<const double> slice(dconcat.data() + offset, static_cast<size_t>(width));
        offset += static_cast<size_t>(width);
        switch (f.kind) {
            case FeatureKind::sequential: {
                const detail::SeqTrace& st = trace.seq.at(f.name);
                if (st.ids.empty()) break;
                Tensor& d_emb = grad_tensor(grads, model.params, "emb." + f.name);
                const Tensor& emb = st.emb;
                const int steps = emb.rows();
                const int in_dim = emb.cols();

                std::vector<double> dh_fw(slice.begin(), slice.begin() + hidden);
                std::vector<double> dh_bw(slice.begin() + hidden, slice.end());

                Tensor d_in_fw = Tensor::zeros({steps, in_dim});
                lstm_backward(detail::lstm_cell(model, f.name, "fw"), st.fw, emb, dh_fw, hidden,
                              grad_tensor(grads, model.params, "agg." + f.name + ".fw.w_x"),
                              grad_tensor(grads, model.params, "agg." + f.name + ".fw.w_h"),
                              grad_tensor(grads, model.params, "agg." + f.name + ".fw.b"), d_in_fw);

                Tensor rev = Tensor::zeros({steps, in_dim});
                for (int r = 0; r < steps; ++r)
                    for (int j = 0; j < in_dim; ++j) rev.at(r, j) = emb.at(steps - 1 - r, j);
                Tensor d_in_bw = Tensor::zeros({steps, in_dim});
                lstm_backward(detail::lstm_cell(model, f.name, "bw"), st.bw, rev, dh_bw, hidden,
                              grad_tensor(grads, model.params, "agg." + f.name + ".bw.w_x"),
                              grad_tensor(grads, model.params, "agg." + f.name + ".bw.w_h"),
                              grad_tensor(grads, model.params, "agg." + f.name + ".bw.b"), d_in_bw);

                for (int r = 0; r < steps; ++r) {
                    int id = st.ids[static_cast<size_t>(r)];
                    for (int j = 0; j < in_dim; ++j) {
                        d_emb.at(id, j) += d_in_fw.at(r, j) + d_in_bw.at(steps - 1 - r, j);
                    }
                }
                break;
            }
            case FeatureKind::categorical: {
                Tensor& d_emb = grad_tensor(grads, model.params, "emb." + f.name);
                int id = trace.cat_ids.at(f.name);
                for (int j = 0; j < width; ++j)
                    d_emb.at(id, j) += slice[static_cast<size_t>(j)];
                break;
            }
            case FeatureKind::numerical:
                break;  // inputs carry no parameters
        }
    }
    return loss;
}

Model train(Model model, std::span<const Sample> samples, const TrainConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("training set is empty");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.learning_rate <= 0)
        throw std::invalid_argument("invalid training hyperparameters");

    size_t pos = 0;
    for (const Sample& s : samples) {
        if (s.label != 0 && s.label != 1) throw std::invalid_argument("labels must be 0/1");
        pos += static_cast<size_t>(s.label);
    }
    size_t neg = samples.size() - pos;
    if ((pos == 0 || neg == 0) && !cfg.class_weighting)
        throw std::invalid_argument(
            "training data contains a single class and class weighting is off");
    double pos_weight = 1.0;
    if (cfg.class_weighting && pos > 0 && neg > 0) {
        pos_weight = std::clamp(static_cast<double>(neg) / static_cast<double>(pos), 1.0,
                                cfg.max_pos_weight);
    }

    // Adam state
    ParamMap m_state, v_state;
    for (const auto& [name, t] : model.params) {
        m_state[name] = Tensor::zeros(t.shape);
        v_state[name] = Tensor::zeros(t.shape);
    }
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long step = 0;

    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);

    ParamMap grads;
    model.epoch_losses.clear();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            for (auto& [_, g] : grads) std::fill(g.v.begin(), g.v.end(), 0.0);
            for (size_t i = start; i < end; ++i) {
                epoch_loss +=
                    sample_loss_and_grad(model, samples[order[i]], pos_weight, grads);
            }
            double scale = 1.0 / static_cast<double>(end - start);
            ++step;
            double bias1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            double bias2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (auto& [name, g] : grads) {
                Tensor& param = model.params.at(name);
                Tensor& m1 = m_state.at(name);
                Tensor& m2 = v_state.at(name);
                for (size_t i = 0; i < g.v.size(); ++i) {
                    double gi = g.v[i] * scale;
                    m1.v[i] = beta1 * m1.v[i] + (1.0 - beta1) * gi;
                    m2.v[i] = beta2 * m2.v[i] + (1.0 - beta2) * gi * gi;
                    param.v[i] -= cfg.learning_rate * (m1.v[i] / bias1) /
                                  (std::sqrt(m2.v[i] / bias2) + adam_eps);
                }
            }
        }
        epoch_loss /= static_cast<double>(samples.size());
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch + 1));
        model.epoch_losses.push_back(epoch_loss);
    }
    return model;
}

GradCheckResult grad_check(const Model& model, const Sample& sample, double epsilon,
                           double pos_weight) {
    if (epsilon <= 0) throw std::invalid_argument("epsilon must be positive");
    Model probe = model;  // perturbed copy
    ParamMap grads;
    sample_loss_and_grad(probe, sample, pos_weight, grads);

    GradCheckResult result;
    for (auto& [name, tensor] : probe.params) {
        auto grad_it = grads.find(name);
        // Parameters a sample never touches (e.g. the LSTM of an empty
        // sequence) have an implicit zero gradient.
        const Tensor* analytic_tensor = grad_it == grads.end() ? nullptr : &grad_it->second;
        for (size_t i = 0; i < tensor.v.size(); ++i) {
            double saved = tensor.v[i];
            tensor.v[i] = saved + epsilon;
            double lp = sample_loss(probe, sample, pos_weight);
            tensor.v[i] = saved - epsilon;
            double lm = sample_loss(probe, sample, pos_weight);
            tensor.v[i] = saved;
            double numeric = (lp - lm) / (2.0 * epsilon);
            double analytic = analytic_tensor ? analytic_tensor->v[i] : 0.0;
            double err = std::abs(analytic - numeric) /
                         std::max(std::abs(analytic) + std::abs(numeric), 1e-2);
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_param = name;
            }
            ++result.params_checked;
        }
    }
    return result;
}

}  // namespace nlufb::nn
