#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "segparse/error.hpp"
#include "segparse/grammar.hpp"
#include "segparse/rng.hpp"

namespace segparse {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logistic_grad(double x) {
    const double s = logistic(x);
    return s * (1.0 - s);
}
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct Shape {
    int c = 1;
    int h = 1;
    int w = 1;
    int size() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

struct ConvSpec {
    int out_channels = 8;
    int kernel = 3;
    int stride = 2;
    bool operator==(const ConvSpec&) const = default;
};

// Trunk architecture shared by the policy and the critic: a stack of
// stride-s tanh convolutions followed by tanh dense layers.
struct NetArch {
    std::vector<ConvSpec> conv{{8, 3, 2}, {16, 3, 2}};
    std::vector<int> dense{64};
    bool operator==(const NetArch&) const = default;
};

namespace detail {

struct ConvLayer {
    Shape in;
    Shape out;
    int out_c, k, stride, pad;
    int w_off, b_off;

    ConvLayer(Shape input, const ConvSpec& spec, int offset)
        : in(input), out_c(spec.out_channels), k(spec.kernel), stride(spec.stride),
          pad(spec.kernel / 2), w_off(offset) {
        out.c = out_c;
        out.h = (in.h + 2 * pad - k) / stride + 1;
        out.w = (in.w + 2 * pad - k) / stride + 1;
        if (out.h < 1 || out.w < 1) throw ConfigError("conv layer output collapses to zero");
        b_off = w_off + out_c * in.c * k * k;
    }

    int param_end() const { return b_off + out_c; }
    int fan_in() const { return in.c * k * k; }

    void forward(const double* p, const double* x, double* y) const {
        for (int oc = 0; oc < out_c; ++oc) {
            const double* wc = p + w_off + oc * in.c * k * k;
            for (int oy = 0; oy < out.h; ++oy) {
                for (int ox = 0; ox < out.w; ++ox) {
                    double acc = p[b_off + oc];
                    for (int ic = 0; ic < in.c; ++ic) {
                        const double* plane = x + static_cast<std::size_t>(ic) * in.h * in.w;
                        const double* wk = wc + ic * k * k;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= in.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= in.w) continue;
                                acc += wk[ky * k + kx] * plane[iy * in.w + ix];
                            }
                        }
                    }
                    y[(static_cast<std::size_t>(oc) * out.h + oy) * out.w + ox] =
                        std::tanh(acc);
                }
            }
        }
    }

    void backward(const double* p, const double* x, const double* y, const double* dy,
                  double* dx, double* dp) const {
        for (int oc = 0; oc < out_c; ++oc) {
            const double* wc = p + w_off + oc * in.c * k * k;
            double* dwc = dp + w_off + oc * in.c * k * k;
            for (int oy = 0; oy < out.h; ++oy) {
                for (int ox = 0; ox < out.w; ++ox) {
                    const std::size_t oi =
                        (static_cast<std::size_t>(oc) * out.h + oy) * out.w + ox;
                    const double dpre = dy[oi] * (1.0 - y[oi] * y[oi]);
                    if (dpre == 0.0) continue;
                    dp[b_off + oc] += dpre;
                    for (int ic = 0; ic < in.c; ++ic) {
                        const double* plane = x + static_cast<std::size_t>(ic) * in.h * in.w;
                        double* dplane =
                            dx ? dx + static_cast<std::size_t>(ic) * in.h * in.w : nullptr;
                        const double* wk = wc + ic * k * k;
                        double* dwk = dwc + ic * k * k;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= in.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= in.w) continue;
                                dwk[ky * k + kx] += dpre * plane[iy * in.w + ix];
                                if (dplane) dplane[iy * in.w + ix] += dpre * wk[ky * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
};

struct DenseLayer {
    int in_n, out_n;
    bool tanh_act;
    int w_off, b_off;

    DenseLayer(int inputs, int outputs, bool with_tanh, int offset)
        : in_n(inputs), out_n(outputs), tanh_act(with_tanh), w_off(offset),
          b_off(offset + inputs * outputs) {}

    int param_end() const { return b_off + out_n; }
    int fan_in() const { return in_n; }

    void forward(const double* p, const double* x, double* y) const {
        for (int o = 0; o < out_n; ++o) {
            const double* row = p + w_off + static_cast<std::size_t>(o) * in_n;
            double acc = p[b_off + o];
            for (int i = 0; i < in_n; ++i) acc += row[i] * x[i];
            y[o] = tanh_act ? std::tanh(acc) : acc;
        }
    }

    void backward(const double* p, const double* x, const double* y, const double* dy,
                  double* dx, double* dp) const {
        for (int o = 0; o < out_n; ++o) {
            const double dpre = tanh_act ? dy[o] * (1.0 - y[o] * y[o]) : dy[o];
            if (dpre == 0.0) continue;
            const double* row = p + w_off + static_cast<std::size_t>(o) * in_n;
            double* drow = dp + w_off + static_cast<std::size_t>(o) * in_n;
            dp[b_off + o] += dpre;
            for (int i = 0; i < in_n; ++i) {
                drow[i] += dpre * x[i];
                if (dx) dx[i] += dpre * row[i];
            }
        }
    }
};

// Convolutional trunk with optional auxiliary scalars spliced into the
// first dense layer's input.
class Trunk {
public:
    Trunk(Shape input, const NetArch& arch, int aux_inputs, int param_offset)
        : input_(input), aux_(aux_inputs) {
        int offset = param_offset;
        Shape cur = input;
        for (const auto& spec : arch.conv) {
            conv_.emplace_back(cur, spec, offset);
            offset = conv_.back().param_end();
            cur = conv_.back().out;
        }
        flat_dim_ = cur.size() + aux_;
        int dim = flat_dim_;
        for (int width : arch.dense) {
            dense_.emplace_back(dim, width, true, offset);
            offset = dense_.back().param_end();
            dim = width;
        }
        out_dim_ = dim;
        param_end_ = offset;
    }

    int out_dim() const { return out_dim_; }
    int param_end() const { return param_end_; }
    int aux_inputs() const { return aux_; }
    Shape input_shape() const { return input_; }

    struct Cache {
        std::vector<std::vector<double>> bufs;  // input, conv outs, flat+aux, dense outs
        const std::vector<double>& out() const { return bufs.back(); }
    };

    void forward(const double* p, std::span<const double> features,
                 std::span<const double> aux, Cache& cache) const {
        if (static_cast<int>(features.size()) != input_.size()) {
            throw BoundsError("feature block does not match trunk input shape");
        }
        if (static_cast<int>(aux.size()) != aux_) {
            throw BoundsError("aux input size mismatch");
        }
        cache.bufs.clear();
        cache.bufs.emplace_back(features.begin(), features.end());
        for (const auto& layer : conv_) {
            std::vector<double> out(layer.out.size());
            layer.forward(p, cache.bufs.back().data(), out.data());
            cache.bufs.push_back(std::move(out));
        }
        std::vector<double> flat;
        flat.reserve(flat_dim_);
        flat.insert(flat.end(), cache.bufs.back().begin(), cache.bufs.back().end());
        flat.insert(flat.end(), aux.begin(), aux.end());
        cache.bufs.push_back(std::move(flat));
        for (const auto& layer : dense_) {
            std::vector<double> out(layer.out_n);
            layer.forward(p, cache.bufs.back().data(), out.data());
            cache.bufs.push_back(std::move(out));
        }
    }

    // dout is the gradient at the trunk output; accumulates into dp and,
    // when given, dfeatures / daux.
    //
    // Buffer layout in the cache: [0] input, [1..nc] conv outputs,
    // [nc+1] flat+aux, [nc+2..] dense outputs.
    void backward(const double* p, const Cache& cache, std::span<const double> dout,
                  double* dp, double* dfeatures, double* daux) const {
        const std::size_t nc = conv_.size();
        std::vector<double> grad(dout.begin(), dout.end());
        std::size_t buf_idx = cache.bufs.size() - 1;
        for (int li = static_cast<int>(dense_.size()) - 1; li >= 0; --li) {
            const auto& layer = dense_[li];
            std::vector<double> dx(layer.in_n, 0.0);
            layer.backward(p, cache.bufs[buf_idx - 1].data(), cache.bufs[buf_idx].data(),
                           grad.data(), dx.data(), dp);
            grad = std::move(dx);
            --buf_idx;
        }
        // grad now spans the flat+aux buffer.
        if (daux) {
            for (int i = 0; i < aux_; ++i) daux[i] += grad[flat_dim_ - aux_ + i];
        }
        grad.resize(flat_dim_ - aux_);
        for (int li = static_cast<int>(nc) - 1; li >= 0; --li) {
            const auto& layer = conv_[li];
            const bool need_dx = li > 0 || dfeatures != nullptr;
            std::vector<double> dx(need_dx ? layer.in.size() : 0, 0.0);
            layer.backward(p, cache.bufs[li].data(), cache.bufs[li + 1].data(),
                           grad.data(), need_dx ? dx.data() : nullptr, dp);
            grad = std::move(dx);
        }
        if (dfeatures) {
            for (int i = 0; i < input_.size(); ++i) dfeatures[i] += grad[i];
        }
    }

    void init_params(std::vector<double>& p, Rng& rng) const {
        for (const auto& layer : conv_) {
            const double s = 1.0 / std::sqrt(layer.fan_in());
            for (int i = layer.w_off; i < layer.b_off; ++i) p[i] = rng.uniform(-s, s);
            for (int i = layer.b_off; i < layer.param_end(); ++i) p[i] = 0.0;
        }
        for (const auto& layer : dense_) {
            const double s = 1.0 / std::sqrt(layer.fan_in());
            for (int i = layer.w_off; i < layer.b_off; ++i) p[i] = rng.uniform(-s, s);
            for (int i = layer.b_off; i < layer.param_end(); ++i) p[i] = 0.0;
        }
    }

private:
    Shape input_;
    int aux_;
    std::vector<ConvLayer> conv_;
    std::vector<DenseLayer> dense_;
    int flat_dim_ = 0;
    int out_dim_ = 0;
    int param_end_ = 0;
};

}  // namespace detail

// Policy network: shared trunk, a categorical rule head (masked softmax
// over legal rules) and a deterministic split head (logistic output).
class PolicyNet {
public:
    PolicyNet(Shape input, const NetArch& arch)
        : input_(input), arch_(arch), trunk_(input, arch, 0, 0),
          rule_head_(trunk_.out_dim(), kRuleCount, false, trunk_.param_end()),
          split_head_(trunk_.out_dim(), 1, false, rule_head_.param_end()) {}

    int param_count() const { return split_head_.param_end(); }
    Shape input_shape() const { return input_; }
    const NetArch& arch() const { return arch_; }

    // theta is partitioned into trunk, rule-head, split-head blocks.
    int trunk_param_count() const { return trunk_.param_end(); }
    std::pair<int, int> rule_head_params() const {
        return {rule_head_.w_off, rule_head_.param_end()};
    }
    std::pair<int, int> split_head_params() const {
        return {split_head_.w_off, split_head_.param_end()};
    }

    std::vector<double> init_params(Rng& rng, bool zero_init = false) const {
        std::vector<double> theta(param_count(), 0.0);
        if (!zero_init) {
            trunk_.init_params(theta, rng);
            const double sr = 1.0 / std::sqrt(rule_head_.fan_in());
            for (int i = rule_head_.w_off; i < rule_head_.b_off; ++i)
                theta[i] = rng.uniform(-sr, sr);
            const double ss = 1.0 / std::sqrt(split_head_.fan_in());
            for (int i = split_head_.w_off; i < split_head_.b_off; ++i)
                theta[i] = rng.uniform(-ss, ss);
        }
        return theta;
    }

    struct Forward {
        detail::Trunk::Cache trunk;
        std::array<double, kRuleCount> logits{};
        std::array<double, kRuleCount> probs{};
        RuleMask legal{};
        double presplit = 0.0;
        double split = 0.5;
    };

    Forward forward(std::span<const double> theta, std::span<const double> features,
                    const RuleMask& legal) const {
        check_params(theta);
        if (std::none_of(legal.begin(), legal.end(), [](bool b) { return b; })) {
            throw IllegalActionError("policy forward with an empty rule mask");
        }
        Forward f;
        f.legal = legal;
        trunk_.forward(theta.data(), features, {}, f.trunk);
        std::array<double, kRuleCount> raw;
        rule_head_.forward(theta.data(), f.trunk.out().data(), raw.data());
        f.logits = raw;
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < kRuleCount; ++i) {
            if (legal[i]) max_logit = std::max(max_logit, raw[i]);
        }
        double z = 0.0;
        for (int i = 0; i < kRuleCount; ++i) {
            f.probs[i] = legal[i] ? std::exp(raw[i] - max_logit) : 0.0;
            z += f.probs[i];
        }
        for (int i = 0; i < kRuleCount; ++i) f.probs[i] /= z;
        double pre;
        split_head_.forward(theta.data(), f.trunk.out().data(), &pre);
        f.presplit = pre;
        f.split = logistic(pre);
        return f;
    }

    // Accumulates into dtheta the gradient of any scalar objective whose
    // partials at the rule logits are `dlogits` and at the split head
    // pre-activation is `dpresplit`. Chain through the logistic with
    // logistic_grad(cache.presplit) when the objective depends on the split
    // value itself.
    void backward(std::span<const double> theta, const Forward& cache,
                  const std::array<double, kRuleCount>& dlogits, double dpresplit,
                  std::span<double> dtheta, double* dfeatures = nullptr) const {
        std::vector<double> dtrunk(trunk_.out_dim(), 0.0);
        rule_head_.backward(theta.data(), cache.trunk.out().data(), cache.logits.data(),
                            dlogits.data(), dtrunk.data(), dtheta.data());
        split_head_.backward(theta.data(), cache.trunk.out().data(), &cache.presplit,
                             &dpresplit, dtrunk.data(), dtheta.data());
        trunk_.backward(theta.data(), cache.trunk, dtrunk, dtheta.data(), dfeatures,
                        nullptr);
    }

private:
    void check_params(std::span<const double> theta) const {
        if (static_cast<int>(theta.size()) != param_count()) {
            throw BoundsError("policy parameter vector has wrong size");
        }
    }

    Shape input_;
    NetArch arch_;
    detail::Trunk trunk_;
    detail::DenseLayer rule_head_;
    detail::DenseLayer split_head_;
};

// Critic network Q(s, r, l): the rule one-hot and the split scalar join the
// flattened convolutional features at the first dense layer.
class CriticNet {
public:
    static constexpr int kAux = kRuleCount + 1;
    // Conventional split input for assignment rules, which have none.
    static constexpr double kPlaceholderSplit = 0.5;

    CriticNet(Shape input, const NetArch& arch)
        : input_(input), arch_(arch), trunk_(input, arch, kAux, 0),
          head_(trunk_.out_dim(), 1, false, trunk_.param_end()) {}

    int param_count() const { return head_.param_end(); }
    Shape input_shape() const { return input_; }
    const NetArch& arch() const { return arch_; }

    std::vector<double> init_params(Rng& rng, bool zero_init = false) const {
        std::vector<double> omega(param_count(), 0.0);
        if (!zero_init) {
            trunk_.init_params(omega, rng);
            const double s = 1.0 / std::sqrt(head_.fan_in());
            for (int i = head_.w_off; i < head_.b_off; ++i) omega[i] = rng.uniform(-s, s);
        }
        return omega;
    }

    struct Forward {
        detail::Trunk::Cache trunk;
        std::array<double, kAux> aux{};
        double q = 0.0;
    };

    Forward forward(std::span<const double> omega, std::span<const double> features,
                    RuleKind rule, double l) const {
        check_params(omega);
        Forward f;
        f.aux.fill(0.0);
        f.aux[static_cast<int>(rule)] = 1.0;
        f.aux[kRuleCount] = l;
        trunk_.forward(omega.data(), features, f.aux, f.trunk);
        head_.forward(omega.data(), f.trunk.out().data(), &f.q);
        return f;
    }

    // Accumulates dq * dQ/domega into domega; optionally the input
    // gradients dq * dQ/dfeatures and dq * dQ/dl.
    void backward(std::span<const double> omega, const Forward& cache, double dq,
                  std::span<double> domega, double* dfeatures = nullptr,
                  double* dl = nullptr) const {
        std::vector<double> dtrunk(trunk_.out_dim(), 0.0);
        head_.backward(omega.data(), cache.trunk.out().data(), &cache.q, &dq,
                       dtrunk.data(), domega.data());
        std::array<double, kAux> daux{};
        trunk_.backward(omega.data(), cache.trunk, dtrunk, domega.data(), dfeatures,
                        daux.data());
        if (dl) *dl += daux[kRuleCount];
    }

    // dQ/dl at the given point, for the deterministic policy-gradient term.
    double split_gradient(std::span<const double> omega, const Forward& cache) const {
        thread_local std::vector<double> scratch;
        scratch.assign(param_count(), 0.0);
        double dl = 0.0;
        backward(omega, cache, 1.0, scratch, nullptr, &dl);
        return dl;
    }

private:
    void check_params(std::span<const double> omega) const {
        if (static_cast<int>(omega.size()) != param_count()) {
            throw BoundsError("critic parameter vector has wrong size");
        }
    }

    Shape input_;
    NetArch arch_;
    detail::Trunk trunk_;
    detail::DenseLayer head_;
};

// --- Finite-difference gradient checking -----------------------------------

// Max relative error between an analytic gradient and central differences
// of `f` over the coordinates of `x`. `x` is restored before returning.
template <class F>
double max_relative_error(std::vector<double>& x, std::span<const double> analytic, F&& f,
                          double step = 1e-5) {
    double ginf = 0.0;
    for (double a : analytic) ginf = std::max(ginf, std::abs(a));
    const double floor = std::max(1e-8, 1e-3 * ginf);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double hi = f();
        x[i] = saved - step;
        const double lo = f();
        x[i] = saved;
        const double numeric = (hi - lo) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

// Checks every parameter and input gradient of the policy under a random
// projection objective J = sum_i u_i log pi(i) + u_split * mu.
inline double grad_check_policy(const PolicyNet& net, std::span<const double> theta_in,
                                std::span<const double> features_in, const RuleMask& legal,
                                std::uint64_t seed) {
    Rng rng(seed);
    std::array<double, kRuleCount> u;
    for (auto& v : u) v = rng.uniform(-1.0, 1.0);
    const double u_split = rng.uniform(-1.0, 1.0);

    std::vector<double> theta(theta_in.begin(), theta_in.end());
    std::vector<double> features(features_in.begin(), features_in.end());

    const auto objective = [&]() {
        const auto f = net.forward(theta, features, legal);
        double j = 0.0;
        for (int i = 0; i < kRuleCount; ++i) {
            if (legal[i]) j += u[i] * std::log(f.probs[i]);
        }
        return j + u_split * f.split;
    };

    const auto cache = net.forward(theta, features, legal);
    double usum = 0.0;
    for (int i = 0; i < kRuleCount; ++i) {
        if (legal[i]) usum += u[i];
    }
    std::array<double, kRuleCount> dlogits{};
    for (int i = 0; i < kRuleCount; ++i) {
        dlogits[i] = legal[i] ? u[i] - cache.probs[i] * usum : 0.0;
    }
    const double dpresplit = u_split * logistic_grad(cache.presplit);

    std::vector<double> dtheta(net.param_count(), 0.0);
    std::vector<double> dfeatures(features.size(), 0.0);
    net.backward(theta, cache, dlogits, dpresplit, dtheta, dfeatures.data());

    const double err_params = max_relative_error(theta, dtheta, objective);
    const double err_inputs = max_relative_error(features, dfeatures, objective);
    return std::max(err_params, err_inputs);
}

// Checks every parameter gradient plus the feature and split-location input
// gradients of the critic.
inline double grad_check_critic(const CriticNet& net, std::span<const double> omega_in,
                                std::span<const double> features_in, RuleKind rule,
                                double l, std::uint64_t seed) {
    Rng rng(seed);
    const double u = rng.uniform(0.5, 1.5);

    std::vector<double> omega(omega_in.begin(), omega_in.end());
    std::vector<double> features(features_in.begin(), features_in.end());
    std::vector<double> lvec{l};

    const auto objective = [&]() {
        return u * net.forward(omega, features, rule, lvec[0]).q;
    };

    const auto cache = net.forward(omega, features, rule, lvec[0]);
    std::vector<double> domega(net.param_count(), 0.0);
    std::vector<double> dfeatures(features.size(), 0.0);
    double dl = 0.0;
    net.backward(omega, cache, u, domega, dfeatures.data(), &dl);

    const double err_params = max_relative_error(omega, domega, objective);
    const double err_inputs = max_relative_error(features, dfeatures, objective);
    std::vector<double> danalytic{dl};
    const double err_l = max_relative_error(lvec, danalytic, objective);
    return std::max({err_params, err_inputs, err_l});
}

}  // namespace segparse
