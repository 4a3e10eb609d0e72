#include "alen/adam.hpp"

#include <cmath>

#include "alen/errors.hpp"

namespace alen {

AdamState::AdamState(const Network& net, AdamConfig config) : config_(config) {
    for (const auto& p : net.params()) {
        m_.emplace_back(p.values.size(), 0.0);
        v_.emplace_back(p.values.size(), 0.0);
    }
}

void AdamState::restore(std::size_t step, std::vector<std::vector<double>> m,
                        std::vector<std::vector<double>> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw ShapeError("adam restore: moment count mismatch");
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size())
            throw ShapeError("adam restore: moment shape mismatch");
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

ParamDelta AdamState::compute_update(const Network& net, const Gradients& grads) {
    const auto& params = net.params();
    if (grads.arrays.size() != params.size() || m_.size() != params.size())
        throw ShapeError("adam: gradient/parameter/moment counts differ");
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    ParamDelta delta(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = grads.arrays[i];
        if (g.size() != params[i].values.size() || m_[i].size() != g.size())
            throw ShapeError("adam: shape mismatch for '" + params[i].name + "'");
        delta[i].assign(g.size(), 0.0);
        if (!params[i].trainable) continue;
        for (std::size_t j = 0; j < g.size(); ++j) {
            m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g[j];
            v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            delta[i][j] = -config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
    return delta;
}

void apply_delta(Network& net, const ParamDelta& delta, double scale) {
    auto& params = net.params();
    if (delta.size() != params.size()) throw ShapeError("apply_delta: count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (delta[i].size() != params[i].values.size())
            throw ShapeError("apply_delta: shape mismatch for '" + params[i].name + "'");
        for (std::size_t j = 0; j < delta[i].size(); ++j) params[i].values[j] += scale * delta[i][j];
    }
}

void adam_step(Network& net, AdamState& state, const Gradients& grads) {
    apply_delta(net, state.compute_update(net, grads));
}

ParamDelta apply_signed_update(Network& net, const Gradients& grads, AdamState& state, int sign, double scale) {
    if (sign != 1 && sign != -1) throw InputError("apply_signed_update: sign must be +1 or -1");
    ParamDelta delta = state.compute_update(net, grads);
    apply_delta(net, delta, static_cast<double>(sign) * scale);
    return delta;
}

}  // namespace alen
