#pragma once

#include <cstddef>
#include <vector>

#include "alen/nn.hpp"

namespace alen {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter update, aligned with Network::params(). Zero for non-trainable arrays.
using ParamDelta = std::vector<std::vector<double>>;

/// Adam moments for one Network. Several AdamStates stepped together form an
/// optimizer group over several networks.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const Network& net, AdamConfig config = {});

    /// Advances the step counter and moments, returning -lr * mhat / (sqrt(vhat) + eps).
    ParamDelta compute_update(const Network& net, const Gradients& grads);

    std::size_t step() const noexcept { return step_; }
    const AdamConfig& config() const noexcept { return config_; }
    AdamConfig& config() noexcept { return config_; }
    const std::vector<std::vector<double>>& first_moment() const noexcept { return m_; }
    const std::vector<std::vector<double>>& second_moment() const noexcept { return v_; }

    void restore(std::size_t step, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

private:
    AdamConfig config_;
    std::size_t step_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

/// params += scale * delta
void apply_delta(Network& net, const ParamDelta& delta, double scale = 1.0);

/// Standard descent step.
void adam_step(Network& net, AdamState& state, const Gradients& grads);

/// Computes one Adam update and applies it with the given sign (+1 descent,
/// -1 ascent). `scale` multiplies the applied delta. Returns the unsigned delta.
ParamDelta apply_signed_update(Network& net, const Gradients& grads, AdamState& state, int sign,
                               double scale = 1.0);

}  // namespace alen
