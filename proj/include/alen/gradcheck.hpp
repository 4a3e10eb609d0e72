#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "alen/nn.hpp"

namespace alen {

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;
/// Denominator floor for relative error; below it the comparison is absolute.
/// Central-difference round-off is about 1e-10 on O(10) losses, so an exact
/// zero gradient would otherwise read as a 1e-4 relative error.
inline constexpr double kGradCheckFloor = 1e-5;

double relative_error(double analytic, double numeric);

/// Central difference of `loss` with respect to `x`, restoring x afterwards.
double central_difference(const std::function<double()>& loss, double& x, double h = kFiniteDifferenceStep);

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;

    bool passed() const noexcept { return max_rel_error < kGradCheckTolerance; }
};

/// Checks parameter and input gradients of sum(net(x) * R) for a random R.
/// Gradients upstream of GradReverse layers are compared against the finite
/// difference scaled by -lambda per reversal, which is the layer's contract.
GradCheckEntry check_network_gradients(const Network& net, const Matrix& x, Mode mode, Rng& rng,
                                       std::string name);

/// Full suite: every layer kind, the three composed networks and every loss.
/// Entries are aggregated (max) across seeds.
std::vector<GradCheckEntry> run_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed = 0);

}  // namespace alen
