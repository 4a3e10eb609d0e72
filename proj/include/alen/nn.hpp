#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "alen/matrix.hpp"

namespace alen {

using Rng = std::mt19937_64;

enum class LayerKind { Dense, Elu, BatchNorm, GradReverse };
enum class Mode { Train, Eval };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    double lambda = 1.0;  // GradReverse only

    static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::Dense, in, out, 1.0}; }
    static LayerSpec elu(std::size_t dim) { return {LayerKind::Elu, dim, dim, 1.0}; }
    static LayerSpec batch_norm(std::size_t dim) { return {LayerKind::BatchNorm, dim, dim, 1.0}; }
    static LayerSpec grad_reverse(std::size_t dim, double lambda = 1.0) {
        return {LayerKind::GradReverse, dim, dim, lambda};
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// One named parameter array. Dense weights are [in x out] row-major.
struct Param {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    bool trainable = true;
};

/// Per-parameter arrays aligned index-for-index with Network::params().
struct Gradients {
    std::vector<std::string> names;
    std::vector<std::vector<double>> arrays;

    std::size_t size() const noexcept { return arrays.size(); }
    const std::vector<double>& operator[](std::string_view name) const;
    std::vector<double>& operator[](std::string_view name);

    Gradients& operator+=(const Gradients& other);
    void scale(double factor);
    double max_abs() const;
};

struct BackwardResult {
    Gradients grads;
    Matrix input_grad;
};

inline constexpr double kEluAlpha = 1.0;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Fixed-menu layer stack with cached reverse-mode differentiation.
///
/// forward() in Train mode caches activations and updates BatchNorm running
/// statistics; predict() is the read-only Eval path and never touches state.
class Network {
public:
    Network() = default;
    /// Dense weights zero, BatchNorm gain one.
    explicit Network(std::vector<LayerSpec> layers);
    /// Dense weights ~ U(+-sqrt(6/(in+out))), biases zero.
    Network(std::vector<LayerSpec> layers, Rng& rng);

    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    std::vector<Param>& params() noexcept { return params_; }
    const std::vector<Param>& params() const noexcept { return params_; }
    Param& param(std::string_view name);
    const Param& param(std::string_view name) const;

    /// 0 for an empty stack (accepts any width).
    std::size_t input_dim() const noexcept;
    std::size_t output_dim() const noexcept;

    Matrix forward(const Matrix& x, Mode mode);
    Matrix predict(const Matrix& x) const;
    BackwardResult backward(const Matrix& upstream) const;

    bool has_cache() const noexcept { return cached_; }
    void clear_cache() noexcept;

    Gradients zero_gradients() const;
    /// FNV-1a over every parameter bit pattern; used to prove read-only scoring.
    std::uint64_t parameter_hash() const;

private:
    struct LayerCache {
        Matrix input;
        Matrix output;
        std::vector<double> mean;
        std::vector<double> inv_std;
        Matrix normalized;
    };

    void validate_layers() const;
    void create_params();
    Matrix run(const Matrix& x, Mode mode, std::vector<LayerCache>* cache, bool update_stats);

    std::vector<LayerSpec> layers_;
    std::vector<Param> params_;
    std::vector<std::size_t> first_param_;  // per layer, index into params_
    std::vector<LayerCache> cache_;
    Mode cached_mode_ = Mode::Eval;
    bool cached_ = false;
};

}  // namespace alen
