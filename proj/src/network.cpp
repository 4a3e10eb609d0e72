#include <algorithm>
#include <cmath>
#include <cstring>

#include "alen/errors.hpp"
#include "alen/kernels.hpp"
#include "alen/nn.hpp"

namespace alen {

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "Dense";
        case LayerKind::Elu: return "Elu";
        case LayerKind::BatchNorm: return "BatchNorm";
        case LayerKind::GradReverse: return "GradReverse";
    }
    return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
    if (name == "Dense") return LayerKind::Dense;
    if (name == "Elu") return LayerKind::Elu;
    if (name == "BatchNorm") return LayerKind::BatchNorm;
    if (name == "GradReverse") return LayerKind::GradReverse;
    throw InputError("unknown layer kind '" + std::string(name) + "'");
}

// ---- Gradients -------------------------------------------------------------

const std::vector<double>& Gradients::operator[](std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return arrays[i];
    throw InputError("no gradient named '" + std::string(name) + "'");
}

std::vector<double>& Gradients::operator[](std::string_view name) {
    return const_cast<std::vector<double>&>(std::as_const(*this)[name]);
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.arrays.size() != arrays.size()) throw ShapeError("gradient sets differ in size");
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        if (other.arrays[i].size() != arrays[i].size())
            throw ShapeError("gradient '" + names[i] + "' shape mismatch");
        for (std::size_t j = 0; j < arrays[i].size(); ++j) arrays[i][j] += other.arrays[i][j];
    }
    return *this;
}

void Gradients::scale(double factor) {
    for (auto& a : arrays)
        for (double& v : a) v *= factor;
}

double Gradients::max_abs() const {
    double m = 0.0;
    for (const auto& a : arrays)
        for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

// ---- Network ---------------------------------------------------------------

Network::Network(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    validate_layers();
    create_params();
}

Network::Network(std::vector<LayerSpec> layers, Rng& rng) : Network(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].kind != LayerKind::Dense) continue;
        const double bound = std::sqrt(6.0 / static_cast<double>(layers_[l].in_dim + layers_[l].out_dim));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : params_[first_param_[l]].values) w = dist(rng);
    }
}

void Network::validate_layers() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        if (s.in_dim == 0 || s.out_dim == 0)
            throw ShapeError("layer " + std::to_string(l) + ": dimensions must be >= 1");
        if (s.kind != LayerKind::Dense && s.in_dim != s.out_dim)
            throw ShapeError("layer " + std::to_string(l) + ": " + std::string(to_string(s.kind)) +
                             " requires in_dim == out_dim");
        if (l > 0 && layers_[l - 1].out_dim != s.in_dim)
            throw ShapeError("layer " + std::to_string(l) + ": in_dim " + std::to_string(s.in_dim) +
                             " does not chain with previous out_dim " +
                             std::to_string(layers_[l - 1].out_dim));
    }
}

void Network::create_params() {
    params_.clear();
    first_param_.assign(layers_.size(), 0);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        const std::string prefix = "L" + std::to_string(l) + ".";
        first_param_[l] = params_.size();
        if (s.kind == LayerKind::Dense) {
            params_.push_back({prefix + "weight", s.in_dim, s.out_dim,
                               std::vector<double>(s.in_dim * s.out_dim, 0.0), true});
            params_.push_back({prefix + "bias", 1, s.out_dim, std::vector<double>(s.out_dim, 0.0), true});
        } else if (s.kind == LayerKind::BatchNorm) {
            params_.push_back({prefix + "gamma", 1, s.out_dim, std::vector<double>(s.out_dim, 1.0), true});
            params_.push_back({prefix + "beta", 1, s.out_dim, std::vector<double>(s.out_dim, 0.0), true});
            params_.push_back({prefix + "running_mean", 1, s.out_dim,
                               std::vector<double>(s.out_dim, 0.0), false});
            params_.push_back({prefix + "running_var", 1, s.out_dim,
                               std::vector<double>(s.out_dim, 1.0), false});
        }
    }
}

Param& Network::param(std::string_view name) {
    return const_cast<Param&>(std::as_const(*this).param(name));
}

const Param& Network::param(std::string_view name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw InputError("no parameter named '" + std::string(name) + "'");
}

std::size_t Network::input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().in_dim; }
std::size_t Network::output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().out_dim; }

void Network::clear_cache() noexcept {
    cache_.clear();
    cached_ = false;
}

Gradients Network::zero_gradients() const {
    Gradients g;
    g.names.reserve(params_.size());
    g.arrays.reserve(params_.size());
    for (const auto& p : params_) {
        g.names.push_back(p.name);
        g.arrays.emplace_back(p.values.size(), 0.0);
    }
    return g;
}

std::uint64_t Network::parameter_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& p : params_)
        for (double v : p.values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xffu;
                h *= 1099511628211ull;
            }
        }
    return h;
}

Matrix Network::run(const Matrix& x, Mode mode, std::vector<LayerCache>* cache, bool update_stats) {
    if (!layers_.empty() && x.cols() != layers_.front().in_dim)
        throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(layers_.front().in_dim));
    if (cache) cache->assign(layers_.size(), {});

    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& s = layers_[l];
        LayerCache* lc = cache ? &(*cache)[l] : nullptr;
        if (lc) lc->input = h;
        switch (s.kind) {
            case LayerKind::Dense: {
                const Param& w = params_[first_param_[l]];
                const Param& b = params_[first_param_[l] + 1];
                Matrix out = kernels::matmul(h, Matrix(w.rows, w.cols, w.values));
                kernels::add_row_vector(out, b.values);
                h = std::move(out);
                break;
            }
            case LayerKind::Elu: {
                for (double& v : h.data()) v = v > 0.0 ? v : kEluAlpha * std::expm1(v);
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t n = h.rows(), d = h.cols();
                const auto& gamma = params_[first_param_[l]].values;
                const auto& beta = params_[first_param_[l] + 1].values;
                auto& running_mean = params_[first_param_[l] + 2].values;
                auto& running_var = params_[first_param_[l] + 3].values;
                std::vector<double> mean(d), inv_std(d);
                if (mode == Mode::Train) {
                    if (n == 0) throw ShapeError("batch norm: empty batch in Train mode");
                    std::vector<double> var(d, 0.0);
                    mean = kernels::column_sums(h);
                    for (double& m : mean) m /= static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) {
                            const double c = h(i, j) - mean[j];
                            var[j] += c * c;
                        }
                    for (std::size_t j = 0; j < d; ++j) {
                        var[j] /= static_cast<double>(n);
                        inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);
                    }
                    if (update_stats) {
                        const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
                        for (std::size_t j = 0; j < d; ++j) {
                            running_mean[j] = (1.0 - kBatchNormMomentum) * running_mean[j] +
                                              kBatchNormMomentum * mean[j];
                            running_var[j] = (1.0 - kBatchNormMomentum) * running_var[j] +
                                             kBatchNormMomentum * var[j] * unbias;
                        }
                    }
                } else {
                    for (std::size_t j = 0; j < d; ++j) {
                        mean[j] = running_mean[j];
                        inv_std[j] = 1.0 / std::sqrt(std::max(running_var[j], 0.0) + kBatchNormEps);
                    }
                }
                Matrix normalized(n, d);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        normalized(i, j) = (h(i, j) - mean[j]) * inv_std[j];
                        h(i, j) = gamma[j] * normalized(i, j) + beta[j];
                    }
                if (lc) {
                    lc->mean = std::move(mean);
                    lc->inv_std = std::move(inv_std);
                    lc->normalized = std::move(normalized);
                }
                break;
            }
            case LayerKind::GradReverse:
                break;
        }
        if (lc) lc->output = h;
    }
    if (!h.all_finite()) throw NumericError("forward: non-finite activations");
    return h;
}

Matrix Network::forward(const Matrix& x, Mode mode) {
    std::vector<LayerCache> cache;
    Matrix out = run(x, mode, &cache, mode == Mode::Train);
    cache_ = std::move(cache);
    cached_mode_ = mode;
    cached_ = true;
    return out;
}

Matrix Network::predict(const Matrix& x) const {
    // Eval mode never writes running statistics, so the cast is read-only.
    return const_cast<Network*>(this)->run(x, Mode::Eval, nullptr, false);
}

BackwardResult Network::backward(const Matrix& upstream) const {
    if (!cached_) throw StateError("backward called without a preceding forward pass");
    BackwardResult result{zero_gradients(), {}};
    if (!layers_.empty()) {
        const Matrix& last_out = cache_.back().output;
        if (upstream.rows() != last_out.rows() || upstream.cols() != last_out.cols())
            throw ShapeError("backward: upstream shape does not match forward output");
    }

    Matrix g = upstream;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& s = layers_[l];
        const LayerCache& lc = cache_[l];
        switch (s.kind) {
            case LayerKind::Dense: {
                const Param& w = params_[first_param_[l]];
                result.grads.arrays[first_param_[l]] = kernels::matmul_tn(lc.input, g).data();
                result.grads.arrays[first_param_[l] + 1] = kernels::column_sums(g);
                g = kernels::matmul_nt(g, Matrix(w.rows, w.cols, w.values));
                break;
            }
            case LayerKind::Elu: {
                const auto& in = lc.input.data();
                const auto& out = lc.output.data();
                auto& gd = g.data();
                for (std::size_t i = 0; i < gd.size(); ++i)
                    if (in[i] <= 0.0) gd[i] *= out[i] + kEluAlpha;
                break;
            }
            case LayerKind::BatchNorm: {
                const std::size_t n = g.rows(), d = g.cols();
                const auto& gamma = params_[first_param_[l]].values;
                auto& dgamma = result.grads.arrays[first_param_[l]];
                auto& dbeta = result.grads.arrays[first_param_[l] + 1];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        dgamma[j] += g(i, j) * lc.normalized(i, j);
                        dbeta[j] += g(i, j);
                    }
                if (cached_mode_ == Mode::Train) {
                    // dx = inv_std/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
                    std::vector<double> sum_dxhat(d, 0.0), sum_dxhat_xhat(d, 0.0);
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) {
                            const double dxhat = g(i, j) * gamma[j];
                            sum_dxhat[j] += dxhat;
                            sum_dxhat_xhat[j] += dxhat * lc.normalized(i, j);
                        }
                    const double nn = static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) {
                            const double dxhat = g(i, j) * gamma[j];
                            g(i, j) = lc.inv_std[j] / nn *
                                      (nn * dxhat - sum_dxhat[j] - lc.normalized(i, j) * sum_dxhat_xhat[j]);
                        }
                } else {
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) g(i, j) *= gamma[j] * lc.inv_std[j];
                }
                break;
            }
            case LayerKind::GradReverse:
                for (double& v : g.data()) v *= -s.lambda;
                break;
        }
    }
    if (!g.all_finite()) throw NumericError("backward: non-finite gradients");
    result.input_grad = std::move(g);
    return result;
}

}  // namespace alen
