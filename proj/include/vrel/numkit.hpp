#pragma once

// Dense layers, two-layer perceptrons with hand-written backward passes, Adam,
// and a central finite-difference gradient estimator. Everything is templated
// on the scalar type; the rest of the library instantiates it with double.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrel/errors.hpp"
#include "vrel/random.hpp"

namespace vrel {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Index = Eigen::Index;

template <typename Scalar>
using BlockList = std::vector<std::span<Scalar>>;

template <typename Derived>
std::span<typename Derived::Scalar> as_span(Eigen::PlainObjectBase<Derived>& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename Derived>
std::span<const typename Derived::Scalar> as_span(const Eigen::PlainObjectBase<Derived>& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename Scalar>
std::vector<std::span<const Scalar>> const_blocks(const BlockList<Scalar>& blocks) {
    return {blocks.begin(), blocks.end()};
}

inline void require_shape(bool ok, const char* what, Index expected, Index got) {
    if (!ok) {
        std::ostringstream os;
        os << what << ": expected dimension " << expected << ", got " << got;
        throw ShapeError(os.str());
    }
}

// Uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
template <typename Scalar>
MatrixX<Scalar> glorot_uniform(Index rows, Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    MatrixX<Scalar> m(rows, cols);
    // Column-major fill order is part of the reproducibility contract.
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(uniform(rng, -limit, limit));
    return m;
}

// ---------------------------------------------------------------------------
// Dense (affine) layer: y = W x + b, optionally without b.

template <typename Scalar>
class Dense {
public:
    Dense() = default;
    Dense(Index in, Index out, bool bias)
        : w_(MatrixX<Scalar>::Zero(out, in)),
          b_(bias ? VectorX<Scalar>::Zero(out) : VectorX<Scalar>()),
          has_bias_(bias) {}

    static Dense glorot(Index in, Index out, bool bias, Rng& rng) {
        Dense d(in, out, bias);
        d.w_ = glorot_uniform<Scalar>(out, in, rng);
        return d;
    }

    Index in_dim() const { return w_.cols(); }
    Index out_dim() const { return w_.rows(); }
    bool has_bias() const { return has_bias_; }

    const MatrixX<Scalar>& weight() const { return w_; }
    const VectorX<Scalar>& bias() const { return b_; }

    MatrixX<Scalar>& weight_mut() {
        ++generation_;
        return w_;
    }
    VectorX<Scalar>& bias_mut() {
        if (!has_bias_) throw std::logic_error("Dense: layer has no bias");
        ++generation_;
        return b_;
    }

    // Weight then bias; a bias-free layer still reports an empty bias block
    // so block positions do not depend on bias presence.
    BlockList<Scalar> blocks() {
        ++generation_;
        return {as_span(w_), as_span(b_)};
    }
    std::vector<std::span<const Scalar>> blocks() const { return {as_span(w_), as_span(b_)}; }

    Dense zeros_like() const { return Dense(in_dim(), out_dim(), has_bias_); }

    std::uint64_t generation() const { return generation_; }

    bool operator==(const Dense& o) const {
        return has_bias_ == o.has_bias_ && w_ == o.w_ && b_ == o.b_;
    }

private:
    MatrixX<Scalar> w_;
    VectorX<Scalar> b_;
    bool has_bias_ = false;
    std::uint64_t generation_ = 0;
};

template <typename Scalar>
struct DenseCache {
    const Dense<Scalar>* owner = nullptr;
    std::uint64_t generation = 0;
    MatrixX<Scalar> input;
};

template <typename Scalar>
void check_cache_owner(const void* owner, std::uint64_t cached, const void* params, std::uint64_t current) {
    if (owner != params || cached != current)
        throw std::logic_error("backward called with a cache from different or since-mutated parameters");
}

// Columns of `x` are independent samples.
template <typename Scalar>
MatrixX<Scalar> dense_forward(const Dense<Scalar>& layer, const MatrixX<Scalar>& x,
                              DenseCache<Scalar>* cache = nullptr) {
    require_shape(x.rows() == layer.in_dim(), "dense_forward input", layer.in_dim(), x.rows());
    MatrixX<Scalar> y = layer.weight() * x;
    if (layer.has_bias()) y.colwise() += layer.bias();
    if (cache) {
        cache->owner = &layer;
        cache->generation = layer.generation();
        cache->input = x;
    }
    return y;
}

// Accumulates parameter gradients into `grad` and returns dL/dx.
template <typename Scalar>
MatrixX<Scalar> dense_backward(const Dense<Scalar>& layer, const DenseCache<Scalar>& cache,
                               const MatrixX<Scalar>& upstream, Dense<Scalar>& grad) {
    check_cache_owner<Scalar>(cache.owner, cache.generation, &layer, layer.generation());
    require_shape(upstream.rows() == layer.out_dim(), "dense_backward upstream", layer.out_dim(),
                  upstream.rows());
    require_shape(upstream.cols() == cache.input.cols(), "dense_backward batch", cache.input.cols(),
                  upstream.cols());
    grad.weight_mut().noalias() += upstream * cache.input.transpose();
    if (layer.has_bias()) grad.bias_mut() += upstream.rowwise().sum();
    return layer.weight().transpose() * upstream;
}

// ---------------------------------------------------------------------------
// Two-layer perceptron: out = L2(dropout(ReLU(L1(in)))).

template <typename Scalar>
class Mlp {
public:
    Mlp() = default;
    Mlp(Index in, Index hidden, Index out, bool bias, Scalar dropout = Scalar(0))
        : l1_(in, hidden, bias), l2_(hidden, out, bias), dropout_(dropout) {
        check_dropout();
    }

    static Mlp glorot(Index in, Index hidden, Index out, bool bias, Scalar dropout, Rng& rng) {
        Mlp m;
        m.l1_ = Dense<Scalar>::glorot(in, hidden, bias, rng);
        m.l2_ = Dense<Scalar>::glorot(hidden, out, bias, rng);
        m.dropout_ = dropout;
        m.check_dropout();
        return m;
    }

    Index in_dim() const { return l1_.in_dim(); }
    Index hidden_dim() const { return l1_.out_dim(); }
    Index out_dim() const { return l2_.out_dim(); }
    bool has_bias() const { return l1_.has_bias(); }
    Scalar dropout() const { return dropout_; }

    const Dense<Scalar>& layer1() const { return l1_; }
    const Dense<Scalar>& layer2() const { return l2_; }
    Dense<Scalar>& layer1_mut() {
        ++generation_;
        return l1_;
    }
    Dense<Scalar>& layer2_mut() {
        ++generation_;
        return l2_;
    }

    // W1, b1, W2, b2.
    BlockList<Scalar> blocks() {
        ++generation_;
        auto a = l1_.blocks();
        auto b = l2_.blocks();
        a.insert(a.end(), b.begin(), b.end());
        return a;
    }
    std::vector<std::span<const Scalar>> blocks() const {
        auto a = l1_.blocks();
        auto b = l2_.blocks();
        a.insert(a.end(), b.begin(), b.end());
        return a;
    }

    Mlp zeros_like() const { return Mlp(in_dim(), hidden_dim(), out_dim(), has_bias(), dropout_); }

    std::uint64_t generation() const { return generation_ + l1_.generation() + l2_.generation(); }

    bool operator==(const Mlp& o) const {
        return l1_ == o.l1_ && l2_ == o.l2_ && dropout_ == o.dropout_;
    }

private:
    void check_dropout() const {
        if (!(dropout_ >= Scalar(0) && dropout_ < Scalar(1)))
            throw ShapeError("dropout rate must lie in [0,1)");
    }

    Dense<Scalar> l1_, l2_;
    Scalar dropout_ = Scalar(0);
    std::uint64_t generation_ = 0;
};

template <typename Scalar>
struct MlpCache {
    const Mlp<Scalar>* owner = nullptr;
    std::uint64_t generation = 0;
    DenseCache<Scalar> first, second;
    MatrixX<Scalar> pre;   // L1 output before ReLU
    MatrixX<Scalar> mask;  // inverted-dropout scale per unit; empty when inactive
};

// Dropout is applied only when `training` is set and the rate is positive; the
// mask is then drawn from `rng`, which must be non-null.
template <typename Scalar>
MatrixX<Scalar> mlp_forward(const Mlp<Scalar>& mlp, const MatrixX<Scalar>& x, bool training, Rng* rng,
                            MlpCache<Scalar>* cache = nullptr) {
    require_shape(x.rows() == mlp.in_dim(), "mlp_forward input", mlp.in_dim(), x.rows());
    DenseCache<Scalar> c1, c2;
    MatrixX<Scalar> pre = dense_forward(mlp.layer1(), x, cache ? &c1 : nullptr);
    MatrixX<Scalar> hidden = pre.cwiseMax(Scalar(0));
    MatrixX<Scalar> mask;
    if (training && mlp.dropout() > Scalar(0)) {
        if (!rng) throw std::logic_error("mlp_forward: training with dropout needs an rng");
        const Scalar keep = Scalar(1) - mlp.dropout();
        const Scalar scale = Scalar(1) / keep;
        mask.resize(hidden.rows(), hidden.cols());
        for (Index j = 0; j < mask.cols(); ++j)
            for (Index i = 0; i < mask.rows(); ++i)
                mask(i, j) = uniform01(*rng) < static_cast<double>(mlp.dropout()) ? Scalar(0) : scale;
        hidden.array() *= mask.array();
    }
    MatrixX<Scalar> out = dense_forward(mlp.layer2(), hidden, cache ? &c2 : nullptr);
    if (cache) {
        cache->owner = &mlp;
        cache->generation = mlp.generation();
        cache->first = std::move(c1);
        cache->second = std::move(c2);
        cache->pre = std::move(pre);
        cache->mask = std::move(mask);
    }
    return out;
}

template <typename Scalar>
VectorX<Scalar> mlp_forward(const Mlp<Scalar>& mlp, const VectorX<Scalar>& x, bool training, Rng* rng,
                            MlpCache<Scalar>* cache = nullptr) {
    MatrixX<Scalar> col = x;
    return mlp_forward(mlp, col, training, rng, cache).col(0);
}

// Accumulates dL/dparams into `grad` (same shapes as `mlp`) and returns dL/dx.
template <typename Scalar>
MatrixX<Scalar> mlp_backward(const Mlp<Scalar>& mlp, const MlpCache<Scalar>& cache,
                             const MatrixX<Scalar>& upstream, Mlp<Scalar>& grad) {
    check_cache_owner<Scalar>(cache.owner, cache.generation, &mlp, mlp.generation());
    MatrixX<Scalar> d_hidden = dense_backward(mlp.layer2(), cache.second, upstream, grad.layer2_mut());
    if (cache.mask.size() != 0) d_hidden.array() *= cache.mask.array();
    d_hidden.array() *= (cache.pre.array() > Scalar(0)).template cast<Scalar>();
    return dense_backward(mlp.layer1(), cache.first, d_hidden, grad.layer1_mut());
}

template <typename Scalar>
VectorX<Scalar> mlp_backward(const Mlp<Scalar>& mlp, const MlpCache<Scalar>& cache,
                             const VectorX<Scalar>& upstream, Mlp<Scalar>& grad) {
    MatrixX<Scalar> col = upstream;
    return mlp_backward(mlp, cache, col, grad).col(0);
}

// ---------------------------------------------------------------------------
// Adam with bias-corrected moments.

template <typename Scalar>
struct AdamConfig {
    Scalar lr = Scalar(1e-3);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
};

template <typename Scalar>
class Adam {
public:
    Adam(AdamConfig<Scalar> cfg, const std::vector<std::size_t>& block_sizes) : cfg_(cfg) {
        for (auto n : block_sizes) {
            m_.emplace_back(n, Scalar(0));
            v_.emplace_back(n, Scalar(0));
        }
    }

    template <typename Blocks>
    static std::vector<std::size_t> sizes_of(const Blocks& blocks) {
        std::vector<std::size_t> s;
        for (const auto& b : blocks) s.push_back(b.size());
        return s;
    }

    void step(const BlockList<Scalar>& params, const std::vector<std::span<const Scalar>>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ShapeError("adam_step: block count mismatch");
        for (std::size_t b = 0; b < params.size(); ++b) {
            if (params[b].size() != m_[b].size() || grads[b].size() != m_[b].size())
                throw ShapeError("adam_step: block " + std::to_string(b) + " size mismatch");
            for (std::size_t j = 0; j < grads[b].size(); ++j) {
                if (!std::isfinite(grads[b][j])) {
                    std::ostringstream os;
                    os << "non-finite gradient at block " << b << " index " << j << " (value "
                       << grads[b][j] << ", step " << (t_ + 1) << ")";
                    throw NumericError(os.str());
                }
            }
        }
        ++t_;
        const Scalar c1 = Scalar(1) - std::pow(cfg_.beta1, static_cast<Scalar>(t_));
        const Scalar c2 = Scalar(1) - std::pow(cfg_.beta2, static_cast<Scalar>(t_));
        for (std::size_t b = 0; b < params.size(); ++b) {
            auto& m = m_[b];
            auto& v = v_[b];
            for (std::size_t j = 0; j < m.size(); ++j) {
                const Scalar g = grads[b][j];
                m[j] = cfg_.beta1 * m[j] + (Scalar(1) - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (Scalar(1) - cfg_.beta2) * g * g;
                const Scalar m_hat = m[j] / c1;
                const Scalar v_hat = v[j] / c2;
                params[b][j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            }
        }
    }

    std::int64_t steps() const { return t_; }
    const AdamConfig<Scalar>& config() const { return cfg_; }
    const std::vector<std::vector<Scalar>>& first_moments() const { return m_; }
    const std::vector<std::vector<Scalar>>& second_moments() const { return v_; }

private:
    AdamConfig<Scalar> cfg_;
    std::vector<std::vector<Scalar>> m_, v_;
    std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Central differences, one parameter at a time. `loss` must be deterministic.
// Each parameter is restored bit-exactly after probing.

template <typename Scalar, typename LossFn>
std::vector<Scalar> finite_diff_grad(LossFn&& loss, std::span<Scalar> params, Scalar step) {
    std::vector<Scalar> g(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
        const Scalar saved = params[j];
        params[j] = saved + step;
        const Scalar up = loss();
        params[j] = saved - step;
        const Scalar down = loss();
        params[j] = saved;
        g[j] = (up - down) / (Scalar(2) * step);
    }
    return g;
}

template <typename Scalar, typename LossFn>
std::vector<std::vector<Scalar>> finite_diff_grad(LossFn&& loss, const BlockList<Scalar>& blocks,
                                                  Scalar step) {
    std::vector<std::vector<Scalar>> out;
    out.reserve(blocks.size());
    for (auto b : blocks) out.push_back(finite_diff_grad(loss, b, step));
    return out;
}

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
    if (z > 0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

// log sigma(z) = -softplus(-z).
inline double log_sigmoid(double z) { return -softplus(-z); }

}  // namespace vrel
