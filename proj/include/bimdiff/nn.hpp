#pragma once

#include "bimdiff/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace bimdiff {

/// A named learnable tensor. Vectors are stored as (n x 1) matrices.
template <typename Scalar>
struct ParamTensor {
  std::string id;
  Matrix<Scalar> values;
  Matrix<Scalar> grad;

  ParamTensor() = default;
  ParamTensor(std::string name, Eigen::Index rows, Eigen::Index cols)
      : id(std::move(name)), values(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}

  std::vector<Eigen::Index> shape() const { return {values.rows(), values.cols()}; }
  Eigen::Index size() const { return values.size(); }
  void zero_grad() { grad.setZero(values.rows(), values.cols()); }
};

template <typename Scalar>
using ParamList = std::vector<ParamTensor<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
double global_grad_norm(const ParamList<Scalar>& params) {
  double s = 0.0;
  for (const auto* p : params) s += p->grad.template cast<double>().squaredNorm();
  return std::sqrt(s);
}

/// Scales all gradients so that their joint L2 norm is at most max_norm. Returns the pre-clip norm.
template <typename Scalar>
double clip_grad_norm(const ParamList<Scalar>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<Scalar>(max_norm / norm);
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

enum class Activation { Identity, Relu, Silu };

template <typename Scalar>
Matrix<Scalar> activate(Activation act, const Matrix<Scalar>& z) {
  switch (act) {
    case Activation::Relu:
      return z.cwiseMax(Scalar(0));
    case Activation::Silu:
      return z.array() / (Scalar(1) + (-z.array()).exp());
    case Activation::Identity:
      break;
  }
  return z;
}

/// d act(z) / dz, elementwise.
template <typename Scalar>
Matrix<Scalar> activate_grad(Activation act, const Matrix<Scalar>& z) {
  switch (act) {
    case Activation::Relu:
      return (z.array() > Scalar(0)).template cast<Scalar>();
    case Activation::Silu: {
      Matrix<Scalar> s = (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
      return (s.array() * (Scalar(1) + z.array() * (Scalar(1) - s.array()))).matrix();
    }
    case Activation::Identity:
      break;
  }
  return Matrix<Scalar>::Ones(z.rows(), z.cols());
}

template <typename Scalar>
struct MlpTrace {
  const void* owner = nullptr;
  std::vector<Matrix<Scalar>> inputs;       // input to each layer
  std::vector<Matrix<Scalar>> preacts;      // pre-activation of each layer
};

/// Dense feed-forward network: hidden layers use `activation`, the last layer is affine.
/// Inputs are column batches: each column is processed independently with shared weights.
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::vector<int> widths, Activation activation)
      : widths_(std::move(widths)), activation_(activation) {
    if (widths_.size() < 2) throw UsageError("mlp '" + name + "' needs at least two widths");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      if (widths_[l] < 1 || widths_[l + 1] < 1) throw UsageError("mlp '" + name + "' has a non-positive width");
      weights_.emplace_back(name + ".w" + std::to_string(l), widths_[l + 1], widths_[l]);
      biases_.emplace_back(name + ".b" + std::to_string(l), widths_[l + 1], 1);
    }
  }

  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  std::size_t layers() const { return weights_.size(); }
  Activation activation() const { return activation_; }
  const std::vector<int>& widths() const { return widths_; }

  ParamTensor<Scalar>& weight(std::size_t l) { return weights_.at(l); }
  ParamTensor<Scalar>& bias(std::size_t l) { return biases_.at(l); }
  const ParamTensor<Scalar>& weight(std::size_t l) const { return weights_.at(l); }
  const ParamTensor<Scalar>& bias(std::size_t l) const { return biases_.at(l); }

  void collect(ParamList<Scalar>& out) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void init_uniform(Rng& rng) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto* m : {&weights_[l].values, &biases_[l].values})
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = static_cast<Scalar>(dist(rng));
    }
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, MlpTrace<Scalar>* trace = nullptr) const {
    if (x.rows() != input_width())
      throw InvariantError("mlp input width " + std::to_string(x.rows()) + " != " + std::to_string(input_width()));
    if (trace) {
      trace->owner = this;
      trace->inputs.clear();
      trace->preacts.clear();
    }
    Matrix<Scalar> a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix<Scalar> z = weights_[l].values * a;
      z.colwise() += biases_[l].values.col(0);
      if (trace) {
        trace->inputs.push_back(a);
        trace->preacts.push_back(z);
      }
      a = (l + 1 == weights_.size()) ? z : activate(activation_, z);
    }
    return a;
  }

  /// Accumulates parameter gradients and returns dLoss/dInput.
  Matrix<Scalar> backward(const MlpTrace<Scalar>& trace, const Matrix<Scalar>& upstream) {
    if (trace.owner != this || trace.inputs.size() != weights_.size())
      throw InvariantError("mlp backward called with a trace from another forward pass");
    check_shape(upstream.rows() == output_width() && upstream.cols() == trace.inputs.front().cols(),
                "mlp upstream gradient");
    Matrix<Scalar> d = upstream;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      if (l + 1 != weights_.size()) d = d.cwiseProduct(activate_grad(activation_, trace.preacts[l]));
      weights_[l].grad.noalias() += d * trace.inputs[l].transpose();
      biases_[l].grad.col(0) += d.rowwise().sum();
      d = weights_[l].values.transpose() * d;
    }
    return d;
  }

 private:
  std::vector<int> widths_;
  Activation activation_ = Activation::Identity;
  std::vector<ParamTensor<Scalar>> weights_;
  std::vector<ParamTensor<Scalar>> biases_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, keyed by parameter id.
template <typename Scalar>
struct AdamState {
  std::map<std::string, std::pair<Matrix<Scalar>, Matrix<Scalar>>> moments;
  long step = 0;
};

/// Bias-corrected Adam update. Throws NumericError naming the first parameter whose gradient is
/// non-finite; in that case nothing is modified.
template <typename Scalar>
void adam_step(const ParamList<Scalar>& params, AdamState<Scalar>& state, const AdamOptions& opt) {
  for (const auto* p : params)
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient in parameter '" + p->id + "'");
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(opt.beta1), b2 = static_cast<Scalar>(opt.beta2);
  const auto step_size = static_cast<Scalar>(opt.lr / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto eps = static_cast<Scalar>(opt.eps);
  for (auto* p : params) {
    auto [it, fresh] = state.moments.try_emplace(p->id);
    auto& [m, v] = it->second;
    if (fresh) {
      m = Matrix<Scalar>::Zero(p->values.rows(), p->values.cols());
      v = Matrix<Scalar>::Zero(p->values.rows(), p->values.cols());
    }
    m = b1 * m + (Scalar(1) - b1) * p->grad;
    v = b2 * v + (Scalar(1) - b2) * p->grad.cwiseAbs2();
    p->values.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + eps);
  }
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  long checked = 0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor: gradients smaller than this are compared in absolute terms.
  double abs_floor = 1e-6;
  // Coordinates checked per tensor; <= 0 means every coordinate.
  long max_per_param = 0;
  std::uint64_t seed = 0;
};

/// Compares the gradients currently stored in `params` against central finite differences of
/// `loss`. `loss` must be deterministic and must not touch the gradient buffers it is checked against.
template <typename Scalar>
GradCheckReport finite_diff_check(const std::function<double()>& loss, const ParamList<Scalar>& params,
                                  const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  Rng rng(opt.seed);
  for (auto* p : params) {
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(p->size()));
    for (Eigen::Index i = 0; i < p->size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    if (opt.max_per_param > 0 && static_cast<long>(coords.size()) > opt.max_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(opt.max_per_param));
    }
    for (Eigen::Index i : coords) {
      Scalar& v = p->values.data()[i];
      const Scalar saved = v;
      v = saved + static_cast<Scalar>(opt.step);
      const double up = loss();
      v = saved - static_cast<Scalar>(opt.step);
      const double down = loss();
      v = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double analytic = static_cast<double>(p->grad.data()[i]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), opt.abs_floor});
      const double rel = std::abs(numeric - analytic) / denom;
      ++rep.checked;
      if (!(rel <= rep.max_rel_error)) {
        rep.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        rep.worst_param = p->id;
        rep.worst_index = i;
        rep.worst_analytic = analytic;
        rep.worst_numeric = numeric;
      }
    }
  }
  rep.passed = rep.max_rel_error < opt.tolerance;
  return rep;
}

}  // namespace bimdiff
