#pragma once

// Reverse-mode differentiation over batched real matrices.
//
// Every value on the tape is a real matrix whose columns are the samples of a
// minibatch. Parameters live in a ParameterStore; a parameter may be pulled
// onto the tape any number of times and the gradients of all its sites are
// summed by backward().

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mumimo/errors.hpp"

namespace mumimo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Matrix value;
};

/// Owns every trainable array. Ids are registration indices; iteration order
/// is registration order (this is also the checkpoint order).
class ParameterStore {
 public:
  ParamId add(std::string name, Matrix value) {
    params_.push_back({std::move(name), std::move(value)});
    return params_.size() - 1;
  }

  const Matrix& value(ParamId id) const { return params_.at(id).value; }
  Matrix& value(ParamId id) { return params_.at(id).value; }
  const std::string& name(ParamId id) const { return params_.at(id).name; }
  std::size_t size() const { return params_.size(); }
  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter>& all() { return params_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      const auto& x = a.params_[i];
      const auto& y = b.params_[i];
      if (x.name != y.name || x.value.rows() != y.value.rows() || x.value.cols() != y.value.cols() ||
          x.value != y.value)
        return false;
    }
    return true;
  }

 private:
  std::vector<Parameter> params_;
};

class GradientMap {
 public:
  void accumulate(ParamId id, const Matrix& g) {
    auto it = grads_.find(id);
    if (it == grads_.end())
      grads_.emplace(id, g);
    else
      it->second += g;
  }

  GradientMap& operator+=(const GradientMap& other) {
    for (const auto& [id, g] : other.grads_) accumulate(id, g);
    return *this;
  }

  bool contains(ParamId id) const { return grads_.count(id) != 0; }
  const Matrix& at(ParamId id) const { return grads_.at(id); }
  const std::map<ParamId, Matrix>& entries() const { return grads_; }
  std::size_t size() const { return grads_.size(); }

  /// Removes and returns the gradient of `id` (zero-size matrix if absent).
  Matrix extract(ParamId id) {
    auto it = grads_.find(id);
    if (it == grads_.end()) return {};
    Matrix g = std::move(it->second);
    grads_.erase(it);
    return g;
  }

 private:
  std::map<ParamId, Matrix> grads_;
};

struct Var {
  std::size_t index = 0;
};

class Tape {
 public:
  /// Receives the tape and the output gradient; adds into input gradients
  /// via Tape::grad_of.
  using BackwardFn = std::function<void(Tape&, const Matrix& output_grad)>;

  explicit Tape(const ParameterStore& params) : params_(&params) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const ParameterStore& params() const { return *params_; }

  Var constant(Matrix value) { return push(std::move(value), {}, nullptr); }

  /// Records one use site of a stored parameter.
  Var parameter(ParamId id) {
    const Var v = push(params_->value(id), {}, nullptr);
    sites_[id].push_back(v.index);
    return v;
  }

  /// General node. `inputs` only documents the dependency; the backward
  /// closure decides what flows where.
  Var record(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
    return push(std::move(value), std::move(inputs), std::move(backward));
  }

  const Matrix& value(Var v) const { return nodes_.at(v.index).value; }

  /// Gradient buffer of a node, allocated (zero) on first access. Only valid
  /// during backward().
  Matrix& grad_of(Var v) {
    auto& node = nodes_.at(v.index);
    if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    return node.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  const std::map<ParamId, std::vector<std::size_t>>& sites() const { return sites_; }
  /// Inputs of every ReLU recorded so far (pre-activations).
  const std::vector<Var>& relu_inputs() const { return relu_inputs_; }

  // Primitives --------------------------------------------------------------

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    return record(value(a) + value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
      t.grad_of(a) += g;
      t.grad_of(b) += g;
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    return record(value(a) - value(b), {a, b}, [a, b](Tape& t, const Matrix& g) {
      t.grad_of(a) += g;
      t.grad_of(b) -= g;
    });
  }

  Var scale(Var a, double s) {
    return record(s * value(a), {a}, [a, s](Tape& t, const Matrix& g) { t.grad_of(a) += s * g; });
  }

  /// W x + b with b (a column) broadcast over the batch.
  Var affine(Var w, Var x, Var b) {
    const Matrix& wv = value(w);
    const Matrix& xv = value(x);
    const Matrix& bv = value(b);
    if (wv.cols() != xv.rows() || bv.rows() != wv.rows() || bv.cols() != 1)
      throw DimensionError("affine: W is " + shape(wv) + ", x is " + shape(xv) + ", b is " + shape(bv));
    Matrix out = wv * xv;
    out.colwise() += bv.col(0);
    return record(std::move(out), {w, x, b}, [w, x, b](Tape& t, const Matrix& g) {
      t.grad_of(w).noalias() += g * t.value(x).transpose();
      t.grad_of(x).noalias() += t.value(w).transpose() * g;
      t.grad_of(b) += g.rowwise().sum();
    });
  }

  /// max(0, x); the derivative at exactly 0 is taken as 0.
  Var relu(Var x) {
    relu_inputs_.push_back(x);
    Matrix out = value(x).cwiseMax(0.0);
    return record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
      t.grad_of(x) += (t.value(x).array() > 0.0).select(g, 0.0);
    });
  }

  /// Scalar sum of squares of all entries.
  Var sum_squares(Var x) {
    Matrix out(1, 1);
    out(0, 0) = value(x).squaredNorm();
    return record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
      t.grad_of(x) += (2.0 * g(0, 0)) * t.value(x);
    });
  }

  /// Scalar sum of all entries.
  Var sum(Var x) {
    Matrix out(1, 1);
    out(0, 0) = value(x).sum();
    return record(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
      t.grad_of(x).array() += g(0, 0);
    });
  }

  /// Scalar sum(x .* weights); handy for seeding a chosen output gradient.
  Var weighted_sum(Var x, Matrix weights) {
    if (weights.rows() != value(x).rows() || weights.cols() != value(x).cols())
      throw DimensionError("weighted_sum: weight shape differs");
    Matrix out(1, 1);
    out(0, 0) = value(x).cwiseProduct(weights).sum();
    return record(std::move(out), {x}, [x, w = std::move(weights)](Tape& t, const Matrix& g) {
      t.grad_of(x) += g(0, 0) * w;
    });
  }

  /// Vertical concatenation (rows) of nodes with equal column count.
  Var vstack(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("vstack: nothing to stack");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts.front()).cols();
    for (Var p : parts) {
      if (value(p).cols() != cols) throw DimensionError("vstack: column counts differ");
      rows += value(p).rows();
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    return record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
      Eigen::Index at = 0;
      for (Var p : parts) {
        const Eigen::Index r = t.value(p).rows();
        t.grad_of(p) += g.middleRows(at, r);
        at += r;
      }
    });
  }

  // Backward ----------------------------------------------------------------

  /// Reverse sweep from a 1x1 node. Nodes are visited in exact reverse
  /// order of recording; returns the summed gradient of every parameter site.
  GradientMap backward(Var loss, double seed = 1.0) {
    if (nodes_.empty()) throw std::logic_error("backward called on an empty tape");
    if (value(loss).size() != 1) throw DimensionError("backward needs a scalar loss node");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    grad_of(loss)(0, 0) = seed;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.grad.size() == 0 || !node.backward) continue;
      // The closure may grow other nodes' gradient buffers, never this one.
      const Matrix g = node.grad;
      node.backward(*this, g);
    }
    GradientMap out;
    for (const auto& [id, where] : sites_)
      for (std::size_t index : where) {
        const auto& node = nodes_[index];
        if (node.grad.size() != 0)
          out.accumulate(id, node.grad);
        else
          out.accumulate(id, Matrix::Zero(node.value.rows(), node.value.cols()));
      }
    return out;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<Var> inputs;
    BackwardFn backward;
  };

  Var push(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
    for (Var in : inputs)
      if (in.index >= nodes_.size()) throw std::out_of_range("tape input refers to a future node");
    nodes_.push_back({std::move(value), Matrix(), std::move(inputs), std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  static std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw DimensionError(std::string(op) + ": shapes " + shape(value(a)) + " and " + shape(value(b)) +
                           " differ");
  }

  const ParameterStore* params_;
  std::vector<Node> nodes_;
  std::map<ParamId, std::vector<std::size_t>> sites_;
  std::vector<Var> relu_inputs_;
};

}  // namespace mumimo
