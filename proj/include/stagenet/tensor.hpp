#ifndef STAGENET_TENSOR_HPP
#define STAGENET_TENSOR_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "stagenet/common.hpp"

namespace stagenet::ad {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
using MatrixR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<long>;

inline long shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), 1L, std::multiplies<long>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// A shared dense value with an optional same-shape gradient. Copies are
// shallow: handles to the same node, so gradients recorded against an
// operation's inputs land on the caller's tensors.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = ArrayX<S>::Zero(shape_size(t.node_->shape));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_values(Shape shape, ArrayX<S> values, bool requires_grad = false) {
    if (shape_size(shape) != values.size()) {
      throw UsageError("tensor: " + shape_string(shape) + " incompatible with " +
                       std::to_string(values.size()) + " values");
    }
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar_value(S v, bool requires_grad = false) {
    ArrayX<S> a(1);
    a[0] = v;
    return from_values({1}, std::move(a), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long size() const { return node_->values.size(); }
  long dim(int i) const { return node_->shape.at(i); }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  ArrayX<S>& values() { return node_->values; }
  const ArrayX<S>& values() const { return node_->values; }
  S* data() { return node_->values.data(); }
  const S* data() const { return node_->values.data(); }

  S scalar() const {
    if (size() != 1) throw UsageError("tensor: scalar() on non-scalar");
    return node_->values[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return node_->grad.size() == node_->values.size(); }

  ArrayX<S>& grad() {
    if (!has_grad()) node_->grad = ArrayX<S>::Zero(node_->values.size());
    return node_->grad;
  }
  const ArrayX<S>& grad_ref() const { return node_->grad; }

  void zero_grad() {
    if (has_grad()) node_->grad.setZero();
  }

  void accumulate_grad(const ArrayX<S>& g) {
    if (!node_->requires_grad) return;
    grad() += g;
  }

  // Row-major matrix view over the flat storage.
  Eigen::Map<MatrixR<S>> matrix(long rows, long cols) {
    check_view(rows, cols);
    return Eigen::Map<MatrixR<S>>(node_->values.data(), rows, cols);
  }
  Eigen::Map<const MatrixR<S>> matrix(long rows, long cols) const {
    check_view(rows, cols);
    return Eigen::Map<const MatrixR<S>>(node_->values.data(), rows, cols);
  }
  Eigen::Map<MatrixR<S>> grad_matrix(long rows, long cols) {
    check_view(rows, cols);
    return Eigen::Map<MatrixR<S>>(grad().data(), rows, cols);
  }

 private:
  struct Node {
    Shape shape;
    ArrayX<S> values;
    ArrayX<S> grad;
    bool requires_grad = false;
  };

  void check_view(long rows, long cols) const {
    if (rows * cols != size()) {
      throw UsageError("tensor: bad matrix view " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " over " + shape_string(shape()));
    }
  }

  std::shared_ptr<Node> node_;
};

// Reverse-mode tape: operations append their backward closures in execution
// order, which is a topological order of the dataflow graph. One backward()
// walks the list once in reverse and then discards it.
template <typename S>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  void record(std::function<void()> backward_fn) {
    if (recording_) ops_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return ops_.size(); }

  void backward(Tensor<S>& loss) {
    if (loss.size() != 1) throw UsageError("tape: backward target must be scalar");
    loss.grad()[0] = S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

 private:
  bool recording_;
  std::vector<std::function<void()>> ops_;
};

}  // namespace stagenet::ad

#endif  // STAGENET_TENSOR_HPP
