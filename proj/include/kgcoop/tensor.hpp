#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgcoop/errors.hpp"

namespace kgcoop {

// Dense 64-bit float tensor, rank 1 or 2, row-major.
//
// Tensor is a shared handle: copying it copies the handle, not the buffer,
// which is what lets a tape node refer to the same storage the optimizer
// later updates. Constness of a handle is therefore advisory; clone()
// detaches. Scalars are represented as rank-1 tensors of size 1.

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // latest backward() export; overwritten, not
                             // accumulated, across calls
  bool trainable = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool trainable = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool trainable = false);
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t ndim() const { return d_->shape.size(); }
  std::size_t size() const { return d_->data.size(); }
  bool is_scalar() const { return d_ && d_->data.size() == 1; }

  // rank-2 accessors; rank-1 tensors count as a single row
  std::size_t rows() const;
  std::size_t cols() const;

  double item() const;  // ContractError unless scalar
  double at(std::size_t i) const { return d_->data.at(i); }
  double at(std::size_t r, std::size_t c) const {
    return d_->data.at(r * cols() + c);
  }
  void set(std::size_t i, double v) { d_->data.at(i) = v; }
  void set(std::size_t r, std::size_t c, double v) {
    d_->data.at(r * cols() + c) = v;
  }

  std::vector<double>& values() const { return d_->data; }

  bool has_grad() const { return d_ && !d_->grad.empty(); }
  const std::vector<double>& grad() const;  // ContractError if absent
  void clear_grad() { d_->grad.clear(); }

  bool trainable() const { return d_->trainable; }
  void set_trainable(bool t) { d_->trainable = t; }

  Tensor clone() const;  // deep copy of the data, no grad, same trainability
  bool shares_storage(const Tensor& o) const { return d_ == o.d_; }

  detail::TensorData* key() const { return d_.get(); }  // identity for tapes

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<detail::TensorData> d_;
  friend class Graph;
  friend class GradStore;
};

// Per-backward gradient buffers. Gradients live here, keyed by storage
// identity, so a backward pass never mutates frozen tensors; only trainable
// leaves get their grad exported at the end. Accumulation is additive: a
// tensor consumed by several ops collects every contribution.
class GradStore {
 public:
  std::vector<double>& of(const Tensor& t);

 private:
  std::unordered_map<const detail::TensorData*, std::vector<double>> bufs_;
  friend class Graph;
};

// Tape of executed operations. Each op records the handles it touched and a
// closure that pushes the output gradient back to the inputs. backward()
// replays the closures once, in reverse execution order. A graph holds no
// state shared with any other graph; training builds a fresh one per step.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  using BackwardFn = std::function<void(GradStore&)>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn back);
  void backward(const Tensor& loss);
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn back;
  };
  std::vector<Node> nodes_;
};

// --- operations -----------------------------------------------------------
// All of these validate shapes (ShapeError names both operands), compute the
// result, and record a node on the graph.

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);     // {m,k}x{k,n}
Tensor matmul_nt(Graph& g, const Tensor& a, const Tensor& b);  // a * b^T
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);  // elementwise
Tensor affine(Graph& g, const Tensor& x, double scale, double shift);
Tensor add_rowwise(Graph& g, const Tensor& x, const Tensor& bias);
Tensor gelu(Graph& g, const Tensor& x);
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps);
Tensor softmax_rows(Graph& g, const Tensor& z);
Tensor log_softmax_rows(Graph& g, const Tensor& z);
Tensor normalize_rows(Graph& g, const Tensor& x);  // rows to unit L2 norm
Tensor cosine_similarity(Graph& g, const Tensor& x, const Tensor& w);
Tensor squared_l2(Graph& g, const Tensor& a, const Tensor& b);
Tensor sum_all(Graph& g, const Tensor& x);
Tensor mean_all(Graph& g, const Tensor& x);
Tensor pick(Graph& g, const Tensor& x, const std::vector<int>& cols);
Tensor concat_rows(Graph& g, const Tensor& top, const Tensor& bottom_row);
Tensor stack_rows(Graph& g, const std::vector<Tensor>& rows);
Tensor slice_cols(Graph& g, const Tensor& x, std::size_t c0, std::size_t c1);
Tensor concat_cols(Graph& g, const Tensor& a, const Tensor& b);
Tensor take_row(Graph& g, const Tensor& x, std::size_t r);
Tensor reshape(Graph& g, const Tensor& x, Shape shape);

// Central-difference gradient of f at x: (f(x+h e_i) - f(x-h e_i)) / 2h per
// coordinate. The returned tensor has x's shape and holds the estimates.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

}  // namespace kgcoop
