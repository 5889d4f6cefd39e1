#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// Every operation whose inputs require gradients records a node holding its
// inputs and a backward rule. Nodes carry a monotone sequence number, so the
// set of nodes reachable from a loss, sorted by that number, is the
// computation tape for that loss; `backward` replays it in reverse.
//
// Almost all operations work on rank-2 tensors (vectors are 1 x n rows,
// scalars are 1 x 1). Values are 64-bit floats throughout.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lsds/errors.hpp"

namespace lsds {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

// Backward rule: given the node's own value and the gradient flowing into it,
// accumulate into the gradient buffers of the inputs that require grad.
using BackwardFn = std::function<void(std::span<const double> value,
                                      std::span<const double> grad_out,
                                      std::span<Tensor> inputs)>;

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor column(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data, bool requires_grad = false);

  // Records a custom operation on the tape. `backward` is only kept when some
  // input requires grad (and gradient recording is enabled).
  static Tensor from_op(Shape shape, std::vector<double> value,
                        std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;

  std::span<const double> data() const;
  // In-place access for leaf tensors (parameters, optimizer updates).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  // Gradients left by a backward pass that did not reach this tensor read as
  // zero. Writable gradient buffer; allocated (zeroed) on first access. Empty span
  // when the tensor does not require grad.
  std::span<double> grad_buffer();
  void zero_grad();

  // Same values, no history.
  Tensor detach() const;
  std::uint64_t tape_position() const;
  bool is_leaf() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend void backward(const Tensor& loss);

  std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::uint64_t grad_generation = 0;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};
}  // namespace detail

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Populates grad of every requires-grad tensor reachable from `loss` with
// d loss / d tensor. Buffers of reachable tensors are reset first, so calling
// twice gives the same result. Throws ContractError for non-scalar loss.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitive operations.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// v is 1 x n; result is m x n with every row equal to v.
Tensor broadcast_rows(const Tensor& v, std::size_t m);
// c is m x 1; result is m x n with every column equal to c.
Tensor broadcast_cols(const Tensor& c, std::size_t n);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

// axis 0 reduces rows (result 1 x n); axis 1 reduces columns (result m x 1).
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// out[k] = a[index[k]].
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
// out[index[k]] += a[k]; out has `n_out` rows.
Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> index,
                        std::size_t n_out);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
// Softmax along the last axis, row by row.
Tensor softmax(const Tensor& a);
// Gradient is zero where the input lies outside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace lsds
