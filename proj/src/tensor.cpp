#include "lsds/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace lsds {

namespace {

std::atomic<std::uint64_t> g_sequence{0};
// Bumped by every backward pass. A gradient stamped with an older value
// belongs to a loss this tensor did not feed, and reads as zero.
std::atomic<std::uint64_t> g_generation{0};
thread_local bool t_grad_enabled = true;

std::uint64_t next_sequence() {
  return g_sequence.fetch_add(1, std::memory_order_relaxed) + 1;
}

void require_rank2(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value");
    }
  }
}

// Applies f elementwise; df(x, y) gives dy/dx from input x and output y.
template <typename F, typename DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
  std::span<const double> in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t k = 0; k < in.size(); ++k) out[k] = f(in[k]);
  require_finite(out, op);
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [df](std::span<const double> value, std::span<const double> g,
           std::span<Tensor> inputs) {
        std::span<double> ga = inputs[0].grad_buffer();
        std::span<const double> x = inputs[0].data();
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * df(x[k], value[k]);
      });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k) os << 'x';
    os << shape[k];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
  }
  if (shape_size(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = next_sequence();
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(shape_size(shape), 0.0);
  return from(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape_size(shape), value);
  return from(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({1, n}, std::move(values), requires_grad);
}

Tensor Tensor::column(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({n, 1}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data, bool requires_grad) {
  return from({rows, cols}, std::move(data), requires_grad);
}

Tensor Tensor::from_op(Shape shape, std::vector<double> value,
                       std::vector<Tensor> inputs, BackwardFn backward_fn) {
  Tensor out = from(std::move(shape), std::move(value), false);
  if (!t_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs = std::move(inputs);
  out.node_->backward = std::move(backward_fn);
  return out;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("shape of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  return s.empty() ? 1 : s[0];
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  return s.size() < 2 ? 1 : s[1];
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("data of undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("data of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value.at(r * cols() + c);
}

std::vector<double> Tensor::to_vector() const {
  return std::vector<double>(data().begin(), data().end());
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

namespace {

void refresh_grad(detail::Node& n) {
  const std::uint64_t gen = g_generation.load(std::memory_order_relaxed);
  if (n.grad_generation != gen && !n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  n.grad_generation = gen;
}

}  // namespace

std::span<const double> Tensor::grad() const {
  if (!node_) throw ContractError("grad of undefined tensor");
  refresh_grad(*node_);
  return node_->grad;
}

std::span<double> Tensor::grad_buffer() {
  if (!node_ || !node_->requires_grad) return {};
  refresh_grad(*node_);
  if (node_->grad.size() != node_->value.size()) {
    node_->grad.assign(node_->value.size(), 0.0);
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && node_->requires_grad) {
    node_->grad.assign(node_->value.size(), 0.0);
    node_->grad_generation = g_generation.load(std::memory_order_relaxed);
  }
}

Tensor Tensor::detach() const { return from(shape(), to_vector(), false); }

std::uint64_t Tensor::tape_position() const { return node_ ? node_->seq : 0; }

bool Tensor::is_leaf() const { return !node_ || !node_->backward; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) return;

  // Collect the tape: every requires-grad node reachable from the loss.
  std::vector<detail::Node*> tape;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node_.get()};
  seen.insert(loss.node_.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    tape.push_back(n);
    for (Tensor& in : n->inputs) {
      detail::Node* p = in.node_.get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back(p);
    }
  }
  std::sort(tape.begin(), tape.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  const std::uint64_t gen = g_generation.fetch_add(1, std::memory_order_relaxed) + 1;
  for (detail::Node* n : tape) {
    n->grad.assign(n->value.size(), 0.0);
    n->grad_generation = gen;
  }
  loss.node_->grad[0] = 1.0;
  for (detail::Node* n : tape) {
    if (n->backward) n->backward(n->value, n->grad, n->inputs);
  }
}

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::span<const double> A = a.data(), B = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  require_finite(out, "matmul");
  return Tensor::from_op(
      {m, n}, std::move(out), {a, b},
      [m, k, n](std::span<const double>, std::span<const double> g,
                std::span<Tensor> in) {
        std::span<const double> A = in[0].data(), B = in[1].data();
        if (in[0].requires_grad()) {
          std::span<double> ga = in[0].grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (in[1].requires_grad()) {
          std::span<double> gb = in[1].grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = A[i * k + p];
              if (aip == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
            }
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::span<const double> x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + y[k];
  require_finite(out, "add");
  return Tensor::from_op(a.shape(), std::move(out), {a, b},
                         [](std::span<const double>, std::span<const double> g,
                            std::span<Tensor> in) {
                           for (int s = 0; s < 2; ++s) {
                             std::span<double> gi = in[s].grad_buffer();
                             for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += g[k];
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::span<const double> x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] - y[k];
  require_finite(out, "sub");
  return Tensor::from_op(a.shape(), std::move(out), {a, b},
                         [](std::span<const double>, std::span<const double> g,
                            std::span<Tensor> in) {
                           std::span<double> ga = in[0].grad_buffer();
                           for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k];
                           std::span<double> gb = in[1].grad_buffer();
                           for (std::size_t k = 0; k < gb.size(); ++k) gb[k] -= g[k];
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::span<const double> x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * y[k];
  require_finite(out, "mul");
  return Tensor::from_op(a.shape(), std::move(out), {a, b},
                         [](std::span<const double>, std::span<const double> g,
                            std::span<Tensor> in) {
                           std::span<const double> x = in[0].data(), y = in[1].data();
                           std::span<double> ga = in[0].grad_buffer();
                           for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * y[k];
                           std::span<double> gb = in[1].grad_buffer();
                           for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g[k] * x[k];
                         });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; },
               [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Tensor broadcast_rows(const Tensor& v, std::size_t m) {
  require_rank2(v, "broadcast_rows");
  if (v.rows() != 1) {
    throw DimensionError("broadcast_rows: expected 1 x n, got " + shape_string(v.shape()));
  }
  const std::size_t n = v.cols();
  std::span<const double> x = v.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) std::copy(x.begin(), x.end(), out.begin() + i * n);
  return Tensor::from_op({m, n}, std::move(out), {v},
                         [m, n](std::span<const double>, std::span<const double> g,
                                std::span<Tensor> in) {
                           std::span<double> gv = in[0].grad_buffer();
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j];
                         });
}

Tensor broadcast_cols(const Tensor& c, std::size_t n) {
  require_rank2(c, "broadcast_cols");
  if (c.cols() != 1) {
    throw DimensionError("broadcast_cols: expected m x 1, got " + shape_string(c.shape()));
  }
  const std::size_t m = c.rows();
  std::span<const double> x = c.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    std::fill(out.begin() + i * n, out.begin() + (i + 1) * n, x[i]);
  return Tensor::from_op({m, n}, std::move(out), {c},
                         [m, n](std::span<const double>, std::span<const double> g,
                                std::span<Tensor> in) {
                           std::span<double> gc = in[0].grad_buffer();
                           for (std::size_t i = 0; i < m; ++i) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j];
                             gc[i] += acc;
                           }
                         });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row count mismatch " +
                           shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t s = 0; s < parts.size(); ++s) {
    std::span<const double> x = parts[s].data();
    const std::size_t w = widths[s];
    for (std::size_t i = 0; i < m; ++i)
      std::copy(x.begin() + i * w, x.begin() + (i + 1) * w, out.begin() + i * total + offset);
    offset += w;
  }
  return Tensor::from_op({m, total}, std::move(out), parts,
                         [m, total, widths](std::span<const double>,
                                            std::span<const double> g,
                                            std::span<Tensor> in) {
                           std::size_t offset = 0;
                           for (std::size_t s = 0; s < in.size(); ++s) {
                             const std::size_t w = widths[s];
                             std::span<double> gs = in[s].grad_buffer();
                             if (!gs.empty()) {
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < w; ++j)
                                   gs[i * w + j] += g[i * total + offset + j];
                             }
                             offset += w;
                           }
                         });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::vector<double> out;
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != n) throw DimensionError("concat_rows: column count mismatch");
    out.insert(out.end(), p.data().begin(), p.data().end());
    m += p.rows();
  }
  return Tensor::from_op({m, n}, std::move(out), parts,
                         [](std::span<const double>, std::span<const double> g,
                            std::span<Tensor> in) {
                           std::size_t offset = 0;
                           for (Tensor& t : in) {
                             const std::size_t len = t.size();
                             std::span<double> gt = t.grad_buffer();
                             for (std::size_t k = 0; k < gt.size(); ++k) gt[k] += g[offset + k];
                             offset += len;
                           }
                         });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  if (begin >= end || end > a.cols()) {
    throw DimensionError("slice_cols: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") of " + shape_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  std::span<const double> x = a.data();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(x.begin() + i * n + begin, x.begin() + i * n + end, out.begin() + i * w);
  return Tensor::from_op({m, w}, std::move(out), {a},
                         [m, n, w, begin](std::span<const double>, std::span<const double> g,
                                          std::span<Tensor> in) {
                           std::span<double> ga = in[0].grad_buffer();
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               ga[i * n + begin + j] += g[i * w + j];
                         });
}

Tensor sum(const Tensor& a, int axis) {
  require_rank2(a, "sum");
  const std::size_t m = a.rows(), n = a.cols();
  std::span<const double> x = a.data();
  if (axis == 0) {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
    return Tensor::from_op({1, n}, std::move(out), {a},
                           [m, n](std::span<const double>, std::span<const double> g,
                                  std::span<Tensor> in) {
                             std::span<double> ga = in[0].grad_buffer();
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j];
                           });
  }
  if (axis == 1) {
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
    return Tensor::from_op({m, 1}, std::move(out), {a},
                           [m, n](std::span<const double>, std::span<const double> g,
                                  std::span<Tensor> in) {
                             std::span<double> ga = in[0].grad_buffer();
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
                           });
  }
  throw DimensionError("sum: axis must be 0 or 1");
}

Tensor mean(const Tensor& a, int axis) {
  Tensor s = sum(a, axis);
  const double count = axis == 0 ? static_cast<double>(a.rows())
                                 : static_cast<double>(a.cols());
  return scale(s, 1.0 / count);
}

Tensor sum_all(const Tensor& a) {
  std::span<const double> x = a.data();
  double acc = 0.0;
  for (double v : x) acc += v;
  return Tensor::from_op({1, 1}, {acc}, {a},
                         [](std::span<const double>, std::span<const double> g,
                            std::span<Tensor> in) {
                           std::span<double> ga = in[0].grad_buffer();
                           for (double& v : ga) v += g[0];
                         });
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_rank2(a, "gather_rows");
  if (index.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t m = a.rows(), n = a.cols();
  std::span<const double> x = a.data();
  std::vector<double> out(index.size() * n);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= m) {
      throw DimensionError("gather_rows: index " + std::to_string(index[k]) +
                           " out of range for " + shape_string(a.shape()));
    }
    std::copy(x.begin() + index[k] * n, x.begin() + (index[k] + 1) * n, out.begin() + k * n);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Tensor::from_op({idx.size(), n}, std::move(out), {a},
                         [idx, n](std::span<const double>, std::span<const double> g,
                                  std::span<Tensor> in) {
                           std::span<double> ga = in[0].grad_buffer();
                           for (std::size_t k = 0; k < idx.size(); ++k)
                             for (std::size_t j = 0; j < n; ++j) ga[idx[k] * n + j] += g[k * n + j];
                         });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> index,
                        std::size_t n_out) {
  require_rank2(a, "scatter_add_rows");
  if (index.size() != a.rows()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) +
                         " indices for " + shape_string(a.shape()));
  }
  const std::size_t n = a.cols();
  std::span<const double> x = a.data();
  std::vector<double> out(n_out * n, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= n_out) {
      throw DimensionError("scatter_add_rows: index " + std::to_string(index[k]) +
                           " out of range " + std::to_string(n_out));
    }
    for (std::size_t j = 0; j < n; ++j) out[index[k] * n + j] += x[k * n + j];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Tensor::from_op({n_out, n}, std::move(out), {a},
                         [idx, n](std::span<const double>, std::span<const double> g,
                                  std::span<Tensor> in) {
                           std::span<double> ga = in[0].grad_buffer();
                           for (std::size_t k = 0; k < idx.size(); ++k)
                             for (std::size_t j = 0; j < n; ++j) ga[k * n + j] += g[idx[k] * n + j];
                         });
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!std::isfinite(v) || v <= 0.0) {
      throw NumericError("log: input must be finite and positive");
    }
  }
  return unary(a, "log", [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary(a, "abs", [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor softmax(const Tensor& a) {
  require_rank2(a, "softmax");
  require_finite(a.data(), "softmax");
  const std::size_t m = a.rows(), n = a.cols();
  std::span<const double> x = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return Tensor::from_op({m, n}, std::move(out), {a},
                         [m, n](std::span<const double> y, std::span<const double> g,
                                std::span<Tensor> in) {
                           std::span<double> ga = in[0].grad_buffer();
                           for (std::size_t i = 0; i < m; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                             for (std::size_t j = 0; j < n; ++j)
                               ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                           }
                         });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo must not exceed hi");
  return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

}  // namespace lsds
