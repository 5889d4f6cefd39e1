#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lsds/tensor.hpp"

namespace lsds {

using Rng = std::mt19937_64;

// Named, ordered collection of trainable tensors. Names are hierarchical
// ("encoder.dnrl0.w_val") and determine checkpoint layout.
class ParameterStore {
 public:
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Tensor create(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor create_constant(const std::string& name, Shape shape, double value);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t scalar_count() const;

  void zero_grad();
  double grad_norm() const;
  // Rescales all gradients so their global L2 norm is at most `max_norm`.
  // Returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  bool grads_finite() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

enum class Activation { kNone, kRelu, kTanh };

Tensor activate(const Tensor& x, Activation act);

// y = x W + b with W stored as in x out.
struct Linear {
  Tensor weight;
  Tensor bias;  // 1 x out, may be undefined

  static Linear create(ParameterStore& store, const std::string& name,
                       std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Tensor forward(const Tensor& x) const;
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
};

// Two affine layers with a hidden nonlinearity; output is linear.
struct Mlp {
  Linear first;
  Linear second;
  Activation hidden = Activation::kRelu;

  static Mlp create(ParameterStore& store, const std::string& name, std::size_t in,
                    std::size_t hidden_width, std::size_t out, Rng& rng,
                    Activation hidden = Activation::kRelu);
  Tensor forward(const Tensor& x) const;
};

// First-order adaptive-moment optimizer.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& store);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return steps_; }

  // Optimizer state as named tensors ("adam.m.<param>", "adam.v.<param>",
  // "adam.steps") for checkpointing.
  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::vector<std::pair<std::string, Tensor>>& named);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t steps_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Binary checkpoint: magic "LSDS", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u32 rank, u64 dims, f64 data. Little-endian.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into the store. Every store parameter must be
// present with a matching shape; extra entries are ignored.
void restore_parameters(ParameterStore& store, const NamedTensors& tensors);

}  // namespace lsds
