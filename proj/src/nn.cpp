#include "lsds/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace lsds {

Tensor ParameterStore::create(const std::string& name, Shape shape, std::size_t fan_in,
                              Rng& rng) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = dist(rng);
  Tensor t = Tensor::from(std::move(shape), std::move(data), true);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParameterStore::create_constant(const std::string& name, Shape shape, double value) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  Tensor t = Tensor::full(std::move(shape), value, true);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return items_[it->second].second;
}

bool ParameterStore::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : items_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : items_) t.zero_grad();
}

double ParameterStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [_, t] : items_) {
    for (double g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& [_, t] : items_) {
      for (double& g : t.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

bool ParameterStore::grads_finite() const {
  for (const auto& [_, t] : items_) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kNone:
      break;
  }
  return x;
}

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = store.create(name + ".weight", {in, out}, in, rng);
  if (with_bias) l.bias = store.create(name + ".bias", {1, out}, in, rng);
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  if (bias.defined()) y = add(y, broadcast_rows(bias, y.rows()));
  return y;
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, std::size_t in,
                std::size_t hidden_width, std::size_t out, Rng& rng, Activation hidden) {
  Mlp m;
  m.first = Linear::create(store, name + ".0", in, hidden_width, rng);
  m.second = Linear::create(store, name + ".1", hidden_width, out, rng);
  m.hidden = hidden;
  return m;
}

Tensor Mlp::forward(const Tensor& x) const {
  return second.forward(activate(first.forward(x), hidden));
}

// ---------------------------------------------------------------------------

void Adam::step(ParameterStore& store) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (auto& [name, param] : store.items()) {
    Tensor p = param;
    std::span<const double> g = p.grad();
    if (g.empty()) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != g.size()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    std::span<double> w = p.mutable_data();
    for (std::size_t k = 0; k < g.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double update = lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      if (update != 0.0) w[k] -= update;
    }
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("adam.steps", Tensor::scalar(static_cast<double>(steps_)));
  for (const auto& [name, m] : m_) {
    out.emplace_back("adam.m." + name, Tensor::row(m));
    out.emplace_back("adam.v." + name, Tensor::row(v_.at(name)));
  }
  return out;
}

void Adam::load_state(const std::vector<std::pair<std::string, Tensor>>& named) {
  m_.clear();
  v_.clear();
  steps_ = 0;
  for (const auto& [name, t] : named) {
    if (name == "adam.steps") {
      steps_ = static_cast<std::uint64_t>(t.item());
    } else if (name.rfind("adam.m.", 0) == 0) {
      m_[name.substr(7)] = t.to_vector();
    } else if (name.rfind("adam.v.", 0) == 0) {
      v_[name.substr(7)] = t.to_vector();
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(os, bits);
}

std::uint64_t get_bytes(std::istream& is, int n, const std::filesystem::path& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), n)) {
    throw CheckpointError(path.string() + ": truncated checkpoint");
  }
  std::uint64_t v = 0;
  for (int k = n - 1; k >= 0; --k) v = (v << 8) | b[k];
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write " + path.string());
  os.write("LSDS", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(os, d);
    for (double v : t.data()) put_f64(os, v);
  }
  if (!os) throw CheckpointError("write failed for " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "LSDS", 4) != 0) {
    throw CheckpointError(path.string() + ": bad magic");
  }
  const auto version = static_cast<std::uint32_t>(get_bytes(is, 4, path));
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto count = static_cast<std::uint32_t>(get_bytes(is, 4, path));
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = static_cast<std::uint32_t>(get_bytes(is, 4, path));
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError(path.string() + ": truncated name");
    const auto rank = static_cast<std::uint32_t>(get_bytes(is, 4, path));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_bytes(is, 8, path));
    std::vector<double> data(shape_size(shape));
    for (double& v : data) {
      const std::uint64_t bits = get_bytes(is, 8, path);
      std::memcpy(&v, &bits, sizeof v);
    }
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

void restore_parameters(ParameterStore& store, const NamedTensors& tensors) {
  std::map<std::string, const Tensor*> lookup;
  for (const auto& [name, t] : tensors) lookup[name] = &t;
  for (const auto& [name, param] : store.items()) {
    auto it = lookup.find(name);
    if (it == lookup.end()) throw CheckpointError("checkpoint lacks parameter " + name);
    if (it->second->shape() != param.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": checkpoint " +
                            shape_string(it->second->shape()) + ", model " +
                            shape_string(param.shape()));
    }
    Tensor p = param;
    std::span<double> dst = p.mutable_data();
    std::span<const double> src = it->second->data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace lsds
