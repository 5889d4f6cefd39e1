#include "lsds/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace lsds {

namespace {

struct Entry {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw ConfigError("invalid value '" + value + "' for " + key);
  }
  return out;
}

template <typename T>
Entry number(std::string key, std::string doc, T& (*field)(RunConfig&)) {
  Entry e;
  e.key = std::move(key);
  e.doc = std::move(doc);
  e.set = [field, k = e.key](RunConfig& c, const std::string& v) { field(c) = parse_number<T>(k, v); };
  e.get = [field](const RunConfig& c) {
    const T& v = field(const_cast<RunConfig&>(c));
    if constexpr (std::is_floating_point_v<T>) {
      return format_number(v);
    } else {
      return std::to_string(v);
    }
  };
  return e;
}

template <typename E>
Entry enumeration(std::string key, std::string doc, E& (*field)(RunConfig&), std::optional<E> (*parse)(std::string_view),
                  std::string_view (*name)(E)) {
  Entry e;
  e.key = std::move(key);
  e.doc = std::move(doc);
  e.set = [=, k = e.key](RunConfig& c, const std::string& v) {
    auto parsed = parse(v);
    if (!parsed) throw ConfigError("invalid value '" + v + "' for " + k);
    field(c) = *parsed;
  };
  e.get = [=](const RunConfig& c) { return std::string(name(field(const_cast<RunConfig&>(c)))); };
  return e;
}

#define FIELD(expr) +[](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> r;
    Entry path;
    path.key = "data.path";
    path.doc = "data set directory; empty generates synthetic data";
    path.set = [](RunConfig& c, const std::string& v) { c.dataset = v; };
    path.get = [](const RunConfig& c) { return c.dataset.string(); };
    r.push_back(path);
    r.push_back(number<std::size_t>("data.n_sequences", "synthetic sequences", FIELD(synth.n_sequences)));
    r.push_back(number<std::size_t>("data.n_core", "nodes shared by every sequence", FIELD(synth.n_core)));
    r.push_back(number<std::size_t>("data.n_extra", "nodes resampled per sequence", FIELD(synth.n_extra)));
    r.push_back(number<std::size_t>("data.d_true", "ground-truth latent width", FIELD(synth.d_true)));
    r.push_back(number<std::size_t>("data.embed_dim", "observation embedding width D", FIELD(synth.embed_dim)));
    r.push_back(number<std::size_t>("data.weeks", "weeks per sequence (even)", FIELD(synth.weeks)));
    r.push_back(number<double>("data.p_within", "edge probability inside a community", FIELD(synth.p_within)));
    r.push_back(number<double>("data.p_across", "edge probability across communities", FIELD(synth.p_across)));
    r.push_back(number<double>("data.community_separation", "community offset on the first latent axis",
                               FIELD(synth.community_separation)));
    r.push_back(number<double>("data.influence", "DeGroot mixing weight per week", FIELD(synth.influence)));
    r.push_back(number<double>("data.sigma_dyn", "latent noise per week", FIELD(synth.sigma_dyn)));
    r.push_back(number<double>("data.sigma_obs", "observation noise", FIELD(synth.sigma_obs)));
    r.push_back(number<double>("data.post_probability", "chance an account posts in a week",
                               FIELD(synth.post_probability)));
    r.push_back(number<std::size_t>("data.posts_per_week", "raw posts averaged per active week",
                                    FIELD(synth.posts_per_week)));
    r.push_back(number<double>("data.alpha", "interaction logit offset", FIELD(synth.alpha)));
    r.push_back(number<double>("data.beta", "interaction logit slope on latent distance", FIELD(synth.beta)));

    r.push_back(enumeration<EncoderKind>("encoder.encoder", "temporal_graph | gcn | no_hidden", FIELD(model.encoder),
                                         parse_encoder, encoder_name));
    r.push_back(number<std::size_t>("encoder.latent_dim", "latent width d", FIELD(model.latent_dim)));
    r.push_back(enumeration<Aggregation>("encoder.aggregation", "sum | mean of attended messages per observation",
                                         FIELD(model.aggregation), parse_aggregation, aggregation_name));

    r.push_back(enumeration<OdeKind>("ode.ode", "nri | degroot | fj | hk_bcm | no_update", FIELD(model.ode.kind),
                                     parse_ode, ode_name));
    r.push_back(enumeration<SolverMethod>("ode.solver", "euler | rk4", FIELD(model.solver), parse_solver,
                                          solver_name));
    r.push_back(number<double>("ode.step", "solver step in weeks", FIELD(model.step)));
    r.push_back(number<double>("ode.time_scale", "ODE time units per week", FIELD(model.time_scale)));
    r.push_back(number<std::size_t>("ode.ode_layers", "message-passing layers per derivative", FIELD(model.ode.layers)));
    r.push_back(number<std::size_t>("ode.degroot_rank", "rank K of the DeGroot factors", FIELD(model.ode.degroot_rank)));
    r.push_back(number<std::size_t>("ode.edge_hidden", "NRI edge embedding width", FIELD(model.ode.edge_hidden)));

    r.push_back(enumeration<Task>("decoder.task", "interaction | polarity_reg | polarity_cls | reconstruction",
                                  FIELD(model.task), parse_task, task_name));
    r.push_back(number<std::size_t>("decoder.hidden", "polarity MLP width; 0 means latent_dim",
                                    FIELD(model.decoder_hidden)));

    r.push_back(number<double>("train.lambda0", "KL weight ceiling", FIELD(train.lambda0)));
    r.push_back(number<std::size_t>("train.epochs", "training epochs", FIELD(train.epochs)));
    r.push_back(number<double>("train.learning_rate", "Adam step size", FIELD(train.learning_rate)));
    r.push_back(number<std::size_t>("train.batch_size", "sequences per optimizer step", FIELD(train.batch_size)));
    r.push_back(number<std::uint64_t>("train.seed", "seed for data, initialization and sampling", FIELD(train.seed)));
    r.push_back(number<double>("train.split_train", "training fraction", FIELD(train.split[0])));
    r.push_back(number<double>("train.split_val", "validation fraction", FIELD(train.split[1])));
    r.push_back(number<double>("train.split_test", "test fraction", FIELD(train.split[2])));
    r.push_back(number<std::size_t>("train.k_neg", "negatives per positive interaction", FIELD(train.k_neg)));
    r.push_back(number<double>("train.clip_norm", "global gradient-norm ceiling", FIELD(train.clip_norm)));
    r.push_back(number<std::size_t>("train.workers", "evaluation threads", FIELD(train.workers)));
    r.push_back(number<double>("train.sweep_bucket", "weeks per horizon-sweep bucket", FIELD(train.sweep_bucket)));
    return r;
  }();
  return entries;
}

#undef FIELD

const Entry& lookup(const std::string& key) {
  for (const Entry& e : registry()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

std::vector<ConfigKeyInfo> config_keys() {
  const RunConfig defaults;
  std::vector<ConfigKeyInfo> out;
  for (const Entry& e : registry()) out.push_back({e.key, e.get(defaults), e.doc});
  return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  lookup(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return lookup(key).get(config); }

std::vector<std::pair<std::string, std::string>> parse_ini(const std::string& text, const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    auto fail = [&](const std::string& what) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + what);
    };
    if (t.front() == '[') {
      if (t.back() != ']') fail("unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) fail("empty section name");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (section.empty()) fail("assignment outside a section");
    const std::string key = section + "." + trim(t.substr(0, eq));
    try {
      lookup(key);
    } catch (const ConfigError& e) {
      fail(e.what());
    }
    out.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return out;
}

std::string to_ini(const RunConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const Entry& e : registry()) {
    const std::string s = e.key.substr(0, e.key.find('.'));
    if (s != section) {
      if (!section.empty()) os << '\n';
      os << '[' << s << "]\n";
      section = s;
    }
    os << e.key.substr(s.size() + 1) << " = " << e.get(config) << '\n';
  }
  return os.str();
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed,
                         const char* env_seed) {
  RunConfig config;
  std::vector<std::pair<std::string, std::string>> assignments;
  if (file) {
    std::ifstream is(*file);
    if (!is) throw ConfigError("cannot read configuration file " + file->string());
    std::stringstream buf;
    buf << is.rdbuf();
    assignments = parse_ini(buf.str(), file->string());
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' must look like section.key=value");
    assignments.emplace_back(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  bool seed_assigned = seed.has_value();
  for (const auto& [k, v] : assignments) seed_assigned = seed_assigned || k == "train.seed";
  if (!seed_assigned && env_seed != nullptr && *env_seed != '\0') {
    set_config_value(config, "train.seed", env_seed);
  }
  for (const auto& [k, v] : assignments) set_config_value(config, k, v);
  if (seed) config.train.seed = *seed;
  config.synth.validate();
  config.model.validate();
  config.train.validate();
  return config;
}

}  // namespace lsds
