#include "saros/core.hpp"

#include <cmath>
#include <cstring>
#include <cstdio>

namespace saros {

bool ModelParams::operator==(const ModelParams& other) const {
  if (users.rows() != other.users.rows() || users.cols() != other.users.cols()) return false;
  if (items.rows() != other.items.rows() || items.cols() != other.items.cols()) return false;
  // Bitwise comparison: NaN payloads and signed zeros count as differences.
  auto same = [](const Matrix& a, const Matrix& b) {
    return a.size() == 0 ||
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
  };
  return same(users, other.users) && same(items, other.items);
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
  if (!(eta >= 0.0) || !std::isfinite(eta)) fail("eta must be a finite value >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be a finite value >= 0");
  if (k < 1) fail("k must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (B < b) fail("B must be >= b");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be a finite value >= 0");
  if (!(mu >= 0.0 && mu < 1.0)) fail("mu must lie in [0, 1)");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) fail("init_scale must be a finite value >= 0");
  if (trace_pairs < 1) fail("trace_pairs must be >= 1");
}

std::string_view to_string(StepPolicy policy) {
  switch (policy) {
    case StepPolicy::constant: return "constant";
    case StepPolicy::inv_sqrt_n: return "inv_sqrt_n";
  }
  return "constant";
}

StepPolicy step_policy_from_string(std::string_view name) {
  if (name == "constant") return StepPolicy::constant;
  if (name == "inv_sqrt_n") return StepPolicy::inv_sqrt_n;
  throw ConfigError("unknown step policy: " + std::string(name));
}

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"eta", c.eta},
      {"lambda", c.lambda},
      {"k", c.k},
      {"epochs", c.epochs},
      {"b", c.b},
      {"B", c.B},
      {"alpha", c.alpha},
      {"mu", c.mu},
      {"rng_seed", c.rng_seed},
      {"init_scale", c.init_scale},
      {"step_policy", std::string(to_string(c.step_policy))},
      {"trace_period", c.trace_period},
      {"trace_pairs", c.trace_pairs},
  };
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  // Missing keys keep their defaults so partial config files work.
  auto take = [&j](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) it->get_to(field);
  };
  take("eta", c.eta);
  take("lambda", c.lambda);
  take("k", c.k);
  take("epochs", c.epochs);
  take("b", c.b);
  take("B", c.B);
  take("alpha", c.alpha);
  take("mu", c.mu);
  take("rng_seed", c.rng_seed);
  take("init_scale", c.init_scale);
  take("trace_period", c.trace_period);
  take("trace_pairs", c.trace_pairs);
  if (auto it = j.find("step_policy"); it != j.end()) {
    c.step_policy = step_policy_from_string(it->get<std::string>());
  }
  return c;
}

std::string config_hash(const TrainConfig& config) {
  const std::string canonical = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

ModelParams init_params(std::size_t n_users, std::size_t n_items, const TrainConfig& config,
                        std::uint64_t seed) {
  config.validate();
  if (n_users < 1 || n_items < 1) throw ConfigError("init_params: need at least one user and one item");

  const auto k = static_cast<Eigen::Index>(config.k);
  ModelParams p{Matrix::Zero(static_cast<Eigen::Index>(n_users), k),
                Matrix::Zero(static_cast<Eigen::Index>(n_items), k)};
  if (config.init_scale == 0.0) return p;

  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, config.init_scale);
  for (Eigen::Index i = 0; i < p.users.size(); ++i) p.users.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.items.size(); ++i) p.items.data()[i] = normal(rng);
  return p;
}

}  // namespace saros
