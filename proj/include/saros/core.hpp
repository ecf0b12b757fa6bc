#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace saros {

// Dense zero-based identifiers. Distinct types so users and items can't be mixed.
struct UserId {
  std::uint32_t value = 0;
  auto operator<=>(const UserId&) const = default;
};

struct ItemId {
  std::uint32_t value = 0;
  auto operator<=>(const ItemId&) const = default;
};

/// Bidirectional map between raw external identifiers and dense indices.
/// Indices are assigned in order of first insertion.
template <typename Id>
class IdMap {
 public:
  Id intern(std::string_view raw) {
    auto [it, inserted] = index_.try_emplace(std::string(raw), static_cast<std::uint32_t>(raw_.size()));
    if (inserted) raw_.emplace_back(raw);
    return Id{it->second};
  }

  std::optional<Id> find(std::string_view raw) const {
    auto it = index_.find(std::string(raw));
    if (it == index_.end()) return std::nullopt;
    return Id{it->second};
  }

  const std::string& raw(Id id) const { return raw_.at(id.value); }
  std::size_t size() const { return raw_.size(); }
  const std::vector<std::string>& raw_ids() const { return raw_; }

  bool operator==(const IdMap& other) const { return raw_ == other.raw_; }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

using UserMap = IdMap<UserId>;
using ItemMap = IdMap<ItemId>;

enum class Feedback : std::int8_t { negative = -1, positive = +1 };

constexpr bool is_positive(Feedback f) { return f == Feedback::positive; }

struct Interaction {
  UserId user;
  ItemId item;
  Feedback feedback = Feedback::negative;
  std::int64_t timestamp = 0;
};

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// The model weights: one k-dimensional embedding per user and per item.
struct ModelParams {
  Matrix users;  // N x k
  Matrix items;  // M x k

  std::size_t n_users() const { return static_cast<std::size_t>(users.rows()); }
  std::size_t n_items() const { return static_cast<std::size_t>(items.rows()); }
  std::size_t k() const { return static_cast<std::size_t>(users.cols()); }

  double score(UserId u, ItemId i) const { return users.row(u.value).dot(items.row(i.value)); }

  bool all_finite() const { return users.allFinite() && items.allFinite(); }

  bool operator==(const ModelParams& other) const;
};

enum class StepPolicy {
  constant,     // eta used as-is
  inv_sqrt_n,   // eta / sqrt(total user visits)
};

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

/// Hyperparameters shared by every trainer. Fields not used by a given
/// trainer are ignored by it (e.g. alpha/mu outside SAROS_m).
struct TrainConfig {
  double eta = 0.05;
  double lambda = 0.0;
  std::size_t k = 16;
  std::size_t epochs = 1;
  std::size_t b = 0;
  std::size_t B = kUnbounded;
  double alpha = 0.05;
  double mu = 0.9;
  std::uint64_t rng_seed = 42;
  double init_scale = 0.1;
  StepPolicy step_policy = StepPolicy::constant;
  // Trace sampling: a point every `trace_period` updates (0 = start/end only),
  // loss estimated on at most `trace_pairs` fixed training pairs.
  std::size_t trace_period = 0;
  std::size_t trace_pairs = 100000;

  /// Throws ConfigError on the first violated field constraint.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a training step produces a non-finite parameter.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

/// Stable 64-bit FNV-1a digest of the canonical JSON form, as 16 hex chars.
std::string config_hash(const TrainConfig& config);

std::string_view to_string(StepPolicy policy);
StepPolicy step_policy_from_string(std::string_view name);

using Rng = std::mt19937_64;

/// Generator for an independent stream derived from (seed, stream).
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Gaussian(0, init_scale^2) entries, deterministic in `seed`.
ModelParams init_params(std::size_t n_users, std::size_t n_items, const TrainConfig& config,
                        std::uint64_t seed);

}  // namespace saros
