#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saros/blocks.hpp"
#include "saros/core.hpp"
#include "saros/ingest.hpp"
#include "saros/loss.hpp"

namespace saros {

enum class TrainerKind { saros_b, saros_m, bpr, bpr_batch };

std::string_view to_string(TrainerKind kind);
TrainerKind trainer_from_string(std::string_view name);

struct TracePoint {
  double seconds = 0.0;  // training time only; loss evaluation is excluded
  std::size_t epoch = 0;
  std::size_t updates = 0;
  double loss = 0.0;
  double grad_sq_norm = 0.0;  // NaN unless gradient tracking was requested
};

struct TrainTrace {
  TrainerKind trainer = TrainerKind::saros_b;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<TracePoint> points;
};

/// CSV `seconds,epoch,updates,loss`.
void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path);

/// Heavy-ball velocity, same shape as the parameters.
struct MomentumState {
  Matrix users;
  Matrix items;

  static MomentumState zeros_like(const ModelParams& p) {
    return {Matrix::Zero(p.users.rows(), p.users.cols()), Matrix::Zero(p.items.rows(), p.items.cols())};
  }
};

struct TrainOptions {
  // Starting weights; drawn from config.rng_seed when absent.
  std::optional<ModelParams> initial;
  // BPR only: number of sampled triplet steps. Defaults to epochs times the
  // number of train interactions of eligible users.
  std::optional<std::size_t> bpr_steps;
  // Also record the squared norm of the full train gradient at trace points.
  bool track_grad_norm = false;
};

struct TrainResult {
  ModelParams params;
  TrainTrace trace;
  std::size_t updates = 0;            // gradient steps taken (including rolled-back ones)
  std::size_t rolled_back_users = 0;  // SAROS_b user visits undone by the lower threshold
};

/// Records (time, epoch, updates, train loss) every `period` updates, plus the
/// first and last state. The train loss is the dataset objective when the
/// train set has at most `max_pairs` pairs, otherwise a fixed seeded sample
/// of `max_pairs` (user, positive, negative) triplets drawn user-first.
class TraceSampler {
 public:
  TraceSampler(const Dataset& dataset, const TrainConfig& config, TrainerKind kind, bool track_grad_norm);

  double loss(const ModelParams& params) const;
  bool exhaustive() const { return exhaustive_; }

  void start(const ModelParams& params);
  void on_update(const ModelParams& params, std::size_t epoch, std::size_t updates);
  void finish(const ModelParams& params, std::size_t epoch, std::size_t updates);

  TrainTrace take() { return std::move(trace_); }

 private:
  using Clock = std::chrono::steady_clock;
  void record(const ModelParams& params, std::size_t epoch, std::size_t updates);

  double lambda_;
  std::size_t period_;
  bool track_grad_norm_;
  bool exhaustive_ = false;
  std::vector<UserPairs> users_;
  struct Triplet {
    UserId user;
    ItemId pos, neg;
  };
  std::vector<Triplet> sample_;
  TrainTrace trace_;
  Clock::duration elapsed_{};
  Clock::time_point resumed_;
};

TrainResult train_saros_b(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options = {});
TrainResult train_saros_m(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options = {});
TrainResult train_bpr(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options = {});
TrainResult train_bpr_batch(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options = {});

TrainResult train(TrainerKind kind, const Dataset& dataset, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace saros
