#include "saros/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace saros {

std::string_view to_string(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::saros_b: return "saros_b";
    case TrainerKind::saros_m: return "saros_m";
    case TrainerKind::bpr: return "bpr";
    case TrainerKind::bpr_batch: return "bpr_batch";
  }
  return "saros_b";
}

TrainerKind trainer_from_string(std::string_view name) {
  if (name == "saros_b") return TrainerKind::saros_b;
  if (name == "saros_m") return TrainerKind::saros_m;
  if (name == "bpr") return TrainerKind::bpr;
  if (name == "bpr_batch") return TrainerKind::bpr_batch;
  throw ConfigError("unknown trainer: " + std::string(name));
}

void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "seconds,epoch,updates,loss\n" << std::setprecision(17);
  for (const auto& pt : trace.points) out << pt.seconds << ',' << pt.epoch << ',' << pt.updates << ',' << pt.loss << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

// ---------------------------------------------------------------------------
// Trace sampling

namespace {
constexpr std::uint64_t kTraceStream = 1;
constexpr std::uint64_t kBprStream = 2;
}  // namespace

TraceSampler::TraceSampler(const Dataset& dataset, const TrainConfig& config, TrainerKind kind,
                           bool track_grad_norm)
    : lambda_(config.lambda), period_(config.trace_period), track_grad_norm_(track_grad_norm) {
  trace_.trainer = kind;
  trace_.config_hash = config_hash(config);
  trace_.seed = config.rng_seed;
  users_ = eligible_users(dataset, Split::train);
  if (users_.empty()) throw DataError("training set has no user with both a positive and a negative");

  double total_pairs = 0.0;
  for (const auto& up : users_) {
    total_pairs += static_cast<double>(up.positives.size()) * static_cast<double>(up.negatives.size());
  }
  exhaustive_ = total_pairs <= static_cast<double>(config.trace_pairs);
  if (!exhaustive_) {
    Rng rng = make_rng(config.rng_seed, kTraceStream);
    std::uniform_int_distribution<std::size_t> pick_user(0, users_.size() - 1);
    sample_.reserve(config.trace_pairs);
    for (std::size_t s = 0; s < config.trace_pairs; ++s) {
      const auto& up = users_[pick_user(rng)];
      std::uniform_int_distribution<std::size_t> pick_pos(0, up.positives.size() - 1);
      std::uniform_int_distribution<std::size_t> pick_neg(0, up.negatives.size() - 1);
      const ItemId pos = up.positives[pick_pos(rng)];
      const ItemId neg = up.negatives[pick_neg(rng)];
      sample_.push_back({up.user, pos, neg});
    }
  }
}

double TraceSampler::loss(const ModelParams& params) const {
  double total = 0.0;
  if (exhaustive_) {
    for (const auto& up : users_) total += pairwise_loss(params, up.user, up.positives, up.negatives, lambda_);
    return total / static_cast<double>(users_.size());
  }
  for (const auto& t : sample_) total += triplet_loss(params, t.user, t.pos, t.neg, lambda_);
  return total / static_cast<double>(sample_.size());
}

void TraceSampler::record(const ModelParams& params, std::size_t epoch, std::size_t updates) {
  elapsed_ += Clock::now() - resumed_;
  TracePoint pt;
  pt.seconds = std::chrono::duration<double>(elapsed_).count();
  pt.epoch = epoch;
  pt.updates = updates;
  pt.loss = loss(params);
  pt.grad_sq_norm = track_grad_norm_ ? dataset_loss_and_grad(params, users_, lambda_).squared_norm()
                                     : std::numeric_limits<double>::quiet_NaN();
  trace_.points.push_back(pt);
  resumed_ = Clock::now();
}

void TraceSampler::start(const ModelParams& params) {
  trace_.points.clear();
  elapsed_ = {};
  resumed_ = Clock::now();
  record(params, 0, 0);
}

void TraceSampler::on_update(const ModelParams& params, std::size_t epoch, std::size_t updates) {
  if (period_ > 0 && updates % period_ == 0) record(params, epoch, updates);
}

void TraceSampler::finish(const ModelParams& params, std::size_t epoch, std::size_t updates) {
  if (trace_.points.empty() || trace_.points.back().updates != updates) {
    record(params, epoch, updates);
  } else {
    trace_.points.back().epoch = epoch;
  }
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

ModelParams starting_params(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (options.initial) {
    const auto& p = *options.initial;
    if (p.n_users() != dataset.n_users() || p.n_items() != dataset.n_items() || p.k() != config.k) {
      throw ConfigError("initial parameters do not match dataset shape and k");
    }
    return p;
  }
  return init_params(dataset.n_users(), dataset.n_items(), config, config.rng_seed);
}

double scaled_step(double base, const TrainConfig& config, double n_units) {
  if (config.step_policy == StepPolicy::inv_sqrt_n) return base / std::sqrt(std::max(1.0, n_units));
  return base;
}

void apply_sparse(ModelParams& p, const SparseGrad& g, double step) {
  p.users.row(g.user.value) -= step * g.user_grad.transpose();
  for (std::size_t r = 0; r < g.items.size(); ++r) {
    p.items.row(g.items[r].value) -= step * g.item_grads.row(static_cast<Eigen::Index>(r));
  }
}

void check_finite(const ModelParams& p, const SparseGrad& g, std::size_t update, std::size_t block) {
  bool ok = p.users.row(g.user.value).allFinite();
  for (ItemId i : g.items) ok = ok && p.items.row(i.value).allFinite();
  if (!ok) {
    throw NumericError("non-finite parameter after update " + std::to_string(update) + " (user " +
                       std::to_string(g.user.value) + ", block " + std::to_string(block) + ")");
  }
}

// Saves rows the first time a user visit touches them, so the visit can be undone.
class UndoLog {
 public:
  explicit UndoLog(std::size_t n_items) : stamp_(n_items, 0) {}

  void begin(const ModelParams& p, UserId u) {
    ++visit_;
    user_ = u;
    user_row_ = p.users.row(u.value);
    items_.clear();
  }

  void touch(const ModelParams& p, std::span<const ItemId> items) {
    for (ItemId i : items) {
      if (stamp_[i.value] == visit_) continue;
      stamp_[i.value] = visit_;
      items_.emplace_back(i, p.items.row(i.value));
    }
  }

  void restore(ModelParams& p) const {
    p.users.row(user_.value) = user_row_;
    for (const auto& [item, row] : items_) p.items.row(item.value) = row;
  }

 private:
  std::vector<std::size_t> stamp_;
  std::size_t visit_ = 0;
  UserId user_;
  Eigen::RowVectorXd user_row_;
  std::vector<std::pair<ItemId, Eigen::RowVectorXd>> items_;
};

}  // namespace

// ---------------------------------------------------------------------------
// SAROS_b: one averaged-gradient step per block, users visited in id order,
// at most B + 1 blocks per user, and a visit with at most b blocks undone.

TrainResult train_saros_b(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  ModelParams p = starting_params(dataset, config, options);
  const auto sequences = segment_dataset(dataset);
  const double eta =
      scaled_step(config.eta, config, static_cast<double>(dataset.n_users()) * static_cast<double>(config.epochs));

  TraceSampler sampler(dataset, config, TrainerKind::saros_b, options.track_grad_norm);
  sampler.start(p);
  TrainResult result;
  UndoLog undo(dataset.n_items());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (const auto& seq : sequences) {
      undo.begin(p, seq.user);
      std::size_t t = 0;
      while (t <= config.B && t < seq.blocks.size()) {
        const PairwiseLoss pl = block_loss_and_grad(p, seq.user, seq.blocks[t], config.lambda);
        undo.touch(p, pl.grad.items);
        apply_sparse(p, pl.grad, eta);
        ++result.updates;
        check_finite(p, pl.grad, result.updates, t);
        ++t;
        sampler.on_update(p, epoch, result.updates);
      }
      if (t <= config.b) {
        undo.restore(p);
        if (t > 0) ++result.rolled_back_users;
      }
    }
  }
  sampler.finish(p, config.epochs, result.updates);
  result.params = std::move(p);
  result.trace = sampler.take();
  return result;
}

// ---------------------------------------------------------------------------
// SAROS_m: same block schedule without thresholds, heavy-ball update
//   v <- mu v + (1 - mu) grad,  w <- w - alpha v
// on the rows a block touches. The velocity is global and persists across users.

TrainResult train_saros_m(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  ModelParams p = starting_params(dataset, config, options);
  const auto sequences = segment_dataset(dataset);
  const double alpha =
      scaled_step(config.alpha, config, static_cast<double>(dataset.n_users()) * static_cast<double>(config.epochs));
  const double mu = config.mu;
  MomentumState v = MomentumState::zeros_like(p);

  TraceSampler sampler(dataset, config, TrainerKind::saros_m, options.track_grad_norm);
  sampler.start(p);
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (const auto& seq : sequences) {
      for (std::size_t t = 0; t < seq.blocks.size(); ++t) {
        const PairwiseLoss pl = block_loss_and_grad(p, seq.user, seq.blocks[t], config.lambda);
        const SparseGrad& g = pl.grad;
        auto vu = v.users.row(g.user.value);
        vu = mu * vu + (1.0 - mu) * g.user_grad.transpose();
        p.users.row(g.user.value) -= alpha * vu;
        for (std::size_t r = 0; r < g.items.size(); ++r) {
          auto vi = v.items.row(g.items[r].value);
          vi = mu * vi + (1.0 - mu) * g.item_grads.row(static_cast<Eigen::Index>(r));
          p.items.row(g.items[r].value) -= alpha * vi;
        }
        ++result.updates;
        check_finite(p, g, result.updates, t);
        sampler.on_update(p, epoch, result.updates);
      }
    }
  }
  sampler.finish(p, config.epochs, result.updates);
  result.params = std::move(p);
  result.trace = sampler.take();
  return result;
}

// ---------------------------------------------------------------------------
// BPR: uniform user, then uniform positive and negative of that user.

TrainResult train_bpr(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  ModelParams p = starting_params(dataset, config, options);
  const auto users = eligible_users(dataset, Split::train);
  if (users.empty()) throw DataError("bpr: no user has both a positive and a negative train item");

  std::size_t per_epoch = 0;
  for (const auto& up : users) per_epoch += up.positives.size() + up.negatives.size();
  const std::size_t n_steps = options.bpr_steps.value_or(per_epoch * config.epochs);
  const double eta = scaled_step(config.eta, config, static_cast<double>(n_steps));

  TraceSampler sampler(dataset, config, TrainerKind::bpr, options.track_grad_norm);
  sampler.start(p);
  TrainResult result;
  Rng rng = make_rng(config.rng_seed, kBprStream);
  std::uniform_int_distribution<std::size_t> pick_user(0, users.size() - 1);

  for (std::size_t step = 0; step < n_steps; ++step) {
    const auto& up = users[pick_user(rng)];
    std::uniform_int_distribution<std::size_t> pick_pos(0, up.positives.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_neg(0, up.negatives.size() - 1);
    const ItemId pos = up.positives[pick_pos(rng)];
    const ItemId neg = up.negatives[pick_neg(rng)];

    const TripletGrad g = triplet_grad(p, up.user, pos, neg, config.lambda);
    p.users.row(up.user.value) -= eta * g.user.transpose();
    p.items.row(pos.value) -= eta * g.item_pos.transpose();
    p.items.row(neg.value) -= eta * g.item_neg.transpose();
    ++result.updates;
    if (!p.users.row(up.user.value).allFinite() || !p.items.row(pos.value).allFinite() ||
        !p.items.row(neg.value).allFinite()) {
      throw NumericError("non-finite parameter after update " + std::to_string(result.updates) + " (user " +
                         std::to_string(up.user.value) + ")");
    }
    sampler.on_update(p, per_epoch == 0 ? 0 : step / per_epoch + 1, result.updates);
  }
  const std::size_t epochs_done = per_epoch == 0 ? 0 : (n_steps + per_epoch - 1) / per_epoch;
  sampler.finish(p, epochs_done, result.updates);
  result.params = std::move(p);
  result.trace = sampler.take();
  return result;
}

// ---------------------------------------------------------------------------
// BPR_batch: one full-gradient step of the dataset objective per epoch.

TrainResult train_bpr_batch(const Dataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  ModelParams p = starting_params(dataset, config, options);
  const auto users = eligible_users(dataset, Split::train);
  if (users.empty()) throw DataError("bpr_batch: no user has both a positive and a negative train item");
  const double eta = scaled_step(config.eta, config, static_cast<double>(config.epochs));

  TraceSampler sampler(dataset, config, TrainerKind::bpr_batch, options.track_grad_norm);
  sampler.start(p);
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const DenseGrad g = dataset_loss_and_grad(p, users, config.lambda);
    p.users -= eta * g.users;
    p.items -= eta * g.items;
    ++result.updates;
    if (!p.all_finite()) {
      throw NumericError("non-finite parameter after full-gradient step " + std::to_string(epoch));
    }
    sampler.on_update(p, epoch, result.updates);
  }
  sampler.finish(p, config.epochs, result.updates);
  result.params = std::move(p);
  result.trace = sampler.take();
  return result;
}

TrainResult train(TrainerKind kind, const Dataset& dataset, const TrainConfig& config, const TrainOptions& options) {
  switch (kind) {
    case TrainerKind::saros_b: return train_saros_b(dataset, config, options);
    case TrainerKind::saros_m: return train_saros_m(dataset, config, options);
    case TrainerKind::bpr: return train_bpr(dataset, config, options);
    case TrainerKind::bpr_batch: return train_bpr_batch(dataset, config, options);
  }
  throw ConfigError("unknown trainer");
}

}  // namespace saros
