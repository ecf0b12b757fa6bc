#include "saros/loss.hpp"

#include <algorithm>
#include <cmath>

namespace saros {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double triplet_loss(const ModelParams& p, UserId u, ItemId pos, ItemId neg, double lambda) {
  const auto user = p.users.row(u.value);
  const auto ip = p.items.row(pos.value);
  const auto in = p.items.row(neg.value);
  const double margin = user.dot(ip) - user.dot(in);
  return softplus(-margin) + lambda * (user.squaredNorm() + ip.squaredNorm() + in.squaredNorm());
}

TripletGrad triplet_grad(const ModelParams& p, UserId u, ItemId pos, ItemId neg, double lambda) {
  const Vector user = p.users.row(u.value).transpose();
  const Vector ip = p.items.row(pos.value).transpose();
  const Vector in = p.items.row(neg.value).transpose();
  const double s = logistic(-(user.dot(ip) - user.dot(in)));
  return TripletGrad{(s * in - s * ip) + 2.0 * lambda * user, -s * user + 2.0 * lambda * ip,
                     s * user + 2.0 * lambda * in};
}

namespace {

// Pair sums without the gradient: per-position sigmoid weights are only
// needed when a gradient is requested.
struct PairSums {
  double logistic_loss = 0.0;
  std::vector<double> pos_weight;  // sum over negatives of s(p, n)
  std::vector<double> neg_weight;  // sum over positives of s(p, n)
};

PairSums pair_sums(const ModelParams& p, UserId u, std::span<const ItemId> positives,
                   std::span<const ItemId> negatives, bool with_weights) {
  const auto user = p.users.row(u.value);
  std::vector<double> neg_scores(negatives.size());
  for (std::size_t n = 0; n < negatives.size(); ++n) neg_scores[n] = user.dot(p.items.row(negatives[n].value));

  PairSums sums;
  if (with_weights) {
    sums.pos_weight.assign(positives.size(), 0.0);
    sums.neg_weight.assign(negatives.size(), 0.0);
  }
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const double pos_score = user.dot(p.items.row(positives[i].value));
    for (std::size_t n = 0; n < negatives.size(); ++n) {
      const double margin = pos_score - neg_scores[n];
      sums.logistic_loss += softplus(-margin);
      if (with_weights) {
        const double s = logistic(-margin);
        sums.pos_weight[i] += s;
        sums.neg_weight[n] += s;
      }
    }
  }
  return sums;
}

double mean_squared_norm(const ModelParams& p, std::span<const ItemId> items) {
  double total = 0.0;
  for (ItemId i : items) total += p.items.row(i.value).squaredNorm();
  return total / static_cast<double>(items.size());
}

}  // namespace

double pairwise_loss(const ModelParams& p, UserId u, std::span<const ItemId> positives,
                     std::span<const ItemId> negatives, double lambda) {
  const double n_pairs = static_cast<double>(positives.size()) * static_cast<double>(negatives.size());
  const PairSums sums = pair_sums(p, u, positives, negatives, false);
  double loss = sums.logistic_loss / n_pairs;
  if (lambda != 0.0) {
    loss += lambda * (p.users.row(u.value).squaredNorm() + mean_squared_norm(p, positives) +
                      mean_squared_norm(p, negatives));
  }
  return loss;
}

PairwiseLoss pairwise_loss_and_grad(const ModelParams& p, UserId u, std::span<const ItemId> positives,
                                    std::span<const ItemId> negatives, double lambda) {
  const double n_pos = static_cast<double>(positives.size());
  const double n_neg = static_cast<double>(negatives.size());
  const double n_pairs = n_pos * n_neg;
  const PairSums sums = pair_sums(p, u, positives, negatives, true);
  const auto user = p.users.row(u.value);
  const auto k = p.users.cols();

  PairwiseLoss out;
  out.loss = sums.logistic_loss / n_pairs;
  if (lambda != 0.0) {
    out.loss += lambda * (user.squaredNorm() + mean_squared_norm(p, positives) + mean_squared_norm(p, negatives));
  }

  SparseGrad& g = out.grad;
  g.user = u;
  g.items.reserve(positives.size() + negatives.size());
  g.items.insert(g.items.end(), positives.begin(), positives.end());
  g.items.insert(g.items.end(), negatives.begin(), negatives.end());
  std::sort(g.items.begin(), g.items.end());
  g.items.erase(std::unique(g.items.begin(), g.items.end()), g.items.end());
  g.item_grads = Matrix::Zero(static_cast<Eigen::Index>(g.items.size()), k);
  auto row_of = [&g](ItemId i) {
    return static_cast<Eigen::Index>(std::lower_bound(g.items.begin(), g.items.end(), i) - g.items.begin());
  };

  // d/dU of the pair average: (1/|pairs|) sum s * (I_neg - I_pos); each item
  // row gets -/+ s * U from the pairs it takes part in.
  Vector user_dir = Vector::Zero(k);
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const double w = sums.pos_weight[i] / n_pairs;
    const auto item = p.items.row(positives[i].value);
    user_dir.noalias() -= w * item.transpose();
    g.item_grads.row(row_of(positives[i])) += -w * user + (2.0 * lambda / n_pos) * item;
  }
  for (std::size_t n = 0; n < negatives.size(); ++n) {
    const double w = sums.neg_weight[n] / n_pairs;
    const auto item = p.items.row(negatives[n].value);
    user_dir.noalias() += w * item.transpose();
    g.item_grads.row(row_of(negatives[n])) += w * user + (2.0 * lambda / n_neg) * item;
  }
  g.user_grad = user_dir + 2.0 * lambda * user.transpose();
  return out;
}

std::vector<UserPairs> eligible_users(const Dataset& dataset, Split split) {
  std::vector<UserPairs> out;
  for (std::uint32_t u = 0; u < dataset.n_users(); ++u) {
    const auto& h = dataset.histories[u];
    const auto span = split == Split::train ? h.train() : h.test();
    UserPairs pairs{UserId{u}, {}, {}};
    for (const auto& x : span) (is_positive(x.feedback) ? pairs.positives : pairs.negatives).push_back(x.item);
    if (!pairs.positives.empty() && !pairs.negatives.empty()) out.push_back(std::move(pairs));
  }
  return out;
}

LossSummary dataset_loss(const ModelParams& params, const Dataset& dataset, Split split, double lambda) {
  const auto users = eligible_users(dataset, split);
  if (users.empty()) throw DataError("dataset loss: no user has both a positive and a negative in the split");
  LossSummary s;
  s.n_users = users.size();
  s.n_skipped = dataset.n_users() - users.size();
  double total = 0.0;
  for (const auto& up : users) total += pairwise_loss(params, up.user, up.positives, up.negatives, lambda);
  s.loss = total / static_cast<double>(users.size());
  return s;
}

DenseGrad dataset_loss_and_grad(const ModelParams& params, std::span<const UserPairs> users, double lambda) {
  if (users.empty()) throw DataError("dataset gradient: no eligible users");
  DenseGrad out{0.0, Matrix::Zero(params.users.rows(), params.users.cols()),
                Matrix::Zero(params.items.rows(), params.items.cols())};
  const double inv_users = 1.0 / static_cast<double>(users.size());
  for (const auto& up : users) {
    const PairwiseLoss pl = pairwise_loss_and_grad(params, up.user, up.positives, up.negatives, lambda);
    out.loss += pl.loss;
    out.users.row(up.user.value) += inv_users * pl.grad.user_grad.transpose();
    for (std::size_t r = 0; r < pl.grad.items.size(); ++r) {
      out.items.row(pl.grad.items[r].value) += inv_users * pl.grad.item_grads.row(static_cast<Eigen::Index>(r));
    }
  }
  out.loss *= inv_users;
  return out;
}

}  // namespace saros
