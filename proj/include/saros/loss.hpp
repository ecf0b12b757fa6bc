#pragma once

#include <span>
#include <vector>

#include "saros/blocks.hpp"
#include "saros/core.hpp"
#include "saros/ingest.hpp"

namespace saros {

/// log(1 + exp(x)) without overflow.
double softplus(double x);
/// 1 / (1 + exp(-x)) without overflow.
double logistic(double x);

/// Regularized logistic loss of ranking `pos` above `neg` for user `u`:
///   log(1 + exp(-U_u . (I_pos - I_neg))) + lambda (|U_u|^2 + |I_pos|^2 + |I_neg|^2)
double triplet_loss(const ModelParams& params, UserId u, ItemId pos, ItemId neg, double lambda);

struct TripletGrad {
  Vector user;
  Vector item_pos;
  Vector item_neg;
};

TripletGrad triplet_grad(const ModelParams& params, UserId u, ItemId pos, ItemId neg, double lambda);

/// Gradient restricted to one user row and a set of distinct item rows.
struct SparseGrad {
  UserId user;
  Vector user_grad;
  std::vector<ItemId> items;  // sorted, distinct
  Matrix item_grads;          // one row per entry of `items`

  double squared_norm() const { return user_grad.squaredNorm() + item_grads.squaredNorm(); }
};

struct PairwiseLoss {
  double loss = 0.0;
  SparseGrad grad;
};

/// Mean triplet loss over positives x negatives (duplicates count with
/// multiplicity), and its gradient accumulated per distinct row.
/// Both lists must be non-empty.
PairwiseLoss pairwise_loss_and_grad(const ModelParams& params, UserId u, std::span<const ItemId> positives,
                                    std::span<const ItemId> negatives, double lambda);

double pairwise_loss(const ModelParams& params, UserId u, std::span<const ItemId> positives,
                     std::span<const ItemId> negatives, double lambda);

inline PairwiseLoss block_loss_and_grad(const ModelParams& params, UserId u, const Block& block, double lambda) {
  return pairwise_loss_and_grad(params, u, block.positives, block.negatives, lambda);
}

struct LossSummary {
  double loss = 0.0;
  std::size_t n_users = 0;    // users averaged over
  std::size_t n_skipped = 0;  // users lacking positives or negatives in the split
};

/// Uniform average over users of their mean pairwise loss on the split.
/// Throws DataError if no user has both a positive and a negative there.
LossSummary dataset_loss(const ModelParams& params, const Dataset& dataset, Split split, double lambda);

/// Positive and negative item lists of one user's split, in time order.
struct UserPairs {
  UserId user;
  std::vector<ItemId> positives;
  std::vector<ItemId> negatives;
};

/// Users of the split having at least one positive and one negative.
std::vector<UserPairs> eligible_users(const Dataset& dataset, Split split);

struct DenseGrad {
  double loss = 0.0;
  Matrix users;
  Matrix items;

  double squared_norm() const { return users.squaredNorm() + items.squaredNorm(); }
};

/// Loss and full gradient of the dataset objective over precomputed pairs.
DenseGrad dataset_loss_and_grad(const ModelParams& params, std::span<const UserPairs> users, double lambda);

}  // namespace saros
