#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "saros/core.hpp"
#include "saros/ingest.hpp"

namespace saros {

struct RankedEntry {
  ItemId item;
  double score = 0.0;
  bool relevant = false;
};

/// Candidates by descending score; equal scores by ascending ItemId.
using RankedList = std::vector<RankedEntry>;

RankedList rank(std::vector<RankedEntry> candidates);

/// Sum of precision@j over relevant positions j <= K, divided by
/// min(K, relevant items in the list). 0 when the list has no relevant item.
double average_precision_at_k(std::span<const std::uint8_t> relevance, std::size_t K);

/// DCG@K / IDCG@K with binary gains; IDCG over min(K, relevant) positions.
/// 0 when the list has no relevant item.
double ndcg_at_k(std::span<const std::uint8_t> relevance, std::size_t K);

enum class CandidateMode {
  test_interactions,  // the items of the user's own test interactions
  all_items,          // every item except the user's train positives
};

std::string_view to_string(CandidateMode mode);
CandidateMode candidate_mode_from_string(std::string_view name);

RankedList ranked_list(const ModelParams& params, const Dataset& dataset, UserId u, CandidateMode mode);

struct RankMetrics {
  double map = 0.0;
  double ndcg = 0.0;
};

struct MetricsReport {
  std::string dataset;
  std::string trainer;
  std::map<std::size_t, RankMetrics> at_k;
  double test_loss = 0.0;  // NaN when no test user has both classes
  double test_loss_lambda = 0.0;
  std::size_t n_eval_users = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// MAP@K and NDCG@K for each K over users with a relevant candidate, and the
/// test-split dataset loss at `loss_lambda`. Throws DataError if no user is evaluable.
MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, std::span<const std::size_t> Ks,
                       CandidateMode mode, double loss_lambda);

nlohmann::json to_json(const MetricsReport& report);
std::string csv_header(const MetricsReport& report);
std::string csv_row(const MetricsReport& report);

}  // namespace saros
