#include "saros/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "saros/loss.hpp"

namespace saros {

RankedList rank(std::vector<RankedEntry> candidates) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  return candidates;
}

double average_precision_at_k(std::span<const std::uint8_t> relevance, std::size_t K) {
  const auto n_relevant = static_cast<std::size_t>(std::count_if(relevance.begin(), relevance.end(), [](std::uint8_t r) { return r != 0; }));
  if (n_relevant == 0 || K == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t depth = std::min(K, relevance.size());
  for (std::size_t j = 0; j < depth; ++j) {
    if (!relevance[j]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(j + 1);
  }
  return sum / static_cast<double>(std::min(K, n_relevant));
}

double ndcg_at_k(std::span<const std::uint8_t> relevance, std::size_t K) {
  const auto n_relevant = static_cast<std::size_t>(std::count_if(relevance.begin(), relevance.end(), [](std::uint8_t r) { return r != 0; }));
  if (n_relevant == 0 || K == 0) return 0.0;
  double dcg = 0.0;
  const std::size_t depth = std::min(K, relevance.size());
  for (std::size_t j = 0; j < depth; ++j) {
    if (relevance[j]) dcg += 1.0 / std::log2(static_cast<double>(j + 2));
  }
  double idcg = 0.0;
  for (std::size_t j = 0; j < std::min(K, n_relevant); ++j) idcg += 1.0 / std::log2(static_cast<double>(j + 2));
  return dcg / idcg;
}

std::string_view to_string(CandidateMode mode) {
  return mode == CandidateMode::test_interactions ? "test" : "all";
}

CandidateMode candidate_mode_from_string(std::string_view name) {
  if (name == "test") return CandidateMode::test_interactions;
  if (name == "all") return CandidateMode::all_items;
  throw ConfigError("candidate mode must be 'test' or 'all', got '" + std::string(name) + "'");
}

RankedList ranked_list(const ModelParams& params, const Dataset& dataset, UserId u, CandidateMode mode) {
  const UserHistory& h = dataset.history(u);
  std::vector<RankedEntry> candidates;
  if (mode == CandidateMode::test_interactions) {
    for (const auto& x : h.test()) {
      candidates.push_back({x.item, params.score(u, x.item), is_positive(x.feedback)});
    }
  } else {
    std::vector<char> excluded(dataset.n_items(), 0);
    std::vector<char> relevant(dataset.n_items(), 0);
    for (const auto& x : h.train()) {
      if (is_positive(x.feedback)) excluded[x.item.value] = 1;
    }
    for (const auto& x : h.test()) {
      if (is_positive(x.feedback)) relevant[x.item.value] = 1;
    }
    const Vector scores = params.items * params.users.row(u.value).transpose();
    for (std::uint32_t i = 0; i < dataset.n_items(); ++i) {
      if (excluded[i]) continue;
      candidates.push_back({ItemId{i}, scores[i], relevant[i] != 0});
    }
  }
  return rank(std::move(candidates));
}

MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, std::span<const std::size_t> Ks,
                       CandidateMode mode, double loss_lambda) {
  if (Ks.empty()) throw ConfigError("evaluate: at least one cutoff K is required");
  for (std::size_t K : Ks) {
    if (K < 1) throw ConfigError("evaluate: cutoffs must be >= 1");
  }
  if (params.n_users() != dataset.n_users() || params.n_items() != dataset.n_items()) {
    throw DataError("evaluate: parameter shape does not match the dataset");
  }

  MetricsReport report;
  std::map<std::size_t, RankMetrics> sums;
  std::vector<std::uint8_t> relevance;
  for (std::uint32_t u = 0; u < dataset.n_users(); ++u) {
    const RankedList list = ranked_list(params, dataset, UserId{u}, mode);
    relevance.assign(list.size(), 0);
    bool any = false;
    for (std::size_t j = 0; j < list.size(); ++j) {
      relevance[j] = list[j].relevant ? 1 : 0;
      any = any || list[j].relevant;
    }
    if (!any) continue;
    ++report.n_eval_users;
    for (std::size_t K : Ks) {
      sums[K].map += average_precision_at_k(relevance, K);
      sums[K].ndcg += ndcg_at_k(relevance, K);
    }
  }
  if (report.n_eval_users == 0) throw DataError("evaluate: no user has a relevant test item");

  const double n = static_cast<double>(report.n_eval_users);
  for (const auto& [K, s] : sums) report.at_k[K] = RankMetrics{s.map / n, s.ndcg / n};

  report.test_loss_lambda = loss_lambda;
  try {
    report.test_loss = dataset_loss(params, dataset, Split::test, loss_lambda).loss;
  } catch (const DataError&) {
    report.test_loss = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per_k = nlohmann::json::object();
  for (const auto& [K, m] : r.at_k) per_k[std::to_string(K)] = {{"map", m.map}, {"ndcg", m.ndcg}};
  nlohmann::json loss = std::isfinite(r.test_loss) ? nlohmann::json(r.test_loss) : nlohmann::json(nullptr);
  return nlohmann::json{
      {"dataset", r.dataset},          {"trainer", r.trainer},
      {"K", per_k},                    {"test_loss", loss},
      {"test_loss_lambda", r.test_loss_lambda}, {"n_eval_users", r.n_eval_users},
      {"config_hash", r.config_hash},  {"seed", r.seed},
  };
}

std::string csv_header(const MetricsReport& r) {
  std::ostringstream out;
  out << "dataset,trainer";
  for (const auto& [K, m] : r.at_k) out << ",map@" << K << ",ndcg@" << K;
  out << ",test_loss,n_eval_users,config_hash,seed";
  return out.str();
}

std::string csv_row(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.dataset << ',' << r.trainer;
  for (const auto& [K, m] : r.at_k) out << ',' << m.map << ',' << m.ndcg;
  out << ',' << r.test_loss << ',' << r.n_eval_users << ',' << r.config_hash << ',' << r.seed;
  return out.str();
}

}  // namespace saros
