#include "saros/blocks.hpp"

#include <cmath>
#include <fstream>

namespace saros {

BlockSequence segment_user(UserId user, std::span<const Interaction> train) {
  BlockSequence seq{user, {}, 0, 0};
  const std::size_t n = train.size();
  std::size_t j = 0;
  Block current;
  while (j < n) {
    while (j < n && !is_positive(train[j].feedback)) {
      current.negatives.push_back(train[j].item);
      ++j;
    }
    while (j < n && is_positive(train[j].feedback)) {
      // Clicks only join a block once skips have been seen.
      if (!current.negatives.empty()) {
        current.positives.push_back(train[j].item);
      } else {
        ++seq.leading_positives;
      }
      ++j;
    }
    if (!current.negatives.empty() && !current.positives.empty()) {
      seq.blocks.push_back(std::move(current));
      current = Block{};
    }
  }
  seq.trailing_negatives = current.negatives.size();
  return seq;
}

std::vector<BlockSequence> segment_dataset(const Dataset& dataset) {
  std::vector<BlockSequence> out;
  out.reserve(dataset.n_users());
  for (std::uint32_t u = 0; u < dataset.n_users(); ++u) {
    out.push_back(segment_user(UserId{u}, dataset.histories[u].train()));
  }
  return out;
}

Thresholds estimate_thresholds(std::span<const BlockSequence> sequences) {
  std::size_t users = 0;
  std::size_t total = 0;
  std::size_t fewest = kUnbounded;
  for (const auto& s : sequences) {
    if (s.blocks.empty()) continue;
    ++users;
    total += s.blocks.size();
    fewest = std::min(fewest, s.blocks.size());
  }
  if (users == 0) throw DataError("cannot estimate thresholds: no user has a block");
  const double mean = static_cast<double>(total) / static_cast<double>(users);
  return Thresholds{fewest, static_cast<std::size_t>(std::llround(mean))};
}

BlockHistogram block_count_histogram(std::span<const BlockSequence> sequences) {
  BlockHistogram h;
  for (const auto& s : sequences) {
    ++h.blocks_per_user[s.blocks.size()];
    for (const auto& b : s.blocks) ++h.block_size[b.size()];
  }
  return h;
}

void write_histogram_csv(const BlockHistogram& hist, const std::filesystem::path& stem) {
  auto write = [](const std::filesystem::path& path, const char* header, const auto& counts) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << header << '\n';
    for (const auto& [key, count] : counts) out << key << ',' << count << '\n';
    if (!out) throw IoError("write failure on " + path.string());
  };
  write(stem.string() + "_block_size.csv", "block_size,count", hist.block_size);
  write(stem.string() + "_blocks_per_user.csv", "blocks_per_user,count", hist.blocks_per_user);
}

}  // namespace saros
