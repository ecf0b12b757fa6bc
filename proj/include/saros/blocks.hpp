#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "saros/core.hpp"
#include "saros/ingest.hpp"

namespace saros {

/// A run of skipped items followed by the run of clicked items that closes it.
struct Block {
  std::vector<ItemId> negatives;
  std::vector<ItemId> positives;

  std::size_t size() const { return negatives.size() + positives.size(); }
  bool operator==(const Block&) const = default;
};

/// All blocks of one user's train sequence. Only clicks before the first skip
/// and skips after the last click fall outside every block.
struct BlockSequence {
  UserId user;
  std::vector<Block> blocks;
  std::size_t leading_positives = 0;
  std::size_t trailing_negatives = 0;

  bool operator==(const BlockSequence&) const = default;
};

BlockSequence segment_user(UserId user, std::span<const Interaction> train);

/// Segments every user's train split; result is indexed by UserId.
std::vector<BlockSequence> segment_dataset(const Dataset& dataset);

struct Thresholds {
  std::size_t b = 0;
  std::size_t B = 0;
};

/// b = fewest blocks of any user that has one, B = their mean block count
/// rounded to nearest. Throws DataError if no user has a block.
Thresholds estimate_thresholds(std::span<const BlockSequence> sequences);

struct BlockHistogram {
  std::map<std::size_t, std::size_t> block_size;       // items per block -> blocks
  std::map<std::size_t, std::size_t> blocks_per_user;  // blocks -> users
};

BlockHistogram block_count_histogram(std::span<const BlockSequence> sequences);

/// Writes `<stem>_block_size.csv` and `<stem>_blocks_per_user.csv`.
void write_histogram_csv(const BlockHistogram& hist, const std::filesystem::path& stem);

}  // namespace saros
