#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "saros/core.hpp"

namespace saros {

/// Base for every error caused by bad input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

/// How the third column of a log is read.
struct Schema {
  enum class Mode { explicit_rating, binary };
  Mode mode = Mode::explicit_rating;
  double threshold = 4.0;  // explicit mode: rating >= threshold is positive

  static Schema explicit_ratings(double threshold) { return {Mode::explicit_rating, threshold}; }
  static Schema binary() { return {Mode::binary, 0.0}; }

  /// Parses "explicit:<threshold>" or "binary".
  static Schema parse(std::string_view text);
};

enum class Delimiter { detect, tab, comma, double_colon };

Delimiter delimiter_from_string(std::string_view name);

struct RawRecord {
  std::string user_raw;
  std::string item_raw;
  double value = 0.0;  // rating, or +1 / -1 click flag in binary mode
  std::int64_t timestamp = 0;
  std::size_t line = 0;
};

/// Reads `user,item,value,timestamp` records. A non-numeric first line is
/// treated as a header. Blank lines are skipped.
std::vector<RawRecord> parse_log(const std::filesystem::path& path, const Schema& schema,
                                 Delimiter delimiter = Delimiter::detect);

/// Parses from an in-memory buffer; `parse_log` reads the file and defers here.
std::vector<RawRecord> parse_log_text(std::string_view text, const Schema& schema,
                                      Delimiter delimiter = Delimiter::detect);

/// Binarized log in file order, with ids assigned over every record.
struct InteractionLog {
  std::vector<Interaction> interactions;
  UserMap users;
  ItemMap items;
};

InteractionLog binarize(std::span<const RawRecord> records, const Schema& schema);

/// One user's time-ordered interactions; the first `n_train` are the train split.
struct UserHistory {
  std::vector<Interaction> interactions;
  std::size_t n_train = 0;

  std::span<const Interaction> train() const { return std::span(interactions).first(n_train); }
  std::span<const Interaction> test() const { return std::span(interactions).subspan(n_train); }
};

struct Dataset {
  UserMap users;
  ItemMap items;
  std::vector<UserHistory> histories;  // indexed by UserId

  std::size_t n_users() const { return histories.size(); }
  std::size_t n_items() const { return items.size(); }
  std::size_t n_train() const;
  std::size_t n_test() const;
  const UserHistory& history(UserId u) const { return histories.at(u.value); }
};

enum class Split { train, test };

struct Discard {
  enum class Reason { no_positive, no_negative, no_train };
  std::string user_raw;
  Reason reason;
  std::size_t n_records = 0;
};

std::string_view to_string(Discard::Reason reason);

struct SplitResult {
  Dataset dataset;
  std::vector<Discard> discarded;

  std::size_t n_discarded_records() const;
};

/// Temporal per-user split: the first ceil(train_fraction * n_u) interactions
/// of every user go to train. Users that never click or never skip are dropped.
SplitResult split_dataset(const InteractionLog& log, double train_fraction);

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  double sparsity = 0.0;
  double avg_positives = 0.0;
  double avg_negatives = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double pos_train_pct = 0.0;
  double pos_test_pct = 0.0;
};

DatasetStats dataset_stats(const Dataset& dataset);
nlohmann::json to_json(const DatasetStats& stats);

/// Canonical prepared-dataset file (TSV with dense and raw ids).
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

void write_discard_report(std::span<const Discard> discarded, const std::filesystem::path& path);

}  // namespace saros
