#include "saros/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace saros {

ParseError::ParseError(std::size_t line, const std::string& what)
    : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

Schema Schema::parse(std::string_view text) {
  if (text == "binary") return binary();
  constexpr std::string_view prefix = "explicit";
  if (text.substr(0, prefix.size()) == prefix) {
    auto rest = text.substr(prefix.size());
    if (rest.empty()) return explicit_ratings(4.0);
    if (rest.front() == ':') {
      rest.remove_prefix(1);
      double threshold = 0.0;
      auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), threshold);
      if (ec == std::errc() && ptr == rest.data() + rest.size()) return explicit_ratings(threshold);
    }
  }
  throw ConfigError("schema must be 'explicit:<threshold>' or 'binary', got '" + std::string(text) + "'");
}

Delimiter delimiter_from_string(std::string_view name) {
  if (name == "auto") return Delimiter::detect;
  if (name == "tab") return Delimiter::tab;
  if (name == "comma") return Delimiter::comma;
  if (name == "double-colon" || name == "::") return Delimiter::double_colon;
  throw ConfigError("unknown delimiter: " + std::string(name));
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, Delimiter d) {
  const std::string_view sep = d == Delimiter::tab ? "\t" : d == Delimiter::comma ? "," : "::";
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

Delimiter detect_delimiter(std::string_view line) {
  if (line.find("::") != std::string_view::npos) return Delimiter::double_colon;
  if (line.find('\t') != std::string_view::npos) return Delimiter::tab;
  if (line.find(',') != std::string_view::npos) return Delimiter::comma;
  return Delimiter::tab;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

bool parse_value(std::string_view s, const Schema& schema, double& out) {
  if (schema.mode == Schema::Mode::explicit_rating) return parse_number(s, out) && std::isfinite(out);
  if (s == "1" || s == "+1") {
    out = 1.0;
    return true;
  }
  if (s == "0" || s == "-1") {
    out = -1.0;
    return true;
  }
  return false;
}

}  // namespace

std::vector<RawRecord> parse_log_text(std::string_view text, const Schema& schema, Delimiter delimiter) {
  std::vector<RawRecord> records;
  std::size_t line_no = 0;
  bool first = true;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    if (first && delimiter == Delimiter::detect) delimiter = detect_delimiter(line);
    const auto fields = split_fields(line, delimiter);
    if (fields.size() != 4) {
      throw ParseError(line_no, "expected 4 columns (user, item, value, timestamp), found " +
                                    std::to_string(fields.size()));
    }

    RawRecord r;
    r.user_raw = std::string(trim(fields[0]));
    r.item_raw = std::string(trim(fields[1]));
    r.line = line_no;
    const bool value_ok = parse_value(trim(fields[2]), schema, r.value);
    const bool ts_ok = parse_number(trim(fields[3]), r.timestamp);
    if (!value_ok || !ts_ok) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ParseError(line_no, !value_ok ? "unparseable value '" + std::string(fields[2]) + "'"
                                          : "unparseable timestamp '" + std::string(fields[3]) + "'");
    }
    if (r.user_raw.empty() || r.item_raw.empty()) throw ParseError(line_no, "empty user or item id");
    first = false;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<RawRecord> parse_log(const std::filesystem::path& path, const Schema& schema, Delimiter delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on " + path.string());
  return parse_log_text(buf.str(), schema, delimiter);
}

InteractionLog binarize(std::span<const RawRecord> records, const Schema& schema) {
  InteractionLog log;
  log.interactions.reserve(records.size());
  for (const auto& r : records) {
    const bool positive = schema.mode == Schema::Mode::explicit_rating ? r.value >= schema.threshold : r.value > 0.0;
    log.interactions.push_back(Interaction{log.users.intern(r.user_raw), log.items.intern(r.item_raw),
                                           positive ? Feedback::positive : Feedback::negative, r.timestamp});
  }
  return log;
}

std::size_t Dataset::n_train() const {
  std::size_t n = 0;
  for (const auto& h : histories) n += h.n_train;
  return n;
}

std::size_t Dataset::n_test() const {
  std::size_t n = 0;
  for (const auto& h : histories) n += h.interactions.size() - h.n_train;
  return n;
}

std::string_view to_string(Discard::Reason reason) {
  switch (reason) {
    case Discard::Reason::no_positive: return "no_positive";
    case Discard::Reason::no_negative: return "no_negative";
    case Discard::Reason::no_train: return "no_train";
  }
  return "unknown";
}

std::size_t SplitResult::n_discarded_records() const {
  std::size_t n = 0;
  for (const auto& d : discarded) n += d.n_records;
  return n;
}

SplitResult split_dataset(const InteractionLog& log, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (log.interactions.empty()) throw DataError("no interactions to split");

  // Per raw-user record lists, in file order.
  std::vector<std::vector<std::size_t>> by_user(log.users.size());
  for (std::size_t i = 0; i < log.interactions.size(); ++i) {
    by_user[log.interactions[i].user.value].push_back(i);
  }

  SplitResult result;
  std::vector<bool> keep(log.users.size(), false);
  std::vector<std::size_t> n_train(log.users.size(), 0);
  for (std::uint32_t u = 0; u < by_user.size(); ++u) {
    const auto& idx = by_user[u];
    const auto n_pos = static_cast<std::size_t>(std::count_if(
        idx.begin(), idx.end(), [&](std::size_t i) { return is_positive(log.interactions[i].feedback); }));
    const std::string& raw = log.users.raw(UserId{u});
    if (n_pos == 0) {
      result.discarded.push_back({raw, Discard::Reason::no_positive, idx.size()});
      continue;
    }
    if (n_pos == idx.size()) {
      result.discarded.push_back({raw, Discard::Reason::no_negative, idx.size()});
      continue;
    }
    // The epsilon keeps products like 0.8 * 10 from rounding up to 9.
    const double exact = train_fraction * static_cast<double>(idx.size());
    const auto cut = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    if (cut == 0) {
      result.discarded.push_back({raw, Discard::Reason::no_train, idx.size()});
      continue;
    }
    keep[u] = true;
    n_train[u] = std::min(cut, idx.size());
  }

  Dataset& ds = result.dataset;
  std::vector<std::uint32_t> user_remap(log.users.size(), 0);
  for (std::uint32_t u = 0; u < by_user.size(); ++u) {
    if (!keep[u]) continue;
    user_remap[u] = ds.users.intern(log.users.raw(UserId{u})).value;
  }
  // Item ids follow first appearance among surviving records, in file order.
  std::vector<std::uint32_t> item_remap(log.items.size(), 0);
  std::vector<bool> item_seen(log.items.size(), false);
  for (const auto& it : log.interactions) {
    if (!keep[it.user.value] || item_seen[it.item.value]) continue;
    item_seen[it.item.value] = true;
    item_remap[it.item.value] = ds.items.intern(log.items.raw(it.item)).value;
  }

  ds.histories.resize(ds.users.size());
  for (std::uint32_t u = 0; u < by_user.size(); ++u) {
    if (!keep[u]) continue;
    UserHistory& h = ds.histories[user_remap[u]];
    h.interactions.reserve(by_user[u].size());
    for (std::size_t i : by_user[u]) {
      Interaction x = log.interactions[i];
      x.user = UserId{user_remap[u]};
      x.item = ItemId{item_remap[x.item.value]};
      h.interactions.push_back(x);
    }
    std::stable_sort(h.interactions.begin(), h.interactions.end(),
                     [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
    h.n_train = n_train[u];
  }
  return result;
}

DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats s;
  s.n_users = ds.n_users();
  s.n_items = ds.n_items();
  std::size_t pos_total = 0;
  std::size_t pos_train = 0;
  std::size_t pos_test = 0;
  for (const auto& h : ds.histories) {
    s.n_interactions += h.interactions.size();
    s.n_train += h.n_train;
    for (std::size_t i = 0; i < h.interactions.size(); ++i) {
      if (!is_positive(h.interactions[i].feedback)) continue;
      ++pos_total;
      (i < h.n_train ? pos_train : pos_test) += 1;
    }
  }
  s.n_test = s.n_interactions - s.n_train;
  if (s.n_users > 0 && s.n_items > 0) {
    s.sparsity = 1.0 - static_cast<double>(s.n_interactions) /
                           (static_cast<double>(s.n_users) * static_cast<double>(s.n_items));
    s.avg_positives = static_cast<double>(pos_total) / static_cast<double>(s.n_users);
    s.avg_negatives = static_cast<double>(s.n_interactions - pos_total) / static_cast<double>(s.n_users);
  }
  if (s.n_train > 0) s.pos_train_pct = 100.0 * static_cast<double>(pos_train) / static_cast<double>(s.n_train);
  if (s.n_test > 0) s.pos_test_pct = 100.0 * static_cast<double>(pos_test) / static_cast<double>(s.n_test);
  return s;
}

nlohmann::json to_json(const DatasetStats& s) {
  return nlohmann::json{
      {"users", s.n_users},           {"items", s.n_items},
      {"interactions", s.n_interactions}, {"sparsity", s.sparsity},
      {"avg_positives", s.avg_positives}, {"avg_negatives", s.avg_negatives},
      {"train", s.n_train},           {"test", s.n_test},
      {"pos_train_pct", s.pos_train_pct}, {"pos_test_pct", s.pos_test_pct},
  };
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "user_id\titem_id\tuser\titem\tfeedback\ttimestamp\tsplit\n";
  for (const auto& h : ds.histories) {
    for (std::size_t i = 0; i < h.interactions.size(); ++i) {
      const auto& x = h.interactions[i];
      out << x.user.value << '\t' << x.item.value << '\t' << ds.users.raw(x.user) << '\t' << ds.items.raw(x.item)
          << '\t' << static_cast<int>(x.feedback) << '\t' << x.timestamp << '\t'
          << (i < h.n_train ? "train" : "test") << '\n';
    }
  }
  if (!out) throw IoError("write failure on " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  struct Row {
    std::uint32_t user, item;
    Feedback fb;
    std::int64_t ts;
    bool train;
  };
  std::vector<Row> rows;
  std::vector<std::string> user_raw, item_raw;
  auto assign = [](std::vector<std::string>& names, std::uint32_t id, std::string_view raw, std::size_t line) {
    if (id >= names.size()) names.resize(id + 1);
    if (names[id].empty()) {
      names[id] = std::string(raw);
    } else if (names[id] != raw) {
      throw ParseError(line, "dense id " + std::to_string(id) + " mapped to two raw ids");
    }
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) continue;
    const std::string_view sv = trim(line);
    if (sv.empty()) continue;
    const auto f = split_fields(sv, Delimiter::tab);
    Row r{};
    int fb = 0;
    if (f.size() != 7 || !parse_number(f[0], r.user) || !parse_number(f[1], r.item) || !parse_number(f[4], fb) ||
        (fb != 1 && fb != -1) || !parse_number(f[5], r.ts) || (f[6] != "train" && f[6] != "test")) {
      throw ParseError(line_no, "malformed prepared-dataset row");
    }
    r.fb = fb > 0 ? Feedback::positive : Feedback::negative;
    r.train = f[6] == "train";
    assign(user_raw, r.user, f[2], line_no);
    assign(item_raw, r.item, f[3], line_no);
    rows.push_back(r);
  }

  Dataset ds;
  for (std::size_t i = 0; i < user_raw.size(); ++i) {
    if (user_raw[i].empty()) throw DataError("prepared dataset is missing user id " + std::to_string(i));
    ds.users.intern(user_raw[i]);
  }
  for (std::size_t i = 0; i < item_raw.size(); ++i) {
    if (item_raw[i].empty()) throw DataError("prepared dataset is missing item id " + std::to_string(i));
    ds.items.intern(item_raw[i]);
  }
  ds.histories.resize(ds.users.size());
  for (const auto& r : rows) {
    auto& h = ds.histories[r.user];
    if (r.train && h.n_train != h.interactions.size()) {
      throw DataError("prepared dataset has a train row after a test row for user " + user_raw[r.user]);
    }
    h.interactions.push_back(Interaction{UserId{r.user}, ItemId{r.item}, r.fb, r.ts});
    if (r.train) ++h.n_train;
  }
  return ds;
}

void write_discard_report(std::span<const Discard> discarded, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "user\treason\trecords\n";
  for (const auto& d : discarded) out << d.user_raw << '\t' << to_string(d.reason) << '\t' << d.n_records << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace saros
