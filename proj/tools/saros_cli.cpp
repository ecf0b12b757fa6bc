// saros: prepare logs, train SAROS / BPR models, evaluate them and merge loss traces.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "saros/blocks.hpp"
#include "saros/eval.hpp"
#include "saros/ingest.hpp"
#include "saros/persist.hpp"
#include "saros/train.hpp"

namespace fs = std::filesystem;
using namespace saros;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failure on " + path.string());
}

fs::path dataset_file(const fs::path& dir) { return dir / "dataset.tsv"; }

std::vector<std::size_t> parse_cutoffs(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--k-at expects a comma-separated list of positive integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("--k-at is empty");
  return out;
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::string input;
  std::string schema = "explicit:4";
  std::string delimiter = "auto";
  double train_fraction = 0.8;
  std::string out_dir;
};

void cmd_prepare(const PrepareArgs& a) {
  const Schema schema = Schema::parse(a.schema);
  const auto records = parse_log(a.input, schema, delimiter_from_string(a.delimiter));
  const InteractionLog log = binarize(records, schema);
  const SplitResult split = split_dataset(log, a.train_fraction);

  fs::create_directories(a.out_dir);
  const fs::path out(a.out_dir);
  write_dataset(split.dataset, dataset_file(out));
  write_discard_report(split.discarded, out / "discarded.tsv");

  const auto sequences = segment_dataset(split.dataset);
  write_histogram_csv(block_count_histogram(sequences), out / "blocks");

  nlohmann::json stats = to_json(dataset_stats(split.dataset));
  stats["parsed_records"] = records.size();
  stats["discarded_users"] = split.discarded.size();
  stats["discarded_records"] = split.n_discarded_records();
  stats["schema"] = a.schema;
  stats["train_fraction"] = a.train_fraction;
  try {
    const Thresholds th = estimate_thresholds(sequences);
    stats["thresholds"] = {{"b", th.b}, {"B", th.B}};
  } catch (const DataError&) {
    stats["thresholds"] = nullptr;
  }
  write_text(out / "stats.json", stats.dump(2) + "\n");
  std::cout << stats.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::string trainer = "saros_b";
  std::string config_file;
  std::string thresholds;
  std::string step_policy;
  std::optional<std::size_t> bpr_steps;
  std::string out;
  TrainConfig flags;  // values bound to CLI options; only set ones override
};

TrainConfig effective_config(const TrainArgs& a, const CLI::App& sub) {
  TrainConfig c;
  if (!a.config_file.empty()) {
    std::ifstream in(a.config_file);
    if (!in) throw IoError("cannot open config file " + a.config_file);
    try {
      c = config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed config file " + a.config_file + ": " + e.what());
    }
  }
  auto given = [&sub](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--eta")) c.eta = a.flags.eta;
  if (given("--lambda")) c.lambda = a.flags.lambda;
  if (given("--k")) c.k = a.flags.k;
  if (given("--epochs")) c.epochs = a.flags.epochs;
  if (given("--b")) c.b = a.flags.b;
  if (given("--B")) c.B = a.flags.B;
  if (given("--alpha")) c.alpha = a.flags.alpha;
  if (given("--mu")) c.mu = a.flags.mu;
  if (given("--seed")) c.rng_seed = a.flags.rng_seed;
  if (given("--init-scale")) c.init_scale = a.flags.init_scale;
  if (given("--trace-period")) c.trace_period = a.flags.trace_period;
  if (given("--trace-pairs")) c.trace_pairs = a.flags.trace_pairs;
  if (!a.step_policy.empty()) c.step_policy = step_policy_from_string(a.step_policy);
  return c;
}

void cmd_train(const TrainArgs& a, const CLI::App& sub) {
  const TrainerKind kind = trainer_from_string(a.trainer);
  TrainConfig config = effective_config(a, sub);
  const Dataset ds = read_dataset(dataset_file(a.data_dir));

  if (!a.thresholds.empty()) {
    if (a.thresholds != "auto") throw ConfigError("--thresholds only accepts 'auto'");
    if (sub.get_option("--B")->count() > 0) throw ConfigError("--B and --thresholds auto are exclusive");
    const Thresholds th = estimate_thresholds(segment_dataset(ds));
    config.b = th.b;
    config.B = th.B;
    std::cerr << "thresholds: b=" << th.b << " B=" << th.B << "\n";
  }
  config.validate();
  std::cerr << "config: " << to_json(config).dump() << "\n";

  TrainOptions options;
  options.bpr_steps = a.bpr_steps;
  const TrainResult result = train(kind, ds, config, options);

  CheckpointMeta meta{kind, config.epochs, config.rng_seed, ds.users.raw_ids(), ds.items.raw_ids()};
  save_checkpoint(result.params, config, meta, a.out);
  fs::path trace_path = a.out;
  trace_path += ".trace.csv";
  write_trace_csv(result.trace, trace_path);

  const auto& first = result.trace.points.front();
  const auto& last = result.trace.points.back();
  std::cerr << "trainer " << to_string(kind) << ": " << result.updates << " updates, train loss " << first.loss
            << " -> " << last.loss << " in " << last.seconds << " s";
  if (kind == TrainerKind::saros_b) std::cerr << ", " << result.rolled_back_users << " user visits rolled back";
  std::cerr << "\n";
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string k_at = "5,10";
  std::string candidate_mode = "test";
  std::string loss_lambda = "tuned";
  std::string name;
  std::string out;
};

void cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Dataset ds = read_dataset(dataset_file(a.data_dir));
  if (ck.meta.user_ids != ds.users.raw_ids() || ck.meta.item_ids != ds.items.raw_ids()) {
    throw DataError("checkpoint id maps do not match dataset " + a.data_dir);
  }
  if (a.loss_lambda != "tuned" && a.loss_lambda != "zero") {
    throw ConfigError("--test-loss-lambda must be 'tuned' or 'zero'");
  }
  const auto Ks = parse_cutoffs(a.k_at);
  MetricsReport report = evaluate(ck.params, ds, Ks, candidate_mode_from_string(a.candidate_mode),
                                  a.loss_lambda == "tuned" ? ck.config.lambda : 0.0);
  report.dataset = a.name.empty() ? fs::path(a.data_dir).filename().string() : a.name;
  report.trainer = std::string(to_string(ck.meta.trainer));
  report.config_hash = config_hash(ck.config);
  report.seed = ck.meta.seed;

  nlohmann::json j = to_json(report);
  j["candidate_mode"] = a.candidate_mode;
  j["config"] = to_json(ck.config);
  const std::string text = j.dump(2) + "\n";
  if (!a.out.empty()) {
    write_text(a.out, text);
    fs::path csv = a.out;
    csv.replace_extension(".csv");
    write_text(csv, csv_header(report) + "\n" + csv_row(report) + "\n");
  }
  std::cout << text;
}

// ---------------------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> traces;
  std::vector<std::string> tags;
  std::string out;
};

std::string default_tag(const fs::path& p) {
  std::string stem = p.filename().string();
  for (const char* suffix : {".trace.csv", ".csv"}) {
    const std::string s(suffix);
    if (stem.size() > s.size() && stem.compare(stem.size() - s.size(), s.size(), s) == 0) {
      return stem.substr(0, stem.size() - s.size());
    }
  }
  return stem;
}

void cmd_compare(const CompareArgs& a) {
  if (!a.tags.empty() && a.tags.size() != a.traces.size()) {
    throw ConfigError("--tags must name every trace");
  }
  std::ostringstream merged;
  merged << "trainer,seconds,epoch,updates,loss\n";
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    std::ifstream in(a.traces[i]);
    if (!in) throw IoError("cannot open trace " + a.traces[i]);
    const std::string tag = a.tags.empty() ? default_tag(a.traces[i]) : a.tags[i];
    std::string line;
    if (!std::getline(in, line) || line != "seconds,epoch,updates,loss") {
      throw DataError("not a trace CSV (bad header): " + a.traces[i]);
    }
    while (std::getline(in, line)) {
      if (!line.empty()) merged << tag << ',' << line << '\n';
    }
  }
  if (a.out.empty()) {
    std::cout << merged.str();
  } else {
    write_text(a.out, merged.str());
  }
}

// ---------------------------------------------------------------------------

struct BlocksArgs {
  std::string data_dir;
  std::string out;
};

void cmd_blocks(const BlocksArgs& a) {
  const Dataset ds = read_dataset(dataset_file(a.data_dir));
  const auto sequences = segment_dataset(ds);
  write_histogram_csv(block_count_histogram(sequences), a.out);
  const Thresholds th = estimate_thresholds(sequences);
  std::cout << "b=" << th.b << " B=" << th.B << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAROS sequential recommender: prepare, train, evaluate, compare"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Binarize, time-order and split an interaction log");
  prepare->add_option("input", prep.input, "Log with user,item,value,timestamp columns")->required();
  prepare->add_option("--schema", prep.schema, "explicit:<threshold> or binary")->capture_default_str();
  prepare->add_option("--delimiter", prep.delimiter, "auto, tab, comma or double-colon")->capture_default_str();
  prepare->add_option("--train-fraction", prep.train_fraction, "Leading share of each user's history used for training")
      ->capture_default_str();
  prepare->add_option("--out", prep.out_dir, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a prepared dataset");
  train_cmd->add_option("--data", tr.data_dir, "Prepared dataset directory")->required();
  train_cmd->add_option("--trainer", tr.trainer, "saros_b, saros_m, bpr or bpr_batch")->capture_default_str();
  train_cmd->add_option("--config", tr.config_file, "JSON config file (flags take precedence)");
  train_cmd->add_option("--eta", tr.flags.eta, "Learning rate");
  train_cmd->add_option("--lambda", tr.flags.lambda, "L2 regularization");
  train_cmd->add_option("--k", tr.flags.k, "Embedding dimension");
  train_cmd->add_option("--epochs", tr.flags.epochs, "Epochs");
  train_cmd->add_option("--b", tr.flags.b, "Lower block threshold (SAROS_b)");
  train_cmd->add_option("--B", tr.flags.B, "Upper block threshold (SAROS_b)");
  train_cmd->add_option("--thresholds", tr.thresholds, "'auto' estimates b and B from the train blocks");
  train_cmd->add_option("--alpha", tr.flags.alpha, "Momentum step size (SAROS_m)");
  train_cmd->add_option("--mu", tr.flags.mu, "Momentum coefficient (SAROS_m)");
  train_cmd->add_option("--seed", tr.flags.rng_seed, "RNG seed");
  train_cmd->add_option("--init-scale", tr.flags.init_scale, "Std-dev of the Gaussian initialization");
  train_cmd->add_option("--step-policy", tr.step_policy, "constant or inv_sqrt_n");
  train_cmd->add_option("--trace-period", tr.flags.trace_period, "Updates between trace points (0: ends only)");
  train_cmd->add_option("--trace-pairs", tr.flags.trace_pairs, "Max pairs in the trace loss sample");
  train_cmd->add_option("--bpr-steps", tr.bpr_steps, "BPR triplet steps (default: epochs x train interactions)");
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Compute MAP@K, NDCG@K and test loss of a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data_dir, "Prepared dataset directory")->required();
  eval_cmd->add_option("--k-at", ev.k_at, "Cutoffs, comma separated")->capture_default_str();
  eval_cmd->add_option("--candidate-mode", ev.candidate_mode, "test or all")->capture_default_str();
  eval_cmd->add_option("--test-loss-lambda", ev.loss_lambda, "tuned (training lambda) or zero")->capture_default_str();
  eval_cmd->add_option("--name", ev.name, "Dataset name in the report (default: data directory name)");
  eval_cmd->add_option("--out", ev.out, "Report JSON path; a CSV row is written beside it");

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "Merge trace CSVs into one long-format CSV");
  compare->add_option("traces", cmp.traces, "Trace CSV files")->required();
  compare->add_option("--tags", cmp.tags, "Trainer tag per trace (default: file stem)")->delimiter(',');
  compare->add_option("--out", cmp.out, "Merged CSV path (default: stdout)");

  BlocksArgs bl;
  auto* blocks = app.add_subcommand("blocks", "Export block-size and blocks-per-user histograms");
  blocks->add_option("--data", bl.data_dir, "Prepared dataset directory")->required();
  blocks->add_option("--out", bl.out, "Output path stem")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*prepare) cmd_prepare(prep);
    if (*train_cmd) cmd_train(tr, *train_cmd);
    if (*eval_cmd) cmd_eval(ev);
    if (*compare) cmd_compare(cmp);
    if (*blocks) cmd_blocks(bl);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
