#include "saros/persist.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace saros {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

void put_matrix(std::string& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m.data()[i]));
}

void write_atomically(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failure on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Sequential reader that names the section it ran out in.
class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path)
      : data_(reinterpret_cast<const unsigned char*>(bytes.data())), size_(bytes.size()), path_(path) {}

  const unsigned char* take(std::size_t n, const char* section) {
    if (size_ - pos_ < n) {
      throw CheckpointError("truncated checkpoint " + path_.string() + ": missing " + section);
    }
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  std::uint64_t u64(const char* section) { return get_u64(take(8, section)); }

  Matrix matrix(std::uint64_t rows, std::uint64_t cols, const char* section) {
    if (cols != 0 && rows > (size_ - pos_) / 8 / cols) {
      throw CheckpointError("truncated checkpoint " + path_.string() + ": missing " + section);
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const unsigned char* p = take(8 * rows * cols, section);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(get_u64(p + 8 * i));
    return m;
  }

  bool done() const { return pos_ == size_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  const std::filesystem::path& path_;
};

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".json";
  return p;
}

void save_checkpoint(const ModelParams& params, const TrainConfig& config, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  if (params.users.cols() != params.items.cols()) throw ConfigError("user and item embeddings differ in k");

  std::string bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  bytes.push_back(static_cast<char>(kCheckpointVersion));
  put_u64(bytes, params.n_users());
  put_u64(bytes, params.n_items());
  put_u64(bytes, params.k());
  bytes.reserve(bytes.size() + 8 * static_cast<std::size_t>(params.users.size() + params.items.size()));
  put_matrix(bytes, params.users);
  put_matrix(bytes, params.items);

  const nlohmann::json side{
      {"format_version", kCheckpointVersion},
      {"n_users", params.n_users()},
      {"n_items", params.n_items()},
      {"k", params.k()},
      {"trainer", std::string(to_string(meta.trainer))},
      {"epoch", meta.epoch},
      {"seed", meta.seed},
      {"config", to_json(config)},
      {"config_hash", config_hash(config)},
      {"user_ids", meta.user_ids},
      {"item_ids", meta.item_ids},
  };

  write_atomically(sidecar_path(path), side.dump(2) + "\n");
  write_atomically(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  Reader r(bytes, path);

  const unsigned char* magic = r.take(sizeof kCheckpointMagic, "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError("not a checkpoint (bad magic): " + path.string());
  }
  const std::uint8_t version = *r.take(1, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string() +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t n = r.u64("dimensions");
  const std::uint64_t m = r.u64("dimensions");
  const std::uint64_t k = r.u64("dimensions");

  Checkpoint ck;
  ck.params.users = r.matrix(n, k, "user_embeddings");
  ck.params.items = r.matrix(m, k, "item_embeddings");
  if (!r.done()) throw CheckpointError("trailing bytes after item_embeddings in " + path.string());

  const auto side_path = sidecar_path(path);
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(read_all(side_path));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint metadata " + side_path.string() + ": " + e.what());
  }
  try {
    if (side.at("format_version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint metadata version in " + side_path.string());
    }
    if (side.at("n_users").get<std::uint64_t>() != n || side.at("n_items").get<std::uint64_t>() != m ||
        side.at("k").get<std::uint64_t>() != k) {
      throw CheckpointError("checkpoint metadata dimensions disagree with " + path.string());
    }
    ck.config = config_from_json(side.at("config"));
    ck.meta.trainer = trainer_from_string(side.at("trainer").get<std::string>());
    ck.meta.epoch = side.at("epoch").get<std::size_t>();
    ck.meta.seed = side.at("seed").get<std::uint64_t>();
    ck.meta.user_ids = side.at("user_ids").get<std::vector<std::string>>();
    ck.meta.item_ids = side.at("item_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint metadata " + side_path.string() + ": " + e.what());
  }
  if ((!ck.meta.user_ids.empty() && ck.meta.user_ids.size() != n) ||
      (!ck.meta.item_ids.empty() && ck.meta.item_ids.size() != m)) {
    throw CheckpointError("checkpoint id maps disagree with embedding rows in " + side_path.string());
  }
  return ck;
}

}  // namespace saros
