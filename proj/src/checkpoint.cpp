// Checkpoint container:
//   "SERCCKP1" | u32 LE header length | UTF-8 JSON header |
//   per tensor, in header order: u32 name length | name | u32 rows | u32 cols | rows*cols f32 LE (row-major)

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "serc/model.hpp"

namespace serc {

using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::string_view take(std::size_t n, const std::string& what) {
    if (n > remaining())
      throw CorruptionError("checkpoint truncated while reading " + what + " (need " + std::to_string(n) +
                            " bytes, have " + std::to_string(remaining()) + ")");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const std::string& what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(k)]);
    return v;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

json config_to_json(const SercConfig& c) {
  return {{"word_hidden", c.word_hidden},     {"dep_hidden", c.dep_hidden},
          {"pos_hidden", c.pos_hidden},       {"stacked_hidden", c.stacked_hidden},
          {"dense_hidden", c.dense_hidden},   {"num_classes", c.num_classes},
          {"embedding_dim", c.embedding_dim}, {"pos_dim", c.pos_dim},
          {"dep_dim", c.dep_dim},             {"seed", c.seed},
          {"event_marker", c.event_marker},   {"dropout", c.dropout},
          {"task", std::string(to_string(c.task))}};
}

SercConfig config_from_json(const json& j) {
  try {
    SercConfig c;
    c.word_hidden = j.at("word_hidden").get<int>();
    c.dep_hidden = j.at("dep_hidden").get<int>();
    c.pos_hidden = j.at("pos_hidden").get<int>();
    c.stacked_hidden = j.at("stacked_hidden").get<int>();
    c.dense_hidden = j.at("dense_hidden").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.pos_dim = j.at("pos_dim").get<int>();
    c.dep_dim = j.at("dep_dim").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.event_marker = j.at("event_marker").get<bool>();
    c.dropout = j.at("dropout").get<double>();
    c.task = task_from_string(j.at("task").get<std::string>());
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config is malformed: ") + e.what());
  }
}

json inventories_to_json(const Inventories& inv) {
  return {{"pos", inv.pos.tags()}, {"dep", inv.dep.tags()}, {"vocab", inv.vocab.words()}};
}

Inventories inventories_from_json(const json& j) {
  try {
    Inventories inv{Vocabulary(j.at("vocab").get<std::vector<std::string>>()),
                    TagInventory(TagInventory::Kind::Pos, j.at("pos").get<std::vector<std::string>>()),
                    TagInventory(TagInventory::Kind::Dep, j.at("dep").get<std::vector<std::string>>())};
    return inv;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint inventories are malformed: ") + e.what());
  }
}

void check_inventory_widths(const SercConfig& c, const Inventories& inv) {
  const int extra = c.event_marker ? 1 : 0;
  if (c.pos_dim != static_cast<int>(inv.pos.size()) + extra || c.dep_dim != static_cast<int>(inv.dep.size()) + extra)
    throw FormatError("checkpoint config input widths disagree with its inventories");
}

std::string encode_container(json header, nn::TensorViews<float> tensors) {
  json list = json::array();
  for (const auto& t : tensors) list.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = std::move(list);
  header["format"] = "SERCCKP1";
  header["version"] = kCheckpointVersion;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.rows));
    put_u32(out, static_cast<std::uint32_t>(t.cols));
    const Eigen::Map<const Eigen::MatrixXf> m(t.data.data(), t.rows, t.cols);
    for (Eigen::Index r = 0; r < t.rows; ++r)
      for (Eigen::Index c = 0; c < t.cols; ++c) put_u32(out, std::bit_cast<std::uint32_t>(m(r, c)));
  }
  return out;
}

/// Parses magic + header; leaves the reader at the first tensor record.
json decode_header(Reader& in) {
  if (in.take(8, "magic") != std::string_view(kCheckpointMagic, 8)) throw FormatError("not a SERC checkpoint (bad magic)");
  const auto len = in.u32("header length");
  json header;
  try {
    header = json::parse(in.take(len, "header"));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("version", -1) != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version");
  return header;
}

/// Reads tensor records into `targets`, which must match the header's declared list.
void decode_tensors(Reader& in, const json& header, nn::TensorViews<float> targets) {
  const auto& declared = header.at("tensors");
  if (declared.size() != targets.size())
    throw CorruptionError("checkpoint declares " + std::to_string(declared.size()) + " tensors, model has " +
                          std::to_string(targets.size()));
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto& t = targets[k];
    const auto& d = declared[k];
    if (d.at("name").get<std::string>() != t.name || d.at("rows").get<Eigen::Index>() != t.rows ||
        d.at("cols").get<Eigen::Index>() != t.cols)
      throw CorruptionError("checkpoint header entry " + std::to_string(k) + " does not match tensor " + t.name);
    const auto name_len = in.u32("tensor name length");
    const auto name = in.take(name_len, "tensor name");
    const auto rows = in.u32("tensor rows");
    const auto cols = in.u32("tensor cols");
    if (name != t.name || rows != t.rows || cols != t.cols)
      throw CorruptionError("tensor record '" + std::string(name) + "' disagrees with the header entry for " + t.name);
    const auto payload = in.take(static_cast<std::size_t>(rows) * cols * 4, "payload of " + t.name);
    Eigen::Map<Eigen::MatrixXf> m(t.data.data(), t.rows, t.cols);
    std::size_t off = 0;
    for (Eigen::Index r = 0; r < t.rows; ++r)
      for (Eigen::Index c = 0; c < t.cols; ++c, off += 4) {
        std::uint32_t v = 0;
        for (int b = 3; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(payload[off + static_cast<std::size_t>(b)]);
        m(r, c) = std::bit_cast<float>(v);
      }
  }
  if (in.remaining() != 0) throw CorruptionError("checkpoint has " + std::to_string(in.remaining()) + " trailing bytes");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write to " + path.string());
}

json common_header(const Inventories& inv, const std::map<std::string, std::string>& provenance) {
  return {{"inventories", inventories_to_json(inv)},
          {"vocab_digest", inv.vocab.digest()},
          {"provenance", provenance}};
}

void read_common(const json& header, Inventories& inv, std::map<std::string, std::string>& provenance) {
  inv = inventories_from_json(header.at("inventories"));
  if (header.value("vocab_digest", "") != inv.vocab.digest())
    throw CorruptionError("vocabulary digest mismatch");
  provenance = header.value("provenance", std::map<std::string, std::string>{});
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json header = common_header(ckpt.inventories, ckpt.provenance);
  header["kind"] = "serc";
  header["config"] = config_to_json(ckpt.model.config);
  header["labels"] = LabelSet::of(ckpt.model.config.task).labels();
  auto params = ckpt.model.params;
  return encode_container(std::move(header), params.views());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  const json header = decode_header(in);
  try {
    if (header.value("kind", "") != "serc") throw FormatError("checkpoint is not a single-task SERC model");
    Checkpoint ckpt;
    const auto cfg = config_from_json(header.at("config"));
    if (header.at("labels").get<std::vector<std::string>>() != LabelSet::of(cfg.task).labels())
      throw FormatError("checkpoint label set does not match its task");
    read_common(header, ckpt.inventories, ckpt.provenance);
    check_inventory_widths(cfg, ckpt.inventories);
    ckpt.model = init_model<float>(cfg);
    decode_tensors(in, header, ckpt.model.params.views());
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  }
}

std::string serialize_checkpoint(const JointCheckpoint& ckpt) {
  json header = common_header(ckpt.inventories, ckpt.provenance);
  header["kind"] = "joint";
  header["temporal_config"] = config_to_json(ckpt.model.temporal.config);
  header["causal_config"] = config_to_json(ckpt.model.causal.config);
  header["temporal_frozen"] = ckpt.model.temporal_frozen;
  header["causal_frozen"] = ckpt.model.causal_frozen;
  header["seed"] = ckpt.model.seed;
  header["labels"] = LabelSet::of(Task::Causal3).labels();
  auto model = ckpt.model;
  return encode_container(std::move(header), model.views());
}

JointCheckpoint deserialize_joint_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  const json header = decode_header(in);
  try {
    if (header.value("kind", "") != "joint") throw FormatError("checkpoint is not a joint model");
    JointCheckpoint ckpt;
    read_common(header, ckpt.inventories, ckpt.provenance);
    const auto tcfg = config_from_json(header.at("temporal_config"));
    const auto ccfg = config_from_json(header.at("causal_config"));
    check_inventory_widths(tcfg, ckpt.inventories);
    check_inventory_widths(ccfg, ckpt.inventories);
    const bool unfreeze = !header.at("temporal_frozen").get<bool>();
    ckpt.model = init_joint<float>(init_model<float>(tcfg), init_model<float>(ccfg),
                                   header.at("seed").get<std::uint64_t>(), unfreeze);
    ckpt.model.causal_frozen = header.at("causal_frozen").get<bool>();
    decode_tensors(in, header, ckpt.model.views());
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

void save_checkpoint(const JointCheckpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

JointCheckpoint load_joint_checkpoint(const std::filesystem::path& path) {
  return deserialize_joint_checkpoint(read_file(path));
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader in(bytes);
  return decode_header(in).value("kind", "");
}

}  // namespace serc
