#include "serc/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "serc/error.hpp"

namespace serc {

namespace {

// Key, default. Order is the order `default_config_text` prints.
const std::vector<std::pair<std::string, std::string>>& known_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys{
      {"paths.conllu", ""},
      {"paths.relations", ""},
      {"paths.embeddings", ""},
      {"paths.out", "serc-out"},
      {"run.task", "TEMPORAL6"},
      {"corpus.pos_column", "UPOS"},
      {"corpus.min_count", "1"},
      {"features.max_path_tokens", "40"},
      {"features.max_text_tokens", "200"},
      {"features.event_marker", "false"},
      {"model.word_hidden", "64"},
      {"model.dep_hidden", "32"},
      {"model.pos_hidden", "32"},
      {"model.stacked_hidden", "64"},
      {"model.dense_hidden", "32"},
      {"model.embedding_dim", "100"},
      {"model.seed", "1"},
      {"model.dropout", "0"},
      {"train.max_epochs", "100"},
      {"train.batch_size", "16"},
      {"train.lr", "0.001"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.eps", "1e-8"},
      {"train.grad_clip_norm", "5"},
      {"train.patience", "10"},
      {"train.seed", "1"},
      {"train.class_weights", "false"},
      {"train.unfreeze", "false"},
      {"train.stop_at_train_accuracy", "0"},
      {"split.train", "0.75"},
      {"split.dev", "0.10"},
      {"split.test", "0.15"},
      {"split.seed", "1"},
      {"joint.temporal_checkpoint", ""},
      {"joint.causal_checkpoint", ""},
  };
  return keys;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw UsageError("setting " + key + " = '" + value + "' is not a valid number");
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected 'section.key = value'");
    cfg.set(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse(buf.str());
}

void KeyValueConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw UsageError("--set expects section.key=value, got '" + std::string(assignment) + "'");
  set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, std::string fallback) const {
  return get(key).value_or(std::move(fallback));
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto v = get(key);
  return v ? parse_number<int>(key, *v) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw UsageError("setting " + key + " = '" + *v + "' is not a boolean");
}

void KeyValueConfig::check_known_keys() const {
  for (const auto& [key, value] : values_) {
    const bool known = std::any_of(known_keys().begin(), known_keys().end(), [&](const auto& kv) { return kv.first == key; });
    if (!known) throw UsageError("unknown setting '" + key + "'");
  }
}

RunConfig make_run_config(const KeyValueConfig& kv, const std::filesystem::path& data_dir) {
  kv.check_known_keys();
  auto resolve = [&](const std::string& key, const std::string& fallback) -> std::filesystem::path {
    const std::filesystem::path p = kv.get_or(key, fallback);
    if (p.empty() || p.is_absolute() || data_dir.empty()) return p;
    return data_dir / p;
  };

  RunConfig rc;
  rc.paths.conllu = resolve("paths.conllu", "");
  rc.paths.relations = resolve("paths.relations", "");
  rc.paths.embeddings = resolve("paths.embeddings", "");
  rc.paths.out = resolve("paths.out", "serc-out");
  try {
    rc.task = task_from_string(kv.get_or("run.task", "TEMPORAL6"));
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  const auto column = kv.get_or("corpus.pos_column", "UPOS");
  if (column != "UPOS" && column != "XPOS") throw UsageError("corpus.pos_column must be UPOS or XPOS");
  rc.pos_column = column == "UPOS" ? PosColumn::Upos : PosColumn::Xpos;
  rc.min_count = kv.get_int("corpus.min_count", 1);

  rc.features.max_path_tokens = kv.get_int("features.max_path_tokens", 40);
  rc.features.max_text_tokens = kv.get_int("features.max_text_tokens", 200);
  rc.features.event_marker = kv.get_bool("features.event_marker", false);

  auto& m = rc.model;
  m.task = rc.task;
  m.num_classes = static_cast<int>(LabelSet::of(rc.task).size());
  m.word_hidden = kv.get_int("model.word_hidden", 64);
  m.dep_hidden = kv.get_int("model.dep_hidden", 32);
  m.pos_hidden = kv.get_int("model.pos_hidden", 32);
  m.stacked_hidden = kv.get_int("model.stacked_hidden", 64);
  m.dense_hidden = kv.get_int("model.dense_hidden", 32);
  m.embedding_dim = kv.get_int("model.embedding_dim", 100);
  m.seed = kv.get_u64("model.seed", 1);
  m.dropout = kv.get_double("model.dropout", 0.0);
  m.event_marker = rc.features.event_marker;

  auto& t = rc.train;
  t.max_epochs = kv.get_int("train.max_epochs", 100);
  t.batch_size = kv.get_int("train.batch_size", 16);
  t.adam.lr = kv.get_double("train.lr", 1e-3);
  t.adam.beta1 = kv.get_double("train.beta1", 0.9);
  t.adam.beta2 = kv.get_double("train.beta2", 0.999);
  t.adam.eps = kv.get_double("train.eps", 1e-8);
  t.grad_clip_norm = kv.get_double("train.grad_clip_norm", 5.0);
  t.patience = kv.get_int("train.patience", 10);
  t.seed = kv.get_u64("train.seed", 1);
  t.class_weights = kv.get_bool("train.class_weights", false);
  t.unfreeze = kv.get_bool("train.unfreeze", false);
  t.stop_at_train_accuracy = kv.get_double("train.stop_at_train_accuracy", 0.0);
  t.validate();

  rc.split.train = kv.get_double("split.train", 0.75);
  rc.split.dev = kv.get_double("split.dev", 0.10);
  rc.split.test = kv.get_double("split.test", 0.15);
  rc.split_seed = kv.get_u64("split.seed", 1);
  return rc;
}

std::string default_config_text() {
  std::string out;
  for (const auto& [key, value] : known_keys()) out += key + " = " + value + "\n";
  return out;
}

}  // namespace serc
