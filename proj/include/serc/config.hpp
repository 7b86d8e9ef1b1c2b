#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "serc/corpus.hpp"
#include "serc/features.hpp"
#include "serc/model.hpp"
#include "serc/train.hpp"

namespace serc {

/// Flat `section.key = value` settings. `#` starts a comment line.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  /// Applies one `section.key=value` override.
  void set(std::string_view assignment);
  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, std::string fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Throws UsageError naming the first key not in the documented set.
  void check_known_keys() const;

 private:
  std::map<std::string, std::string> values_;
};

struct RunPaths {
  std::filesystem::path conllu;
  std::filesystem::path relations;
  std::filesystem::path embeddings;  // empty: every path word is out of vocabulary
  std::filesystem::path out = "serc-out";
};

struct RunConfig {
  RunPaths paths;
  Task task = Task::Temporal6;
  PosColumn pos_column = PosColumn::Upos;
  int min_count = 1;
  FeatureConfig features;
  SercConfig model;  // input widths are filled in once inventories exist
  TrainConfig train;
  SplitRatios split;
  std::uint64_t split_seed = 1;
};

/// Relative paths resolve against `data_dir` (the SERC_DATA_DIR environment variable when set).
RunConfig make_run_config(const KeyValueConfig& kv, const std::filesystem::path& data_dir = {});

/// Every recognised key with its default, one `key = value` per line.
std::string default_config_text();

}  // namespace serc
