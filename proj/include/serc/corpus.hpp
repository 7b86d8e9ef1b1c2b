#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace serc {

struct Token {
  int index = 0;  // 1-based position in the sentence
  std::string surface;
  std::string pos;
  std::string dep_label;
  int head = 0;  // 0 = sentence root, else 1-based index of the head token

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string doc_id;
  std::vector<Sentence> sentences;

  bool operator==(const Document&) const = default;
};

struct EventMention {
  int sentence_idx = 0;  // 0-based
  int token_idx = 0;     // 0-based within the sentence

  auto operator<=>(const EventMention&) const = default;
};

enum class Task { Temporal6, Temporal14, Causal3 };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);

/// Ordered, fixed label inventory for a task. Label ids are positions in `labels()`.
class LabelSet {
 public:
  static const LabelSet& of(Task task);

  Task task() const { return task_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  std::optional<int> find(std::string_view label) const;
  int id(std::string_view label) const;  // throws ValidationError
  const std::string& label(int id) const { return labels_.at(static_cast<std::size_t>(id)); }

 private:
  LabelSet(Task task, std::vector<std::string> labels);

  Task task_;
  std::vector<std::string> labels_;
};

struct RelationInstance {
  std::string doc_id;
  EventMention e1;
  EventMention e2;
  Task task = Task::Temporal6;
  std::string label;

  int label_id() const { return LabelSet::of(task).id(label); }
  bool operator==(const RelationInstance&) const = default;
};

/// One-hot basis over tag strings. Slot 0 is reserved for unseen tags.
class TagInventory {
 public:
  enum class Kind { Pos, Dep };
  static constexpr std::string_view kUnk = "<UNK>";

  explicit TagInventory(Kind kind);
  TagInventory(Kind kind, std::vector<std::string> tags);  // tags[0] must be kUnk

  Kind kind() const { return kind_; }
  int add(std::string_view tag);
  int id(std::string_view tag) const;  // total: unseen -> 0
  std::size_t size() const { return tags_.size(); }
  const std::vector<std::string>& tags() const { return tags_; }

  bool operator==(const TagInventory& other) const {
    return kind_ == other.kind_ && tags_ == other.tags_;
  }

 private:
  Kind kind_;
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> ids_;
};

/// Lowercased word forms seen in the corpus, dense ids with 0 = UNK.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> words);  // words[0] must be TagInventory::kUnk

  int add(std::string_view word);
  int id(std::string_view word) const;  // lowercases before lookup
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  std::string digest() const;  // FNV-1a over the ordered word list, hex

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

class EmbeddingTable {
 public:
  explicit EmbeddingTable(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  void insert(std::string word, Eigen::VectorXf vec);
  bool contains(std::string_view word) const;
  /// The stored row, or the all-zeros vector for absent words.
  Eigen::VectorXf lookup(std::string_view word) const;

 private:
  int dim_;
  std::unordered_map<std::string, Eigen::VectorXf> vectors_;
};

struct Inventories {
  Vocabulary vocab;
  TagInventory pos{TagInventory::Kind::Pos};
  TagInventory dep{TagInventory::Kind::Dep};
};

std::string to_lower(std::string_view s);

// ---- CoNLL-U ---------------------------------------------------------------

enum class PosColumn { Upos, Xpos };

std::vector<Document> parse_conllu(std::string_view text, PosColumn column = PosColumn::Upos);
std::string write_conllu(std::span<const Document> docs);

/// Throws StructuralError unless the sentence is a single-rooted tree with valid indices.
void validate_sentence(const Sentence& sentence, std::string_view where);

// ---- Relations -------------------------------------------------------------

struct RelationParseResult {
  std::vector<RelationInstance> instances;
  std::vector<std::string> errors;  // one message per rejected line (lenient mode only)
};

/// Strict mode throws on the first bad line; lenient mode collects messages and skips the line.
/// `require_label = false` accepts lines without a label (prediction input); their label is "".
RelationParseResult parse_relations(std::string_view jsonl, bool strict = true, bool require_label = true);

std::string write_relation(const RelationInstance& inst);

/// Checks the mention indices against the owning document. Throws IndexError.
void validate_mentions(const Document& doc, const RelationInstance& inst);

// ---- Inventories and embeddings --------------------------------------------

Inventories build_inventories(std::span<const Document> docs, int min_count = 1);

EmbeddingTable load_embeddings(const std::filesystem::path& path, int dim);
EmbeddingTable parse_embeddings(std::string_view text, int dim);

// ---- Splitting -------------------------------------------------------------

struct SplitRatios {
  double train = 0.75;
  double dev = 0.10;
  double test = 0.15;
};

struct Split {
  std::vector<RelationInstance> train;
  std::vector<RelationInstance> dev;
  std::vector<RelationInstance> test;
};

/// Document-level, seed-deterministic partition. Throws ConfigError for < 3 documents.
Split split_corpus(std::span<const RelationInstance> instances, SplitRatios ratios, std::uint64_t seed);

// ---- Synthetic corpora -----------------------------------------------------

enum class Coupling { None, TemporalDrivesCausal };

struct SyntheticSpec {
  int min_sentence_length = 6;
  int max_sentence_length = 12;
  int num_classes = 3;
  int num_instances = 60;
  Coupling coupling = Coupling::None;
  Task task = Task::Causal3;  // label source; TemporalDrivesCausal forces Temporal6
  int lexicon_size = 50;
};

struct SyntheticCorpus {
  std::vector<Document> docs;
  std::vector<RelationInstance> instances;
  std::vector<RelationInstance> causal;  // parallel to `instances`, TemporalDrivesCausal only
};

/// The fixed temporal -> causal map used by the coupled generator.
std::string_view causal_label_for(std::string_view temporal_label);

/// POS tag that carries the label of class `class_id` in synthetic sentences.
std::string synthetic_cue_tag(int class_id);

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Random vectors for every synthetic lexicon word, for tests and demos.
EmbeddingTable synthetic_embeddings(int lexicon_size, int dim, std::uint64_t seed);

}  // namespace serc
