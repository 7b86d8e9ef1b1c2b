#include "serc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "serc/error.hpp"

namespace serc {

namespace {

std::vector<std::string_view> split_on(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<int> parse_int(std::string_view s) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

/// Iterates lines of `text`, handing (1-based line number, line without '\r').
template <typename F>
void for_each_line(std::string_view text, F&& f) {
  int lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++lineno;
    if (end == text.size() && line.empty()) break;
    f(lineno, line);
    start = end + 1;
  }
}

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// ---- Tasks and label sets ----------------------------------------------------

std::string_view to_string(Task task) {
  switch (task) {
    case Task::Temporal6: return "TEMPORAL6";
    case Task::Temporal14: return "TEMPORAL14";
    case Task::Causal3: return "CAUSAL3";
  }
  return "?";
}

Task task_from_string(std::string_view name) {
  if (name == "TEMPORAL6") return Task::Temporal6;
  if (name == "TEMPORAL14") return Task::Temporal14;
  if (name == "CAUSAL3") return Task::Causal3;
  throw ValidationError("unknown task '" + std::string(name) + "'");
}

LabelSet::LabelSet(Task task, std::vector<std::string> labels)
    : task_(task), labels_(std::move(labels)) {}

const LabelSet& LabelSet::of(Task task) {
  static const LabelSet temporal6(Task::Temporal6, {"AFTER", "BEFORE", "SIMULTANEOUS", "INCLUDES",
                                                    "IS_INCLUDED", "VAGUE"});
  static const LabelSet temporal14(
      Task::Temporal14, {"AFTER", "BEFORE", "BEGINS", "BEGUN_BY", "DURING", "DURING_INV", "ENDS",
                         "ENDED_BY", "IAFTER", "IBEFORE", "IDENTITY", "INCLUDES", "IS_INCLUDED",
                         "SIMULTANEOUS"});
  static const LabelSet causal3(Task::Causal3, {"CAUSES", "CAUSED_BY", "NONE"});
  switch (task) {
    case Task::Temporal6: return temporal6;
    case Task::Temporal14: return temporal14;
    case Task::Causal3: return causal3;
  }
  return causal3;
}

std::optional<int> LabelSet::find(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<int>(it - labels_.begin());
}

int LabelSet::id(std::string_view label) const {
  if (auto found = find(label)) return *found;
  throw ValidationError("label '" + std::string(label) + "' is not valid for task " +
                        std::string(to_string(task_)));
}

// ---- Inventories -------------------------------------------------------------

TagInventory::TagInventory(Kind kind) : kind_(kind) { add(kUnk); }

TagInventory::TagInventory(Kind kind, std::vector<std::string> tags) : kind_(kind) {
  if (tags.empty() || tags.front() != kUnk)
    throw FormatError("tag inventory must start with the UNK slot");
  for (const auto& tag : tags) {
    if (ids_.count(tag)) throw FormatError("duplicate tag '" + tag + "' in inventory");
    add(tag);
  }
}

int TagInventory::add(std::string_view tag) {
  auto [it, inserted] = ids_.try_emplace(std::string(tag), static_cast<int>(tags_.size()));
  if (inserted) tags_.emplace_back(tag);
  return it->second;
}

int TagInventory::id(std::string_view tag) const {
  auto it = ids_.find(std::string(tag));
  return it == ids_.end() ? 0 : it->second;
}

Vocabulary::Vocabulary() { add(TagInventory::kUnk); }

Vocabulary::Vocabulary(std::vector<std::string> words) {
  if (words.empty() || words.front() != TagInventory::kUnk)
    throw FormatError("vocabulary must start with the UNK slot");
  for (const auto& w : words) add(w);
}

int Vocabulary::add(std::string_view word) {
  auto [it, inserted] = ids_.try_emplace(std::string(word), static_cast<int>(words_.size()));
  if (inserted) words_.emplace_back(word);
  return it->second;
}

int Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(to_lower(word));
  return it == ids_.end() ? 0 : it->second;
}

std::string Vocabulary::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& w : words_) {
    for (unsigned char c : w) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void EmbeddingTable::insert(std::string word, Eigen::VectorXf vec) {
  if (vec.size() != dim_)
    throw DimensionError("embedding for '" + word + "' has " + std::to_string(vec.size()) +
                         " values, expected " + std::to_string(dim_));
  vectors_.insert_or_assign(std::move(word), std::move(vec));
}

bool EmbeddingTable::contains(std::string_view word) const {
  return vectors_.count(std::string(word)) != 0;
}

Eigen::VectorXf EmbeddingTable::lookup(std::string_view word) const {
  auto it = vectors_.find(std::string(word));
  if (it == vectors_.end()) return Eigen::VectorXf::Zero(dim_);
  return it->second;
}

// ---- CoNLL-U -----------------------------------------------------------------

void validate_sentence(const Sentence& sentence, std::string_view where) {
  const int n = static_cast<int>(sentence.tokens.size());
  auto fail = [&](const std::string& why) {
    throw StructuralError(std::string(where) + ": " + why);
  };
  if (n == 0) fail("empty sentence");
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const Token& t = sentence.tokens[static_cast<std::size_t>(i)];
    if (t.index != i + 1) fail("token ids must be 1.." + std::to_string(n) + " in order");
    if (t.head < 0 || t.head > n) fail("head of token " + std::to_string(t.index) + " out of range");
    if (t.head == t.index) fail("token " + std::to_string(t.index) + " is its own head");
    if (t.pos.empty() || t.dep_label.empty())
      fail("token " + std::to_string(t.index) + " lacks a POS tag or dependency label");
    if (t.head == 0) ++roots;
  }
  if (roots != 1) fail("expected exactly one root, found " + std::to_string(roots));
  // Every chain of heads must reach the root within n steps.
  for (int i = 0; i < n; ++i) {
    int cur = i + 1;
    for (int steps = 0; cur != 0; ++steps) {
      if (steps > n) fail("head cycle through token " + std::to_string(i + 1));
      cur = sentence.tokens[static_cast<std::size_t>(cur - 1)].head;
    }
  }
}

std::vector<Document> parse_conllu(std::string_view text, PosColumn column) {
  std::vector<Document> docs;
  Sentence current;
  int sentence_start_line = 0;

  auto flush = [&]() {
    if (current.tokens.empty()) return;
    if (docs.empty()) docs.push_back(Document{"doc0", {}});
    auto& doc = docs.back();
    validate_sentence(current, "document '" + doc.doc_id + "' sentence " +
                                   std::to_string(doc.sentences.size()) + " (line " +
                                   std::to_string(sentence_start_line) + ")");
    doc.sentences.push_back(std::move(current));
    current = Sentence{};
  };

  for_each_line(text, [&](int lineno, std::string_view line) {
    if (trim(line).empty()) {
      flush();
      return;
    }
    if (line.front() == '#') {
      auto body = trim(line.substr(1));
      if (body.starts_with("newdoc")) {
        flush();
        auto eq = body.find('=');
        std::string id = eq == std::string_view::npos ? "doc" + std::to_string(docs.size())
                                                      : std::string(trim(body.substr(eq + 1)));
        for (const auto& d : docs)
          if (d.doc_id == id) throw ParseError("line " + std::to_string(lineno) + ": duplicate document id '" + id + "'");
        docs.push_back(Document{std::move(id), {}});
      }
      return;
    }
    auto cols = split_on(line, '\t');
    if (cols.size() != 10)
      throw ParseError("line " + std::to_string(lineno) + ": expected 10 tab-separated columns, got " +
                       std::to_string(cols.size()));
    // Multiword ranges (1-2) and empty nodes (1.1) are not part of the basic tree.
    if (cols[0].find_first_of("-.") != std::string_view::npos) return;
    auto id = parse_int(cols[0]);
    auto head = parse_int(cols[6]);
    if (!id || !head)
      throw ParseError("line " + std::to_string(lineno) + ": non-integer ID or HEAD column");
    if (current.tokens.empty()) sentence_start_line = lineno;
    Token tok;
    tok.index = *id;
    tok.surface = std::string(cols[1]);
    tok.pos = std::string(column == PosColumn::Upos ? cols[3] : cols[4]);
    tok.head = *head;
    tok.dep_label = std::string(cols[7]);
    current.tokens.push_back(std::move(tok));
  });
  flush();
  return docs;
}

std::string write_conllu(std::span<const Document> docs) {
  std::ostringstream out;
  for (const auto& doc : docs) {
    out << "# newdoc id = " << doc.doc_id << '\n';
    for (const auto& s : doc.sentences) {
      for (const auto& t : s.tokens) {
        out << t.index << '\t' << t.surface << "\t_\t" << t.pos << "\t_\t_\t" << t.head << '\t'
            << t.dep_label << "\t_\t_\n";
      }
      out << '\n';
    }
  }
  return out.str();
}

// ---- Relations ---------------------------------------------------------------

RelationParseResult parse_relations(std::string_view jsonl, bool strict, bool require_label) {
  RelationParseResult result;
  for_each_line(jsonl, [&](int lineno, std::string_view line) {
    if (trim(line).empty()) return;
    const std::string where = "line " + std::to_string(lineno);
    try {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": invalid JSON (" + e.what() + ")");
      }
      auto field = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
        if (!obj.is_object() || !obj.contains(key))
          throw ParseError(where + ": missing field '" + key + "'");
        return obj.at(key);
      };
      auto mention = [&](const char* key) {
        const auto& m = field(j, key);
        const auto& sent = field(m, "sent");
        const auto& tok = field(m, "tok");
        if (!sent.is_number_integer() || !tok.is_number_integer())
          throw ParseError(where + ": '" + key + "' indices must be integers");
        return EventMention{sent.get<int>(), tok.get<int>()};
      };
      RelationInstance inst;
      const auto& doc_id = field(j, "doc_id");
      const auto& task = field(j, "task");
      if (!doc_id.is_string() || !task.is_string())
        throw ParseError(where + ": doc_id and task must be strings");
      inst.doc_id = doc_id.get<std::string>();
      inst.e1 = mention("e1");
      inst.e2 = mention("e2");
      try {
        inst.task = task_from_string(task.get<std::string>());
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      }
      if (require_label || j.contains("label")) {
        const auto& label = field(j, "label");
        if (!label.is_string()) throw ParseError(where + ": label must be a string");
        inst.label = label.get<std::string>();
        if (!LabelSet::of(inst.task).find(inst.label))
          throw ValidationError(where + ": label '" + inst.label + "' is not valid for task " +
                                std::string(to_string(inst.task)));
      }
      if (inst.e1 == inst.e2) throw ValidationError(where + ": e1 and e2 are the same token");
      if (inst.e1.sentence_idx < 0 || inst.e1.token_idx < 0 || inst.e2.sentence_idx < 0 ||
          inst.e2.token_idx < 0)
        throw ValidationError(where + ": negative mention index");
      result.instances.push_back(std::move(inst));
    } catch (const Error& e) {
      if (strict) throw;
      result.errors.emplace_back(e.what());
    }
  });
  return result;
}

std::string write_relation(const RelationInstance& inst) {
  nlohmann::json j;
  j["doc_id"] = inst.doc_id;
  j["e1"] = {{"sent", inst.e1.sentence_idx}, {"tok", inst.e1.token_idx}};
  j["e2"] = {{"sent", inst.e2.sentence_idx}, {"tok", inst.e2.token_idx}};
  j["task"] = std::string(to_string(inst.task));
  j["label"] = inst.label;
  return j.dump();
}

void validate_mentions(const Document& doc, const RelationInstance& inst) {
  for (const auto& m : {inst.e1, inst.e2}) {
    if (m.sentence_idx < 0 || m.sentence_idx >= static_cast<int>(doc.sentences.size()) ||
        m.token_idx < 0 ||
        m.token_idx >= static_cast<int>(doc.sentences[static_cast<std::size_t>(m.sentence_idx)].size()))
      throw IndexError("mention (" + std::to_string(m.sentence_idx) + ", " +
                       std::to_string(m.token_idx) + ") out of range for document '" + doc.doc_id + "'");
  }
}

// ---- Inventories and embeddings ----------------------------------------------

Inventories build_inventories(std::span<const Document> docs, int min_count) {
  Inventories inv;
  std::vector<std::string> order;
  std::unordered_map<std::string, int> counts;
  for (const auto& doc : docs) {
    for (const auto& s : doc.sentences) {
      for (const auto& t : s.tokens) {
        inv.pos.add(t.pos);
        inv.dep.add(t.dep_label);
        auto w = to_lower(t.surface);
        if (counts[w]++ == 0) order.push_back(w);
      }
    }
  }
  for (const auto& w : order)
    if (counts[w] >= min_count) inv.vocab.add(w);
  return inv;
}

EmbeddingTable parse_embeddings(std::string_view text, int dim) {
  EmbeddingTable table(dim);
  for_each_line(text, [&](int lineno, std::string_view line) {
    std::istringstream in{std::string(line)};
    std::string word;
    if (!(in >> word)) return;
    std::vector<float> values;
    std::string tok;
    while (in >> tok) {
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError("embeddings line " + std::to_string(lineno) + ": bad number '" + tok + "'");
      values.push_back(v);
    }
    if (static_cast<int>(values.size()) != dim)
      throw DimensionError("embeddings line " + std::to_string(lineno) + ": " +
                           std::to_string(values.size()) + " values, expected " + std::to_string(dim));
    table.insert(std::move(word), Eigen::Map<Eigen::VectorXf>(values.data(), dim));
  });
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, int dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open embeddings file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_embeddings(buf.str(), dim);
}

// ---- Splitting -----------------------------------------------------------------

Split split_corpus(std::span<const RelationInstance> instances, SplitRatios ratios,
                   std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.dev <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be positive and sum to 1");

  std::vector<std::string> doc_order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_doc;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto [it, inserted] = by_doc.try_emplace(instances[i].doc_id);
    if (inserted) doc_order.push_back(instances[i].doc_id);
    it->second.push_back(i);
  }
  if (doc_order.size() < 3)
    throw ConfigError("splitting needs at least 3 documents, got " + std::to_string(doc_order.size()));

  std::mt19937_64 rng(seed);
  std::shuffle(doc_order.begin(), doc_order.end(), rng);

  const double n = static_cast<double>(instances.size());
  const std::array<double, 3> target{ratios.train * n, ratios.dev * n, ratios.test * n};
  std::array<double, 3> filled{0, 0, 0};
  std::array<std::vector<std::size_t>, 3> members;
  for (const auto& doc : doc_order) {
    const auto& idx = by_doc[doc];
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (target[k] - filled[k] > target[best] - filled[best]) best = k;
    filled[best] += static_cast<double>(idx.size());
    members[best].insert(members[best].end(), idx.begin(), idx.end());
  }

  Split split;
  std::array<std::vector<RelationInstance>*, 3> outs{&split.train, &split.dev, &split.test};
  for (std::size_t k = 0; k < 3; ++k) {
    std::sort(members[k].begin(), members[k].end());
    for (auto i : members[k]) outs[k]->push_back(instances[i]);
  }
  return split;
}

// ---- Synthetic corpora -----------------------------------------------------------

std::string_view causal_label_for(std::string_view temporal_label) {
  if (temporal_label == "BEFORE" || temporal_label == "IBEFORE") return "CAUSES";
  if (temporal_label == "AFTER" || temporal_label == "IAFTER") return "CAUSED_BY";
  return "NONE";
}

std::string synthetic_cue_tag(int class_id) { return "CUE" + std::to_string(class_id); }

namespace {

const std::array<const char*, 7> kFillerPos{"NOUN", "VERB", "ADJ", "ADV", "DET", "ADP", "PRON"};
const std::array<const char*, 8> kFillerDep{"nsubj", "obj", "amod", "advmod", "det", "case", "obl", "conj"};

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Head-chain path between 1-based tokens a and b of one sentence.
std::vector<int> chain_path(const std::vector<int>& head, int a, int b) {
  auto ancestors = [&](int x) {
    std::vector<int> chain{x};
    while (head[static_cast<std::size_t>(x)] != 0) {
      x = head[static_cast<std::size_t>(x)];
      chain.push_back(x);
    }
    return chain;
  };
  auto ca = ancestors(a);
  auto cb = ancestors(b);
  while (ca.size() > 1 && cb.size() > 1 && ca[ca.size() - 2] == cb[cb.size() - 2]) {
    ca.pop_back();
    cb.pop_back();
  }
  // ca.back() == cb.back() is the lowest common ancestor.
  cb.pop_back();
  ca.insert(ca.end(), cb.rbegin(), cb.rend());
  return ca;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const Task task = spec.coupling == Coupling::TemporalDrivesCausal ? Task::Temporal6 : spec.task;
  const auto& labels = LabelSet::of(task);
  if (spec.num_classes < 1 || spec.num_classes > static_cast<int>(labels.size()))
    throw ConfigError("synthetic class count must be in [1, " + std::to_string(labels.size()) + "]");
  if (spec.num_instances < spec.num_classes)
    throw ConfigError("synthetic instance count is smaller than the class count");
  if (spec.min_sentence_length < 4 || spec.max_sentence_length < spec.min_sentence_length)
    throw ConfigError("synthetic sentence lengths must satisfy 4 <= min <= max");
  if (spec.lexicon_size < 1) throw ConfigError("synthetic lexicon must be non-empty");

  std::mt19937_64 rng(seed);
  SyntheticCorpus corpus;
  for (int i = 0; i < spec.num_instances; ++i) {
    const int cls = i % spec.num_classes;
    const int n = uniform_int(rng, spec.min_sentence_length, spec.max_sentence_length);

    std::vector<int> head;
    std::vector<int> path;
    int e1 = 0, e2 = 0;
    do {
      std::vector<int> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 1);
      std::shuffle(order.begin(), order.end(), rng);
      head.assign(static_cast<std::size_t>(n + 1), 0);
      for (int k = 1; k < n; ++k)
        head[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
            order[static_cast<std::size_t>(uniform_int(rng, 0, k - 1))];
      e1 = uniform_int(rng, 1, n - 1);
      e2 = uniform_int(rng, e1 + 1, n);
      path = chain_path(head, e1, e2);
    } while (static_cast<int>(path.size()) >= n);

    std::vector<int> off_path;
    for (int t = 1; t <= n; ++t)
      if (std::find(path.begin(), path.end(), t) == path.end()) off_path.push_back(t);
    const int cue = off_path[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(off_path.size()) - 1))];

    Sentence s;
    for (int t = 1; t <= n; ++t) {
      Token tok;
      tok.index = t;
      tok.surface = "w" + std::to_string(uniform_int(rng, 0, spec.lexicon_size - 1));
      tok.pos = kFillerPos[static_cast<std::size_t>(uniform_int(rng, 0, kFillerPos.size() - 1))];
      tok.head = head[static_cast<std::size_t>(t)];
      tok.dep_label = tok.head == 0 ? "root"
                                    : kFillerDep[static_cast<std::size_t>(uniform_int(rng, 0, kFillerDep.size() - 1))];
      if (t == cue) tok.pos = synthetic_cue_tag(cls);
      s.tokens.push_back(std::move(tok));
    }

    char id[32];
    std::snprintf(id, sizeof id, "syn-%05d", i);
    corpus.docs.push_back(Document{id, {std::move(s)}});

    RelationInstance inst{id, {0, e1 - 1}, {0, e2 - 1}, task, labels.label(cls)};
    if (spec.coupling == Coupling::TemporalDrivesCausal) {
      RelationInstance c = inst;
      c.task = Task::Causal3;
      c.label = std::string(causal_label_for(inst.label));
      corpus.causal.push_back(std::move(c));
    }
    corpus.instances.push_back(std::move(inst));
  }
  return corpus;
}

EmbeddingTable synthetic_embeddings(int lexicon_size, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  EmbeddingTable table(dim);
  for (int w = 0; w < lexicon_size; ++w) {
    Eigen::VectorXf v(dim);
    for (int k = 0; k < dim; ++k) v[k] = u(rng);
    table.insert("w" + std::to_string(w), std::move(v));
  }
  return table;
}

}  // namespace serc
