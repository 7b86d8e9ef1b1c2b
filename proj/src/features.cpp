#include "serc/features.hpp"

#include <algorithm>
#include <unordered_map>

#include "serc/error.hpp"

namespace serc {

DepGraph::DepGraph(const Document& doc, EventMention e1, EventMention e2) {
  RelationInstance probe{doc.doc_id, e1, e2, Task::Temporal6, {}};
  validate_mentions(doc, probe);

  first_sentence_ = std::min(e1.sentence_idx, e2.sentence_idx);
  last_sentence_ = std::max(e1.sentence_idx, e2.sentence_idx);
  const bool cross = first_sentence_ != last_sentence_;

  std::size_t total = 0;
  for (int s = first_sentence_; s <= last_sentence_; ++s) {
    sentence_offset_.push_back(static_cast<int>(total));
    total += doc.sentences[static_cast<std::size_t>(s)].size();
  }
  nodes_.reserve(total + (cross ? 1 : 0));
  if (cross) virtual_root_ = static_cast<int>(total);

  for (int s = first_sentence_; s <= last_sentence_; ++s) {
    const auto& sent = doc.sentences[static_cast<std::size_t>(s)];
    const int offset = sentence_offset_[static_cast<std::size_t>(s - first_sentence_)];
    for (const auto& tok : sent.tokens) {
      Node n;
      n.sentence_idx = s;
      n.token_idx = tok.index - 1;
      n.parent = tok.head == 0 ? virtual_root_ : offset + tok.head - 1;
      nodes_.push_back(n);
    }
  }
  if (cross) nodes_.push_back(Node{});

  adjacency_.assign(nodes_.size(), {});
  for (int id = 0; id < num_nodes(); ++id) {
    const int p = nodes_[static_cast<std::size_t>(id)].parent;
    if (p == kNone) continue;
    adjacency_[static_cast<std::size_t>(id)].push_back(p);
    adjacency_[static_cast<std::size_t>(p)].push_back(id);
  }
}

int DepGraph::num_edges() const {
  std::size_t degree = 0;
  for (const auto& adj : adjacency_) degree += adj.size();
  return static_cast<int>(degree / 2);
}

int DepGraph::node_of(EventMention m) const {
  if (m.sentence_idx < first_sentence_ || m.sentence_idx > last_sentence_)
    throw IndexError("mention sentence " + std::to_string(m.sentence_idx) + " outside the graph span");
  const int base = sentence_offset_[static_cast<std::size_t>(m.sentence_idx - first_sentence_)];
  const int id = base + m.token_idx;
  const int end = m.sentence_idx == last_sentence_
                      ? (has_virtual_root() ? virtual_root_ : num_nodes())
                      : sentence_offset_[static_cast<std::size_t>(m.sentence_idx - first_sentence_ + 1)];
  if (m.token_idx < 0 || id >= end)
    throw IndexError("mention token " + std::to_string(m.token_idx) + " outside sentence " +
                     std::to_string(m.sentence_idx));
  return id;
}

DepGraph build_dep_graph(const Document& doc, EventMention e1, EventMention e2) {
  return DepGraph(doc, e1, e2);
}

std::vector<int> extract_path(const DepGraph& graph, EventMention e1, EventMention e2) {
  const int a = graph.node_of(e1);
  const int b = graph.node_of(e2);

  std::vector<int> up_a;
  std::vector<char> on_a(static_cast<std::size_t>(graph.num_nodes()), 0);
  for (int x = a; x != DepGraph::kNone; x = graph.node(x).parent) {
    up_a.push_back(x);
    on_a[static_cast<std::size_t>(x)] = 1;
  }
  std::vector<int> up_b;
  int meet = b;
  while (meet != DepGraph::kNone && !on_a[static_cast<std::size_t>(meet)]) {
    up_b.push_back(meet);
    meet = graph.node(meet).parent;
  }
  if (meet == DepGraph::kNone) throw StateError("dependency graph is disconnected");

  std::vector<int> path;
  for (int x : up_a) {
    path.push_back(x);
    if (x == meet) break;
  }
  path.insert(path.end(), up_b.rbegin(), up_b.rend());
  std::erase_if(path, [&](int id) { return graph.is_virtual(id); });
  return path;
}

FeatureSequences extract_sequences(const Document& doc, const RelationInstance& inst,
                                   const FeatureConfig& cfg) {
  const DepGraph graph = build_dep_graph(doc, inst.e1, inst.e2);
  const auto path = extract_path(graph, inst.e1, inst.e2);

  FeatureSequences seqs;
  auto surface = [&](int id) {
    const auto& n = graph.node(id);
    return doc.sentences[static_cast<std::size_t>(n.sentence_idx)]
        .tokens[static_cast<std::size_t>(n.token_idx)]
        .surface;
  };
  const std::size_t cap = static_cast<std::size_t>(std::max(cfg.max_path_tokens, 2));
  if (path.size() <= cap) {
    for (int id : path) seqs.path_words.push_back(surface(id));
  } else {
    const std::size_t head = (cap + 1) / 2;
    const std::size_t tail = cap - head;
    for (std::size_t k = 0; k < head; ++k) seqs.path_words.push_back(surface(path[k]));
    for (std::size_t k = path.size() - tail; k < path.size(); ++k)
      seqs.path_words.push_back(surface(path[k]));
  }

  // Full-text sequences over the spanned sentences, in textual order.
  std::vector<const Token*> text;
  for (int s = graph.first_sentence(); s <= graph.last_sentence(); ++s)
    for (const auto& tok : doc.sentences[static_cast<std::size_t>(s)].tokens) text.push_back(&tok);
  const int p1 = graph.node_of(inst.e1);
  const int p2 = graph.node_of(inst.e2);
  const int lo = std::min(p1, p2), hi = std::max(p1, p2);
  const int n = static_cast<int>(text.size());
  const int limit = std::max(cfg.max_text_tokens, 2);

  std::vector<int> keep;
  if (n <= limit) {
    for (int i = 0; i < n; ++i) keep.push_back(i);
  } else if (hi - lo + 1 <= limit) {
    int start = (lo + hi + 1) / 2 - limit / 2;
    start = std::clamp(start, 0, n - limit);
    for (int i = start; i < start + limit; ++i) keep.push_back(i);
  } else {
    // Events too far apart for one window: two half-windows, one around each event.
    const int half = limit / 2;
    const int s1 = std::clamp(lo - half / 2, 0, n - half);
    const int s2 = std::clamp(hi - (limit - half) / 2, s1 + half, n - (limit - half));
    for (int i = s1; i < s1 + half; ++i) keep.push_back(i);
    for (int i = s2; i < s2 + (limit - half); ++i) keep.push_back(i);
  }
  for (int i : keep) {
    seqs.pos_tags.push_back(text[static_cast<std::size_t>(i)]->pos);
    seqs.dep_labels.push_back(text[static_cast<std::size_t>(i)]->dep_label);
  }
  for (int p : {p1, p2}) {
    auto it = std::find(keep.begin(), keep.end(), p);
    seqs.event_positions.push_back(static_cast<int>(it - keep.begin()));
  }
  return seqs;
}

EncodedInstance encode(const FeatureSequences& seqs, const Vocabulary& vocab,
                       const TagInventory& pos_inv, const TagInventory& dep_inv,
                       const EmbeddingTable& emb, int label_id, Task task, bool event_marker) {
  EncodedInstance x;
  x.label_id = label_id;
  x.task = task;

  const auto t1 = static_cast<Eigen::Index>(seqs.path_words.size());
  x.word_vecs = Eigen::MatrixXf::Zero(t1, emb.dim());
  for (Eigen::Index t = 0; t < t1; ++t) {
    const auto word = to_lower(seqs.path_words[static_cast<std::size_t>(t)]);
    if (vocab.id(word) != 0) x.word_vecs.row(t) = emb.lookup(word).transpose();
  }

  const auto t2 = static_cast<Eigen::Index>(seqs.pos_tags.size());
  const Eigen::Index extra = event_marker ? 1 : 0;
  x.pos_onehots = Eigen::MatrixXf::Zero(t2, static_cast<Eigen::Index>(pos_inv.size()) + extra);
  x.dep_onehots = Eigen::MatrixXf::Zero(t2, static_cast<Eigen::Index>(dep_inv.size()) + extra);
  for (Eigen::Index t = 0; t < t2; ++t) {
    x.pos_onehots(t, pos_inv.id(seqs.pos_tags[static_cast<std::size_t>(t)])) = 1.0f;
    x.dep_onehots(t, dep_inv.id(seqs.dep_labels[static_cast<std::size_t>(t)])) = 1.0f;
  }
  if (event_marker) {
    for (int p : seqs.event_positions) {
      if (p < 0 || p >= t2) continue;
      x.pos_onehots(p, x.pos_onehots.cols() - 1) = 1.0f;
      x.dep_onehots(p, x.dep_onehots.cols() - 1) = 1.0f;
    }
  }
  return x;
}


std::vector<EncodedInstance> encode_all(std::span<const Document> docs,
                                        std::span<const RelationInstance> instances,
                                        const Inventories& inventories, const EmbeddingTable& emb,
                                        const FeatureConfig& cfg) {
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : docs) by_id.emplace(d.doc_id, &d);
  std::vector<EncodedInstance> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    auto it = by_id.find(inst.doc_id);
    if (it == by_id.end())
      throw ValidationError("relation " + std::to_string(i) + " refers to unknown document '" + inst.doc_id + "'");
    validate_mentions(*it->second, inst);
    const int label_id = inst.label.empty() ? -1 : inst.label_id();
    out.push_back(encode(extract_sequences(*it->second, inst, cfg), inventories.vocab, inventories.pos,
                         inventories.dep, emb, label_id, inst.task, cfg.event_marker));
  }
  return out;
}

}  // namespace serc
