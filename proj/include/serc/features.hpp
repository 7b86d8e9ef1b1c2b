#pragma once

#include <vector>

#include <Eigen/Core>

#include "serc/corpus.hpp"

namespace serc {

/// Undirected dependency tree over the sentences spanned by an event pair.
/// Cross-sentence spans get one extra virtual node joining the sentence roots.
class DepGraph {
 public:
  static constexpr int kNone = -1;

  struct Node {
    int sentence_idx = kNone;  // kNone for the virtual root
    int token_idx = kNone;
    int parent = kNone;  // tree parent, kNone for the overall root
  };

  DepGraph(const Document& doc, EventMention e1, EventMention e2);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_edges() const;
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<int>& neighbours(int id) const { return adjacency_[static_cast<std::size_t>(id)]; }
  bool has_virtual_root() const { return virtual_root_ != kNone; }
  int virtual_root() const { return virtual_root_; }
  bool is_virtual(int id) const { return id == virtual_root_; }
  int first_sentence() const { return first_sentence_; }
  int last_sentence() const { return last_sentence_; }
  int node_of(EventMention m) const;  // throws IndexError when outside the span

 private:
  std::vector<Node> nodes_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<int> sentence_offset_;
  int virtual_root_ = kNone;
  int first_sentence_ = 0;
  int last_sentence_ = 0;
};

DepGraph build_dep_graph(const Document& doc, EventMention e1, EventMention e2);

/// Node ids from e1 to e2 along the unique tree path, virtual root dropped.
std::vector<int> extract_path(const DepGraph& graph, EventMention e1, EventMention e2);

struct FeatureConfig {
  int max_path_tokens = 40;
  int max_text_tokens = 200;
  bool event_marker = false;
};

struct FeatureSequences {
  std::vector<std::string> path_words;
  std::vector<std::string> pos_tags;
  std::vector<std::string> dep_labels;
  std::vector<int> event_positions;  // indices of e1, e2 in pos_tags (after windowing)
};

FeatureSequences extract_sequences(const Document& doc, const RelationInstance& inst,
                                   const FeatureConfig& cfg = {});

struct EncodedInstance {
  Eigen::MatrixXf word_vecs;    // T1 x dim
  Eigen::MatrixXf pos_onehots;  // T2 x |POS| (+1 marker column)
  Eigen::MatrixXf dep_onehots;  // T2 x |DEP| (+1 marker column)
  int label_id = 0;
  Task task = Task::Temporal6;
};

/// Path words use the pretrained vector when the word is in both the vocabulary and the
/// embedding table; everything else is the zero vector.
EncodedInstance encode(const FeatureSequences& seqs, const Vocabulary& vocab,
                       const TagInventory& pos_inv, const TagInventory& dep_inv,
                       const EmbeddingTable& emb, int label_id, Task task,
                       bool event_marker = false);


/// Extracts and encodes every instance against its document. Unlabelled instances
/// (empty label) get label_id -1. Throws ValidationError for unknown documents.
std::vector<EncodedInstance> encode_all(std::span<const Document> docs,
                                        std::span<const RelationInstance> instances,
                                        const Inventories& inventories, const EmbeddingTable& emb,
                                        const FeatureConfig& cfg = {});

}  // namespace serc
