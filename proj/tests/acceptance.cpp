// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include <unistd.h>

#include "serc/error.hpp"
#include "serc/train.hpp"

using namespace serc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const char* name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs > limit_seconds) {
    o.pass = false;
    o.detail += " runtime over " + std::to_string(limit_seconds) + " s";
  }
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s (%.2f s, limit %.0f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
              limit_seconds);
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1: gradients ------------------------------------------------------------------------

Outcome gradients() {
  constexpr double kThreshold = 1e-6;
  const auto f = reduced_gradcheck_fixture(1);
  const bool shape_ok = f.model.config.word_hidden == 4 && f.model.config.pos_hidden == 2 &&
                        f.model.config.dep_hidden == 2 && f.model.config.stacked_hidden == 4 &&
                        f.model.config.embedding_dim == 3 && f.instance.word_vecs.rows() == 3 &&
                        f.instance.pos_onehots.rows() == 5;
  const auto serc = grad_check_model(f.model, f.instance);
  const auto jf = reduced_joint_gradcheck_fixture(1);
  const auto joint = grad_check_joint(jf.model, jf.instance);
  // Plain double-precision perturbations, reported for reference only.
  const auto serc_double = grad_check_model(f.model, f.instance, {}, FdPrecision::Double);
  const bool pass = shape_ok && serc.max_relative_error <= kThreshold && joint.max_relative_error <= kThreshold &&
                    serc.checked > 0 && joint.checked > 0;
  return {pass, "SERC-t max rel err " + fmt("%.3g", serc.max_relative_error) + " over " +
                    std::to_string(serc.checked) + " entries, SERC-tc " + fmt("%.3g", joint.max_relative_error) +
                    " over " + std::to_string(joint.checked) + " entries, threshold 1e-6" +
                    (shape_ok ? "" : ", reduced shape wrong") + "; double-evaluated differences give " +
                    fmt("%.3g", serc_double.max_relative_error)};
}

// ---- 2: census ---------------------------------------------------------------------------

Outcome census() {
  bool ok = true;
  std::string bad;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      bad += " " + what;
    }
  };
  for (Task task : {Task::Temporal6, Task::Temporal14, Task::Causal3}) {
    const auto m = init_model<float>(default_config(task, 100, 18, 40));
    const auto& p = m.params;
    expect(p.word.hidden() == 64 && p.pos.hidden() == 32 && p.dep.hidden() == 32, "encoder widths");
    expect(p.stacked.hidden() == 64 && p.stacked.input() == 128, "stacked");
    expect(p.hidden.W.rows() == 32 && p.hidden.W.cols() == 128, "dense");
    const int out = static_cast<int>(p.output.W.rows());
    expect(out == (task == Task::Temporal6 ? 6 : task == Task::Temporal14 ? 14 : 3), "output width");
    EncodedInstance x;
    x.task = task;
    x.word_vecs = Eigen::MatrixXf::Ones(4, 100);
    x.pos_onehots = Eigen::MatrixXf::Zero(9, 18);
    x.dep_onehots = Eigen::MatrixXf::Zero(9, 40);
    SercTape<float> tape;
    const auto r = forward(m, x, tape);
    expect(r.merged.rows() == 4 + 9 && r.merged.cols() == 128, "merged shape");
  }
  return {ok, ok ? "64/32/32 encoders, stacked 64, dense 32, outputs 6/14/3, merged (T1+T2) x 128" : "mismatch:" + bad};
}

// ---- 3: overfit --------------------------------------------------------------------------

Outcome overfit() {
  SyntheticSpec spec;  // balanced 3 classes, 60 instances
  const auto corpus = generate_synthetic(spec, 11);
  const auto inv = build_inventories(corpus.docs);
  const auto emb = synthetic_embeddings(spec.lexicon_size, 100, 11);
  const auto xs = encode_all(corpus.docs, corpus.instances, inv, emb);
  auto cfg = default_config(spec.task, 100, static_cast<int>(inv.pos.size()), static_cast<int>(inv.dep.size()));
  cfg.seed = 11;
  TrainConfig tc;
  tc.max_epochs = 200;
  tc.seed = 11;
  tc.stop_at_train_accuracy = 99.0;
  const auto r = train(init_model<float>(cfg), xs, {}, tc);
  const double acc = micro_metrics(evaluate(r.model, std::span<const EncodedInstance>(xs), spec.task)).accuracy;
  return {acc >= 99.0 && xs.size() == 60, "train accuracy " + fmt("%.1f", acc) + "% after " +
                                              std::to_string(r.history.size()) + " epochs (need >= 99 within 200)"};
}

// ---- 4: joint benefit --------------------------------------------------------------------

Outcome joint_benefit() {
  double sum_c = 0, sum_tc = 0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticSpec spec;
    spec.num_classes = 6;
    spec.num_instances = 260;
    spec.coupling = Coupling::TemporalDrivesCausal;
    const auto corpus = generate_synthetic(spec, seed);
    const auto inv = build_inventories(corpus.docs);
    const auto emb = synthetic_embeddings(spec.lexicon_size, 100, seed);
    const auto xt = encode_all(corpus.docs, corpus.instances, inv, emb);
    const auto xc = encode_all(corpus.docs, corpus.causal, inv, emb);
    const std::span<const EncodedInstance> t_train(xt.data(), 200), t_dev(xt.data() + 200, 60);
    const std::span<const EncodedInstance> c_train(xc.data(), 200), c_dev(xc.data() + 200, 60);
    TrainConfig tc;
    tc.seed = seed;
    const int pos = static_cast<int>(inv.pos.size()), dep = static_cast<int>(inv.dep.size());
    auto cfg_t = default_config(Task::Temporal6, 100, pos, dep);
    cfg_t.seed = seed;
    auto cfg_c = default_config(Task::Causal3, 100, pos, dep);
    cfg_c.seed = seed + 100;
    const auto rt = train(init_model<float>(cfg_t), t_train, t_dev, tc);
    const auto rc = train(init_model<float>(cfg_c), c_train, c_dev, tc);
    const auto rj = train_joint(Checkpoint{rt.model, inv, {}}, Checkpoint{rc.model, inv, {}}, c_train, c_dev, tc);
    const double acc_c = micro_metrics(evaluate(rc.model, c_dev, Task::Causal3)).accuracy;
    const double acc_tc = micro_metrics(evaluate(rj.model, c_dev, Task::Causal3)).accuracy;
    sum_c += acc_c;
    sum_tc += acc_tc;
    per_seed += " seed " + std::to_string(seed) + ": c " + fmt("%.1f", acc_c) + " tc " + fmt("%.1f", acc_tc) + ";";
  }
  const double c = sum_c / 3, tc = sum_tc / 3, margin = tc - c;
  return {tc >= c, "mean dev accuracy SERC-c " + fmt("%.2f", c) + " SERC-tc " + fmt("%.2f", tc) + ", margin " +
                       fmt("%.2f", margin) + " (expected >= 5, hard bound >= 0);" + per_seed};
}

// ---- 5: metric fixtures ------------------------------------------------------------------

Outcome metric_fixtures() {
  // Smallest confusion counts whose one-decimal precision and recall read as (p, r).
  auto realize = [](double p, double r) -> std::optional<std::array<long, 3>> {
    auto shows = [](double exact, double shown) { return std::abs(round1(exact) - shown) < 1e-9; };
    for (long tp = 1; tp <= 400; ++tp)
      for (long pred = tp; pred <= 400; ++pred) {
        if (!shows(100.0 * tp / pred, p)) continue;
        for (long sup = tp; sup <= 400; ++sup)
          if (shows(100.0 * tp / sup, r)) return std::array<long, 3>{tp, pred, sup};
      }
    return std::nullopt;
  };
  struct Row {
    double p, r, f1;
  };
  bool ok = true;
  std::string detail;
  for (const Row row : {Row{50.8, 83.5, 63.2}, Row{100.0, 22.2, 36.4}, Row{73.7, 53.8, 62.2}}) {
    const auto c = realize(row.p, row.r);
    if (!c) return {false, "no counts realize " + fmt("%.1f", row.p) + "/" + fmt("%.1f", row.r)};
    ConfusionMatrix cm(Task::Causal3);
    cm.add(0, 0, (*c)[0]);
    if ((*c)[1] > (*c)[0]) cm.add(1, 0, (*c)[1] - (*c)[0]);
    if ((*c)[2] > (*c)[0]) cm.add(0, 2, (*c)[2] - (*c)[0]);
    cm.add(1, 1, 3);
    const auto m = per_class_metrics(cm)[0];
    const double f1 = round1(*m.f1);
    ok = ok && std::abs(f1 - row.f1) <= 0.05 + 1e-9;
    detail += "(" + fmt("%.1f", row.p) + ", " + fmt("%.1f", row.r) + ") -> " + fmt("%.1f", f1) + " [" +
              std::to_string((*c)[0]) + "/" + std::to_string((*c)[1]) + ", " + std::to_string((*c)[0]) + "/" +
              std::to_string((*c)[2]) + "]; ";
  }
  std::mt19937_64 rng(2024);
  int identity_failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Task task = trial % 3 == 0 ? Task::Causal3 : trial % 3 == 1 ? Task::Temporal6 : Task::Temporal14;
    const int classes = static_cast<int>(LabelSet::of(task).size());
    std::uniform_int_distribution<int> cls(0, classes - 1);
    const int n = std::uniform_int_distribution<int>(1, 300)(rng);
    std::vector<int> golds, preds;
    long correct = 0;
    for (int i = 0; i < n; ++i) {
      golds.push_back(cls(rng));
      preds.push_back(rng() % 2 ? golds.back() : cls(rng));
      correct += golds.back() == preds.back();
    }
    const auto m = micro_metrics(confusion(std::span<const int>(golds), std::span<const int>(preds), task));
    const double acc = 100.0 * static_cast<double>(correct) / n;
    if (!(m.precision == m.recall && m.recall == m.f1 && m.f1 == m.accuracy && m.accuracy == acc)) ++identity_failures;
  }
  ok = ok && identity_failures == 0;
  return {ok, detail + "micro identity violations " + std::to_string(identity_failures) + "/1000"};
}

// ---- 6: path oracle ----------------------------------------------------------------------

Sentence random_tree(std::mt19937_64& rng, int n) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 1);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> head(static_cast<std::size_t>(n + 1), 0);
  for (int k = 1; k < n; ++k)
    head[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
        order[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, k - 1)(rng))];
  Sentence s;
  for (int t = 1; t <= n; ++t) s.tokens.push_back(Token{t, "w" + std::to_string(t), "X", "dep", head[static_cast<std::size_t>(t)]});
  return s;
}

using TokenRef = std::pair<int, int>;

std::vector<TokenRef> bfs_path(const Document& doc, EventMention a, EventMention b) {
  const TokenRef virt{-1, -1};
  const int lo = std::min(a.sentence_idx, b.sentence_idx), hi = std::max(a.sentence_idx, b.sentence_idx);
  std::map<TokenRef, std::vector<TokenRef>> adj;
  for (int s = lo; s <= hi; ++s)
    for (const auto& t : doc.sentences[static_cast<std::size_t>(s)].tokens) {
      const TokenRef me{s, t.index - 1};
      adj[me];
      const TokenRef up = t.head != 0 ? TokenRef{s, t.head - 1} : virt;
      if (t.head != 0 || lo != hi) {
        adj[me].push_back(up);
        adj[up].push_back(me);
      }
    }
  const TokenRef src{a.sentence_idx, a.token_idx}, dst{b.sentence_idx, b.token_idx};
  std::map<TokenRef, TokenRef> prev{{src, src}};
  std::deque<TokenRef> queue{src};
  while (!queue.empty() && !prev.count(dst)) {
    const auto cur = queue.front();
    queue.pop_front();
    for (const auto& nb : adj[cur])
      if (prev.emplace(nb, cur).second) queue.push_back(nb);
  }
  std::vector<TokenRef> path{dst};
  while (path.back() != src) path.push_back(prev.at(path.back()));
  std::reverse(path.begin(), path.end());
  std::erase(path, virt);
  return path;
}

Outcome path_oracle() {
  std::mt19937_64 rng(6);
  int mismatches = 0, cross = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Document doc{"d", {}};
    EventMention a, b;
    if (trial % 5 == 0) {
      // Two or three sentences, at most 30 tokens in all.
      const int ns = std::uniform_int_distribution<int>(2, 3)(rng);
      for (int s = 0; s < ns; ++s) doc.sentences.push_back(random_tree(rng, std::uniform_int_distribution<int>(1, 30 / ns)(rng)));
      const int s1 = std::uniform_int_distribution<int>(0, ns - 2)(rng);
      const int s2 = std::uniform_int_distribution<int>(s1 + 1, ns - 1)(rng);
      auto tok = [&](int s) {
        return std::uniform_int_distribution<int>(0, static_cast<int>(doc.sentences[static_cast<std::size_t>(s)].size()) - 1)(rng);
      };
      a = {s1, tok(s1)};
      b = {s2, tok(s2)};
      if (rng() % 2) std::swap(a, b);
      ++cross;
    } else {
      const int n = std::uniform_int_distribution<int>(1, 30)(rng);
      doc.sentences.push_back(random_tree(rng, n));
      std::uniform_int_distribution<int> pick(0, n - 1);
      a = {0, pick(rng)};
      b = {0, pick(rng)};
    }
    const auto g = build_dep_graph(doc, a, b);
    std::vector<TokenRef> got;
    for (int id : extract_path(g, a, b)) got.emplace_back(g.node(id).sentence_idx, g.node(id).token_idx);
    if (got != bfs_path(doc, a, b)) ++mismatches;
  }
  return {mismatches == 0 && cross == 200,
          std::to_string(mismatches) + " mismatches against BFS over 1000 trees (" + std::to_string(cross) +
              " cross-sentence through the virtual root)"};
}

// ---- 7: determinism and persistence ------------------------------------------------------

Outcome persistence() {
  SyntheticSpec spec;
  spec.num_instances = 70;
  const auto corpus = generate_synthetic(spec, 21);
  const auto inv = build_inventories(corpus.docs);
  const auto emb = synthetic_embeddings(spec.lexicon_size, 100, 21);
  const auto xs = encode_all(corpus.docs, corpus.instances, inv, emb);
  const std::span<const EncodedInstance> train_set(xs.data(), 50), dev(xs.data() + 50, 20);
  auto cfg = default_config(spec.task, 100, static_cast<int>(inv.pos.size()), static_cast<int>(inv.dep.size()));
  cfg.seed = 21;
  TrainConfig tc;
  tc.max_epochs = 6;
  tc.seed = 21;
  auto once = [&] {
    auto r = train(init_model<float>(cfg), train_set, dev, tc);
    return Checkpoint{r.model, inv, {{"seed", "21"}}};
  };
  const auto a = once(), b = once();
  const auto bytes_a = serialize_checkpoint(a), bytes_b = serialize_checkpoint(b);
  const bool identical_runs = bytes_a == bytes_b;

  const auto path = std::filesystem::temp_directory_path() / ("serc_accept_" + std::to_string(::getpid()) + ".ckpt");
  save_checkpoint(a, path);
  const auto loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  const bool bit_exact = serialize_checkpoint(loaded) == bytes_a;
  const std::span<const EncodedInstance> fixture(xs.data(), 50);
  const bool replay = predict_ids(a.model, fixture) == predict_ids(loaded.model, fixture);
  return {identical_runs && bit_exact && replay,
          std::string("two runs ") + (identical_runs ? "bitwise identical" : "DIFFER") + " (" +
              std::to_string(bytes_a.size()) + " bytes), reload " + (bit_exact ? "bit-exact" : "NOT bit-exact") +
              ", 50-instance replay " + (replay ? "identical" : "DIFFERS")};
}

// ---- 8: robust reporting -----------------------------------------------------------------

Outcome reporting() {
  SyntheticSpec spec;
  const auto corpus = generate_synthetic(spec, 8);
  const auto inv = build_inventories(corpus.docs);
  const auto emb = synthetic_embeddings(spec.lexicon_size, 20, 8);
  const auto xs = encode_all(corpus.docs, corpus.instances, inv, emb);
  auto model = init_model<float>(default_config(spec.task, 20, static_cast<int>(inv.pos.size()),
                                                static_cast<int>(inv.dep.size())));
  const int silenced = 1;
  model.params.output.b(silenced) = -1e4f;  // this class can never win the argmax
  const auto cm = evaluate(model, std::span<const EncodedInstance>(xs), spec.task);
  const auto report = make_report(cm);
  const auto text = render_report(report, ReportFormat::Text);
  const auto& label = LabelSet::of(spec.task).label(silenced);
  std::string row;
  for (std::size_t start = 0, end; start < text.size(); start = end + 1) {
    end = text.find('\n', start);
    const auto line = text.substr(start, end - start);
    if (line.rfind(label + " ", 0) == 0) row = line;
  }
  const long dashes = std::count(row.begin(), row.end(), '-');
  const bool micro_ok = std::isfinite(report.micro.f1) && report.micro.f1 == report.micro.accuracy;
  const bool pass = cm.predicted(silenced) == 0 && cm.support(silenced) > 0 && dashes == 3 && micro_ok;
  return {pass, "class " + label + " predicted " + std::to_string(cm.predicted(silenced)) + " times, row '" + row +
                    "', micro F1 " + fmt("%.1f", report.micro.f1)};
}

}  // namespace

int main() {
  run(1, "gradient correctness", 60, gradients);
  run(2, "architecture census", 1, census);
  run(3, "overfit capability", 300, overfit);
  run(4, "joint benefit", 900, joint_benefit);
  run(5, "metric fixtures", 5, metric_fixtures);
  run(6, "path oracle", 10, path_oracle);
  run(7, "determinism and persistence", 120, persistence);
  run(8, "robust reporting", 1, reporting);
  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
