// serc: command-line driver for corpus preparation, training, evaluation and prediction.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical failure.
// Every failure also prints one `ERROR <code> <message>` line on stderr.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "serc/config.hpp"
#include "serc/corpus.hpp"
#include "serc/eval.hpp"
#include "serc/features.hpp"
#include "serc/model.hpp"
#include "serc/train.hpp"

namespace fs = std::filesystem;
using namespace serc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;

  KeyValueConfig settings() const {
    KeyValueConfig kv;
    if (!config_path.empty()) kv = KeyValueConfig::load(config_path);
    for (const auto& o : overrides) kv.set(o);
    return kv;
  }

  static fs::path data_dir() {
    const char* dir = std::getenv("SERC_DATA_DIR");
    return dir ? fs::path(dir) : fs::path();
  }

  RunConfig run_config() const { return make_run_config(settings(), data_dir()); }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "Configuration file (section.key = value lines)");
  cmd->add_option("--set", c.overrides, "Override a setting: section.key=value")->take_all();
}

struct Data {
  std::vector<Document> docs;
  std::vector<RelationInstance> relations;  // all tasks, file order
};

Data load_data(const RunConfig& rc, bool require_labels = true) {
  if (rc.paths.conllu.empty()) throw UsageError("paths.conllu is not set");
  if (rc.paths.relations.empty()) throw UsageError("paths.relations is not set");
  Data d;
  d.docs = parse_conllu(read_text(rc.paths.conllu), rc.pos_column);
  d.relations = parse_relations(read_text(rc.paths.relations), true, require_labels).instances;
  return d;
}

std::vector<RelationInstance> select_task(const std::vector<RelationInstance>& all, Task task) {
  std::vector<RelationInstance> out;
  std::set<std::string> others;
  for (const auto& r : all) {
    if (r.task == task)
      out.push_back(r);
    else
      others.insert(std::string(to_string(r.task)));
  }
  if (out.empty()) {
    std::string found;
    for (const auto& o : others) found += (found.empty() ? "" : ", ") + o;
    throw ValidationError("label set mismatch: model task is " + std::string(to_string(task)) +
                          " but the relations file holds " + (found.empty() ? "no instances" : found));
  }
  return out;
}

EmbeddingTable load_embedding_table(const RunConfig& rc, int dim) {
  if (rc.paths.embeddings.empty()) return EmbeddingTable(dim);
  return load_embeddings(rc.paths.embeddings, dim);
}

const std::vector<RelationInstance>& pick_split(const Split& split, const std::vector<RelationInstance>& all,
                                                const std::string& name) {
  if (name == "train") return split.train;
  if (name == "dev") return split.dev;
  if (name == "test") return split.test;
  if (name == "all") return all;
  throw UsageError("--split must be train, dev, test or all");
}

std::map<std::string, std::string> provenance_of(const RunConfig& rc, const Split& split) {
  return {{"task", std::string(to_string(rc.task))},
          {"train_instances", std::to_string(split.train.size())},
          {"dev_instances", std::to_string(split.dev.size())},
          {"split_seed", std::to_string(rc.split_seed)},
          {"train_seed", std::to_string(rc.train.seed)},
          {"max_epochs", std::to_string(rc.train.max_epochs)}};
}

// ---- subcommands ------------------------------------------------------------------

int cmd_prep(const Common& c) {
  const auto rc = c.run_config();
  if (rc.paths.conllu.empty() || rc.paths.relations.empty()) throw UsageError("paths.conllu and paths.relations are required");
  const auto docs = parse_conllu(read_text(rc.paths.conllu), rc.pos_column);
  auto parsed = parse_relations(read_text(rc.paths.relations), false);
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : docs) by_id.emplace(d.doc_id, &d);
  std::vector<RelationInstance> valid;
  for (const auto& r : parsed.instances) {
    auto it = by_id.find(r.doc_id);
    try {
      if (it == by_id.end()) throw ValidationError("relation refers to unknown document '" + r.doc_id + "'");
      validate_mentions(*it->second, r);
      valid.push_back(r);
    } catch (const Error& e) {
      parsed.errors.emplace_back(e.what());
    }
  }
  for (const auto& e : parsed.errors) std::cerr << "invalid relation: " << e << "\n";

  const auto inv = build_inventories(docs, rc.min_count);
  const auto task_instances = select_task(valid, rc.task);
  const auto split = split_corpus(task_instances, rc.split, rc.split_seed);

  fs::create_directories(rc.paths.out);
  nlohmann::json j{{"pos", inv.pos.tags()}, {"dep", inv.dep.tags()}, {"vocab_size", inv.vocab.size()},
                   {"vocab_digest", inv.vocab.digest()}};
  write_text(rc.paths.out / "inventories.json", j.dump(2) + "\n");
  for (const auto& [name, part] : {std::pair{"train", &split.train}, {"dev", &split.dev}, {"test", &split.test}}) {
    std::string lines;
    for (const auto& r : *part) lines += write_relation(r) + "\n";
    write_text(rc.paths.out / (std::string(name) + ".jsonl"), lines);
  }
  std::cout << "documents " << docs.size() << "\n"
            << "relations " << valid.size() << " valid, " << parsed.errors.size() << " invalid\n"
            << "task " << to_string(rc.task) << ": train " << split.train.size() << ", dev " << split.dev.size()
            << ", test " << split.test.size() << "\n"
            << "inventories POS " << inv.pos.size() << ", DEP " << inv.dep.size() << ", vocabulary "
            << inv.vocab.size() << "\n";
  if (!parsed.errors.empty())
    throw ValidationError(std::to_string(parsed.errors.size()) + " relation lines failed validation");
  return kExitOk;
}

int cmd_train(const Common& c, std::string checkpoint_path) {
  const auto rc = c.run_config();
  const auto data = load_data(rc);
  const auto inv = build_inventories(data.docs, rc.min_count);
  const auto instances = select_task(data.relations, rc.task);
  const auto split = split_corpus(instances, rc.split, rc.split_seed);
  const auto emb = load_embedding_table(rc, rc.model.embedding_dim);

  const auto train_x = encode_all(data.docs, split.train, inv, emb, rc.features);
  const auto dev_x = encode_all(data.docs, split.dev, inv, emb, rc.features);

  SercConfig cfg = rc.model;
  const int extra = rc.features.event_marker ? 1 : 0;
  cfg.pos_dim = static_cast<int>(inv.pos.size()) + extra;
  cfg.dep_dim = static_cast<int>(inv.dep.size()) + extra;
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochStats& s) {
    std::cerr << "epoch " << s.epoch << " loss " << s.train_loss << " train_acc " << s.train_accuracy;
    if (s.dev_f1) std::cerr << " dev_f1 " << *s.dev_f1;
    std::cerr << "\n";
  };
  auto result = train(init_model<float>(cfg), train_x, dev_x, rc.train, hooks);

  if (checkpoint_path.empty())
    checkpoint_path = (rc.paths.out / ("serc-" + to_lower(to_string(rc.task)) + ".ckpt")).string();
  fs::create_directories(rc.paths.out);
  save_checkpoint(Checkpoint{result.model, inv, provenance_of(rc, split)}, checkpoint_path);
  write_text(fs::path(checkpoint_path).replace_extension(".history.jsonl"), history_jsonl(result.history));
  std::cout << "checkpoint " << checkpoint_path << "\n"
            << "epochs " << result.history.size() << ", best epoch " << result.best_epoch << "\n";
  return kExitOk;
}

int cmd_train_joint(const Common& c, std::string checkpoint_path) {
  auto rc = c.run_config();
  const auto raw = c.settings();
  auto resolve = [&](const std::string& key) {
    fs::path p = raw.get_or(key, "");
    return p.empty() || p.is_absolute() || Common::data_dir().empty() ? p : Common::data_dir() / p;
  };
  const auto tpath = resolve("joint.temporal_checkpoint");
  const auto cpath = resolve("joint.causal_checkpoint");
  if (tpath.empty() || cpath.empty())
    throw UsageError("train-joint needs joint.temporal_checkpoint and joint.causal_checkpoint");
  const auto temporal = load_checkpoint(tpath);
  const auto causal = load_checkpoint(cpath);
  if (causal.model.config.task != Task::Causal3) throw ValidationError("joint.causal_checkpoint is not a CAUSAL3 model");

  const auto data = load_data(rc);
  const auto instances = select_task(data.relations, Task::Causal3);
  const auto split = split_corpus(instances, rc.split, rc.split_seed);
  const auto emb = load_embedding_table(rc, causal.model.config.embedding_dim);
  FeatureConfig fc = rc.features;
  fc.event_marker = causal.model.config.event_marker;
  const auto train_x = encode_all(data.docs, split.train, causal.inventories, emb, fc);
  const auto dev_x = encode_all(data.docs, split.dev, causal.inventories, emb, fc);

  auto result = train_joint(temporal, causal, train_x, dev_x, rc.train);
  if (checkpoint_path.empty()) checkpoint_path = (rc.paths.out / "serc-joint.ckpt").string();
  fs::create_directories(rc.paths.out);
  rc.task = Task::Causal3;
  save_checkpoint(JointCheckpoint{result.model, causal.inventories, provenance_of(rc, split)}, checkpoint_path);
  write_text(fs::path(checkpoint_path).replace_extension(".history.jsonl"), history_jsonl(result.history));
  std::cout << "checkpoint " << checkpoint_path << "\n"
            << "epochs " << result.history.size() << ", best epoch " << result.best_epoch << "\n";
  return kExitOk;
}

/// Loaded model of either kind with the pieces needed to encode inputs for it.
struct AnyModel {
  std::optional<Checkpoint> single;
  std::optional<JointCheckpoint> joint;

  Task task() const { return single ? single->model.config.task : Task::Causal3; }
  const Inventories& inventories() const { return single ? single->inventories : joint->inventories; }
  const SercConfig& encoder_config() const { return single ? single->model.config : joint->model.causal.config; }
  std::vector<int> predict(std::span<const EncodedInstance> xs) const {
    return single ? predict_ids(single->model, xs) : predict_ids(joint->model, xs);
  }
};

std::vector<int> predict_ids(const AnyModel& m, std::span<const EncodedInstance> xs) { return m.predict(xs); }

AnyModel load_any(const fs::path& path) {
  AnyModel m;
  if (checkpoint_kind(path) == "joint")
    m.joint = load_joint_checkpoint(path);
  else
    m.single = load_checkpoint(path);
  return m;
}

std::vector<EncodedInstance> encode_for(const AnyModel& m, const RunConfig& rc, const std::vector<Document>& docs,
                                        const std::vector<RelationInstance>& instances) {
  const auto& cfg = m.encoder_config();
  FeatureConfig fc = rc.features;
  fc.event_marker = cfg.event_marker;
  return encode_all(docs, instances, m.inventories(), load_embedding_table(rc, cfg.embedding_dim), fc);
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& split_name) {
  const auto rc = c.run_config();
  const auto model = load_any(checkpoint);
  const auto data = load_data(rc);
  const auto instances = select_task(data.relations, model.task());
  const auto split = split_corpus(instances, rc.split, rc.split_seed);
  const auto& chosen = pick_split(split, instances, split_name);
  if (chosen.empty()) throw ValidationError("the " + split_name + " split is empty");

  const auto xs = encode_for(model, rc, data.docs, chosen);
  const auto report = make_report(evaluate(model, xs, model.task()));
  const auto text = render_report(report, ReportFormat::Text);
  fs::create_directories(rc.paths.out);
  write_text(rc.paths.out / ("report-" + split_name + ".txt"), text);
  write_text(rc.paths.out / ("report-" + split_name + ".json"), render_report(report, ReportFormat::Json));
  std::cout << text;
  return kExitOk;
}

int cmd_predict(const Common& c, const std::string& checkpoint, const std::string& input, const std::string& output) {
  auto rc = c.run_config();
  const auto model = load_any(checkpoint);
  if (rc.paths.conllu.empty()) throw UsageError("paths.conllu is not set");
  const auto docs = parse_conllu(read_text(rc.paths.conllu), rc.pos_column);
  const fs::path in_path = input.empty() ? rc.paths.relations : fs::path(input);
  if (in_path.empty()) throw UsageError("predict needs --input or paths.relations");
  auto instances = parse_relations(read_text(in_path), true, false).instances;
  for (auto& r : instances) {
    if (r.task != model.task())
      throw ValidationError("label set mismatch: model task is " + std::string(to_string(model.task())) +
                            " but an input instance has task " + std::string(to_string(r.task)));
  }
  const auto xs = encode_for(model, rc, docs, instances);
  const auto preds = model.predict(xs);
  std::string out;
  for (int p : preds) out += LabelSet::of(model.task()).label(p) + "\n";
  if (output.empty())
    std::cout << out;
  else
    write_text(output, out);
  return kExitOk;
}

void print_gradcheck(const char* label, const nn::GradCheckResult& r) {
  std::cout << label << " max_relative_error " << r.max_relative_error << " parameter " << r.worst_parameter << "["
            << r.worst_index << "] analytic " << r.analytic << " numeric " << r.numeric << " checked " << r.checked
            << "\n";
}

int cmd_gradcheck(std::uint64_t seed, double threshold, bool joint, bool fd_double) {
  const auto precision = fd_double ? FdPrecision::Double : FdPrecision::Extended;
  auto fixture = reduced_gradcheck_fixture(seed);
  auto r = grad_check_model(fixture.model, fixture.instance, {}, precision);
  print_gradcheck("serc-t", r);
  double worst = r.max_relative_error;
  if (joint) {
    auto jf = reduced_joint_gradcheck_fixture(seed);
    auto rj = grad_check_joint(jf.model, jf.instance, precision);
    print_gradcheck("serc-tc", rj);
    worst = std::max(worst, rj.max_relative_error);
  }
  if (!(worst <= threshold)) {
    throw NumericalError("gradient check failed: max relative error " + std::to_string(worst) + " > " +
                         std::to_string(threshold));
  }
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.category()) {
    case Error::Category::Usage: return kExitUsage;
    case Error::Category::Data: return kExitData;
    case Error::Category::Numerical: return kExitNumerical;
  }
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SERC temporal and causal relation classifier"};
  app.require_subcommand(1);

  Common common;
  std::string checkpoint, output, input, split_name = "test";
  std::uint64_t seed = 1;
  double threshold = 1e-6;
  bool joint = false;
  bool fd_double = false;

  auto* prep = app.add_subcommand("prep", "Validate the corpus and write inventories and split manifests");
  add_common(prep, common);
  auto* train_cmd = app.add_subcommand("train", "Train a SERC-t or SERC-c model");
  add_common(train_cmd, common);
  train_cmd->add_option("--checkpoint", checkpoint, "Output checkpoint path");
  auto* joint_cmd = app.add_subcommand("train-joint", "Train the joint SERC-tc head on two checkpoints");
  add_common(joint_cmd, common);
  joint_cmd->add_option("--checkpoint", checkpoint, "Output checkpoint path");
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on one split");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval_cmd->add_option("--split", split_name, "train | dev | test | all");
  auto* predict_cmd = app.add_subcommand("predict", "Write one predicted label per input instance");
  add_common(predict_cmd, common);
  predict_cmd->add_option("--checkpoint", checkpoint, "Checkpoint to use")->required();
  predict_cmd->add_option("--input", input, "Relations JSONL (labels optional); defaults to paths.relations");
  predict_cmd->add_option("--output", output, "Output file; defaults to stdout");
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of a reduced model");
  grad_cmd->add_option("--seed", seed, "Initialization seed");
  grad_cmd->add_option("--threshold", threshold, "Maximum accepted relative error");
  grad_cmd->add_flag("--joint", joint, "Also check the joint graph");
  grad_cmd->add_flag("--fd-double", fd_double,
                     "Evaluate finite differences in double instead of extended precision");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) {
      std::cerr << app.help() << "ERROR 1 " << e.what() << "\n";
      return kExitUsage;
    }
    return kExitOk;
  }

  try {
    if (*prep) return cmd_prep(common);
    if (*train_cmd) return cmd_train(common, checkpoint);
    if (*joint_cmd) return cmd_train_joint(common, checkpoint);
    if (*eval_cmd) return cmd_eval(common, checkpoint, split_name);
    if (*predict_cmd) return cmd_predict(common, checkpoint, input, output);
    if (*grad_cmd) return cmd_gradcheck(seed, threshold, joint, fd_double);
  } catch (const Error& e) {
    const int code = exit_code_for(e);
    std::cerr << "ERROR " << code << " " << e.what() << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "ERROR " << kExitData << " " << e.what() << "\n";
    return kExitData;
  }
  std::cerr << app.help();
  return kExitUsage;
}
