// serc_synth: writes a synthetic corpus (CoNLL-U, relations JSONL, embeddings) for demos and smoke tests.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "serc/corpus.hpp"
#include "serc/error.hpp"

namespace fs = std::filesystem;
using namespace serc;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic corpus generator"};
  std::string out = "synth";
  std::string task_name = "CAUSAL3";
  std::uint64_t seed = 1;
  SyntheticSpec spec;
  int dim = 100;
  bool coupled = false;

  app.add_option("--out", out, "Output directory");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--instances", spec.num_instances, "Number of event pairs");
  app.add_option("--classes", spec.num_classes, "Number of label classes in use");
  app.add_option("--task", task_name, "Label set: TEMPORAL6, TEMPORAL14 or CAUSAL3");
  app.add_option("--lexicon", spec.lexicon_size, "Number of distinct words");
  app.add_option("--dim", dim, "Embedding width");
  app.add_flag("--coupled", coupled, "Temporal labels drive causal labels; writes both relation sets");
  CLI11_PARSE(app, argc, argv);

  try {
    spec.task = task_from_string(task_name);
    if (coupled) spec.coupling = Coupling::TemporalDrivesCausal;
    const auto corpus = generate_synthetic(spec, seed);
    fs::create_directories(out);
    write_file(fs::path(out) / "corpus.conllu", write_conllu(corpus.docs));

    std::string relations;
    for (const auto& r : corpus.instances) relations += write_relation(r) + "\n";
    for (const auto& r : corpus.causal) relations += write_relation(r) + "\n";
    write_file(fs::path(out) / "relations.jsonl", relations);

    const auto table = synthetic_embeddings(spec.lexicon_size, dim, seed);
    std::string emb;
    char buf[32];
    for (int w = 0; w < spec.lexicon_size; ++w) {
      const std::string word = "w" + std::to_string(w);
      emb += word;
      for (float v : table.lookup(word)) {
        std::snprintf(buf, sizeof buf, " %.9g", static_cast<double>(v));
        emb += buf;
      }
      emb += "\n";
    }
    write_file(fs::path(out) / "embeddings.txt", emb);
    std::cout << "documents " << corpus.docs.size() << ", relations " << corpus.instances.size() + corpus.causal.size()
              << ", embeddings " << spec.lexicon_size << " x " << dim << " in " << out << "\n";
  } catch (const Error& e) {
    std::cerr << "ERROR " << (e.category() == Error::Category::Usage ? 1 : 2) << " " << e.what() << "\n";
    return e.category() == Error::Category::Usage ? 1 : 2;
  }
  return 0;
}
