#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scenerank/scenerank.hpp"

namespace fs = std::filesystem;
using namespace scenerank;

namespace {

struct Paths {
  std::string taxonomy;
  std::string environment;
  std::string records;
  std::string embeddings;
  std::string weights;
  std::string out;
};

void write_json(const std::string& out, const nlohmann::ordered_json& doc) {
  if (out.empty() || out == "-") {
    std::cout << doc.dump(2) << '\n';
  } else {
    atomic_write(out, [&](std::ostream& os) { os << doc.dump(2) << '\n'; });
  }
}

RecordFile read_env_records(const Paths& p, const SceneTaxonomy& tax) {
  auto file = read_records(p.records, tax, p.environment);
  if (file.skipped_out_of_environment > 0) {
    std::cerr << "note: skipped " << file.skipped_out_of_environment << " records outside '" << p.environment
              << "'\n";
  }
  return file;
}

void require_ground_truth(const RecordFile& file) {
  for (std::size_t k = 0; k < file.records.size(); ++k) {
    if (!file.records[k].ground_truth) {
      throw ValidationError(file.path.string() + ": line " + std::to_string(file.line_numbers[k]) +
                            ": ground_truth: missing");
    }
  }
}

int run_init_weights(const Paths& p) {
  const auto tax = load_taxonomy(p.taxonomy);
  const auto file = read_env_records(p, tax);
  const auto corpus = build_corpus(file.records, tax, p.environment);
  if (corpus.skipped_records > 0) {
    std::cerr << "note: " << corpus.skipped_records << " records without an in-environment ground truth\n";
  }
  const auto w = init_tfidf(corpus);
  save_weights(w, p.out);
  std::cerr << "wrote " << w.rows() << "x" << w.cols() << " weights to " << p.out << '\n';
  return 0;
}

int run_train(const Paths& p, const TrainerConfig& config) {
  const auto tax = load_taxonomy(p.taxonomy);
  const auto& env = tax.environment(p.environment);
  auto model = load_model(p.embeddings, p.weights, env);
  const auto file = read_env_records(p, tax);
  require_ground_truth(file);
  std::vector<TrainingExample> examples;
  examples.reserve(file.records.size());
  for (const auto& r : file.records) examples.push_back(make_example(r));

  const auto report = train(model.store, model.weights, examples, config);

  const fs::path dir = p.out;
  fs::create_directories(dir);
  export_vectors_csv(model.store, dir / "embeddings.csv");
  save_weights(model.weights, dir / "weights.tsv");
  write_json((dir / "report.json").string(), report.to_json());
  const auto& last = report.epochs.back();
  std::cerr << "epoch " << last.epoch << " mean loss " << last.mean_loss << '\n';
  return 0;
}

int run_rerank(const Paths& p, unsigned threads) {
  const auto tax = load_taxonomy(p.taxonomy);
  const auto& env = tax.environment(p.environment);
  const auto model = load_model(p.embeddings, p.weights, env);
  const auto file = read_env_records(p, tax);
  const auto results = rerank_all(model.store, model.weights, file.records, threads);
  if (p.out.empty() || p.out == "-") {
    write_records(std::cout, file.records, &results);
  } else {
    save_records(p.out, file.records, &results);
  }
  return 0;
}

int run_eval(const Paths& p, unsigned threads) {
  const auto tax = load_taxonomy(p.taxonomy);
  const auto& env = tax.environment(p.environment);
  const auto file = read_env_records(p, tax);
  require_ground_truth(file);

  EvalReport report;
  if (!p.embeddings.empty() || !p.weights.empty()) {
    if (p.embeddings.empty() || p.weights.empty()) {
      throw ValidationError("eval: --embeddings and --weights go together");
    }
    const auto model = load_model(p.embeddings, p.weights, env);
    report = evaluate(file.records, model.store, model.weights, threads);
  } else {
    // Rerank output carries its own refined ranking.
    std::vector<RerankResult> results;
    for (std::size_t k = 0; k < file.records.size(); ++k) {
      if (!file.refinements[k]) {
        throw ValidationError(file.path.string() + ": line " + std::to_string(file.line_numbers[k]) +
                              ": refined: missing (pass --embeddings and --weights to rerank)");
      }
      results.push_back(*file.refinements[k]);
    }
    report = evaluate(env.id, file.records, results);
  }
  write_json(p.out, report.to_json());
  return 0;
}

int run_gen_synth(const SynthConfig& config, const std::string& out) {
  const auto ds = generate_synthetic(config);
  write_synthetic(ds, out);
  std::cerr << "raw top-1 on test split: " << ds.summary.raw_top1_test << '\n';
  return 0;
}

int run_export(const Paths& p) {
  std::vector<std::string> objects;
  std::vector<std::string> scenes;
  std::optional<SceneTaxonomy> tax;
  if (!p.taxonomy.empty()) tax = load_taxonomy(p.taxonomy);
  if (!p.weights.empty()) {
    const auto w = load_weights(p.weights, p.environment);
    objects = w.object_labels();
    if (!tax) scenes = w.scene_labels();
  }
  if (tax) {
    for (const auto& env : tax->environments()) {
      if (!p.environment.empty() && env.id != p.environment) continue;
      for (const auto& s : env.scenes) {
        if (std::find(scenes.begin(), scenes.end(), s) == scenes.end()) scenes.push_back(s);
      }
    }
  }
  EmbeddingStore store;
  if (is_vectors_csv(p.embeddings)) {
    const auto source = load_vectors_csv(p.embeddings);
    store = (objects.empty() && scenes.empty()) ? source : select_store(source, objects, scenes);
  } else {
    store = build_store(load_pretrained(p.embeddings), objects, scenes);
  }
  const auto rows = export_vectors_csv(store, p.out);
  std::cerr << "wrote " << rows << " rows (dim " << store.dim() << ") to " << p.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-evidence re-ranking of scene classifier top-5 predictions"};
  app.require_subcommand(1);

  Paths p;
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  TrainerConfig tc;
  SynthConfig sc;

  auto* init = app.add_subcommand("init-weights", "tf-idf weight matrix from labeled records");
  init->add_option("--taxonomy", p.taxonomy)->required()->check(CLI::ExistingFile);
  init->add_option("--environment", p.environment)->required();
  init->add_option("--records", p.records)->required()->check(CLI::ExistingFile);
  init->add_option("--out", p.out, "weight TSV to write")->required();

  auto* tr = app.add_subcommand("train", "learn vectors and weights with the hinge loss");
  tr->add_option("--taxonomy", p.taxonomy)->required()->check(CLI::ExistingFile);
  tr->add_option("--environment", p.environment)->required();
  tr->add_option("--records", p.records)->required()->check(CLI::ExistingFile);
  tr->add_option("--embeddings", p.embeddings)->required()->check(CLI::ExistingFile);
  tr->add_option("--weights", p.weights)->required()->check(CLI::ExistingFile);
  tr->add_option("--out", p.out, "directory for embeddings.csv, weights.tsv, report.json")->required();
  tr->add_option("--seed", seed)->required();
  tr->add_option("--margin", tc.margin)->capture_default_str();
  tr->add_option("--lr", tc.learning_rate)->capture_default_str();
  tr->add_option("--epochs", tc.epochs)->capture_default_str();
  tr->add_option("--weight-decay", tc.weight_decay)->capture_default_str();
  tr->add_flag("--freeze-objects", tc.freeze_objects);
  tr->add_flag("--freeze-scenes", tc.freeze_scenes);
  tr->add_flag("--freeze-weights", tc.freeze_weights);

  auto* rr = app.add_subcommand("rerank", "write records with refined top-5");
  rr->add_option("--taxonomy", p.taxonomy)->required()->check(CLI::ExistingFile);
  rr->add_option("--environment", p.environment)->required();
  rr->add_option("--records", p.records)->required()->check(CLI::ExistingFile);
  rr->add_option("--embeddings", p.embeddings)->required()->check(CLI::ExistingFile);
  rr->add_option("--weights", p.weights)->required()->check(CLI::ExistingFile);
  rr->add_option("--out", p.out, "record file to write (stdout if omitted)");
  rr->add_option("--threads", threads)->capture_default_str();

  auto* ev = app.add_subcommand("eval", "top-1/top-5 before and after refinement");
  ev->add_option("--taxonomy", p.taxonomy)->required()->check(CLI::ExistingFile);
  ev->add_option("--environment", p.environment)->required();
  ev->add_option("--records", p.records)->required()->check(CLI::ExistingFile);
  ev->add_option("--embeddings", p.embeddings)->check(CLI::ExistingFile);
  ev->add_option("--weights", p.weights)->check(CLI::ExistingFile);
  ev->add_option("--out", p.out, "report file (stdout if omitted)");
  ev->add_option("--threads", threads)->capture_default_str();

  std::string synth_out;
  auto* gs = app.add_subcommand("gen-synth", "seeded synthetic taxonomy, embeddings and records");
  gs->add_option("--seed", seed)->required();
  gs->add_option("--out", synth_out, "output directory")->required();
  gs->add_option("--n-scenes", sc.n_scenes)->capture_default_str();
  gs->add_option("--n-objects", sc.n_objects)->capture_default_str();
  gs->add_option("--chars-per-scene", sc.chars_per_scene)->capture_default_str();
  gs->add_option("--p-char", sc.p_char)->capture_default_str();
  gs->add_option("--p-noise", sc.p_noise)->capture_default_str();
  gs->add_option("--cnn-top1-target", sc.cnn_top1_target)->capture_default_str();
  gs->add_option("--n-train", sc.n_train)->capture_default_str();
  gs->add_option("--n-test", sc.n_test)->capture_default_str();
  gs->add_option("--dim", sc.dim)->capture_default_str();

  auto* ex = app.add_subcommand("export-vectors", "object and scene vectors as CSV");
  ex->add_option("--embeddings", p.embeddings)->required()->check(CLI::ExistingFile);
  ex->add_option("--weights", p.weights, "object vocabulary source")->check(CLI::ExistingFile);
  ex->add_option("--taxonomy", p.taxonomy, "scene vocabulary source")->check(CLI::ExistingFile);
  ex->add_option("--environment", p.environment);
  ex->add_option("--out", p.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) return run_init_weights(p);
    if (*tr) {
      tc.seed = *seed;
      return run_train(p, tc);
    }
    if (*rr) return run_rerank(p, threads);
    if (*ev) return run_eval(p, threads);
    if (*gs) {
      sc.seed = *seed;
      return run_gen_synth(sc, synth_out);
    }
    if (*ex) return run_export(p);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
