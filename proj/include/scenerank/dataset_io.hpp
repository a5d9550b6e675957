#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenerank/common.hpp"
#include "scenerank/embedding_store.hpp"
#include "scenerank/random.hpp"
#include "scenerank/record.hpp"
#include "scenerank/reranker.hpp"
#include "scenerank/taxonomy.hpp"

namespace scenerank {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Record lines

inline ordered_json record_to_json(const ImageRecord& r, const RerankResult* refined = nullptr) {
  ordered_json j;
  j["image_id"] = r.image_id;
  j["environment"] = r.environment_id;
  j["objects"] = r.objects;
  ordered_json top = ordered_json::array();
  for (const auto& c : r.top5) top.push_back({{"label", c.label}, {"confidence", c.confidence}});
  j["top5"] = std::move(top);
  if (r.ground_truth) j["ground_truth"] = *r.ground_truth;
  if (refined) {
    ordered_json rows = ordered_json::array();
    for (const auto& c : refined->refined) {
      rows.push_back({{"label", c.label},
                      {"score", c.score},
                      {"confidence", c.confidence},
                      {"similarity", c.similarity},
                      {"raw_rank", c.raw_rank}});
    }
    j["refined"] = std::move(rows);
    j["fallback_used"] = refined->fallback_used;
  }
  return j;
}

namespace detail {

template <typename T>
T field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name)) throw ValidationError(std::string(name) + ": missing");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string(name) + ": wrong type");
  }
}

inline double number_field(const nlohmann::json& j, const std::string& where, const char* name) {
  if (!j.contains(name) || !j.at(name).is_number()) throw ValidationError(where + "." + name + ": expected a number");
  return j.at(name).get<double>();
}

}  // namespace detail

// Throws ValidationError naming the offending field. Unknown fields are ignored.
inline ImageRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("record: expected an object");
  ImageRecord r;
  r.image_id = detail::field<std::string>(j, "image_id");
  r.environment_id = detail::field<std::string>(j, "environment");
  r.objects = detail::field<std::vector<std::string>>(j, "objects");
  if (!j.contains("top5") || !j.at("top5").is_array()) throw ValidationError("top5: expected an array");
  const auto& top = j.at("top5");
  for (std::size_t k = 0; k < top.size(); ++k) {
    const auto where = "top5[" + std::to_string(k) + "]";
    const auto& c = top[k];
    if (!c.is_object() || !c.contains("label") || !c.at("label").is_string()) {
      throw ValidationError(where + ".label: expected a string");
    }
    r.top5.push_back({c.at("label").get<std::string>(), detail::number_field(c, where, "confidence")});
  }
  if (j.contains("ground_truth") && !j.at("ground_truth").is_null()) {
    r.ground_truth = detail::field<std::string>(j, "ground_truth");
  }
  return r;
}

inline std::optional<RerankResult> refinement_from_json(const nlohmann::json& j, const std::string& image_id) {
  if (!j.contains("refined")) return std::nullopt;
  RerankResult out;
  out.image_id = image_id;
  const auto& rows = j.at("refined");
  if (!rows.is_array()) throw ValidationError("refined: expected an array");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto where = "refined[" + std::to_string(k) + "]";
    const auto& c = rows[k];
    if (!c.is_object() || !c.contains("label") || !c.at("label").is_string()) {
      throw ValidationError(where + ".label: expected a string");
    }
    RankedCandidate rc;
    rc.label = c.at("label").get<std::string>();
    rc.score = detail::number_field(c, where, "score");
    rc.confidence = detail::number_field(c, where, "confidence");
    rc.similarity = detail::number_field(c, where, "similarity");
    rc.raw_rank = static_cast<std::size_t>(detail::number_field(c, where, "raw_rank"));
    out.refined.push_back(std::move(rc));
  }
  out.fallback_used = j.value("fallback_used", false);
  return out;
}

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct RecordFile {
  std::filesystem::path path;
  std::string environment_id;
  std::vector<ImageRecord> records;
  // Parallel to records: refinements carried by rerank output, if any.
  std::vector<std::optional<RerankResult>> refinements;
  std::vector<std::size_t> line_numbers;
  std::size_t skipped_out_of_environment = 0;
  std::vector<LineError> malformed;
};

// Reads a record stream, keeps records of `environment_id`, canonicalizes
// scene labels and validates each record. In strict mode the first
// malformed line throws; otherwise malformed lines are collected.
inline RecordFile parse_records(std::istream& in, const SceneTaxonomy& taxonomy, const std::string& environment_id,
                                bool strict = true) {
  const auto& env = taxonomy.environment(environment_id);
  RecordFile out;
  out.environment_id = environment_id;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::strip_eol(raw);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("invalid JSON: ") + e.what());
      }
      auto record = record_from_json(j);
      if (record.environment_id != environment_id) {
        ++out.skipped_out_of_environment;
        continue;
      }
      canonicalize_labels(record, taxonomy);
      if (auto bad = record_violation(record, env)) throw ValidationError(*bad);
      auto refined = refinement_from_json(j, record.image_id);
      out.records.push_back(std::move(record));
      out.refinements.push_back(std::move(refined));
      out.line_numbers.push_back(line_no);
    } catch (const ValidationError& e) {
      if (strict) throw ParseError(e.what(), line_no);
      out.malformed.push_back({line_no, e.what()});
    }
  }
  return out;
}

inline RecordFile read_records(const std::filesystem::path& path, const SceneTaxonomy& taxonomy,
                               const std::string& environment_id, bool strict = true) {
  auto in = detail::open_input(path);
  try {
    auto file = parse_records(in, taxonomy, environment_id, strict);
    file.path = path;
    return file;
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_records(std::ostream& out, const std::vector<ImageRecord>& records,
                          const std::vector<RerankResult>* refined = nullptr) {
  for (std::size_t k = 0; k < records.size(); ++k) {
    out << record_to_json(records[k], refined ? &(*refined)[k] : nullptr).dump() << '\n';
  }
}

inline void save_records(const std::filesystem::path& path, const std::vector<ImageRecord>& records,
                         const std::vector<RerankResult>* refined = nullptr) {
  atomic_write(path, [&](std::ostream& out) { write_records(out, records, refined); });
}

// ---------------------------------------------------------------------------
// Synthetic data with planted object-scene structure

struct SynthConfig {
  std::size_t n_scenes = 20;
  std::size_t n_objects = 60;
  std::size_t chars_per_scene = 3;
  double p_char = 0.9;
  double p_noise = 0.05;
  double cnn_top1_target = 0.55;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::size_t dim = 50;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_scenes == 0 || n_objects == 0 || chars_per_scene == 0 || n_train == 0 || n_test == 0 || dim == 0) {
      throw ValidationError("synth: counts must be positive");
    }
    if (!(p_noise >= 0.0 && p_noise < p_char && p_char <= 1.0)) {
      throw ValidationError("synth: need 0 <= p_noise < p_char <= 1");
    }
    if (!(cnn_top1_target > 0.0 && cnn_top1_target < 1.0)) {
      throw ValidationError("synth: cnn_top1_target must be in (0, 1)");
    }
    if (chars_per_scene > n_objects) throw ValidationError("synth: chars_per_scene > n_objects");
    if (n_scenes < kTopK) {
      throw ValidationError("synth: " + std::to_string(n_scenes) + " scenes cannot fill a top-" +
                            std::to_string(kTopK) + " list");
    }
    if (n_scenes * chars_per_scene > n_objects) {
      throw ValidationError("synth: n_scenes * chars_per_scene exceeds n_objects; characteristic sets must be disjoint");
    }
  }
};

struct SynthSummary {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double raw_top1_train = 0.0;
  double raw_top1_test = 0.0;
  double raw_top5_test = 0.0;

  ordered_json to_json() const {
    return {{"n_train", n_train},         {"n_test", n_test},
            {"raw_top1_train", raw_top1_train}, {"raw_top1_test", raw_top1_test},
            {"raw_top5_test", raw_top5_test}};
  }
};

struct SyntheticDataset {
  inline static const std::string kEnvironment = "synth";

  SceneTaxonomy taxonomy;
  std::vector<std::string> scene_labels;
  std::vector<std::string> object_labels;
  std::vector<std::vector<std::size_t>> characteristic;  // per scene, object indices
  TokenVectors embeddings;
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> test;
  SynthSummary summary;
};

namespace detail {

inline std::string numbered(const char* prefix, std::size_t i, std::size_t count) {
  const int width = static_cast<int>(std::to_string(count > 0 ? count - 1 : 0).size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, std::max(width, 2), i);
  return buf;
}

inline double top_k_rate(const std::vector<ImageRecord>& records, std::size_t k) {
  std::size_t hits = 0;
  for (const auto& r : records) {
    const auto n = std::min(k, r.top5.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (r.top5[i].label == r.ground_truth) {
        ++hits;
        break;
      }
    }
  }
  return records.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace detail

// Builds a taxonomy with one environment, seeded random token vectors, and
// train/test records whose object lists and simulated classifier top-5 are
// drawn from the planted structure. Output depends only on the config.
inline SyntheticDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SyntheticDataset ds;

  for (std::size_t j = 0; j < config.n_scenes; ++j) {
    ds.scene_labels.push_back(detail::numbered("scene", j, config.n_scenes));
  }
  for (std::size_t i = 0; i < config.n_objects; ++i) {
    ds.object_labels.push_back(detail::numbered("object", i, config.n_objects));
  }
  ds.taxonomy = SceneTaxonomy({Environment{SyntheticDataset::kEnvironment, ds.scene_labels, std::nullopt}}, {});

  // Round-robin: object k belongs to scene k mod n_scenes.
  ds.characteristic.assign(config.n_scenes, {});
  std::vector<std::ptrdiff_t> owner(config.n_objects, -1);
  for (std::size_t k = 0; k < config.n_scenes * config.chars_per_scene; ++k) {
    ds.characteristic[k % config.n_scenes].push_back(k);
    owner[k] = static_cast<std::ptrdiff_t>(k % config.n_scenes);
  }

  ds.embeddings.dim = config.dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.dim));
  auto random_vector = [&] {
    Vector v(config.dim);
    for (auto& x : v) x = scale * rng.normal();
    return v;
  };
  for (const auto& o : ds.object_labels) ds.embeddings.vectors.emplace(o, random_vector());
  for (const auto& s : ds.scene_labels) ds.embeddings.vectors.emplace(s, random_vector());

  const std::size_t k_top = std::min(kTopK, config.n_scenes);
  auto make_record = [&](const std::string& id) {
    ImageRecord r;
    r.image_id = id;
    r.environment_id = SyntheticDataset::kEnvironment;
    const auto truth = static_cast<std::size_t>(rng.below(config.n_scenes));
    r.ground_truth = ds.scene_labels[truth];
    for (std::size_t i = 0; i < config.n_objects; ++i) {
      const bool is_char = owner[i] == static_cast<std::ptrdiff_t>(truth);
      if (rng.bernoulli(is_char ? config.p_char : config.p_noise)) r.objects.push_back(ds.object_labels[i]);
    }

    std::vector<std::size_t> ranking;
    if (rng.bernoulli(config.cnn_top1_target)) {
      ranking.push_back(truth);
    } else {
      auto d = static_cast<std::size_t>(rng.below(config.n_scenes - 1));
      ranking.push_back(d >= truth ? d + 1 : d);
    }
    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < config.n_scenes; ++j) {
      if (j != ranking.front()) pool.push_back(j);
    }
    while (ranking.size() < k_top) {
      const auto pick = static_cast<std::size_t>(rng.below(pool.size()));
      ranking.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    // Decreasing positive confidences summing to 1. Draws from [0.5, 1)
    // keep the profile flat (rank 1 at most twice rank 5), as for a
    // classifier that is right only about half the time.
    std::vector<double> conf(k_top);
    for (auto& c : conf) c = rng.uniform(0.5, 1.0);
    std::sort(conf.begin(), conf.end(), std::greater<>());
    const double total = std::accumulate(conf.begin(), conf.end(), 0.0);
    for (std::size_t k = 0; k < k_top; ++k) r.top5.push_back({ds.scene_labels[ranking[k]], conf[k] / total});
    return r;
  };

  for (std::size_t n = 0; n < config.n_train; ++n) ds.train.push_back(make_record(detail::numbered("train", n, config.n_train)));
  for (std::size_t n = 0; n < config.n_test; ++n) ds.test.push_back(make_record(detail::numbered("test", n, config.n_test)));

  ds.summary.n_train = config.n_train;
  ds.summary.n_test = config.n_test;
  ds.summary.raw_top1_train = detail::top_k_rate(ds.train, 1);
  ds.summary.raw_top1_test = detail::top_k_rate(ds.test, 1);
  ds.summary.raw_top5_test = detail::top_k_rate(ds.test, kTopK);
  return ds;
}

// Writes taxonomy.json, embeddings.txt, train.jsonl, test.jsonl and
// summary.json into `dir`.
inline void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_taxonomy(ds.taxonomy, dir / "taxonomy.json");
  std::vector<std::string> order = ds.object_labels;
  order.insert(order.end(), ds.scene_labels.begin(), ds.scene_labels.end());
  atomic_write(dir / "embeddings.txt", [&](std::ostream& out) { write_pretrained(out, order, ds.embeddings); });
  save_records(dir / "train.jsonl", ds.train);
  save_records(dir / "test.jsonl", ds.test);
  atomic_write(dir / "summary.json", [&](std::ostream& out) { out << ds.summary.to_json().dump(2) << '\n'; });
}

}  // namespace scenerank
