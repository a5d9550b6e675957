#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "scenerank/common.hpp"
#include "scenerank/record.hpp"
#include "scenerank/taxonomy.hpp"

namespace scenerank {

// W: one nonnegative scalar per (object, scene) pair of an environment,
// stored row-major by object.
class WeightMatrix {
 public:
  WeightMatrix() = default;

  WeightMatrix(std::string environment_id, std::vector<std::string> object_labels,
               std::vector<std::string> scene_labels, double fill = 0.0)
      : environment_id_{std::move(environment_id)},
        object_labels_{std::move(object_labels)},
        scene_labels_{std::move(scene_labels)},
        weights_(object_labels_.size() * scene_labels_.size(), fill) {
    for (std::size_t i = 0; i < object_labels_.size(); ++i) {
      if (!object_index_.emplace(object_labels_[i], i).second) {
        throw ValidationError("weights: duplicate object '" + object_labels_[i] + "'");
      }
    }
    for (std::size_t j = 0; j < scene_labels_.size(); ++j) {
      if (!scene_index_.emplace(scene_labels_[j], j).second) {
        throw ValidationError("weights: duplicate scene '" + scene_labels_[j] + "'");
      }
    }
    if (fill < 0.0) throw ValidationError("weights: negative fill");
  }

  const std::string& environment_id() const noexcept { return environment_id_; }
  const std::vector<std::string>& object_labels() const noexcept { return object_labels_; }
  const std::vector<std::string>& scene_labels() const noexcept { return scene_labels_; }
  std::size_t rows() const noexcept { return object_labels_.size(); }
  std::size_t cols() const noexcept { return scene_labels_.size(); }

  std::optional<std::size_t> object_index(const std::string& label) const {
    auto it = object_index_.find(label);
    if (it == object_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> scene_index(const std::string& label) const {
    auto it = scene_index_.find(label);
    if (it == scene_index_.end()) return std::nullopt;
    return it->second;
  }

  double at(std::size_t object, std::size_t scene) const { return weights_[object * cols() + scene]; }
  double& at(std::size_t object, std::size_t scene) { return weights_[object * cols() + scene]; }

  double at(const std::string& object, const std::string& scene) const {
    auto i = object_index(object);
    auto j = scene_index(scene);
    if (!i || !j) throw ValidationError("weights: no entry for (" + object + ", " + scene + ")");
    return at(*i, *j);
  }

  const std::vector<double>& values() const noexcept { return weights_; }

  bool operator==(const WeightMatrix& o) const {
    return environment_id_ == o.environment_id_ && object_labels_ == o.object_labels_ &&
           scene_labels_ == o.scene_labels_ && weights_ == o.weights_;
  }

 private:
  std::string environment_id_;
  std::vector<std::string> object_labels_;
  std::vector<std::string> scene_labels_;
  std::vector<double> weights_;
  std::unordered_map<std::string, std::size_t> object_index_;
  std::unordered_map<std::string, std::size_t> scene_index_;
};

// Each scene is a document whose words are the objects of its training
// images. counts[scene][object] counts images, not detections.
struct SceneDocumentCorpus {
  std::string environment_id;
  std::vector<std::string> scene_labels;
  std::vector<std::string> object_labels;
  std::vector<std::vector<std::uint64_t>> counts;
  std::size_t skipped_records = 0;

  std::uint64_t count(const std::string& scene, const std::string& object) const {
    auto j = std::find(scene_labels.begin(), scene_labels.end(), scene);
    auto i = std::find(object_labels.begin(), object_labels.end(), object);
    if (j == scene_labels.end() || i == object_labels.end()) return 0;
    return counts[j - scene_labels.begin()][i - object_labels.begin()];
  }
};

// Sorted union of all object labels in the records.
inline std::vector<std::string> object_vocabulary(const std::vector<ImageRecord>& records) {
  std::set<std::string> all;
  for (const auto& r : records) all.insert(r.objects.begin(), r.objects.end());
  return {all.begin(), all.end()};
}

// Records whose ground truth is missing or outside the environment are
// counted in skipped_records. Objects outside the vocabulary are ignored.
inline SceneDocumentCorpus build_corpus(const std::vector<ImageRecord>& records, const SceneTaxonomy& taxonomy,
                                        const std::string& environment_id,
                                        std::vector<std::string> vocabulary) {
  const auto& env = taxonomy.environment(environment_id);
  SceneDocumentCorpus corpus;
  corpus.environment_id = env.id;
  corpus.scene_labels = env.scenes;
  corpus.object_labels = std::move(vocabulary);
  corpus.counts.assign(env.scenes.size(), std::vector<std::uint64_t>(corpus.object_labels.size(), 0));

  std::unordered_map<std::string, std::size_t> object_index;
  for (std::size_t i = 0; i < corpus.object_labels.size(); ++i) object_index.emplace(corpus.object_labels[i], i);

  for (const auto& r : records) {
    if (!r.ground_truth) {
      ++corpus.skipped_records;
      continue;
    }
    const auto truth = taxonomy.canonicalize(*r.ground_truth);
    auto it = std::find(env.scenes.begin(), env.scenes.end(), truth);
    if (it == env.scenes.end()) {
      ++corpus.skipped_records;
      continue;
    }
    auto& doc = corpus.counts[it - env.scenes.begin()];
    std::set<std::size_t> present;
    for (const auto& o : r.objects) {
      if (auto oi = object_index.find(o); oi != object_index.end()) present.insert(oi->second);
    }
    for (auto i : present) ++doc[i];
  }
  return corpus;
}

inline SceneDocumentCorpus build_corpus(const std::vector<ImageRecord>& records, const SceneTaxonomy& taxonomy,
                                        const std::string& environment_id) {
  return build_corpus(records, taxonomy, environment_id, object_vocabulary(records));
}

// Smoothed inverse document frequency, ln((1 + |S|) / (1 + df)) + 1.
inline double smoothed_idf(std::size_t n_documents, std::size_t document_frequency) {
  return std::log((1.0 + static_cast<double>(n_documents)) / (1.0 + static_cast<double>(document_frequency))) + 1.0;
}

// w(o, s) = tf(o, s) * idf(o) with length-normalized tf.
inline WeightMatrix init_tfidf(const SceneDocumentCorpus& corpus) {
  const std::size_t n_scenes = corpus.scene_labels.size();
  const std::size_t n_objects = corpus.object_labels.size();
  std::uint64_t total = 0;
  for (const auto& doc : corpus.counts) {
    for (auto c : doc) total += c;
  }
  if (n_scenes == 0 || n_objects == 0 || total == 0) {
    throw ValidationError("tf-idf: corpus for '" + corpus.environment_id + "' is empty");
  }

  std::vector<double> idf(n_objects);
  for (std::size_t i = 0; i < n_objects; ++i) {
    std::size_t df = 0;
    for (std::size_t j = 0; j < n_scenes; ++j) df += corpus.counts[j][i] > 0;
    idf[i] = smoothed_idf(n_scenes, df);
  }

  WeightMatrix w(corpus.environment_id, corpus.object_labels, corpus.scene_labels);
  for (std::size_t j = 0; j < n_scenes; ++j) {
    std::uint64_t length = 0;
    for (auto c : corpus.counts[j]) length += c;
    if (length == 0) continue;
    for (std::size_t i = 0; i < n_objects; ++i) {
      const double tf = static_cast<double>(corpus.counts[j][i]) / static_cast<double>(length);
      w.at(i, j) = tf * idf[i];
    }
  }
  return w;
}

// Weight TSV: header "object<TAB>scene...", then one row per object.
inline void write_weights(std::ostream& out, const WeightMatrix& w) {
  std::string line = "object";
  for (const auto& s : w.scene_labels()) line += '\t' + s;
  out << line << '\n';
  for (std::size_t i = 0; i < w.rows(); ++i) {
    line = w.object_labels()[i];
    for (std::size_t j = 0; j < w.cols(); ++j) {
      line.push_back('\t');
      detail::append_double(line, w.at(i, j));
    }
    out << line << '\n';
  }
}

inline void save_weights(const WeightMatrix& w, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) { write_weights(out, w); });
}

inline WeightMatrix parse_weights(std::istream& in, const std::string& environment_id) {
  std::string raw;
  if (!std::getline(in, raw)) throw ParseError("weights: empty file");
  const auto header = detail::split(detail::strip_eol(raw), '\t');
  if (header.empty() || header[0] != "object") throw ParseError("weights: header must start with 'object'", 1);
  std::vector<std::string> scenes(header.begin() + 1, header.end());

  std::vector<std::string> objects;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::strip_eol(raw);
    if (line.empty()) continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() != header.size()) {
      throw ParseError("weights: expected " + std::to_string(header.size()) + " columns, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    objects.emplace_back(fields[0]);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_double(fields[j], v) || !std::isfinite(v)) {
        throw ParseError("weights: malformed value '" + std::string(fields[j]) + "'", line_no);
      }
      if (v < 0.0) throw ParseError("weights: negative value", line_no);
      values.push_back(v);
    }
  }
  WeightMatrix w(environment_id, std::move(objects), std::move(scenes));
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) w.at(i, j) = values[i * w.cols() + j];
  }
  return w;
}

inline WeightMatrix load_weights(const std::filesystem::path& path, const std::string& environment_id = {}) {
  auto in = detail::open_input(path);
  try {
    return parse_weights(in, environment_id);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Checks the matrix against the environment's scene list and, when given,
// the expected object vocabulary, both in order.
inline void check_shape(const WeightMatrix& w, const Environment& env,
                        const std::vector<std::string>* objects = nullptr) {
  if (w.scene_labels() != env.scenes) {
    throw ValidationError("weights: scene columns (" + std::to_string(w.cols()) +
                          ") do not match environment '" + env.id + "' (" + std::to_string(env.n()) + ")");
  }
  if (objects && w.object_labels() != *objects) {
    throw ValidationError("weights: object rows (" + std::to_string(w.rows()) +
                          ") do not match the object vocabulary (" + std::to_string(objects->size()) + ")");
  }
}

inline WeightMatrix load_weights(const std::filesystem::path& path, const Environment& env,
                                 const std::vector<std::string>* objects = nullptr) {
  auto w = load_weights(path, env.id);
  check_shape(w, env, objects);
  return w;
}

}  // namespace scenerank
