#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "scenerank/common.hpp"
#include "scenerank/embedding_store.hpp"
#include "scenerank/record.hpp"
#include "scenerank/weight_matrix.hpp"

namespace scenerank {

struct RankedCandidate {
  std::string label;
  double score = 0.0;       // confidence * similarity
  double confidence = 0.0;  // raw classifier confidence
  double similarity = 0.0;  // normalized object-evidence similarity
  std::size_t raw_rank = 0;  // 0-based position in the classifier's list

  bool operator==(const RankedCandidate&) const = default;
};

struct RerankResult {
  std::string image_id;
  std::vector<RankedCandidate> refined;
  bool fallback_used = false;

  bool operator==(const RerankResult&) const = default;
};

// A detected object that both W and the store know about.
struct ObjectRef {
  std::size_t row;          // row in W
  std::size_t store_index;  // index into store.objects()
};

struct ObjectEvidence {
  std::vector<ObjectRef> objects;  // distinct, in first-seen order
  std::size_t unknown = 0;
};

inline ObjectEvidence select_objects(const EmbeddingStore& store, const WeightMatrix& w,
                                     const std::vector<std::string>& labels) {
  ObjectEvidence ev;
  std::set<std::size_t> seen;
  for (const auto& label : labels) {
    auto row = w.object_index(label);
    auto idx = store.objects().find(label);
    if (!row || !idx) {
      ++ev.unknown;
      continue;
    }
    if (seen.insert(*row).second) ev.objects.push_back({*row, *idx});
  }
  return ev;
}

inline std::size_t scene_column(const WeightMatrix& w, const std::string& scene) {
  auto col = w.scene_index(scene);
  if (!col) throw ValidationError("scene '" + scene + "' is not a column of the weight matrix");
  return *col;
}

inline Vector compute_image_vector(const EmbeddingStore& store, const WeightMatrix& w,
                                   const ObjectEvidence& evidence, std::size_t column) {
  Vector v(store.dim(), 0.0);
  for (const auto& ref : evidence.objects) {
    const double weight = w.at(ref.row, column);
    if (weight == 0.0) continue;
    const auto& o = store.objects()[ref.store_index];
    for (std::size_t d = 0; d < v.size(); ++d) v[d] += weight * o[d];
  }
  return v;
}

// Weighted sum of the detected objects' vectors with respect to `scene`.
// Unknown objects are skipped; see select_objects().
inline Vector compute_image_vector(const EmbeddingStore& store, const WeightMatrix& w,
                                   const std::vector<std::string>& objects, const std::string& scene) {
  return compute_image_vector(store, w, select_objects(store, w, objects), scene_column(w, scene));
}

inline constexpr double kDegenerateEps = 1e-12;

// Re-orders the classifier's candidates by confidence * similarity, where
// similarity is the cosine between each candidate's image vector and its
// scene vector, shifted to [0, 1] and L1-normalized over the candidates.
// Falls back to the classifier order when object evidence is absent.
inline RerankResult rerank(const EmbeddingStore& store, const WeightMatrix& w, const ImageRecord& record) {
  const std::size_t n = record.top5.size();
  if (n == 0) throw ValidationError("rerank: record '" + record.image_id + "' has no candidates");

  const auto evidence = select_objects(store, w, record.objects);
  std::vector<double> shifted(n, 0.5);
  bool any_vector = false;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& label = record.top5[k].label;
    const auto column = scene_column(w, label);
    const auto& scene = store.scene_vector(label);
    const auto v = compute_image_vector(store, w, evidence, column);
    if (norm(v) < kDegenerateEps) continue;
    any_vector = true;
    // An undefined cosine (zero scene vector) counts as neutral.
    shifted[k] = (cosine(v, scene).value_or(0.0) + 1.0) / 2.0;
  }
  const double total = std::accumulate(shifted.begin(), shifted.end(), 0.0);

  RerankResult result;
  result.image_id = record.image_id;
  result.fallback_used = evidence.objects.empty() || !any_vector || total < kDegenerateEps;
  result.refined.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double sim = result.fallback_used ? 1.0 / static_cast<double>(n) : shifted[k] / total;
    const double conf = record.top5[k].confidence;
    result.refined.push_back({record.top5[k].label, conf * sim, conf, sim, k});
  }
  std::stable_sort(result.refined.begin(), result.refined.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) { return a.score > b.score; });
  return result;
}

}  // namespace scenerank
