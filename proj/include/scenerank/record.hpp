#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scenerank/common.hpp"
#include "scenerank/taxonomy.hpp"

namespace scenerank {

inline constexpr std::size_t kTopK = 5;

struct Candidate {
  std::string label;
  double confidence = 0.0;

  bool operator==(const Candidate&) const = default;
};

// One image's precomputed classifier and parser outputs.
struct ImageRecord {
  std::string image_id;
  std::string environment_id;
  std::vector<std::string> objects;
  std::vector<Candidate> top5;
  std::optional<std::string> ground_truth;

  bool operator==(const ImageRecord&) const = default;
};

// Field name of the first violated invariant, or nullopt if the record is
// valid for `env`. Labels must already be canonical.
inline std::optional<std::string> record_violation(const ImageRecord& record, const Environment& env) {
  if (record.image_id.empty()) return "image_id: empty";
  if (record.top5.empty() || record.top5.size() > kTopK) {
    return "top5: expected 1.." + std::to_string(kTopK) + " candidates, got " +
           std::to_string(record.top5.size());
  }
  std::set<std::string> seen;
  bool any_positive = false;
  for (std::size_t k = 0; k < record.top5.size(); ++k) {
    const auto& c = record.top5[k];
    const auto where = "top5[" + std::to_string(k) + "]";
    if (!std::isfinite(c.confidence) || c.confidence < 0.0) {
      return where + ".confidence: must be finite and >= 0, got " + detail::format_double(c.confidence);
    }
    any_positive = any_positive || c.confidence > 0.0;
    if (!env.has_scene(c.label)) {
      return where + ".label: '" + c.label + "' is not a scene of '" + env.id + "'";
    }
    if (!seen.insert(c.label).second) return where + ".label: duplicate '" + c.label + "'";
  }
  if (!any_positive) return "top5: all confidences are zero";
  return std::nullopt;
}

inline void canonicalize_labels(ImageRecord& record, const SceneTaxonomy& taxonomy) {
  for (auto& c : record.top5) c.label = taxonomy.canonicalize(c.label);
  if (record.ground_truth) record.ground_truth = taxonomy.canonicalize(*record.ground_truth);
}

}  // namespace scenerank
