#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenerank/common.hpp"
#include "scenerank/embedding_store.hpp"
#include "scenerank/random.hpp"
#include "scenerank/record.hpp"
#include "scenerank/reranker.hpp"
#include "scenerank/weight_matrix.hpp"

namespace scenerank {

struct TrainerConfig {
  double margin = 0.1;
  double learning_rate = 0.01;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  bool freeze_objects = false;
  bool freeze_scenes = false;
  bool freeze_weights = false;

  void validate() const {
    if (!(margin > 0.0)) throw ValidationError("trainer: margin must be > 0");
    if (!(learning_rate > 0.0)) throw ValidationError("trainer: learning rate must be > 0");
    if (epochs == 0) throw ValidationError("trainer: epochs must be positive");
    if (!(weight_decay >= 0.0)) throw ValidationError("trainer: weight decay must be >= 0");
  }
};

// Ground truth against every other candidate of the record; all of them
// when the ground truth missed the top-5.
struct TrainingExample {
  ImageRecord record;
  std::string positive;
  std::vector<std::string> negatives;
};

inline TrainingExample make_example(const ImageRecord& record) {
  if (!record.ground_truth) {
    throw ValidationError("trainer: record '" + record.image_id + "' has no ground truth");
  }
  TrainingExample ex{record, *record.ground_truth, {}};
  for (const auto& c : record.top5) {
    if (c.label != ex.positive) ex.negatives.push_back(c.label);
  }
  return ex;
}

// Sparse gradient keyed by store object index, store scene index and
// (W row, W column).
struct Gradients {
  std::map<std::size_t, Vector> objects;
  std::map<std::size_t, Vector> scenes;
  std::map<std::pair<std::size_t, std::size_t>, double> weights;

  bool empty() const noexcept { return objects.empty() && scenes.empty() && weights.empty(); }
};

namespace detail {

struct SceneTerm {
  std::size_t column;
  std::size_t scene_index;
  Vector image_vector;
  double cos = 0.0;
  bool degenerate = true;
};

inline SceneTerm scene_term(const EmbeddingStore& store, const WeightMatrix& w, const ObjectEvidence& ev,
                            const std::string& scene) {
  SceneTerm t;
  t.column = scene_column(w, scene);
  auto idx = store.scenes().find(scene);
  if (!idx) throw ValidationError("unknown scene '" + scene + "'");
  t.scene_index = *idx;
  t.image_vector = compute_image_vector(store, w, ev, t.column);
  if (norm(t.image_vector) >= kDegenerateEps) {
    if (auto c = cosine(t.image_vector, store.scenes()[t.scene_index])) {
      t.cos = *c;
      t.degenerate = false;
    }
  }
  return t;
}

// Adds coef * d cos(v, s) / d(params) for one scene term.
inline void accumulate_cosine_gradient(const EmbeddingStore& store, const WeightMatrix& w,
                                       const ObjectEvidence& ev, const SceneTerm& t, double coef,
                                       Gradients& g) {
  if (t.degenerate || coef == 0.0) return;
  const auto& v = t.image_vector;
  const auto& s = store.scenes()[t.scene_index];
  const double nv = norm(v);
  const double ns = norm(s);
  const std::size_t dim = v.size();

  Vector dv(dim), ds(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    dv[d] = coef * (s[d] / (nv * ns) - t.cos * v[d] / (nv * nv));
    ds[d] = coef * (v[d] / (nv * ns) - t.cos * s[d] / (ns * ns));
  }

  auto& gs = g.scenes[t.scene_index];
  gs.resize(dim, 0.0);
  for (std::size_t d = 0; d < dim; ++d) gs[d] += ds[d];

  for (const auto& ref : ev.objects) {
    const auto& o = store.objects()[ref.store_index];
    g.weights[{ref.row, t.column}] += dot(o, dv);
    const double weight = w.at(ref.row, t.column);
    auto& go = g.objects[ref.store_index];
    go.resize(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) go[d] += weight * dv[d];
  }
}

inline double example_loss(const EmbeddingStore& store, const WeightMatrix& w, const TrainingExample& ex,
                           double margin, Gradients* grads) {
  const auto ev = select_objects(store, w, ex.record.objects);
  const auto pos = scene_term(store, w, ev, ex.positive);
  double loss = 0.0;
  std::size_t active = 0;
  std::vector<SceneTerm> active_negatives;
  for (const auto& label : ex.negatives) {
    auto neg = scene_term(store, w, ev, label);
    const double term = margin - pos.cos + neg.cos;
    // At the kink (term == 0) the zero branch of the subgradient is taken.
    // NaN stays in the loss so train() can report it.
    if (term > 0.0 || std::isnan(term)) {
      loss += term;
      ++active;
      if (grads) active_negatives.push_back(std::move(neg));
    }
  }
  if (grads) {
    accumulate_cosine_gradient(store, w, ev, pos, -static_cast<double>(active), *grads);
    for (const auto& neg : active_negatives) accumulate_cosine_gradient(store, w, ev, neg, 1.0, *grads);
  }
  return loss;
}

}  // namespace detail

// Sum over negatives of max(0, margin - cos(IV(pos), pos) + cos(IV(neg), neg)).
// Degenerate image vectors contribute cosine 0.
inline double hinge_loss(const EmbeddingStore& store, const WeightMatrix& w, const TrainingExample& ex,
                         double margin) {
  return detail::example_loss(store, w, ex, margin, nullptr);
}

inline Gradients gradients(const EmbeddingStore& store, const WeightMatrix& w, const TrainingExample& ex,
                           double margin) {
  Gradients g;
  detail::example_loss(store, w, ex, margin, &g);
  return g;
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double max_abs_delta = 0.0;
};

struct TrainingReport {
  std::vector<EpochStats> epochs;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
      rows.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"max_abs_delta", e.max_abs_delta}});
    }
    return {{"epochs", std::move(rows)}};
  }
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Every object row of W must have a store vector and every column a scene
// vector, in the same order for the objects.
inline void check_consistent(const EmbeddingStore& store, const WeightMatrix& w) {
  if (store.objects().labels() != w.object_labels()) {
    throw ValidationError("object vocabulary of the embeddings (" + std::to_string(store.objects().size()) +
                          ") does not match the weight rows (" + std::to_string(w.rows()) + ")");
  }
  for (const auto& s : w.scene_labels()) {
    if (!store.scenes().find(s)) throw ValidationError("embeddings have no vector for scene '" + s + "'");
  }
}

// Plain SGD, one example per update, examples reshuffled each epoch.
inline TrainingReport train(EmbeddingStore& store, WeightMatrix& w, const std::vector<TrainingExample>& examples,
                            const TrainerConfig& config) {
  config.validate();
  if (examples.empty()) throw ValidationError("trainer: no training examples");
  check_consistent(store, w);

  const double lr = config.learning_rate;
  const double decay = config.weight_decay;
  auto finite = [](double x) { return std::isfinite(x); };

  Rng rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainingReport report;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    double max_delta = 0.0;
    auto step = [&](double& p, double g) {
      const double old = p;
      p -= lr * (g + decay * old);
      max_delta = std::max(max_delta, std::abs(p - old));
    };

    for (auto idx : order) {
      const auto& ex = examples[idx];
      Gradients g;
      const double loss = detail::example_loss(store, w, ex, config.margin, &g);
      bool ok = finite(loss);
      for (const auto& [_, v] : g.objects) ok = ok && std::all_of(v.begin(), v.end(), finite);
      for (const auto& [_, v] : g.scenes) ok = ok && std::all_of(v.begin(), v.end(), finite);
      for (const auto& [_, v] : g.weights) ok = ok && finite(v);
      if (!ok) {
        throw TrainingError("trainer: non-finite loss or gradient at epoch " + std::to_string(epoch) +
                            ", example '" + ex.record.image_id + "'");
      }
      loss_sum += loss;

      if (!config.freeze_objects) {
        for (const auto& [i, gv] : g.objects) {
          auto& o = store.objects()[i];
          for (std::size_t d = 0; d < o.size(); ++d) step(o[d], gv[d]);
        }
      }
      if (!config.freeze_scenes) {
        for (const auto& [j, gv] : g.scenes) {
          auto& s = store.scenes()[j];
          for (std::size_t d = 0; d < s.size(); ++d) step(s[d], gv[d]);
        }
      }
      if (!config.freeze_weights) {
        for (const auto& [key, gw] : g.weights) {
          auto& p = w.at(key.first, key.second);
          const double old = p;
          p = std::max(0.0, p - lr * (gw + decay * old));
          max_delta = std::max(max_delta, std::abs(p - old));
        }
      }
    }
    report.epochs.push_back({epoch, loss_sum / static_cast<double>(examples.size()), max_delta});
  }
  return report;
}

}  // namespace scenerank
