#pragma once

#include <algorithm>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenerank/common.hpp"
#include "scenerank/embedding_store.hpp"
#include "scenerank/record.hpp"
#include "scenerank/reranker.hpp"
#include "scenerank/weight_matrix.hpp"

namespace scenerank {

struct EvalReport {
  std::string environment_id;
  std::size_t n_records = 0;
  double raw_top1 = 0.0;
  double refined_top1 = 0.0;
  double raw_top5 = 0.0;
  double refined_top5 = 0.0;
  double fallback_rate = 0.0;
  // ground truth -> refined top-1 -> count
  std::map<std::string, std::map<std::string, std::size_t>> confusion;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json conf = nlohmann::ordered_json::object();
    for (const auto& [truth, row] : confusion) {
      conf[truth] = nlohmann::ordered_json::object();
      for (const auto& [pred, n] : row) conf[truth][pred] = n;
    }
    return {{"environment", environment_id}, {"n_records", n_records},
            {"raw_top1", raw_top1},          {"refined_top1", refined_top1},
            {"raw_top5", raw_top5},          {"refined_top5", refined_top5},
            {"fallback_rate", fallback_rate}, {"confusion", std::move(conf)}};
  }
};

// Reranks every record; results come back in input order regardless of
// the number of worker threads.
inline std::vector<RerankResult> rerank_all(const EmbeddingStore& store, const WeightMatrix& w,
                                            const std::vector<ImageRecord>& records, unsigned threads = 1) {
  std::vector<RerankResult> out(records.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(records.size(), 1))));
  if (threads == 1) {
    for (std::size_t k = 0; k < records.size(); ++k) out[k] = rerank(store, w, records[k]);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t k = t; k < records.size(); k += threads) out[k] = rerank(store, w, records[k]);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// Scores precomputed refinements. raw metrics use the record's own order.
inline EvalReport evaluate(const std::string& environment_id, const std::vector<ImageRecord>& records,
                           const std::vector<RerankResult>& results) {
  if (records.empty()) throw ValidationError("eval: no records");
  if (records.size() != results.size()) throw ValidationError("eval: records and results differ in length");
  EvalReport rep;
  rep.environment_id = environment_id;
  rep.n_records = records.size();
  std::size_t raw1 = 0, raw5 = 0, ref1 = 0, ref5 = 0, fallbacks = 0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (!r.ground_truth) throw ValidationError("eval: record '" + r.image_id + "' has no ground truth");
    const auto& truth = *r.ground_truth;
    const auto& refined = results[k].refined;
    auto raw_hit = [&](std::size_t n) {
      for (std::size_t i = 0; i < std::min(n, r.top5.size()); ++i) {
        if (r.top5[i].label == truth) return true;
      }
      return false;
    };
    auto refined_hit = [&](std::size_t n) {
      for (std::size_t i = 0; i < std::min(n, refined.size()); ++i) {
        if (refined[i].label == truth) return true;
      }
      return false;
    };
    raw1 += raw_hit(1);
    raw5 += raw_hit(kTopK);
    ref1 += refined_hit(1);
    ref5 += refined_hit(kTopK);
    fallbacks += results[k].fallback_used;
    if (!refined.empty()) ++rep.confusion[truth][refined.front().label];
  }
  const double n = static_cast<double>(records.size());
  rep.raw_top1 = static_cast<double>(raw1) / n;
  rep.raw_top5 = static_cast<double>(raw5) / n;
  rep.refined_top1 = static_cast<double>(ref1) / n;
  rep.refined_top5 = static_cast<double>(ref5) / n;
  rep.fallback_rate = static_cast<double>(fallbacks) / n;
  return rep;
}

inline EvalReport evaluate(const std::vector<ImageRecord>& records, const EmbeddingStore& store,
                           const WeightMatrix& w, unsigned threads = 1) {
  for (const auto& r : records) {
    if (!r.ground_truth) throw ValidationError("eval: record '" + r.image_id + "' has no ground truth");
  }
  return evaluate(w.environment_id(), records, rerank_all(store, w, records, threads));
}

}  // namespace scenerank
