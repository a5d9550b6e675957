#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scenerank/embedding_store.hpp"
#include "scenerank/taxonomy.hpp"
#include "scenerank/weight_matrix.hpp"

namespace scenerank {

// Resolves every object and scene label against pretrained token vectors.
inline EmbeddingStore build_store(TokenVectors tokens, const std::vector<std::string>& objects,
                                  const std::vector<std::string>& scenes) {
  EmbeddingStore store(std::move(tokens));
  for (const auto& o : objects) store.add_object(o);
  for (const auto& s : scenes) store.add_scene(s);
  return store;
}

// Picks the requested labels, in order, out of an exported store.
inline EmbeddingStore select_store(const EmbeddingStore& source, const std::vector<std::string>& objects,
                                   const std::vector<std::string>& scenes) {
  EmbeddingStore store(source.dim());
  for (const auto& o : objects) store.add_object(o, source.object_vector(o));
  for (const auto& s : scenes) store.add_scene(s, source.scene_vector(s));
  return store;
}

inline bool is_vectors_csv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string first;
  std::getline(in, first);
  return first.rfind("role,label", 0) == 0;
}

// Accepts either an embedding text file or a CSV written by
// export_vectors_csv (e.g. after training).
inline EmbeddingStore load_store(const std::filesystem::path& path, const std::vector<std::string>& objects,
                                 const std::vector<std::string>& scenes) {
  if (is_vectors_csv(path)) return select_store(load_vectors_csv(path), objects, scenes);
  return build_store(load_pretrained(path), objects, scenes);
}

struct Model {
  EmbeddingStore store;
  WeightMatrix weights;
};

inline Model load_model(const std::filesystem::path& embeddings, const std::filesystem::path& weights,
                        const Environment& env) {
  auto w = load_weights(weights, env);
  auto store = load_store(embeddings, w.object_labels(), env.scenes);
  return {std::move(store), std::move(w)};
}

}  // namespace scenerank
