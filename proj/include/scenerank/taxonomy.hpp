#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenerank/common.hpp"

namespace scenerank {

struct GeoRegion {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;

  bool contains(double lat, double lon) const noexcept {
    return lat >= min_lat && lat <= max_lat && lon >= min_lon && lon <= max_lon;
  }
};

struct Environment {
  std::string id;
  std::vector<std::string> scenes;
  std::optional<GeoRegion> geo_region;

  std::size_t n() const noexcept { return scenes.size(); }

  bool has_scene(const std::string& label) const {
    return std::find(scenes.begin(), scenes.end(), label) != scenes.end();
  }
};

// Two-level environment -> scene hierarchy plus the raw-label merge map.
// Immutable once validated.
class SceneTaxonomy {
 public:
  SceneTaxonomy() = default;

  // Throws ValidationError if any invariant fails.
  SceneTaxonomy(std::vector<Environment> environments, std::map<std::string, std::string> merge_map)
      : environments_{std::move(environments)}, merge_map_{std::move(merge_map)} {
    validate();
  }

  const std::vector<Environment>& environments() const noexcept { return environments_; }
  const std::map<std::string, std::string>& merge_map() const noexcept { return merge_map_; }

  const Environment* find(const std::string& id) const {
    for (const auto& env : environments_) {
      if (env.id == id) return &env;
    }
    return nullptr;
  }

  const Environment& environment(const std::string& id) const {
    if (const auto* env = find(id)) return *env;
    throw ValidationError("unknown environment '" + id + "'");
  }

  // Pass-through for labels outside the merge map.
  std::string canonicalize(const std::string& raw_label) const {
    auto it = merge_map_.find(raw_label);
    return it == merge_map_.end() ? raw_label : it->second;
  }

  // First environment in file order whose region contains the point.
  std::optional<std::string> locate_environment(double lat, double lon) const {
    if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
      throw ValidationError("coordinates out of range: (" + detail::format_double(lat) + ", " +
                            detail::format_double(lon) + ")");
    }
    for (const auto& env : environments_) {
      if (env.geo_region && env.geo_region->contains(lat, lon)) return env.id;
    }
    return std::nullopt;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json envs = nlohmann::ordered_json::array();
    for (const auto& env : environments_) {
      nlohmann::ordered_json e;
      e["id"] = env.id;
      e["scenes"] = env.scenes;
      if (env.geo_region) {
        const auto& g = *env.geo_region;
        e["geo_region"] = {{"min_lat", g.min_lat}, {"min_lon", g.min_lon},
                           {"max_lat", g.max_lat}, {"max_lon", g.max_lon}};
      }
      envs.push_back(std::move(e));
    }
    nlohmann::ordered_json doc;
    doc["environments"] = std::move(envs);
    doc["merge_map"] = nlohmann::ordered_json::object();
    for (const auto& [from, to] : merge_map_) doc["merge_map"][from] = to;
    return doc;
  }

  static SceneTaxonomy from_json(const nlohmann::json& doc) {
    try {
      if (!doc.is_object() || !doc.contains("environments")) {
        throw ParseError("taxonomy: missing 'environments'");
      }
      std::vector<Environment> envs;
      for (const auto& e : doc.at("environments")) {
        Environment env;
        env.id = e.at("id").get<std::string>();
        env.scenes = e.at("scenes").get<std::vector<std::string>>();
        if (e.contains("geo_region") && !e.at("geo_region").is_null()) {
          const auto& g = e.at("geo_region");
          env.geo_region = GeoRegion{g.at("min_lat").get<double>(), g.at("min_lon").get<double>(),
                                     g.at("max_lat").get<double>(), g.at("max_lon").get<double>()};
        }
        envs.push_back(std::move(env));
      }
      std::map<std::string, std::string> merges;
      if (doc.contains("merge_map")) {
        merges = doc.at("merge_map").get<std::map<std::string, std::string>>();
      }
      return SceneTaxonomy(std::move(envs), std::move(merges));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("taxonomy: ") + e.what());
    }
  }

 private:
  void validate() const {
    std::set<std::string> ids;
    for (const auto& env : environments_) {
      if (env.id.empty()) throw ValidationError("taxonomy: empty environment id");
      if (!ids.insert(env.id).second) {
        throw ValidationError("taxonomy: duplicate environment '" + env.id + "'");
      }
      if (env.scenes.size() < 2) {
        throw ValidationError("taxonomy: environment '" + env.id + "' needs at least 2 scenes");
      }
      std::set<std::string> seen;
      for (const auto& s : env.scenes) {
        if (s.empty()) throw ValidationError("taxonomy: empty scene label in '" + env.id + "'");
        if (!seen.insert(s).second) {
          throw ValidationError("taxonomy: duplicate scene label '" + s + "' in '" + env.id + "'");
        }
      }
      if (env.geo_region) {
        const auto& g = *env.geo_region;
        if (!(g.min_lat <= g.max_lat) || !(g.min_lon <= g.max_lon)) {
          throw ValidationError("taxonomy: inverted geo_region for '" + env.id + "'");
        }
      }
    }
    for (const auto& [from, to] : merge_map_) {
      if (merge_map_.count(to)) {
        throw ValidationError("taxonomy: merge chain '" + from + "' -> '" + to + "' -> '" +
                              merge_map_.at(to) + "'");
      }
      const auto owners = std::count_if(environments_.begin(), environments_.end(),
                                        [&](const Environment& e) { return e.has_scene(to); });
      if (owners == 0) {
        throw ValidationError("taxonomy: merge target '" + to + "' is not a scene");
      }
      if (owners > 1) {
        throw ValidationError("taxonomy: merge target '" + to + "' belongs to several environments");
      }
    }
  }

  std::vector<Environment> environments_;
  std::map<std::string, std::string> merge_map_;
};

inline SceneTaxonomy load_taxonomy(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return SceneTaxonomy::from_json(doc);
}

inline void save_taxonomy(const SceneTaxonomy& taxonomy, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) { out << taxonomy.to_json().dump(2) << '\n'; });
}

}  // namespace scenerank
