#pragma once

#include <cctype>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "scenerank/common.hpp"
#include "scenerank/random.hpp"

namespace scenerank {

// Pretrained token vectors as read from an embedding text file.
struct TokenVectors {
  std::size_t dim = 0;
  std::unordered_map<std::string, Vector> vectors;
};

// Labels in insertion order with O(1) lookup.
class LabeledVectors {
 public:
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::optional<std::size_t> find(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t add(const std::string& label, Vector v) {
    if (index_.count(label)) throw ValidationError("duplicate label '" + label + "'");
    index_.emplace(label, labels_.size());
    labels_.push_back(label);
    vectors_.push_back(std::move(v));
    return labels_.size() - 1;
  }

  const Vector& operator[](std::size_t i) const { return vectors_[i]; }
  Vector& operator[](std::size_t i) { return vectors_[i]; }

 private:
  std::vector<std::string> labels_;
  std::vector<Vector> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr double kOovScale = 0.1;

// Hash-seeded vector with entries uniform in [-0.1, 0.1].
inline Vector oov_vector(const std::string& token, std::size_t dim) {
  std::uint64_t state = stable_hash(token);
  Vector v(dim);
  for (auto& x : v) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    x = kOovScale * (2.0 * u - 1.0);
  }
  return v;
}

// Lowercases and splits on '_', '-' and ' '.
inline std::vector<std::string> label_tokens(const std::string& label) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : label) {
    if (c == '_' || c == '-' || c == ' ') {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Mean of the label's token vectors; unknown tokens use oov_vector().
inline Vector resolve_label(const TokenVectors& tokens, const std::string& label) {
  const auto parts = label_tokens(label);
  if (parts.empty()) throw ValidationError("cannot resolve empty label '" + label + "'");
  Vector mean(tokens.dim, 0.0);
  for (const auto& t : parts) {
    auto it = tokens.vectors.find(t);
    const Vector v = it != tokens.vectors.end() ? it->second : oov_vector(t, tokens.dim);
    for (std::size_t d = 0; d < tokens.dim; ++d) mean[d] += v[d];
  }
  for (auto& x : mean) x /= static_cast<double>(parts.size());
  // All-zero pretrained rows would leave the label without a direction.
  if (norm(mean) < 1e-12) mean = oov_vector(label, tokens.dim);
  return mean;
}

// nullopt when either norm is below 1e-12.
inline std::optional<double> cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ValidationError("cosine: length mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (na < 1e-12 || nb < 1e-12) return std::nullopt;
  return dot(a, b) / (na * nb);
}

// Object vectors (the o_i) and scene vectors (the s_j) plus the token
// table they were resolved from. Object and scene lookups are separate,
// so the same string may name both.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim = 0) : dim_{dim} { tokens_.dim = dim; }

  EmbeddingStore(TokenVectors tokens) : dim_{tokens.dim}, tokens_{std::move(tokens)} {}

  std::size_t dim() const noexcept { return dim_; }
  const TokenVectors& tokens() const noexcept { return tokens_; }

  const LabeledVectors& objects() const noexcept { return objects_; }
  const LabeledVectors& scenes() const noexcept { return scenes_; }
  LabeledVectors& objects() noexcept { return objects_; }
  LabeledVectors& scenes() noexcept { return scenes_; }

  std::size_t add_object(const std::string& label, Vector v) { return objects_.add(label, checked(std::move(v))); }
  std::size_t add_scene(const std::string& label, Vector v) { return scenes_.add(label, checked(std::move(v))); }

  // Resolves from the token table; no-op if the label is already present.
  std::size_t add_object(const std::string& label) {
    if (auto i = objects_.find(label)) return *i;
    return objects_.add(label, resolve_label(tokens_, label));
  }
  std::size_t add_scene(const std::string& label) {
    if (auto i = scenes_.find(label)) return *i;
    return scenes_.add(label, resolve_label(tokens_, label));
  }

  const Vector& object_vector(const std::string& label) const {
    if (auto i = objects_.find(label)) return objects_[*i];
    throw ValidationError("unknown object '" + label + "'");
  }
  const Vector& scene_vector(const std::string& label) const {
    if (auto i = scenes_.find(label)) return scenes_[*i];
    throw ValidationError("unknown scene '" + label + "'");
  }

 private:
  Vector checked(Vector v) const {
    if (v.size() != dim_) {
      throw ValidationError("vector has length " + std::to_string(v.size()) + ", expected " +
                            std::to_string(dim_));
    }
    return v;
  }

  std::size_t dim_;
  TokenVectors tokens_;
  LabeledVectors objects_;
  LabeledVectors scenes_;
};

// Embedding text format: optional "<count> <dim>" header, then
// "<token> <f1> ... <f_dim>" per line.
inline TokenVectors parse_pretrained(std::istream& in) {
  TokenVectors out;
  std::string raw;
  std::size_t line_no = 0;
  std::optional<std::size_t> declared_count;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::strip_eol(raw);
    const auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2) {
      std::size_t count = 0, dim = 0;
      if (detail::parse_size(fields[0], count) && detail::parse_size(fields[1], dim)) {
        if (dim == 0) throw ParseError("header declares dimension 0", line_no);
        declared_count = count;
        out.dim = dim;
        continue;
      }
    }
    if (fields.size() < 2) throw ParseError("token without vector", line_no);
    const std::size_t dim = fields.size() - 1;
    if (out.dim == 0) out.dim = dim;
    if (dim != out.dim) {
      throw ParseError("inconsistent dimensionality: got " + std::to_string(dim) + ", expected " +
                           std::to_string(out.dim),
                       line_no);
    }
    Vector v(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      if (!detail::parse_double(fields[d + 1], v[d]) || !std::isfinite(v[d])) {
        throw ParseError("malformed float '" + std::string(fields[d + 1]) + "'", line_no);
      }
    }
    // Later duplicates win, as in most embedding readers.
    out.vectors.insert_or_assign(std::string(fields[0]), std::move(v));
  }
  if (out.vectors.empty()) throw ParseError("embedding file has no vectors");
  if (declared_count && *declared_count != out.vectors.size()) {
    throw ParseError("header declares " + std::to_string(*declared_count) + " vectors, found " +
                     std::to_string(out.vectors.size()));
  }
  return out;
}

inline TokenVectors load_pretrained(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  try {
    return parse_pretrained(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_pretrained(std::ostream& out, const std::vector<std::string>& order,
                             const TokenVectors& tokens) {
  out << order.size() << ' ' << tokens.dim << '\n';
  std::string line;
  for (const auto& t : order) {
    line = t;
    for (double x : tokens.vectors.at(t)) {
      line.push_back(' ');
      detail::append_double(line, x);
    }
    out << line << '\n';
  }
}

// CSV with header "role,label,d0,...". Values use the shortest exact
// decimal form, so a re-parse reproduces every double.
inline std::size_t write_vectors_csv(std::ostream& out, const EmbeddingStore& store) {
  std::string line = "role,label";
  for (std::size_t d = 0; d < store.dim(); ++d) line += ",d" + std::to_string(d);
  out << line << '\n';
  std::size_t rows = 0;
  auto emit = [&](const char* role, const LabeledVectors& table) {
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto& label = table.labels()[i];
      if (label.find_first_of(",\"\n") != std::string::npos) {
        throw ValidationError("label '" + label + "' cannot be written to CSV");
      }
      line = role;
      line += ',';
      line += label;
      for (double x : table[i]) {
        line.push_back(',');
        detail::append_double(line, x);
      }
      out << line << '\n';
      ++rows;
    }
  };
  emit("object", store.objects());
  emit("scene", store.scenes());
  return rows;
}

inline std::size_t export_vectors_csv(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::size_t rows = 0;
  atomic_write(path, [&](std::ostream& out) { rows = write_vectors_csv(out, store); });
  return rows;
}

inline EmbeddingStore parse_vectors_csv(std::istream& in) {
  std::string raw;
  if (!std::getline(in, raw)) throw ParseError("empty CSV");
  const auto header = detail::split(detail::strip_eol(raw), ',');
  if (header.size() < 2 || header[0] != "role" || header[1] != "label") {
    throw ParseError("CSV header must start with role,label", 1);
  }
  EmbeddingStore store(header.size() - 2);
  std::size_t line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::strip_eol(raw);
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != header.size()) throw ParseError("wrong field count", line_no);
    Vector v(store.dim());
    for (std::size_t d = 0; d < v.size(); ++d) {
      if (!detail::parse_double(fields[d + 2], v[d])) {
        throw ParseError("malformed float '" + std::string(fields[d + 2]) + "'", line_no);
      }
    }
    const std::string label(fields[1]);
    if (fields[0] == "object") {
      store.add_object(label, std::move(v));
    } else if (fields[0] == "scene") {
      store.add_scene(label, std::move(v));
    } else {
      throw ParseError("unknown role '" + std::string(fields[0]) + "'", line_no);
    }
  }
  return store;
}

inline EmbeddingStore load_vectors_csv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  try {
    return parse_vectors_csv(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace scenerank
