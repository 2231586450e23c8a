#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hopfe/errors.hpp"

namespace hopfe {

struct Triple {
  std::uint32_t h = 0;
  std::uint32_t r = 0;
  std::uint32_t t = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& x) const noexcept {
    std::uint64_t k = (static_cast<std::uint64_t>(x.h) * 0x9E3779B97F4A7C15ull) ^
                      (static_cast<std::uint64_t>(x.r) * 0xC2B2AE3D27D4EB4Full) ^
                      (static_cast<std::uint64_t>(x.t) * 0x165667B19E3779F9ull);
    k ^= k >> 29;
    return static_cast<std::size_t>(k);
  }
};

enum class Split { kTrain, kValid, kTest };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    default: return "test";
  }
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw InvalidConfig("unknown split '" + std::string(s) + "' (expected train|valid|test)");
}

// Bidirectional name <-> dense id map.
class Dictionary {
 public:
  std::uint32_t intern(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<std::uint32_t>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }
  std::optional<std::uint32_t> find(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> names_;
};

// Triples of all three splits in one array: train, then valid, then test.
struct TripleStore {
  Dictionary entities;
  Dictionary relations;
  std::vector<Triple> triples;
  std::size_t valid_begin = 0;
  std::size_t test_begin = 0;

  std::size_t num_entities() const { return entities.size(); }
  std::size_t num_relations() const { return relations.size(); }

  std::span<const Triple> split(Split s) const {
    const std::span<const Triple> all(triples);
    switch (s) {
      case Split::kTrain: return all.subspan(0, valid_begin);
      case Split::kValid: return all.subspan(valid_begin, test_begin - valid_begin);
      default: return all.subspan(test_begin);
    }
  }

  static TripleStore from_splits(Dictionary entities, Dictionary relations, const std::vector<Triple>& train,
                                 const std::vector<Triple>& valid, const std::vector<Triple>& test) {
    TripleStore s;
    s.entities = std::move(entities);
    s.relations = std::move(relations);
    s.triples = train;
    s.valid_begin = s.triples.size();
    s.triples.insert(s.triples.end(), valid.begin(), valid.end());
    s.test_begin = s.triples.size();
    s.triples.insert(s.triples.end(), test.begin(), test.end());
    return s;
  }
};

// Every known-true triple across train ∪ valid ∪ test.
class FilterIndex {
 public:
  FilterIndex() = default;
  explicit FilterIndex(const TripleStore& store) {
    for (const Triple& x : store.triples) {
      if (!all_.insert(x).second) continue;
      tails_[pair_key(x.h, x.r)].push_back(x.t);
      heads_[pair_key(x.t, x.r)].push_back(x.h);
    }
  }

  bool contains(const Triple& x) const { return all_.contains(x); }
  std::size_t size() const { return all_.size(); }

  // Known tails of (h, r, ·).
  std::span<const std::uint32_t> tails(std::uint32_t h, std::uint32_t r) const { return lookup(tails_, h, r); }
  // Known heads of (·, r, t).
  std::span<const std::uint32_t> heads(std::uint32_t r, std::uint32_t t) const { return lookup(heads_, t, r); }

 private:
  using Map = std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>;
  static std::uint64_t pair_key(std::uint32_t e, std::uint32_t r) { return (static_cast<std::uint64_t>(e) << 32) | r; }
  static std::span<const std::uint32_t> lookup(const Map& m, std::uint32_t e, std::uint32_t r) {
    auto it = m.find(pair_key(e, r));
    if (it == m.end()) return {};
    return it->second;
  }

  std::unordered_set<Triple, TripleHash> all_;
  Map tails_, heads_;
};

struct LoadReport {
  std::array<std::size_t, 3> triples{};     // per split, after deduplication
  std::array<std::size_t, 3> duplicates{};  // dropped per split
  std::size_t unseen_entities = 0;          // entities of valid/test never seen in train
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::vector<Triple> read_triple_file(const std::filesystem::path& path, TripleStore& store, std::size_t& dups) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Triple> out;
  std::unordered_set<Triple, TripleHash> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (blank(line)) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty() || cols[2].empty()) {
      throw ParseError(path.string(), lineno, "expected head<TAB>relation<TAB>tail, got " +
                                                  std::to_string(cols.size()) + " column(s)");
    }
    const Triple x{store.entities.intern(cols[0]), store.relations.intern(cols[1]), store.entities.intern(cols[2])};
    if (seen.insert(x).second) {
      out.push_back(x);
    } else {
      ++dups;
    }
  }
  return out;
}

inline void read_dictionary(const std::filesystem::path& path, Dictionary& dict) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (blank(line)) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 2) throw ParseError(path.string(), lineno, "expected id<TAB>name");
    std::size_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoul(cols[0], &used);
      if (used != cols[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(path.string(), lineno, "bad id '" + cols[0] + "'");
    }
    if (id != dict.size() || dict.find(cols[1])) {
      throw ParseError(path.string(), lineno, "ids must be dense, ordered and unique");
    }
    dict.intern(cols[1]);
  }
}

}  // namespace detail

struct LoadedStore {
  TripleStore store;
  LoadReport report;
};

// Loads tab-separated triple files. Ids follow first appearance across
// train, valid, test unless `entity_dict`/`relation_dict` files are given,
// in which case those fix the id order.
inline LoadedStore load_triples(const std::filesystem::path& train, const std::filesystem::path& valid,
                                const std::filesystem::path& test, const std::filesystem::path& entity_dict = {},
                                const std::filesystem::path& relation_dict = {}) {
  LoadedStore out;
  TripleStore& s = out.store;
  if (!entity_dict.empty()) detail::read_dictionary(entity_dict, s.entities);
  if (!relation_dict.empty()) detail::read_dictionary(relation_dict, s.relations);
  const std::size_t preset_entities = s.entities.size();
  const auto tr = detail::read_triple_file(train, s, out.report.duplicates[0]);
  const auto va = detail::read_triple_file(valid, s, out.report.duplicates[1]);
  const auto te = detail::read_triple_file(test, s, out.report.duplicates[2]);
  if (tr.empty()) throw EmptySplit("training split " + train.string() + " has no triples");
  out.report.triples = {tr.size(), va.size(), te.size()};

  std::vector<bool> in_train(s.entities.size(), false);
  for (const Triple& x : tr) in_train[x.h] = in_train[x.t] = true;
  std::vector<bool> counted(s.entities.size(), false);
  for (const auto* part : {&va, &te}) {
    for (const Triple& x : *part) {
      for (std::uint32_t e : {x.h, x.t}) {
        if (!in_train[e] && !counted[e]) {
          counted[e] = true;
          ++out.report.unseen_entities;
        }
      }
    }
  }
  if (out.report.unseen_entities > 0) {
    out.report.warnings.push_back(std::to_string(out.report.unseen_entities) +
                                  " entities in valid/test never appear in train");
  }
  for (int i = 0; i < 3; ++i) {
    if (out.report.duplicates[i] > 0) {
      out.report.warnings.push_back(std::to_string(out.report.duplicates[i]) + " duplicate triples dropped from " +
                                    std::string(to_string(static_cast<Split>(i))));
    }
  }
  if (!entity_dict.empty() && s.entities.size() != preset_entities) {
    out.report.warnings.push_back("triples name entities missing from " + entity_dict.string());
  }
  s = TripleStore::from_splits(std::move(s.entities), std::move(s.relations), tr, va, te);
  return out;
}

// Loads `dir/{train,valid,test}.txt`, honouring `entities.dict` and
// `relations.dict` when present.
inline LoadedStore load_dataset(const std::filesystem::path& dir) {
  auto opt = [&](const char* name) {
    const auto p = dir / name;
    return std::filesystem::exists(p) ? p : std::filesystem::path{};
  };
  return load_triples(dir / "train.txt", dir / "valid.txt", dir / "test.txt", opt("entities.dict"),
                      opt("relations.dict"));
}

inline void write_dictionary(std::ostream& out, const Dictionary& dict) {
  for (std::size_t i = 0; i < dict.size(); ++i) out << i << '\t' << dict.name(static_cast<std::uint32_t>(i)) << '\n';
}

inline void write_triples(std::ostream& out, const TripleStore& store, Split s) {
  for (const Triple& x : store.split(s)) {
    out << store.entities.name(x.h) << '\t' << store.relations.name(x.r) << '\t' << store.entities.name(x.t) << '\n';
  }
}

inline void write_dataset(const std::filesystem::path& dir, const TripleStore& store) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    auto f = open((std::string(to_string(s)) + ".txt").c_str());
    write_triples(f, store, s);
  }
  auto e = open("entities.dict");
  write_dictionary(e, store.entities);
  auto r = open("relations.dict");
  write_dictionary(r, store.relations);
}

// Erdős–Rényi style graph with exactly round(n · avg_degree / 2) distinct
// unordered pairs, each emitted once in a random direction with a uniform
// relation id, then split 90/5/5.
inline TripleStore generate_er_graph(std::size_t n, double avg_degree, std::size_t num_relations, std::uint64_t seed) {
  if (n < 2) throw InvalidConfig("generate: n must be at least 2");
  if (!(avg_degree > 0.0) || !(avg_degree < static_cast<double>(n))) {
    throw InvalidConfig("generate: avg-degree must lie in (0, n)");
  }
  if (num_relations < 1) throw InvalidConfig("generate: need at least one relation");
  const std::uint64_t max_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const auto m = static_cast<std::uint64_t>(std::llround(static_cast<double>(n) * avg_degree / 2.0));
  if (m > max_pairs) throw InvalidConfig("generate: avg-degree exceeds the complete graph");
  if (m == 0) throw InvalidConfig("generate: avg-degree yields no edges");

  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(m);
  if (2 * m > max_pairs) {
    // Dense: partial Fisher-Yates over all pairs.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> all;
    all.reserve(max_pairs);
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = i + 1; j < n; ++j) all.emplace_back(i, j);
    for (std::uint64_t k = 0; k < m; ++k) {
      std::uniform_int_distribution<std::uint64_t> pick(k, max_pairs - 1);
      std::swap(all[k], all[pick(rng)]);
      pairs.push_back(all[k]);
    }
  } else {
    std::unordered_set<std::uint64_t> seen;
    std::uniform_int_distribution<std::uint32_t> node(0, static_cast<std::uint32_t>(n - 1));
    while (pairs.size() < m) {
      std::uint32_t a = node(rng), b = node(rng);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      if (seen.insert((static_cast<std::uint64_t>(a) << 32) | b).second) pairs.emplace_back(a, b);
    }
  }

  Dictionary entities, relations;
  for (std::size_t i = 0; i < n; ++i) entities.intern("e" + std::to_string(i));
  for (std::size_t r = 0; r < num_relations; ++r) relations.intern("r" + std::to_string(r));
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<std::uint32_t> rel(0, static_cast<std::uint32_t>(num_relations - 1));
  std::vector<Triple> triples;
  triples.reserve(m);
  for (auto [a, b] : pairs) {
    const std::uint32_t r = rel(rng);
    triples.push_back(coin(rng) ? Triple{a, r, b} : Triple{b, r, a});
  }
  std::shuffle(triples.begin(), triples.end(), rng);
  const std::size_t n_valid = triples.size() / 20, n_test = triples.size() / 20;
  const std::size_t n_train = triples.size() - n_valid - n_test;
  const std::vector<Triple> train(triples.begin(), triples.begin() + n_train);
  const std::vector<Triple> valid(triples.begin() + n_train, triples.begin() + n_train + n_valid);
  const std::vector<Triple> test(triples.begin() + n_train + n_valid, triples.end());
  return TripleStore::from_splits(std::move(entities), std::move(relations), train, valid, test);
}

// Adds a relation `name` holding the reverse (t, name, h) of every triple of
// relation `r`, each in the same split as its source.
inline TripleStore add_inverse_relation(const TripleStore& store, std::uint32_t r, const std::string& name) {
  if (r >= store.num_relations()) throw UnknownRelation("relation id " + std::to_string(r));
  Dictionary relations = store.relations;
  if (relations.find(name)) throw InvalidConfig("relation '" + name + "' already exists");
  const std::uint32_t inv = relations.intern(name);
  std::array<std::vector<Triple>, 3> parts;
  for (int s = 0; s < 3; ++s) {
    for (const Triple& x : store.split(static_cast<Split>(s))) {
      parts[s].push_back(x);
      if (x.r == r) parts[s].push_back({x.t, inv, x.h});
    }
  }
  return TripleStore::from_splits(store.entities, std::move(relations), parts[0], parts[1], parts[2]);
}

// ---------------------------------------------------------------------------
// Relation categories

enum class RelationCategory { kOneToOne, kOneToMany, kManyToOne, kManyToMany };

inline std::string_view to_string(RelationCategory c) {
  switch (c) {
    case RelationCategory::kOneToOne: return "1-1";
    case RelationCategory::kOneToMany: return "1-N";
    case RelationCategory::kManyToOne: return "N-1";
    default: return "N-N";
  }
}

inline constexpr double kCategoryThreshold = 1.5;

struct RelationStats {
  double tails_per_head = 0.0;
  double heads_per_tail = 0.0;
  std::size_t count = 0;  // train triples
  RelationCategory category = RelationCategory::kOneToOne;
};

struct CategoryStats {
  std::vector<RelationStats> relations;     // indexed by relation id
  std::array<double, 4> fractions{};        // by RelationCategory, weighted by triple count
};

inline RelationCategory categorize(double tph, double hpt) {
  const bool many_tails = tph >= kCategoryThreshold, many_heads = hpt >= kCategoryThreshold;
  if (!many_tails && !many_heads) return RelationCategory::kOneToOne;
  if (many_tails && !many_heads) return RelationCategory::kOneToMany;
  if (!many_tails) return RelationCategory::kManyToOne;
  return RelationCategory::kManyToMany;
}

inline CategoryStats relation_category_stats(const TripleStore& store) {
  const auto train = store.split(Split::kTrain);
  if (train.empty()) throw EmptySplit("relation stats need training triples");
  CategoryStats out;
  out.relations.resize(store.num_relations());
  std::vector<std::unordered_set<std::uint32_t>> heads(store.num_relations()), tails(store.num_relations());
  for (const Triple& x : train) {
    ++out.relations[x.r].count;
    heads[x.r].insert(x.h);
    tails[x.r].insert(x.t);
  }
  for (std::size_t r = 0; r < out.relations.size(); ++r) {
    RelationStats& s = out.relations[r];
    if (s.count == 0) continue;
    s.tails_per_head = static_cast<double>(s.count) / static_cast<double>(heads[r].size());
    s.heads_per_tail = static_cast<double>(s.count) / static_cast<double>(tails[r].size());
    s.category = categorize(s.tails_per_head, s.heads_per_tail);
    out.fractions[static_cast<int>(s.category)] += static_cast<double>(s.count);
  }
  for (double& f : out.fractions) f /= static_cast<double>(train.size());
  return out;
}

// ---------------------------------------------------------------------------
// Semantic attributes

enum class AttributeKind { kLabel, kAlias, kInstance, kDescription };
inline constexpr std::size_t kAttributeKinds = 4;

inline AttributeKind parse_attribute_kind(std::string_view s) {
  if (s == "label") return AttributeKind::kLabel;
  if (s == "alias") return AttributeKind::kAlias;
  if (s == "instance") return AttributeKind::kInstance;
  if (s == "description") return AttributeKind::kDescription;
  throw InvalidConfig("unknown attribute kind '" + std::string(s) + "'");
}

// Pretrained token vectors of a fixed width.
struct TokenVectors {
  std::size_t width = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

inline TokenVectors load_token_vectors(const std::filesystem::path& path, std::size_t width) {
  if (width < 1) throw InvalidConfig("token vector width must be at least 1");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TokenVectors out;
  out.width = width;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (detail::blank(line)) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> v;
    std::string num;
    while (fields >> num) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(num, &used));
        if (used != num.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "bad number '" + num + "'");
      }
    }
    // word2vec text files may start with a "<count> <width>" header.
    if (lineno == 1 && v.size() == 1 && std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
    if (v.size() != width) {
      throw WidthMismatch(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) +
                          " values for '" + token + "', got " + std::to_string(v.size()));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw ParseError(path.string(), lineno, "non-finite vector entry");
    }
    out.vectors[token] = std::move(v);
  }
  return out;
}

// Per entity and attribute kind, the mean of the token vectors of its text.
struct AttributeTable {
  std::size_t width = 0;
  std::size_t num_entities = 0;
  std::vector<double> vectors;        // E × 4 × width
  std::vector<std::uint8_t> present;  // E × 4

  std::span<const double> vector(std::size_t e, AttributeKind k) const {
    return std::span<const double>(vectors).subspan((e * kAttributeKinds + static_cast<std::size_t>(k)) * width,
                                                    width);
  }
  bool has(std::size_t e, AttributeKind k) const {
    return present[e * kAttributeKinds + static_cast<std::size_t>(k)] != 0;
  }
};

struct AttributeReport {
  std::size_t attributes = 0;
  std::size_t oov_count = 0;        // attributes whose tokens were all out of vocabulary
  std::size_t unknown_entities = 0; // lines naming entities outside the store
  std::size_t tokens = 0;
  std::size_t tokens_found = 0;
};

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// CBOW aggregation. Several lines with the same (entity, kind) pool their
// tokens into one mean.
inline AttributeTable aggregate_attributes(std::istream& in, const std::string& source, const Dictionary& entities,
                                           const TokenVectors& tokens, AttributeReport* report = nullptr) {
  AttributeTable table;
  table.width = tokens.width;
  table.num_entities = entities.size();
  table.vectors.assign(entities.size() * kAttributeKinds * tokens.width, 0.0);
  table.present.assign(entities.size() * kAttributeKinds, 0);
  std::vector<std::size_t> found(entities.size() * kAttributeKinds, 0);
  AttributeReport rep;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (detail::blank(line)) continue;
    const auto cols = detail::split_tabs(line);
    if (cols.size() != 3) throw ParseError(source, lineno, "expected entity<TAB>kind<TAB>text");
    AttributeKind kind;
    try {
      kind = parse_attribute_kind(cols[1]);
    } catch (const InvalidConfig& e) {
      throw ParseError(source, lineno, e.what());
    }
    const auto id = entities.find(cols[0]);
    if (!id) {
      ++rep.unknown_entities;
      continue;
    }
    ++rep.attributes;
    const std::size_t slot = *id * kAttributeKinds + static_cast<std::size_t>(kind);
    table.present[slot] = 1;
    bool any = false;
    for (const std::string& tok : tokenize(cols[2])) {
      ++rep.tokens;
      auto it = tokens.vectors.find(tok);
      if (it == tokens.vectors.end()) continue;
      ++rep.tokens_found;
      any = true;
      ++found[slot];
      for (std::size_t w = 0; w < tokens.width; ++w) table.vectors[slot * tokens.width + w] += it->second[w];
    }
    if (!any) ++rep.oov_count;
  }
  for (std::size_t slot = 0; slot < found.size(); ++slot) {
    if (found[slot] == 0) continue;
    const double inv = 1.0 / static_cast<double>(found[slot]);
    for (std::size_t w = 0; w < tokens.width; ++w) table.vectors[slot * tokens.width + w] *= inv;
  }
  if (report) *report = rep;
  return table;
}

inline AttributeTable load_attributes(const std::filesystem::path& path, const std::filesystem::path& vectors_path,
                                      std::size_t width, const Dictionary& entities,
                                      AttributeReport* report = nullptr) {
  const TokenVectors tokens = load_token_vectors(vectors_path, width);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return aggregate_attributes(in, path.string(), entities, tokens, report);
}

// Learned map from attribute vectors to fiber phases:
//   phase(e, d, h) = 2π · sigmoid(W[d, h] · vector(e, kind h) + b[d, h])
// Head h reads attribute kind h (label, alias, instance, description).
// Entities with none of the first H kinds keep free phases.
struct SemanticProjection {
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::size_t width = 0;
  std::vector<double> weights;  // k × H × width
  std::vector<double> bias;     // k × H

  static SemanticProjection init(std::size_t dim, std::size_t heads, std::size_t width, std::uint64_t seed) {
    if (heads > kAttributeKinds) throw ShapeMismatch("semantics support at most 4 heads (one per attribute kind)");
    SemanticProjection p{dim, heads, width, std::vector<double>(dim * heads * width), std::vector<double>(dim * heads)};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(width)));
    for (double& w : p.weights) w = g(rng);
    return p;
  }

  double logit(const AttributeTable& table, std::size_t e, std::size_t d, std::size_t h) const {
    const auto v = table.vector(e, static_cast<AttributeKind>(h));
    const double* w = &weights[(d * heads + h) * width];
    double z = bias[d * heads + h];
    for (std::size_t i = 0; i < width; ++i) z += w[i] * v[i];
    return z;
  }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline bool has_semantics(const AttributeTable& table, std::size_t e, std::size_t heads) {
  for (std::size_t h = 0; h < heads; ++h) {
    if (table.has(e, static_cast<AttributeKind>(h))) return true;
  }
  return false;
}

// Writes semantic phases into `phases` (E × k × H) for entities that have
// attributes; others are left untouched.
inline void attribute_phases(const AttributeTable& table, const SemanticProjection& proj, std::span<double> phases) {
  if (table.width != proj.width || phases.size() != table.num_entities * proj.dim * proj.heads) {
    throw ShapeMismatch("attribute_phases: table, projection and phase shapes disagree");
  }
  for (std::size_t e = 0; e < table.num_entities; ++e) {
    if (!has_semantics(table, e, proj.heads)) continue;
    for (std::size_t d = 0; d < proj.dim; ++d) {
      for (std::size_t h = 0; h < proj.heads; ++h) {
        phases[(e * proj.dim + d) * proj.heads + h] = 2.0 * std::numbers::pi * sigmoid(proj.logit(table, e, d, h));
      }
    }
  }
}

// Chains dL/dphase into the projection parameters and clears the phase
// gradient of attributed entities (their phases are not free parameters).
inline void attribute_phases_vjp(const AttributeTable& table, const SemanticProjection& proj,
                                 std::span<double> phase_grad, std::span<double> weight_grad,
                                 std::span<double> bias_grad) {
  for (std::size_t e = 0; e < table.num_entities; ++e) {
    if (!has_semantics(table, e, proj.heads)) continue;
    for (std::size_t d = 0; d < proj.dim; ++d) {
      for (std::size_t h = 0; h < proj.heads; ++h) {
        double& g = phase_grad[(e * proj.dim + d) * proj.heads + h];
        if (g == 0.0) continue;
        const double s = sigmoid(proj.logit(table, e, d, h));
        const double dz = g * 2.0 * std::numbers::pi * s * (1.0 - s);
        const auto v = table.vector(e, static_cast<AttributeKind>(h));
        double* wg = &weight_grad[(d * proj.heads + h) * proj.width];
        for (std::size_t i = 0; i < proj.width; ++i) wg[i] += dz * v[i];
        bias_grad[d * proj.heads + h] += dz;
        g = 0.0;
      }
    }
  }
}

}  // namespace hopfe
