#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hopfe/data.hpp"

namespace hopfe {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("hopfe_data_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path file(const std::string& name, const std::string& content) const {
    std::ofstream(path_ / name) << content;
    return path_ / name;
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::multiset<std::tuple<std::string, std::string, std::string>> named(const TripleStore& s, Split split) {
  std::multiset<std::tuple<std::string, std::string, std::string>> out;
  for (const Triple& x : s.split(split)) out.emplace(s.entities.name(x.h), s.relations.name(x.r), s.entities.name(x.t));
  return out;
}

TEST(LoadTriples, SmallFile) {
  TempDir dir;
  const auto train = dir.file("train.txt", "a\tr\tb\nb\tr\tc\nc\tr\ta\n");
  const auto empty = dir.file("empty.txt", "");
  const LoadedStore loaded = load_triples(train, empty, empty);
  EXPECT_EQ(loaded.store.num_entities(), 3u);
  EXPECT_EQ(loaded.store.num_relations(), 1u);
  EXPECT_EQ(loaded.store.triples.size(), 3u);
  EXPECT_EQ(loaded.store.split(Split::kTrain).size(), 3u);
  EXPECT_TRUE(loaded.store.split(Split::kTest).empty());
}

TEST(LoadTriples, DeduplicatesWithinSplit) {
  TempDir dir;
  const auto train = dir.file("train.txt", "a\tr\tb\na\tr\tb\r\nb\tr\tc\n\n");
  const auto valid = dir.file("valid.txt", "a\tr\tb\n");
  const auto empty = dir.file("empty.txt", "");
  const LoadedStore loaded = load_triples(train, valid, empty);
  EXPECT_EQ(loaded.report.duplicates[0], 1u);
  EXPECT_EQ(loaded.store.split(Split::kTrain).size(), 2u);
  EXPECT_EQ(loaded.store.split(Split::kValid).size(), 1u);
  EXPECT_FALSE(loaded.report.warnings.empty());
}

TEST(LoadTriples, MalformedLineNamesLineNumber) {
  TempDir dir;
  const auto train = dir.file("train.txt", "a\tr\tb\nb\tr\n");
  const auto empty = dir.file("empty.txt", "");
  try {
    load_triples(train, empty, empty);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST(LoadTriples, EmptyTrainingSplitAndMissingFile) {
  TempDir dir;
  const auto empty = dir.file("empty.txt", "\n\n");
  EXPECT_THROW(load_triples(empty, empty, empty), EmptySplit);
  EXPECT_THROW(load_triples(dir.path() / "missing.txt", empty, empty), IoError);
}

TEST(LoadTriples, WarnsAboutUnseenEntities) {
  TempDir dir;
  const auto train = dir.file("train.txt", "a\tr\tb\n");
  const auto test = dir.file("test.txt", "a\tr\tz\n");
  const auto empty = dir.file("empty.txt", "");
  const LoadedStore loaded = load_triples(train, empty, test);
  EXPECT_EQ(loaded.report.unseen_entities, 1u);
  ASSERT_FALSE(loaded.report.warnings.empty());
}

TEST(Dataset, RoundTripPreservesTriplesSplitsAndIds) {
  const TripleStore store = generate_er_graph(50, 6, 3, 11);
  TempDir dir;
  write_dataset(dir.path(), store);
  const TripleStore back = load_dataset(dir.path()).store;
  EXPECT_EQ(back.entities.names(), store.entities.names());
  EXPECT_EQ(back.relations.names(), store.relations.names());
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    EXPECT_EQ(named(back, s), named(store, s));
    EXPECT_TRUE(std::equal(back.split(s).begin(), back.split(s).end(), store.split(s).begin(), store.split(s).end()));
  }
  std::ifstream dict(dir.path() / "entities.dict");
  std::string first;
  std::getline(dict, first);
  EXPECT_EQ(first, "0\te0");
}

TEST(ErGraph, EdgeCounts) {
  EXPECT_EQ(generate_er_graph(10, 4, 1, 1).triples.size(), 20u);
  EXPECT_EQ(generate_er_graph(100, 99, 1, 1).triples.size(), 4950u);
  const TripleStore big = generate_er_graph(1000, 10, 1, 3);
  const double realized = 2.0 * static_cast<double>(big.triples.size()) / 1000.0;
  EXPECT_NEAR(realized, 10.0, 0.5);
  EXPECT_EQ(big.num_entities(), 1000u);
}

TEST(ErGraph, DistinctPairsAndSplitFractions) {
  const TripleStore s = generate_er_graph(200, 20, 2, 5);
  std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (const Triple& x : s.triples) {
    EXPECT_NE(x.h, x.t);
    EXPECT_TRUE(pairs.insert({std::min(x.h, x.t), std::max(x.h, x.t)}).second);
    EXPECT_LT(x.r, 2u);
  }
  EXPECT_EQ(s.split(Split::kValid).size(), s.triples.size() / 20);
  EXPECT_EQ(s.split(Split::kTest).size(), s.triples.size() / 20);
}

TEST(ErGraph, DeterministicPerSeed) {
  EXPECT_EQ(generate_er_graph(100, 10, 1, 7).triples, generate_er_graph(100, 10, 1, 7).triples);
  EXPECT_NE(generate_er_graph(100, 10, 1, 7).triples, generate_er_graph(100, 10, 1, 8).triples);
}

TEST(ErGraph, RejectsBadConfig) {
  EXPECT_THROW(generate_er_graph(1, 0.5, 1, 1), InvalidConfig);
  EXPECT_THROW(generate_er_graph(10, 10, 1, 1), InvalidConfig);
  EXPECT_THROW(generate_er_graph(10, 0, 1, 1), InvalidConfig);
  EXPECT_THROW(generate_er_graph(10, 2, 0, 1), InvalidConfig);
}

TEST(InverseRelation, MirrorsEveryTripleInItsSplit) {
  const TripleStore base = generate_er_graph(60, 6, 1, 2);
  const TripleStore s = add_inverse_relation(base, 0, "r0_inv");
  EXPECT_EQ(s.num_relations(), 2u);
  EXPECT_EQ(s.triples.size(), 2 * base.triples.size());
  const FilterIndex idx(s);
  for (Split sp : {Split::kTrain, Split::kValid, Split::kTest}) {
    EXPECT_EQ(s.split(sp).size(), 2 * base.split(sp).size());
    for (const Triple& x : base.split(sp)) EXPECT_TRUE(idx.contains({x.t, 1, x.h}));
  }
  EXPECT_THROW(add_inverse_relation(base, 3, "x"), UnknownRelation);
  EXPECT_THROW(add_inverse_relation(s, 0, "r0_inv"), InvalidConfig);
}

TEST(FilterIndex, AgreesWithLinearScan) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const TripleStore s = generate_er_graph(30, 8, 3, trial);
    const FilterIndex idx(s);
    EXPECT_EQ(idx.size(), s.triples.size());
    std::uniform_int_distribution<std::uint32_t> e(0, 29), r(0, 2);
    for (int q = 0; q < 2000; ++q) {
      const Triple x{e(rng), r(rng), e(rng)};
      const bool scan = std::find(s.triples.begin(), s.triples.end(), x) != s.triples.end();
      EXPECT_EQ(idx.contains(x), scan);
      const auto tails = idx.tails(x.h, x.r);
      EXPECT_EQ(std::find(tails.begin(), tails.end(), x.t) != tails.end(), scan);
      const auto heads = idx.heads(x.r, x.t);
      EXPECT_EQ(std::find(heads.begin(), heads.end(), x.h) != heads.end(), scan);
    }
  }
}

TripleStore store_of(std::vector<Triple> train, std::size_t entities, std::size_t relations) {
  Dictionary e, r;
  for (std::size_t i = 0; i < entities; ++i) e.intern("e" + std::to_string(i));
  for (std::size_t i = 0; i < relations; ++i) r.intern("r" + std::to_string(i));
  return TripleStore::from_splits(std::move(e), std::move(r), train, {}, {});
}

TEST(RelationCategories, Examples) {
  // r0: every head has one tail, tail 0 has three heads -> N-1.
  // r1: bijection -> 1-1.  r2: complete bipartite 3x3 -> N-N.
  std::vector<Triple> train{{1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 5},
                            {0, 1, 1}, {1, 1, 2}, {2, 1, 3}};
  for (std::uint32_t h : {0u, 1u, 2u})
    for (std::uint32_t t : {3u, 4u, 5u}) train.push_back({h, 2, t});
  const CategoryStats stats = relation_category_stats(store_of(train, 6, 3));
  EXPECT_EQ(stats.relations[0].category, RelationCategory::kManyToOne);
  EXPECT_DOUBLE_EQ(stats.relations[0].tails_per_head, 1.0);
  EXPECT_DOUBLE_EQ(stats.relations[0].heads_per_tail, 2.0);
  EXPECT_EQ(stats.relations[1].category, RelationCategory::kOneToOne);
  EXPECT_EQ(stats.relations[2].category, RelationCategory::kManyToMany);
  EXPECT_DOUBLE_EQ(stats.relations[2].tails_per_head, 3.0);
  EXPECT_DOUBLE_EQ(stats.fractions[static_cast<int>(RelationCategory::kManyToOne)], 4.0 / 16.0);
  EXPECT_DOUBLE_EQ(stats.fractions[static_cast<int>(RelationCategory::kOneToOne)], 3.0 / 16.0);
  EXPECT_DOUBLE_EQ(stats.fractions[static_cast<int>(RelationCategory::kManyToMany)], 9.0 / 16.0);
  EXPECT_DOUBLE_EQ(stats.fractions[static_cast<int>(RelationCategory::kOneToMany)], 0.0);
  EXPECT_EQ(categorize(1.5, 1.0), RelationCategory::kOneToMany);
}

TEST(Attributes, CbowMeanAndOov) {
  Dictionary entities;
  for (const char* n : {"a", "b", "c", "d"}) entities.intern(n);
  TokenVectors tokens{2, {{"left", {1, 0}}, {"right", {0, 1}}}};
  std::istringstream in(
      "a\tlabel\tLeft RIGHT\n"
      "b\tdescription\tunknown words only\n"
      "c\talias\tright\n"
      "zzz\tlabel\tleft\n");
  AttributeReport report;
  const AttributeTable t = aggregate_attributes(in, "attrs", entities, tokens, &report);
  EXPECT_EQ(std::vector<double>(t.vector(0, AttributeKind::kLabel).begin(), t.vector(0, AttributeKind::kLabel).end()),
            (std::vector<double>{0.5, 0.5}));
  EXPECT_TRUE(t.has(1, AttributeKind::kDescription));
  EXPECT_EQ(t.vector(1, AttributeKind::kDescription)[0], 0.0);
  EXPECT_EQ(t.vector(1, AttributeKind::kDescription)[1], 0.0);
  EXPECT_EQ(t.vector(2, AttributeKind::kAlias)[1], 1.0);
  EXPECT_FALSE(t.has(3, AttributeKind::kLabel));
  EXPECT_EQ(report.oov_count, 1u);
  EXPECT_EQ(report.unknown_entities, 1u);
  EXPECT_EQ(report.attributes, 3u);
}

TEST(Attributes, FileErrors) {
  TempDir dir;
  Dictionary entities;
  entities.intern("a");
  const auto vecs = dir.file("vecs.txt", "2 3\nhello 1 2 3\nworld 4 5 6\n");
  const auto attrs = dir.file("attrs.txt", "a\tlabel\tHello world\n");
  const AttributeTable t = load_attributes(attrs, vecs, 3, entities);
  EXPECT_DOUBLE_EQ(t.vector(0, AttributeKind::kLabel)[0], 2.5);
  EXPECT_THROW(load_attributes(attrs, vecs, 2, entities), WidthMismatch);
  const auto bad_kind = dir.file("bad.txt", "a\tcolour\tred\n");
  EXPECT_THROW(load_attributes(bad_kind, vecs, 3, entities), ParseError);
  const auto bad_cols = dir.file("bad2.txt", "a\tlabel\n");
  EXPECT_THROW(load_attributes(bad_cols, vecs, 3, entities), ParseError);
}

TEST(AttributePhases, FormulaAndRange) {
  Dictionary entities;
  for (const char* n : {"a", "b", "c", "free"}) entities.intern(n);
  TokenVectors tokens{3, {{"x", {0, 0, 0}}, {"y", {0.3, -1.2, 2.0}}}};
  std::istringstream in("a\tlabel\tx\nb\tlabel\ty\nc\tlabel\ty\n");
  const AttributeTable table = aggregate_attributes(in, "attrs", entities, tokens);
  SemanticProjection proj = SemanticProjection::init(5, 2, 3, 9);
  std::vector<double> phases(4 * 5 * 2, -1.0);
  attribute_phases(table, proj, phases);
  for (std::size_t d = 0; d < 5; ++d) {
    EXPECT_DOUBLE_EQ(phases[(0 * 5 + d) * 2], std::numbers::pi);  // zero vector, zero bias
    for (std::size_t h = 0; h < 2; ++h) EXPECT_EQ(phases[(1 * 5 + d) * 2 + h], phases[(2 * 5 + d) * 2 + h]);
    EXPECT_EQ(phases[(3 * 5 + d) * 2], -1.0);  // no attributes: untouched
  }
  for (std::size_t i = 0; i < 3 * 5 * 2; ++i) {
    EXPECT_GE(phases[i], 0.0);
    EXPECT_LT(phases[i], 2 * std::numbers::pi);
  }
  EXPECT_THROW(SemanticProjection::init(5, 5, 3, 1), ShapeMismatch);
}

TEST(AttributePhases, VjpMatchesFiniteDifferences) {
  Dictionary entities;
  for (const char* n : {"a", "b"}) entities.intern(n);
  TokenVectors tokens{2, {{"x", {0.4, -0.7}}, {"y", {1.1, 0.2}}}};
  std::istringstream in("a\tlabel\tx\na\talias\ty\nb\talias\tx y\n");
  const AttributeTable table = aggregate_attributes(in, "attrs", entities, tokens);
  SemanticProjection proj = SemanticProjection::init(3, 2, 2, 5);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> upstream(2 * 3 * 2);
  for (double& u : upstream) u = g(rng);
  auto objective = [&] {
    std::vector<double> phases(upstream.size(), 0.0);
    attribute_phases(table, proj, phases);
    double s = 0.0;
    for (std::size_t i = 0; i < phases.size(); ++i) s += upstream[i] * phases[i];
    return s;
  };
  std::vector<double> pg = upstream, wg(proj.weights.size(), 0.0), bg(proj.bias.size(), 0.0);
  attribute_phases_vjp(table, proj, pg, wg, bg);
  for (double x : pg) EXPECT_EQ(x, 0.0);
  const double step = 1e-6;
  for (std::size_t i = 0; i < proj.weights.size(); ++i) {
    const double saved = proj.weights[i];
    proj.weights[i] = saved + step;
    const double up = objective();
    proj.weights[i] = saved - step;
    const double down = objective();
    proj.weights[i] = saved;
    EXPECT_NEAR(wg[i], (up - down) / (2 * step), 1e-6);
  }
  for (std::size_t i = 0; i < proj.bias.size(); ++i) {
    const double saved = proj.bias[i];
    proj.bias[i] = saved + step;
    const double up = objective();
    proj.bias[i] = saved - step;
    const double down = objective();
    proj.bias[i] = saved;
    EXPECT_NEAR(bg[i], (up - down) / (2 * step), 1e-6);
  }
}

}  // namespace
}  // namespace hopfe
