#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hiermatch/dataset.hpp"
#include "hiermatch/strokes.hpp"
#include "hiermatch/synth.hpp"

using namespace hiermatch;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hiermatch_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.n_identities = 6;
  spec.d_raw = 10;
  spec.n_regions_photo = 8;
  spec.n_strokes_min = 4;
  spec.n_strokes_max = 8;
  spec.noise_scale = 0.05;
  spec.seed = 42;
  return spec;
}

// Build a trace over leaves 0..n-1 from a uniformly random merge policy.
HierarchyTrace random_policy_trace(std::size_t n, Rng& rng) {
  std::vector<std::int64_t> roots(n);
  for (std::size_t i = 0; i < n; ++i) roots[i] = static_cast<std::int64_t>(i);
  HierarchyTrace trace;
  std::int64_t next = static_cast<std::int64_t>(n);
  std::size_t level = 0;
  while (roots.size() > 1) {
    const std::size_t i = static_cast<std::size_t>(rng.uniform_index(roots.size()));
    std::size_t j = static_cast<std::size_t>(rng.uniform_index(roots.size() - 1));
    if (j >= i) ++j;
    const auto [lo, hi] = std::minmax(i, j);
    trace.entries.push_back(
        {level++, Branch::sketch, lo, hi, roots[lo], roots[hi], next, {}});
    roots[lo] = next++;
    roots.erase(roots.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return trace;
}

// Exhaustive expected fidelity of the uniform random merge policy against a
// fixed planted tree: recursion over every merge sequence.
double enumerate_expected_fidelity(
    std::vector<std::vector<std::int64_t>> clusters,
    const std::set<std::vector<std::int64_t>>& planted_sets,
    std::size_t total_merges) {
  if (clusters.size() == 1) return 0.0;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < clusters.size(); ++i)
    for (std::size_t j = i + 1; j < clusters.size(); ++j) {
      std::vector<std::vector<std::int64_t>> next;
      next.reserve(clusters.size() - 1);
      std::vector<std::int64_t> merged = clusters[i];
      merged.insert(merged.end(), clusters[j].begin(), clusters[j].end());
      std::sort(merged.begin(), merged.end());
      const double hit =
          planted_sets.count(merged) > 0
              ? 1.0 / static_cast<double>(total_merges)
              : 0.0;
      for (std::size_t k = 0; k < clusters.size(); ++k)
        if (k != i && k != j) next.push_back(clusters[k]);
      next.push_back(std::move(merged));
      acc += hit + enumerate_expected_fidelity(std::move(next), planted_sets,
                                               total_merges);
      ++count;
    }
  return acc / static_cast<double>(count);
}

std::set<std::vector<std::int64_t>> planted_leaf_sets(const MergeTree& tree) {
  std::set<std::vector<std::int64_t>> sets;
  std::map<std::int64_t, std::vector<std::int64_t>> current;
  for (const auto& step : tree) {
    const auto leaves = [&current](std::int64_t id) {
      const auto it = current.find(id);
      if (it != current.end()) return it->second;
      return std::vector<std::int64_t>{id};
    };
    std::vector<std::int64_t> merged = leaves(step.a);
    const auto rhs = leaves(step.b);
    merged.insert(merged.end(), rhs.begin(), rhs.end());
    std::sort(merged.begin(), merged.end());
    sets.insert(merged);
    current[step.parent] = std::move(merged);
  }
  return sets;
}

}  // namespace

TEST_CASE("stroke files parse and produce one box per stroke") {
  std::istringstream in("0,0;2,3\n1,1;1,1;1,1\n5,5;6,7;4,2\n");
  const StrokeFile file = parse_stroke_file(in);
  REQUIRE(file.strokes.size() == 3);
  const auto boxes = stroke_bboxes(file);
  REQUIRE(boxes.size() == 3);
  CHECK(boxes[0].min_x == 0.0);
  CHECK(boxes[0].max_x == 2.0);
  CHECK(boxes[0].max_y == 3.0);
  // A repeated single point gives a degenerate zero-area box.
  CHECK(boxes[1].width() == 0.0);
  CHECK(boxes[1].height() == 0.0);
  // Order-preserving.
  CHECK(boxes[2].min_x == 4.0);
  CHECK(boxes[2].max_y == 7.0);
}

TEST_CASE("stroke parse errors carry the line number") {
  std::istringstream one_point("0,0;1,1\n3,3\n");
  try {
    (void)parse_stroke_file(one_point);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  std::istringstream garbage("0,0;x,y\n");
  CHECK_THROWS_AS((void)parse_stroke_file(garbage), DataError);
}

TEST_CASE("grid regions tile the canvas exactly") {
  SUBCASE("16 tiles on a 100x100 canvas are 25x25 each") {
    const auto tiles = grid_regions(100, 100, 16);
    REQUIRE(tiles.size() == 16);
    for (const auto& t : tiles) {
      CHECK(t.width() == 25.0);
      CHECK(t.height() == 25.0);
    }
  }
  SUBCASE("one tile is the full canvas") {
    const auto tiles = grid_regions(640, 480, 1);
    REQUIRE(tiles.size() == 1);
    CHECK(tiles[0].min_x == 0.0);
    CHECK(tiles[0].max_x == 640.0);
    CHECK(tiles[0].max_y == 480.0);
  }
  SUBCASE("union covers the canvas with no overlap") {
    const auto tiles = grid_regions(100, 100, 12);  // 3x4 factorization
    double area = 0.0;
    for (const auto& t : tiles) area += t.width() * t.height();
    CHECK(area == doctest::Approx(100.0 * 100.0).epsilon(1e-12));
    for (std::size_t i = 0; i < tiles.size(); ++i)
      for (std::size_t j = i + 1; j < tiles.size(); ++j) {
        const double ox = std::min(tiles[i].max_x, tiles[j].max_x) -
                          std::max(tiles[i].min_x, tiles[j].min_x);
        const double oy = std::min(tiles[i].max_y, tiles[j].max_y) -
                          std::max(tiles[i].min_y, tiles[j].min_y);
        CHECK((ox <= 0.0 || oy <= 0.0));  // at most a shared edge
      }
  }
  SUBCASE("k beyond capacity is rejected") {
    CHECK_THROWS_AS((void)grid_regions(10, 10, 101), ShapeError);
    CHECK_THROWS_AS((void)grid_regions(10, 10, 0), ShapeError);
  }
}

TEST_CASE("stroke features have the requested width") {
  std::istringstream in("0,0;10,0;10,10;0,10\n");
  const StrokeFile file = parse_stroke_file(in);
  const auto rows = stroke_file_features(file, 16);
  REQUIRE(rows.size() == 16);
  CHECK(rows[2] == 10.0);  // box width
  CHECK(rows[3] == 10.0);  // box height
  CHECK_THROWS_AS((void)stroke_file_features(file, 8), ConfigError);
}

TEST_CASE("random merge trees are full binary merge trees") {
  Rng rng(7);
  for (std::size_t n : {2u, 5u, 9u}) {
    const MergeTree tree = random_merge_tree(n, rng);
    REQUIRE(tree.size() == n - 1);
    const HierarchyTrace trace = tree_to_trace(tree, Branch::photo);
    std::vector<std::int64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
    CHECK(validate_trace(trace, ids) == std::nullopt);
    const auto depths = node_depths(tree, n);
    CHECK(depths[static_cast<std::size_t>(tree.back().parent)] == 0);
    for (std::size_t leaf = 0; leaf < n; ++leaf) CHECK(depths[leaf] >= 1);
  }
}

TEST_CASE("induced subtrees are valid merge trees over the kept leaves") {
  Rng rng(11);
  const std::size_t n = 9;
  const MergeTree tree = random_merge_tree(n, rng);
  const std::vector<std::size_t> kept = {0, 2, 3, 6, 8};
  const MergeTree induced = induce_subtree(tree, n, kept);
  REQUIRE(induced.size() == kept.size() - 1);
  std::vector<std::int64_t> ids(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i)
    ids[i] = static_cast<std::int64_t>(i);
  CHECK(validate_trace(tree_to_trace(induced, Branch::sketch), ids) ==
        std::nullopt);
}

TEST_CASE("replaying the planted tree gives fidelity one") {
  Rng rng(13);
  const std::size_t n = 7;
  const MergeTree tree = random_merge_tree(n, rng);
  CHECK(trace_fidelity(tree_to_trace(tree, Branch::photo), tree, n) == 1.0);
}

TEST_CASE("random-policy fidelity matches the exhaustive enumeration") {
  Rng rng(17);
  const std::size_t n = 5;
  const MergeTree planted = random_merge_tree(n, rng);
  const auto planted_sets = planted_leaf_sets(planted);

  std::vector<std::vector<std::int64_t>> singletons;
  for (std::size_t i = 0; i < n; ++i)
    singletons.push_back({static_cast<std::int64_t>(i)});
  const double expected =
      enumerate_expected_fidelity(singletons, planted_sets, n - 1);

  double acc = 0.0;
  const std::size_t trials = 20000;
  for (std::size_t t = 0; t < trials; ++t)
    acc += trace_fidelity(random_policy_trace(n, rng), planted, n);
  const double empirical = acc / static_cast<double>(trials);
  CHECK(std::abs(empirical - expected) < 0.02);
}

TEST_CASE("generation is a pure function of the spec") {
  const SyntheticSpec spec = small_spec();
  const auto dir_a = temp_dir("gen_a");
  const auto dir_b = temp_dir("gen_b");
  write_dataset(dir_a.string(), generate_dataset(spec));
  write_dataset(dir_b.string(), generate_dataset(spec));
  for (const char* name : {"manifest.txt", "features.bin", "split.txt"})
    CHECK(read_file(dir_a / name) == read_file(dir_b / name));

  SyntheticSpec other = spec;
  other.seed = 43;
  const auto dir_c = temp_dir("gen_c");
  write_dataset(dir_c.string(), generate_dataset(other));
  CHECK(read_file(dir_a / "features.bin") != read_file(dir_c / "features.bin"));
}

TEST_CASE("datasets round-trip bit-exactly through the directory format") {
  const auto dir_a = temp_dir("roundtrip_a");
  const auto dir_b = temp_dir("roundtrip_b");
  write_dataset(dir_a.string(), generate_dataset(small_spec()));
  const Dataset loaded = read_dataset(dir_a.string());
  write_dataset(dir_b.string(), loaded);
  for (const char* name : {"manifest.txt", "features.bin", "split.txt"})
    CHECK(read_file(dir_a / name) == read_file(dir_b / name));
}

TEST_CASE("corrupt payloads are rejected with a diagnostic") {
  const auto dir = temp_dir("corrupt");
  write_dataset(dir.string(), generate_dataset(small_spec()));
  {
    std::fstream f(dir / "features.bin",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    const char byte = 0x5A;
    f.write(&byte, 1);
  }
  CHECK_THROWS_AS((void)read_dataset(dir.string()), DataError);
  CHECK_THROWS_AS((void)read_dataset((dir / "missing").string()), DataError);
}

TEST_CASE("train and test identity sets are disjoint and complete") {
  const Dataset ds = generate_dataset(small_spec());
  std::set<std::int64_t> train(ds.train_identities.begin(),
                               ds.train_identities.end());
  std::set<std::int64_t> test(ds.test_identities.begin(),
                              ds.test_identities.end());
  CHECK(train.size() + test.size() == small_spec().n_identities);
  for (const auto id : test) CHECK(train.count(id) == 0);
}

TEST_CASE("detail levels strictly shrink the sketch") {
  SyntheticSpec spec = small_spec();
  const Dataset full = generate_dataset(spec);
  spec.detail_level = DetailLevel::coarse;
  const Dataset coarse = generate_dataset(spec);
  spec.detail_level = DetailLevel::coarse_pp;
  const Dataset coarse_pp = generate_dataset(spec);

  for (std::size_t i = 0; i < spec.n_identities; ++i) {
    const auto id = static_cast<std::int64_t>(i);
    const auto& f = full.get(id, Modality::sketch);
    const auto& c = coarse.get(id, Modality::sketch);
    const auto& cpp = coarse_pp.get(id, Modality::sketch);
    CHECK(c.n_regions < f.n_regions);
    CHECK(cpp.n_regions < c.n_regions);
    // Surviving strokes are bitwise identical to the full-detail record, so
    // degradation at evaluation time is a pure row subset.
    CHECK(validate_trace(tree_to_trace(c.tree, Branch::sketch),
                         [&] {
                           std::vector<std::int64_t> ids(c.n_regions);
                           for (std::size_t k = 0; k < c.n_regions; ++k)
                             ids[k] = static_cast<std::int64_t>(k);
                           return ids;
                         }()) == std::nullopt);
  }
}

TEST_CASE("degrading a record keeps surviving rows bitwise and trees valid") {
  const Dataset full = generate_dataset(small_spec());
  const auto& sketch = full.get(0, Modality::sketch);
  const RegionRecord coarse =
      degrade_record(sketch, DetailLevel::coarse, full.d_raw);
  CHECK(coarse.n_regions < sketch.n_regions);
  // Every surviving row exists verbatim in the source record.
  for (std::size_t i = 0; i < coarse.n_regions; ++i) {
    bool found = false;
    for (std::size_t j = 0; j < sketch.n_regions && !found; ++j) {
      bool equal = true;
      for (std::size_t k = 0; k < full.d_raw; ++k)
        if (coarse.features[i * full.d_raw + k] !=
            sketch.features[j * full.d_raw + k]) {
          equal = false;
          break;
        }
      found = equal;
    }
    CHECK(found);
  }
  std::vector<std::int64_t> ids(coarse.n_regions);
  for (std::size_t k = 0; k < coarse.n_regions; ++k)
    ids[k] = static_cast<std::int64_t>(k);
  CHECK(validate_trace(tree_to_trace(coarse.tree, Branch::sketch), ids) ==
        std::nullopt);
}

TEST_CASE("noise-free features classify perfectly by nearest prototype") {
  SyntheticSpec spec = small_spec();
  spec.noise_scale = 0.0;
  const Dataset ds = generate_dataset(spec);

  // Photo leaves are the noise-free prototypes; every sketch stroke must be
  // nearest to a prototype of its own identity.
  for (const auto& rec : ds.records) {
    if (rec.modality != Modality::sketch) continue;
    for (std::size_t i = 0; i < rec.n_regions; ++i) {
      double best = 1e300;
      std::int64_t best_identity = -1;
      for (const auto& photo : ds.records) {
        if (photo.modality != Modality::photo) continue;
        for (std::size_t j = 0; j < photo.n_regions; ++j) {
          double dist = 0.0;
          for (std::size_t k = 0; k < ds.d_raw; ++k) {
            const double d = rec.features[i * ds.d_raw + k] -
                             photo.features[j * ds.d_raw + k];
            dist += d * d;
          }
          if (dist < best) {
            best = dist;
            best_identity = photo.identity;
          }
        }
      }
      CHECK(best_identity == rec.identity);
    }
  }
}
