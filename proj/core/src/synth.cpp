#include "hiermatch/synth.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hiermatch/tensor.hpp"

namespace hiermatch {

MergeTree random_merge_tree(std::size_t n_leaves, Rng& rng) {
  if (n_leaves == 0) throw ShapeError("merge tree needs at least one leaf");
  std::vector<std::int64_t> roots(n_leaves);
  for (std::size_t i = 0; i < n_leaves; ++i)
    roots[i] = static_cast<std::int64_t>(i);
  MergeTree tree;
  std::int64_t next_id = static_cast<std::int64_t>(n_leaves);
  while (roots.size() > 1) {
    const std::size_t i =
        static_cast<std::size_t>(rng.uniform_index(roots.size()));
    std::size_t j =
        static_cast<std::size_t>(rng.uniform_index(roots.size() - 1));
    if (j >= i) ++j;
    const auto [lo, hi] = std::minmax(i, j);
    tree.push_back({roots[lo], roots[hi], next_id});
    roots[lo] = next_id++;
    roots.erase(roots.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return tree;
}

std::vector<std::size_t> node_depths(const MergeTree& tree,
                                     std::size_t n_leaves) {
  const std::size_t total = 2 * n_leaves - 1;
  std::vector<std::size_t> depth(total, 0);
  // Merges are recorded bottom-up; walking them in reverse visits every
  // parent before its children.
  for (auto it = tree.rbegin(); it != tree.rend(); ++it) {
    const std::size_t p = static_cast<std::size_t>(it->parent);
    depth[static_cast<std::size_t>(it->a)] = depth[p] + 1;
    depth[static_cast<std::size_t>(it->b)] = depth[p] + 1;
  }
  return depth;
}

MergeTree induce_subtree(const MergeTree& tree, std::size_t n_leaves,
                         const std::vector<std::size_t>& kept) {
  std::map<std::int64_t, std::int64_t> rep;  // original node -> induced node
  for (std::size_t pos = 0; pos < kept.size(); ++pos) {
    if (kept[pos] >= n_leaves)
      throw ShapeError("induce_subtree: kept index out of range");
    rep[static_cast<std::int64_t>(kept[pos])] = static_cast<std::int64_t>(pos);
  }
  if (rep.size() != kept.size())
    throw ShapeError("induce_subtree: kept leaves must be unique");
  MergeTree induced;
  std::int64_t next_id = static_cast<std::int64_t>(kept.size());
  for (const auto& step : tree) {
    const auto ia = rep.find(step.a);
    const auto ib = rep.find(step.b);
    if (ia != rep.end() && ib != rep.end()) {
      induced.push_back({ia->second, ib->second, next_id});
      rep[step.parent] = next_id++;
      rep.erase(step.a);
      rep.erase(step.b);
    } else if (ia != rep.end()) {
      rep[step.parent] = ia->second;
      rep.erase(step.a);
    } else if (ib != rep.end()) {
      rep[step.parent] = ib->second;
      rep.erase(step.b);
    }
  }
  return induced;
}

HierarchyTrace tree_to_trace(const MergeTree& tree, Branch branch) {
  HierarchyTrace trace;
  trace.entries.reserve(tree.size());
  for (std::size_t i = 0; i < tree.size(); ++i) {
    TraceEntry e;
    e.level = i;
    e.branch = branch;
    e.a_id = tree[i].a;
    e.b_id = tree[i].b;
    e.new_id = tree[i].parent;
    trace.entries.push_back(std::move(e));
  }
  return trace;
}

namespace {

// Leaf-sets of every internal node, as sorted id lists.
std::set<std::vector<std::int64_t>> internal_leaf_sets(const MergeTree& tree) {
  std::map<std::int64_t, std::vector<std::int64_t>> sets;
  std::set<std::vector<std::int64_t>> result;
  const auto leaves_of = [&sets](std::int64_t id) {
    const auto it = sets.find(id);
    if (it != sets.end()) return it->second;
    return std::vector<std::int64_t>{id};
  };
  for (const auto& step : tree) {
    std::vector<std::int64_t> merged = leaves_of(step.a);
    const auto rhs = leaves_of(step.b);
    merged.insert(merged.end(), rhs.begin(), rhs.end());
    std::sort(merged.begin(), merged.end());
    result.insert(merged);
    sets[step.parent] = std::move(merged);
  }
  return result;
}

}  // namespace

double trace_fidelity(const HierarchyTrace& trace, const MergeTree& planted,
                      std::size_t n_leaves) {
  if (trace.entries.empty()) return 0.0;
  const auto planted_sets = internal_leaf_sets(planted);
  std::map<std::int64_t, std::vector<std::int64_t>> sets;
  for (std::size_t i = 0; i < n_leaves; ++i)
    sets[static_cast<std::int64_t>(i)] = {static_cast<std::int64_t>(i)};
  std::size_t matches = 0;
  for (const auto& e : trace.entries) {
    const auto ia = sets.find(e.a_id);
    const auto ib = sets.find(e.b_id);
    if (ia == sets.end() || ib == sets.end())
      throw DataError("trace references unknown node id");
    std::vector<std::int64_t> merged = ia->second;
    merged.insert(merged.end(), ib->second.begin(), ib->second.end());
    std::sort(merged.begin(), merged.end());
    if (planted_sets.count(merged) > 0) ++matches;
    sets.erase(e.a_id);
    sets.erase(e.b_id);
    sets[e.new_id] = std::move(merged);
  }
  return static_cast<double>(matches) /
         static_cast<double>(trace.entries.size());
}

const char* detail_level_name(DetailLevel level) {
  switch (level) {
    case DetailLevel::full: return "full";
    case DetailLevel::coarse: return "coarse";
    case DetailLevel::coarse_pp: return "coarse++";
  }
  return "full";
}

DetailLevel parse_detail_level(const std::string& s) {
  if (s == "full") return DetailLevel::full;
  if (s == "coarse") return DetailLevel::coarse;
  if (s == "coarse++" || s == "coarse_pp" || s == "coarsepp")
    return DetailLevel::coarse_pp;
  throw ConfigError("unknown detail level: " + s);
}

namespace {

std::string trim_copy(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

void apply_spec_key(SyntheticSpec& spec, const std::string& key,
                    const std::string& value) {
  const auto as_count = [&](const std::string& v) {
    const long long x = std::stoll(v);
    if (x < 0) throw ConfigError("spec key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(x);
  };
  try {
    if (key == "n_identities") spec.n_identities = as_count(value);
    else if (key == "d_raw") spec.d_raw = as_count(value);
    else if (key == "n_regions_photo") spec.n_regions_photo = as_count(value);
    else if (key == "n_strokes_min") spec.n_strokes_min = as_count(value);
    else if (key == "n_strokes_max") spec.n_strokes_max = as_count(value);
    else if (key == "detail_level") spec.detail_level = parse_detail_level(value);
    else if (key == "noise_scale") spec.noise_scale = std::stod(value);
    else if (key == "seed") spec.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "train_fraction") spec.train_fraction = std::stod(value);
    else if (key == "detail_decay") spec.detail_decay = std::stod(value);
    else if (key == "root_scale") spec.root_scale = std::stod(value);
    else if (key == "feature_scale") spec.feature_scale = std::stod(value);
    else throw ConfigError("unknown spec key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad value for spec key '" + key + "': " + value);
  }
}

SyntheticSpec parse_spec_stream(std::istream& in) {
  SyntheticSpec spec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim_copy(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("spec line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    apply_spec_key(spec, trim_copy(text.substr(0, eq)),
                   trim_copy(text.substr(eq + 1)));
  }
  return spec;
}

}  // namespace

SyntheticSpec parse_synthetic_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file: " + path);
  return parse_spec_stream(in);
}

SyntheticSpec parse_synthetic_spec_string(const std::string& text) {
  std::istringstream in(text);
  return parse_spec_stream(in);
}

}  // namespace hiermatch
