#include "hiermatch/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <set>
#include <sstream>

namespace hiermatch {

const char* branch_name(Branch b) {
  return b == Branch::sketch ? "sketch" : "photo";
}

Branch parse_branch(const std::string& s) {
  if (s == "sketch") return Branch::sketch;
  if (s == "photo") return Branch::photo;
  throw DataError("unknown branch name: " + s);
}

std::string HierarchyTrace::serialize() const {
  std::ostringstream out;
  for (const auto& e : entries)
    out << e.level << ',' << branch_name(e.branch) << ',' << e.a_id << ','
        << e.b_id << ',' << e.new_id << '\n';
  return out.str();
}

HierarchyTrace HierarchyTrace::parse(std::istream& in) {
  HierarchyTrace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    TraceEntry e;
    std::string branch;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    if (!(ls >> e.level >> c1) || c1 != ',' || !std::getline(ls, branch, ',') ||
        !(ls >> e.a_id >> c2 >> e.b_id >> c3 >> e.new_id) || c2 != ',' ||
        c3 != ',')
      throw DataError("trace parse error at line " + std::to_string(line_no));
    (void)c4;
    e.branch = parse_branch(branch);
    trace.entries.push_back(std::move(e));
  }
  return trace;
}

HierarchyTrace HierarchyTrace::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

std::optional<std::string> validate_trace(
    const HierarchyTrace& trace,
    const std::vector<std::int64_t>& original_ids) {
  std::set<std::int64_t> live(original_ids.begin(), original_ids.end());
  if (live.size() != original_ids.size())
    return "original node ids are not unique";
  if (trace.entries.size() + 1 != original_ids.size())
    return "trace has " + std::to_string(trace.entries.size()) +
           " merges for " + std::to_string(original_ids.size()) + " nodes";
  for (const auto& e : trace.entries) {
    if (e.a_id == e.b_id) return "merge consumes one node twice";
    if (!live.erase(e.a_id))
      return "merge consumes unknown node id " + std::to_string(e.a_id);
    if (!live.erase(e.b_id))
      return "merge consumes unknown node id " + std::to_string(e.b_id);
    if (!live.insert(e.new_id).second)
      return "node id produced twice: " + std::to_string(e.new_id);
  }
  if (live.size() != 1) return "trace does not reduce to a single root";
  return std::nullopt;
}

std::size_t pair_index_count(std::size_t n) { return n * (n - 1) / 2; }

std::size_t flatten_pair_index(std::size_t a, std::size_t b, std::size_t n) {
  if (a >= b || b >= n) throw ShapeError("flatten_pair_index: need a < b < n");
  // Row a starts after the first a rows of lengths n-1, n-2, ...
  return a * (2 * n - a - 1) / 2 + (b - a - 1);
}

std::pair<std::size_t, std::size_t> unflatten_pair_index(std::size_t h,
                                                         std::size_t n) {
  for (std::size_t a = 0; a + 1 < n; ++a) {
    const std::size_t row_len = n - 1 - a;
    if (h < row_len) return {a, a + 1 + h};
    h -= row_len;
  }
  throw ShapeError("unflatten_pair_index: index out of range");
}

Tensor compatibility_scores(const FeatureSet& x,
                            const HierarchyParams& params) {
  if (x.count() < 2)
    throw ShapeError("compatibility_scores: need at least two nodes");
  const Tensor projected = matmul(x.nodes, params.compat_proj);
  const Tensor gram = matmul_nt(projected, projected);
  return flatten_upper_triangle(gram);
}

GumbelSelection gumbel_st_select_with_noise(const Tensor& logits, double tau,
                                            const std::vector<double>& noise) {
  if (logits.rows() != 1 || logits.cols() < 1)
    throw ShapeError("gumbel_st_select: logits must be a nonempty row");
  if (tau <= 0.0) throw ConfigError("gumbel temperature must be positive");
  const std::size_t h = logits.cols();
  if (noise.size() != h)
    throw ShapeError("gumbel_st_select: noise length mismatch");

  const Tensor noise_row = Tensor::row_vector(noise);
  const Tensor perturbed = add(logits, noise_row);
  const Tensor soft = softmax_rows(scalar_mul(perturbed, 1.0 / tau));

  // Argmax on the pre-softmax values: immune to exp underflow at tiny tau,
  // and strict comparison gives the lowest index on ties.
  const auto pv = perturbed.values();
  std::size_t best = 0;
  for (std::size_t i = 1; i < h; ++i)
    if (pv[i] > pv[best]) best = i;

  std::vector<double> one_hot(h, 0.0);
  one_hot[best] = 1.0;
  GumbelSelection sel{soft, straight_through(soft, one_hot), best,
                      std::move(one_hot)};
  return sel;
}

GumbelSelection gumbel_st_select(const Tensor& logits, const GumbelConfig& cfg,
                                 Rng* rng) {
  const std::size_t h = logits.cols();
  std::vector<double> noise(h, 0.0);
  if (cfg.mode == SelectionMode::sample) {
    if (rng == nullptr)
      throw ConfigError("sample-mode selection requires a random source");
    noise = rng->gumbel_vector(h);
  }
  return gumbel_st_select_with_noise(logits, cfg.temperature, noise);
}

PairSelectors pair_selector_constants(std::size_t n) {
  const std::size_t h = pair_index_count(n);
  std::vector<double> first(h * n, 0.0), second(h * n, 0.0);
  std::size_t k = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b, ++k) {
      first[k * n + a] = 1.0;
      second[k * n + b] = 1.0;
    }
  return {Tensor::from_values(h, n, std::move(first)),
          Tensor::from_values(h, n, std::move(second))};
}

Tensor fuse_vectors(const Tensor& xa, const Tensor& xb,
                    const HierarchyParams& params) {
  return relu(matmul_nt(concat_last_dim(xa, xb), params.fuse_weight));
}

namespace {

FeatureSet assemble_next(const FeatureSet& x, const Tensor& fused,
                         std::size_t a, std::size_t b, std::int64_t new_id) {
  FeatureSet next;
  next.nodes = merge_rows(x.nodes, fused, a, b);
  next.node_ids = x.node_ids;
  next.node_ids[a] = new_id;
  next.node_ids.erase(next.node_ids.begin() + static_cast<std::ptrdiff_t>(b));
  next.branch = x.branch;
  return next;
}

}  // namespace

FeatureSet fuse_pair(const FeatureSet& x, std::size_t a, std::size_t b,
                     const HierarchyParams& params, std::int64_t new_id) {
  if (b >= x.count() || a >= b)
    throw ShapeError("fuse_pair: need a < b < node count");
  const Tensor fused = fuse_vectors(select_row(x.nodes, a),
                                    select_row(x.nodes, b), params);
  return assemble_next(x, fused, a, b, new_id);
}

StepResult hierarchy_step(const FeatureSet& x, const GumbelConfig& cfg,
                          const HierarchyParams& params, Rng* rng,
                          std::size_t level, std::int64_t new_id,
                          bool keep_soft) {
  const std::size_t n = x.count();
  if (n < 2) throw ShapeError("hierarchy_step: need at least two nodes");

  const Tensor scores = compatibility_scores(x, params);
  const GumbelSelection sel = gumbel_st_select(scores, cfg, rng);
  const auto [a, b] = unflatten_pair_index(sel.index, n);

  Tensor fused;
  if (cfg.mode == SelectionMode::sample) {
    // Gather the pair through the straight-through tensor: the forward value
    // is exactly rows a and b, the backward pass sees the soft weights.
    const PairSelectors selectors = pair_selector_constants(n);
    const Tensor row_a = matmul(sel.selection, selectors.first);
    const Tensor row_b = matmul(sel.selection, selectors.second);
    fused = fuse_vectors(matmul(row_a, x.nodes), matmul(row_b, x.nodes), params);
  } else {
    fused = fuse_vectors(select_row(x.nodes, a), select_row(x.nodes, b), params);
  }

  StepResult result;
  result.next = assemble_next(x, fused, a, b, new_id);
  result.entry.level = level;
  result.entry.branch = x.branch;
  result.entry.a_index = a;
  result.entry.b_index = b;
  result.entry.a_id = x.node_ids[a];
  result.entry.b_id = x.node_ids[b];
  result.entry.new_id = new_id;
  if (keep_soft) {
    const auto sv = sel.soft.values();
    result.entry.soft.assign(sv.begin(), sv.end());
  }
  return result;
}

StepResult hierarchy_replay_step(const FeatureSet& x, const TraceEntry& entry,
                                 const HierarchyParams& params,
                                 std::size_t level) {
  const auto find_pos = [&x](std::int64_t id) {
    const auto it = std::find(x.node_ids.begin(), x.node_ids.end(), id);
    if (it == x.node_ids.end())
      throw DataError("explicit hierarchy: node id " + std::to_string(id) +
                      " not present at level");
    return static_cast<std::size_t>(it - x.node_ids.begin());
  };
  std::size_t a = find_pos(entry.a_id);
  std::size_t b = find_pos(entry.b_id);
  if (a == b) throw DataError("explicit hierarchy: merge references one node twice");
  if (a > b) std::swap(a, b);

  StepResult result;
  result.next = fuse_pair(x, a, b, params, entry.new_id);
  result.entry.level = level;
  result.entry.branch = x.branch;
  result.entry.a_index = a;
  result.entry.b_index = b;
  result.entry.a_id = x.node_ids[a];
  result.entry.b_id = x.node_ids[b];
  result.entry.new_id = entry.new_id;
  return result;
}

}  // namespace hiermatch
