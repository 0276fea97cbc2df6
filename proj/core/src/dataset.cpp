#include "hiermatch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hiermatch/config.hpp"

namespace hiermatch {

const char* modality_name(Modality m) {
  return m == Modality::sketch ? "sketch" : "photo";
}

Modality parse_modality(const std::string& s) {
  if (s == "sketch") return Modality::sketch;
  if (s == "photo") return Modality::photo;
  throw DataError("unknown modality: " + s);
}

const RegionRecord* Dataset::find(std::int64_t identity, Modality m) const {
  for (const auto& r : records)
    if (r.identity == identity && r.modality == m) return &r;
  return nullptr;
}

const RegionRecord& Dataset::get(std::int64_t identity, Modality m) const {
  const RegionRecord* r = find(identity, m);
  if (r == nullptr)
    throw DataError("dataset has no " + std::string(modality_name(m)) +
                    " record for identity " + std::to_string(identity));
  return *r;
}

namespace {

std::string join_counts(const std::vector<std::size_t>& v) {
  if (v.empty()) return "-";
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << ',';
    out << v[i];
  }
  return out.str();
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  if (text == "-") return out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoull(item));
  return out;
}

std::string join_tree(const MergeTree& tree) {
  if (tree.empty()) return "-";
  std::ostringstream out;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (i) out << ';';
    out << tree[i].a << ',' << tree[i].b << ',' << tree[i].parent;
  }
  return out.str();
}

MergeTree parse_tree(const std::string& text) {
  MergeTree tree;
  if (text == "-") return tree;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    MergeStep step;
    char c1 = 0, c2 = 0;
    std::istringstream ss(item);
    if (!(ss >> step.a >> c1 >> step.b >> c2 >> step.parent) || c1 != ',' ||
        c2 != ',')
      throw DataError("malformed tree entry: " + item);
    tree.push_back(step);
  }
  return tree;
}

std::string features_checksum(const std::vector<unsigned char>& bytes) {
  const std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
  std::ostringstream out;
  out << std::hex;
  for (int shift = 60; shift >= 0; shift -= 4) out << ((h >> shift) & 0xF);
  return out.str();
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<unsigned char> payload;
  std::vector<std::size_t> offsets;
  offsets.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    offsets.push_back(payload.size());
    const std::size_t bytes = rec.features.size() * sizeof(double);
    const std::size_t base = payload.size();
    payload.resize(base + bytes);
    std::memcpy(payload.data() + base, rec.features.data(), bytes);
  }

  {
    std::ofstream bin(fs::path(dir) / "features.bin", std::ios::binary);
    if (!bin) throw DataError("cannot write features.bin in " + dir);
    bin.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
  }

  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw DataError("cannot write manifest.txt in " + dir);
  manifest << "hiermatch-dataset\n";
  manifest << "version 1\n";
  manifest << "d_raw " << ds.d_raw << "\n";
  manifest << "records " << ds.records.size() << "\n";
  manifest << "features_checksum " << features_checksum(payload) << "\n";
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    if (rec.features.size() != rec.n_regions * ds.d_raw)
      throw DataError("record feature size does not match region count");
    manifest << "record " << rec.identity << ' ' << modality_name(rec.modality)
             << ' ' << rec.n_regions << ' ' << offsets[i] << " depths="
             << join_counts(rec.depths) << " tree=" << join_tree(rec.tree)
             << "\n";
  }

  std::ofstream split(fs::path(dir) / "split.txt");
  if (!split) throw DataError("cannot write split.txt in " + dir);
  for (const auto id : ds.train_identities) split << "train " << id << "\n";
  for (const auto id : ds.test_identities) split << "test " << id << "\n";
}

Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path base(dir);
  std::ifstream manifest(base / "manifest.txt");
  if (!manifest)
    throw DataError("cannot open dataset manifest: " +
                    (base / "manifest.txt").string());

  Dataset ds;
  std::string line;
  if (!std::getline(manifest, line) || line != "hiermatch-dataset")
    throw DataError("manifest.txt is not a hiermatch dataset");

  std::vector<std::size_t> offsets;
  std::string stored_checksum;
  std::size_t declared_records = 0;
  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "version") {
      std::size_t v = 0;
      in >> v;
      if (v != 1)
        throw DataError("unsupported dataset version " + std::to_string(v));
    } else if (tag == "d_raw") {
      in >> ds.d_raw;
    } else if (tag == "records") {
      in >> declared_records;
    } else if (tag == "features_checksum") {
      in >> stored_checksum;
    } else if (tag == "record") {
      RegionRecord rec;
      std::string modality, depths, tree;
      std::size_t offset = 0;
      if (!(in >> rec.identity >> modality >> rec.n_regions >> offset >>
            depths >> tree))
        throw DataError("manifest line " + std::to_string(line_no) +
                        ": malformed record entry");
      rec.modality = parse_modality(modality);
      if (depths.rfind("depths=", 0) != 0 || tree.rfind("tree=", 0) != 0)
        throw DataError("manifest line " + std::to_string(line_no) +
                        ": malformed record fields");
      rec.depths = parse_counts(depths.substr(7));
      rec.tree = parse_tree(tree.substr(5));
      if (!rec.depths.empty() && rec.depths.size() != rec.n_regions)
        throw DataError("manifest line " + std::to_string(line_no) +
                        ": depth count mismatch");
      offsets.push_back(offset);
      ds.records.push_back(std::move(rec));
    } else {
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": unknown tag '" + tag + "'");
    }
  }
  if (ds.d_raw == 0) throw DataError("manifest is missing d_raw");
  if (ds.records.size() != declared_records)
    throw DataError("manifest declares " + std::to_string(declared_records) +
                    " records but lists " + std::to_string(ds.records.size()));

  std::ifstream bin(base / "features.bin", std::ios::binary);
  if (!bin)
    throw DataError("cannot open dataset payload: " +
                    (base / "features.bin").string());
  std::vector<unsigned char> payload(
      (std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (!stored_checksum.empty() && features_checksum(payload) != stored_checksum)
    throw DataError("features.bin checksum mismatch; dataset is corrupt");

  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    auto& rec = ds.records[i];
    const std::size_t bytes = rec.n_regions * ds.d_raw * sizeof(double);
    if (offsets[i] + bytes > payload.size())
      throw DataError("features.bin is truncated");
    rec.features.resize(rec.n_regions * ds.d_raw);
    std::memcpy(rec.features.data(), payload.data() + offsets[i], bytes);
  }

  std::ifstream split(base / "split.txt");
  if (!split)
    throw DataError("cannot open dataset split: " + (base / "split.txt").string());
  line_no = 0;
  while (std::getline(split, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string tag;
    std::int64_t id = 0;
    if (!(in >> tag >> id))
      throw DataError("split.txt line " + std::to_string(line_no) +
                      ": malformed entry");
    if (tag == "train") ds.train_identities.push_back(id);
    else if (tag == "test") ds.test_identities.push_back(id);
    else
      throw DataError("split.txt line " + std::to_string(line_no) +
                      ": unknown tag '" + tag + "'");
  }
  return ds;
}

Tensor record_tensor(const Dataset& ds, const RegionRecord& rec) {
  return Tensor::from_values(rec.n_regions, ds.d_raw, rec.features);
}

RegionRecord degrade_record(const RegionRecord& rec, DetailLevel level,
                            std::size_t d_raw) {
  if (level == DetailLevel::full) return rec;
  if (rec.depths.size() != rec.n_regions)
    throw DataError("record has no depth annotations; cannot derive " +
                    std::string(detail_level_name(level)) + " variant");
  const std::size_t n = rec.n_regions;
  const std::size_t n_detail = n / 2;
  const std::size_t drop =
      level == DetailLevel::coarse ? n_detail / 2 : n_detail;

  // Detail ranking: deepest first, ties to the later region.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&rec](std::size_t a, std::size_t b) {
    if (rec.depths[a] != rec.depths[b]) return rec.depths[a] > rec.depths[b];
    return a > b;
  });
  std::vector<bool> dropped(n, false);
  for (std::size_t i = 0; i < drop; ++i) dropped[order[i]] = true;

  RegionRecord out;
  out.identity = rec.identity;
  out.modality = rec.modality;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (dropped[i]) continue;
    kept.push_back(i);
    out.depths.push_back(rec.depths[i]);
    out.features.insert(out.features.end(),
                        rec.features.begin() + static_cast<std::ptrdiff_t>(i * d_raw),
                        rec.features.begin() + static_cast<std::ptrdiff_t>((i + 1) * d_raw));
  }
  out.n_regions = kept.size();
  if (!rec.tree.empty())
    out.tree = induce_subtree(rec.tree, n, kept);
  return out;
}

Dataset generate_dataset(const SyntheticSpec& spec) {
  if (spec.n_identities == 0) throw ConfigError("n_identities must be positive");
  if (spec.d_raw == 0) throw ConfigError("d_raw must be positive");
  if (spec.n_regions_photo < 1)
    throw ConfigError("n_regions_photo must be at least 1");
  if (spec.n_strokes_min < 4)
    throw ConfigError("n_strokes_min must be at least 4");
  if (spec.n_strokes_max < spec.n_strokes_min ||
      spec.n_strokes_max > spec.n_regions_photo)
    throw ConfigError("need n_strokes_min <= n_strokes_max <= n_regions_photo");
  if (spec.train_fraction < 0.0 || spec.train_fraction > 1.0)
    throw ConfigError("train_fraction must lie in [0, 1]");

  Dataset ds;
  ds.d_raw = spec.d_raw;
  const std::size_t n = spec.n_regions_photo;

  for (std::size_t identity = 0; identity < spec.n_identities; ++identity) {
    Rng rng(mix_seed(spec.seed, identity + 1));
    const MergeTree tree = random_merge_tree(n, rng);
    const std::vector<std::size_t> depths = node_depths(tree, n);

    // Per-node contributions: the root carries the identity signal, deeper
    // nodes add progressively fainter detail.
    const std::size_t total_nodes = 2 * n - 1;
    std::vector<double> contrib(total_nodes * spec.d_raw);
    for (std::size_t node = 0; node < total_nodes; ++node) {
      const double amp =
          node == static_cast<std::size_t>(tree.back().parent)
              ? spec.root_scale
              : std::pow(spec.detail_decay,
                         static_cast<double>(depths[node]));
      for (std::size_t k = 0; k < spec.d_raw; ++k)
        contrib[node * spec.d_raw + k] = amp * rng.normal();
    }

    // Leaf prototypes: sum of contributions on the root path.
    std::vector<std::int64_t> parent(total_nodes, -1);
    for (const auto& step : tree) {
      parent[static_cast<std::size_t>(step.a)] = step.parent;
      parent[static_cast<std::size_t>(step.b)] = step.parent;
    }
    std::vector<double> prototypes(n * spec.d_raw, 0.0);
    for (std::size_t leaf = 0; leaf < n; ++leaf) {
      std::int64_t node = static_cast<std::int64_t>(leaf);
      while (node >= 0) {
        const auto* c = &contrib[static_cast<std::size_t>(node) * spec.d_raw];
        for (std::size_t k = 0; k < spec.d_raw; ++k)
          prototypes[leaf * spec.d_raw + k] += c[k];
        node = parent[static_cast<std::size_t>(node)];
      }
    }

    if (spec.feature_scale > 0.0) {
      double mean_sq = 0.0;
      for (const double v : prototypes) mean_sq += v * v;
      mean_sq /= static_cast<double>(prototypes.size());
      if (mean_sq > 0.0) {
        const double rescale = spec.feature_scale / std::sqrt(mean_sq);
        for (double& v : prototypes) v *= rescale;
      }
    }

    // Photo record: every leaf plus modality noise.
    RegionRecord photo;
    photo.identity = static_cast<std::int64_t>(identity);
    photo.modality = Modality::photo;
    photo.n_regions = n;
    photo.features.resize(n * spec.d_raw);
    for (std::size_t i = 0; i < photo.features.size(); ++i)
      photo.features[i] = prototypes[i] + spec.noise_scale * rng.normal();
    photo.depths.assign(depths.begin(),
                        depths.begin() + static_cast<std::ptrdiff_t>(n));
    photo.tree = tree;

    // Sketch record: the shallowest leaves are drawn first; the sketch keeps
    // n_s of them, then the requested detail level drops deep strokes.
    const std::size_t n_s =
        spec.n_strokes_min +
        static_cast<std::size_t>(rng.uniform_index(
            spec.n_strokes_max - spec.n_strokes_min + 1));
    std::vector<std::size_t> by_depth(n);
    for (std::size_t i = 0; i < n; ++i) by_depth[i] = i;
    std::sort(by_depth.begin(), by_depth.end(),
              [&depths](std::size_t a, std::size_t b) {
                if (depths[a] != depths[b]) return depths[a] < depths[b];
                return a < b;
              });
    std::vector<std::size_t> kept(by_depth.begin(),
                                  by_depth.begin() + static_cast<std::ptrdiff_t>(n_s));
    std::sort(kept.begin(), kept.end());

    RegionRecord sketch;
    sketch.identity = static_cast<std::int64_t>(identity);
    sketch.modality = Modality::sketch;
    sketch.n_regions = n_s;
    sketch.features.resize(n_s * spec.d_raw);
    sketch.depths.resize(n_s);
    for (std::size_t pos = 0; pos < n_s; ++pos) {
      const std::size_t leaf = kept[pos];
      sketch.depths[pos] = depths[leaf];
      for (std::size_t k = 0; k < spec.d_raw; ++k)
        sketch.features[pos * spec.d_raw + k] =
            prototypes[leaf * spec.d_raw + k] + spec.noise_scale * rng.normal();
    }
    sketch.tree = induce_subtree(tree, n, kept);
    if (spec.detail_level != DetailLevel::full)
      sketch = degrade_record(sketch, spec.detail_level, spec.d_raw);

    ds.records.push_back(std::move(photo));
    ds.records.push_back(std::move(sketch));
  }

  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(spec.n_identities)));
  for (std::size_t i = 0; i < spec.n_identities; ++i) {
    if (i < n_train)
      ds.train_identities.push_back(static_cast<std::int64_t>(i));
    else
      ds.test_identities.push_back(static_cast<std::int64_t>(i));
  }
  return ds;
}

}  // namespace hiermatch
