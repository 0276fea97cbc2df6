#include "hiermatch/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "hiermatch/config.hpp"

namespace hiermatch {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::vector<double> embed_record(const Dataset& data, const RegionRecord& rec,
                                 const ModelParams& params,
                                 const ModelConfig& cfg) {
  HierarchyTrace script;
  const HierarchyTrace* script_ptr = nullptr;
  if (cfg.explicit_hierarchy) {
    if (rec.tree.empty())
      throw DataError("explicit hierarchy model needs planted trees in the "
                      "evaluation dataset");
    script = tree_to_trace(rec.tree, rec.modality == Modality::sketch
                                         ? Branch::sketch
                                         : Branch::photo);
    script_ptr = &script;
  }
  const SingleEmbedding emb = embed_single(
      record_tensor(data, rec), params, cfg,
      rec.modality == Modality::sketch ? Branch::sketch : Branch::photo,
      script_ptr);
  const auto v = emb.final.values();
  return {v.begin(), v.end()};
}

}  // namespace

RetrievalReport evaluate_retrieval(const Dataset& data,
                                   const ModelParams& params,
                                   const ModelConfig& cfg,
                                   DetailLevel query_detail,
                                   const std::string& fingerprint) {
  const auto start = std::chrono::steady_clock::now();
  if (data.test_identities.empty())
    throw DataError("dataset has no test identities");

  std::vector<std::int64_t> gallery_ids = data.test_identities;
  std::sort(gallery_ids.begin(), gallery_ids.end());

  std::vector<std::vector<double>> gallery;
  gallery.reserve(gallery_ids.size());
  for (const auto id : gallery_ids)
    gallery.push_back(
        embed_record(data, data.get(id, Modality::photo), params, cfg));

  RetrievalReport report;
  report.gallery_size = gallery.size();
  report.config_fingerprint = fingerprint;
  report.build_id = build_identifier();

  std::size_t hits1 = 0, hits10 = 0;
  for (const auto id : gallery_ids) {
    RegionRecord query = data.get(id, Modality::sketch);
    if (query_detail != DetailLevel::full)
      query = degrade_record(query, query_detail, data.d_raw);
    const std::vector<double> q = embed_record(data, query, params, cfg);

    std::size_t true_pos = gallery.size();
    std::vector<double> dist(gallery.size());
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      dist[g] = squared_distance(q, gallery[g]);
      if (gallery_ids[g] == id) true_pos = g;
    }
    // Rank with ties broken by gallery index: strictly closer items plus
    // equal-distance items at a smaller index come first.
    std::size_t rank = 1;
    std::size_t best = 0;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      if (g == true_pos) continue;
      if (dist[g] < dist[true_pos] || (dist[g] == dist[true_pos] && g < true_pos))
        ++rank;
      if (dist[g] < dist[best] || (dist[g] == dist[best] && g < best)) best = g;
    }
    RetrievalReport::QueryResult qr;
    qr.identity = id;
    qr.rank = rank;
    qr.top_identity = gallery_ids[best];
    qr.true_match_distance = dist[true_pos];
    report.queries.push_back(qr);
    if (rank <= 1) ++hits1;
    if (rank <= 10) ++hits10;
  }

  const double n = static_cast<double>(report.queries.size());
  report.acc_at_1 = static_cast<double>(hits1) / n;
  report.acc_at_10 = static_cast<double>(hits10) / n;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

std::string report_table(const RetrievalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "gallery size   " << report.gallery_size << "\n";
  out << "queries        " << report.queries.size() << "\n";
  out << "acc@1          " << report.acc_at_1 << "\n";
  out << "acc@10         " << report.acc_at_10 << "\n";
  out << "fingerprint    " << report.config_fingerprint << "\n";
  out << "build          " << report.build_id << "\n";
  out << "wall seconds   " << std::setprecision(2) << report.wall_seconds
      << "\n";
  return out.str();
}

std::string report_csv(const RetrievalReport& report) {
  std::ostringstream out;
  out << "# acc@1," << report.acc_at_1 << "\n";
  out << "# acc@10," << report.acc_at_10 << "\n";
  out << "# gallery," << report.gallery_size << "\n";
  out << "# fingerprint," << report.config_fingerprint << "\n";
  out << "# build," << report.build_id << "\n";
  out << "query_identity,rank,top_identity,true_match_distance\n";
  for (const auto& q : report.queries)
    out << q.identity << ',' << q.rank << ',' << q.top_identity << ','
        << q.true_match_distance << "\n";
  return out.str();
}

}  // namespace hiermatch
