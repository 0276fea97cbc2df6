#pragma once

#include <string>
#include <vector>

#include "hiermatch/dataset.hpp"
#include "hiermatch/embedder.hpp"

namespace hiermatch {

/// Retrieval metrics for one evaluation run: test sketches query a gallery
/// of all test photos, ranked by squared Euclidean distance between
/// embed_single outputs, ties broken by gallery index.
struct RetrievalReport {
  struct QueryResult {
    std::int64_t identity = 0;
    std::size_t rank = 0;  // 1-based rank of the true-match photo
    std::int64_t top_identity = 0;
    double true_match_distance = 0.0;
  };

  double acc_at_1 = 0.0;
  double acc_at_10 = 0.0;
  std::vector<QueryResult> queries;
  std::size_t gallery_size = 0;
  std::string config_fingerprint;
  std::string build_id;
  double wall_seconds = 0.0;
};

/// Runs retrieval over the dataset's test split. `query_detail` degrades the
/// query sketches (the gallery is untouched). Explicit-hierarchy models
/// replay each record's planted tree.
RetrievalReport evaluate_retrieval(const Dataset& data,
                                   const ModelParams& params,
                                   const ModelConfig& cfg,
                                   DetailLevel query_detail = DetailLevel::full,
                                   const std::string& fingerprint = "");

/// Aligned-text rendering (includes wall-clock).
std::string report_table(const RetrievalReport& report);
/// Machine-readable CSV; deterministic for identical inputs (no wall-clock).
std::string report_csv(const RetrievalReport& report);

}  // namespace hiermatch
