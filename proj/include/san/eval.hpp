#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "san/datamodel.hpp"
#include "san/model.hpp"
#include "san/rng.hpp"
#include "san/tensor.hpp"

namespace san {

struct DescriptorSet {
  Tensor mat;  // (n, dim)
  std::vector<int> ids;
  std::vector<int> cams;  // -1 where the record has no camera
  std::vector<std::string> paths;

  int size() const { return mat.empty() ? 0 : mat.dim(0); }
  int dim() const { return mat.ndim() == 2 ? mat.dim(1) : 0; }
};

// Runs the model in eval mode over the given record indices.
DescriptorSet extract_descriptors(SanModel& model,
                                  const DatasetManifest& manifest,
                                  const std::vector<int>& subset,
                                  const PreprocessOptions& prep,
                                  int batch_size = 16);

// Euclidean distances, (|Q| x |G|).
Tensor pairwise_distance(const Tensor& queries, const Tensor& gallery);

// Exclusion mask: exclude[i * n_gallery + j] != 0 removes gallery j from
// query i's ranking entirely. Pass an empty vector for no exclusions.
using ExclusionMask = std::vector<std::uint8_t>;

struct RankOutcome {
  std::vector<int> first_match_rank;  // 1-based; -1 for dropped queries
  int kept = 0;
  int dropped = 0;
};

// CMC at ranks 1..max_rank. Ties break by ascending gallery index. Queries
// with no non-excluded true match are dropped from the average and counted.
std::vector<double> compute_cmc(const Tensor& dist, const std::vector<int>& q_ids,
                                const std::vector<int>& g_ids,
                                const ExclusionMask& exclusions, int max_rank,
                                RankOutcome* outcome = nullptr);

// Mean average precision; AP averages precision-at-hit over a query's
// non-excluded true matches.
double compute_map(const Tensor& dist, const std::vector<int>& q_ids,
                   const std::vector<int>& g_ids,
                   const ExclusionMask& exclusions,
                   RankOutcome* outcome = nullptr);

struct Protocol {
  std::string name;
  std::vector<int> query_idx;    // record indices into the manifest
  std::vector<int> gallery_idx;
  ExclusionMask exclusions;      // |Q| x |G|, may be empty
  std::string exclusion_rule;    // human-readable, echoed into reports
};

// vehicleid: probe vs gallery splits as given, no exclusions.
// veri:      probe vs gallery splits, same-camera gallery entries excluded.
// plain:     leave-one-out over the non-train records (or all records when
//            the manifest has no eval split).
Protocol build_protocol(const DatasetManifest& manifest, const std::string& name);

// VehicleID repeated-draw variant: one random image per test identity is
// drawn into the gallery from the union of gallery and probe records, the
// rest become probes. Gallery size stays equal to the identity count.
Protocol build_vehicleid_protocol_resampled(const DatasetManifest& manifest,
                                            Rng& rng);

struct EvalReport {
  std::string protocol;
  std::string exclusion_rule;
  std::vector<double> cmc;  // ranks 1..cmc.size()
  double map = 0.0;
  int num_queries = 0;
  int num_gallery = 0;
  int num_dropped_queries = 0;
  std::vector<int> per_query_ranks;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport evaluate(const DescriptorSet& queries, const DescriptorSet& gallery,
                    const Protocol& protocol, int max_rank = 20);

void write_report(const EvalReport& report, const std::string& json_path);
EvalReport load_report(const std::string& json_path);
// CSV with a (rank, rate) row per CMC entry.
void write_cmc_csv(const EvalReport& report, const std::string& csv_path);

}  // namespace san
