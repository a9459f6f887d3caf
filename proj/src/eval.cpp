#include "san/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "san/check.hpp"

using json = nlohmann::json;

namespace san {

DescriptorSet extract_descriptors(SanModel& model,
                                  const DatasetManifest& manifest,
                                  const std::vector<int>& subset,
                                  const PreprocessOptions& prep,
                                  int batch_size) {
  SAN_CHECK(batch_size > 0, "batch size must be positive");
  DescriptorSet out;
  const int dim = model.descriptor_dim();
  const int n = static_cast<int>(subset.size());
  out.mat = Tensor({n, dim});
  out.ids.reserve(subset.size());
  out.cams.reserve(subset.size());
  out.paths.reserve(subset.size());

  const int s = model.config().input_size;
  for (int start = 0; start < n; start += batch_size) {
    const int bn = std::min(batch_size, n - start);
    Tensor batch({bn, s, s, 3});
    for (int b = 0; b < bn; ++b) {
      const VehicleRecord& r = manifest.records[subset[start + b]];
      ImageTensor img = load_and_preprocess(manifest, r, prep, /*flip=*/false);
      std::copy(img.data.data(), img.data.data() + img.data.size(),
                batch.data() + static_cast<std::size_t>(b) * img.data.size());
    }
    ForwardOutputs fwd = model.forward(batch, /*train=*/false);
    std::copy(fwd.descriptors.data(),
              fwd.descriptors.data() + fwd.descriptors.size(),
              out.mat.data() + static_cast<std::size_t>(start) * dim);
  }
  for (int idx : subset) {
    const VehicleRecord& r = manifest.records[idx];
    out.ids.push_back(r.identity);
    out.cams.push_back(r.camera ? *r.camera : -1);
    out.paths.push_back(r.image_path);
  }
  for (std::size_t i = 0; i < out.mat.size(); ++i)
    SAN_CHECK(std::isfinite(out.mat[i]), "descriptor contains a non-finite value");
  return out;
}

Tensor pairwise_distance(const Tensor& queries, const Tensor& gallery) {
  SAN_CHECK(queries.ndim() == 2 && gallery.ndim() == 2,
            "pairwise_distance expects matrices");
  SAN_CHECK(queries.dim(1) == gallery.dim(1), "feature dims differ: ",
            queries.dim(1), " vs ", gallery.dim(1));
  const int nq = queries.dim(0), ng = gallery.dim(0), dim = queries.dim(1);
  Tensor dist({nq, ng});
  for (int i = 0; i < nq; ++i) {
    const double* qi = queries.data() + static_cast<std::size_t>(i) * dim;
    double* drow = dist.data() + static_cast<std::size_t>(i) * ng;
    for (int j = 0; j < ng; ++j) {
      const double* gj = gallery.data() + static_cast<std::size_t>(j) * dim;
      double acc = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double diff = qi[k] - gj[k];
        acc += diff * diff;
      }
      drow[j] = std::sqrt(acc);
    }
  }
  return dist;
}

namespace {

// Gallery order for one query: ascending distance, ties by gallery index.
std::vector<int> ranked_gallery(const Tensor& dist, int qi,
                                const ExclusionMask& exclusions, int ng) {
  std::vector<int> order;
  order.reserve(ng);
  const std::size_t base = static_cast<std::size_t>(qi) * ng;
  for (int j = 0; j < ng; ++j)
    if (exclusions.empty() || !exclusions[base + j]) order.push_back(j);
  const double* drow = dist.data() + base;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return drow[a] < drow[b]; });
  return order;
}

void check_metric_args(const Tensor& dist, const std::vector<int>& q_ids,
                       const std::vector<int>& g_ids,
                       const ExclusionMask& exclusions) {
  SAN_CHECK(dist.ndim() == 2, "distance matrix expected");
  SAN_CHECK(dist.dim(0) == static_cast<int>(q_ids.size()),
            "query id count mismatch");
  SAN_CHECK(dist.dim(1) == static_cast<int>(g_ids.size()),
            "gallery id count mismatch");
  SAN_CHECK(exclusions.empty() || exclusions.size() == dist.size(),
            "exclusion mask size mismatch");
}

}  // namespace

std::vector<double> compute_cmc(const Tensor& dist, const std::vector<int>& q_ids,
                                const std::vector<int>& g_ids,
                                const ExclusionMask& exclusions, int max_rank,
                                RankOutcome* outcome) {
  check_metric_args(dist, q_ids, g_ids, exclusions);
  SAN_CHECK(max_rank >= 1, "max_rank must be positive");
  const int nq = dist.dim(0), ng = dist.dim(1);

  std::vector<double> cmc(max_rank, 0.0);
  RankOutcome local;
  local.first_match_rank.assign(nq, -1);
  for (int i = 0; i < nq; ++i) {
    const std::vector<int> order = ranked_gallery(dist, i, exclusions, ng);
    int first = -1;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (g_ids[order[r]] == q_ids[i]) {
        first = static_cast<int>(r) + 1;
        break;
      }
    }
    if (first < 0) {
      ++local.dropped;
      continue;
    }
    ++local.kept;
    local.first_match_rank[i] = first;
    for (int k = first - 1; k < max_rank; ++k) cmc[k] += 1.0;
  }
  if (local.kept == 0)
    throw ProtocolError("every query lacks a valid gallery match");
  for (double& v : cmc) v /= local.kept;
  if (outcome) *outcome = std::move(local);
  return cmc;
}

double compute_map(const Tensor& dist, const std::vector<int>& q_ids,
                   const std::vector<int>& g_ids,
                   const ExclusionMask& exclusions, RankOutcome* outcome) {
  check_metric_args(dist, q_ids, g_ids, exclusions);
  const int nq = dist.dim(0), ng = dist.dim(1);

  double ap_sum = 0.0;
  RankOutcome local;
  local.first_match_rank.assign(nq, -1);
  for (int i = 0; i < nq; ++i) {
    const std::vector<int> order = ranked_gallery(dist, i, exclusions, ng);
    int hits = 0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (g_ids[order[r]] == q_ids[i]) {
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        if (hits == 1) local.first_match_rank[i] = static_cast<int>(r) + 1;
      }
    }
    if (hits == 0) {
      ++local.dropped;
      continue;
    }
    ++local.kept;
    ap_sum += precision_sum / hits;
  }
  if (local.kept == 0)
    throw ProtocolError("every query lacks a valid gallery match");
  if (outcome) *outcome = std::move(local);
  return ap_sum / local.kept;
}

Protocol build_protocol(const DatasetManifest& manifest, const std::string& name) {
  Protocol p;
  p.name = name;
  if (name == "vehicleid") {
    p.query_idx = manifest.split_indices(Split::kProbe);
    p.gallery_idx = manifest.split_indices(Split::kGallery);
    p.exclusion_rule = "none";
    SAN_CHECK_DATA(!p.query_idx.empty() && !p.gallery_idx.empty(),
                   "vehicleid protocol needs probe and gallery splits");
  } else if (name == "veri") {
    p.query_idx = manifest.split_indices(Split::kProbe);
    p.gallery_idx = manifest.split_indices(Split::kGallery);
    SAN_CHECK_DATA(!p.query_idx.empty() && !p.gallery_idx.empty(),
                   "veri protocol needs probe and gallery splits");
    for (int idx : p.query_idx) {
      const VehicleRecord& r = manifest.records[idx];
      if (!r.camera)
        throw ProtocolError("veri protocol requires camera ids; record " +
                            r.image_path + " has none");
    }
    for (int idx : p.gallery_idx) {
      const VehicleRecord& r = manifest.records[idx];
      if (!r.camera)
        throw ProtocolError("veri protocol requires camera ids; record " +
                            r.image_path + " has none");
    }
    const std::size_t ng = p.gallery_idx.size();
    p.exclusions.assign(p.query_idx.size() * ng, 0);
    for (std::size_t i = 0; i < p.query_idx.size(); ++i) {
      const int q_cam = *manifest.records[p.query_idx[i]].camera;
      for (std::size_t j = 0; j < ng; ++j) {
        if (*manifest.records[p.gallery_idx[j]].camera == q_cam)
          p.exclusions[i * ng + j] = 1;
      }
    }
    p.exclusion_rule = "same-camera gallery entries removed per query";
  } else if (name == "plain") {
    std::vector<int> flat;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      if (manifest.records[i].split != Split::kTrain)
        flat.push_back(static_cast<int>(i));
    if (flat.empty()) {
      flat.resize(manifest.records.size());
      std::iota(flat.begin(), flat.end(), 0);
    }
    SAN_CHECK_DATA(flat.size() >= 2, "plain protocol needs at least 2 records");
    p.query_idx = flat;
    p.gallery_idx = flat;
    const std::size_t n = flat.size();
    p.exclusions.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) p.exclusions[i * n + i] = 1;
    p.exclusion_rule = "leave-one-out: each query excluded from its own gallery";
  } else {
    throw ConfigError("unknown protocol '" + name +
                      "' (expected vehicleid|veri|plain)");
  }
  return p;
}

Protocol build_vehicleid_protocol_resampled(const DatasetManifest& manifest,
                                            Rng& rng) {
  std::map<int, std::vector<int>> by_id;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const VehicleRecord& r = manifest.records[i];
    if (r.split != Split::kTrain) by_id[r.identity].push_back(static_cast<int>(i));
  }
  SAN_CHECK_DATA(!by_id.empty(), "no eval records to resample");

  Protocol p;
  p.name = "vehicleid";
  p.exclusion_rule = "none (resampled gallery draw)";
  for (auto& [id, indices] : by_id) {
    const int pick = rng.uniform_int(0, static_cast<int>(indices.size()) - 1);
    for (int k = 0; k < static_cast<int>(indices.size()); ++k) {
      if (k == pick)
        p.gallery_idx.push_back(indices[k]);
      else
        p.query_idx.push_back(indices[k]);
    }
  }
  SAN_CHECK_DATA(!p.query_idx.empty(),
                 "resampled draw left no probe images; need >= 2 per identity");
  return p;
}

EvalReport evaluate(const DescriptorSet& queries, const DescriptorSet& gallery,
                    const Protocol& protocol, int max_rank) {
  SAN_CHECK(queries.size() == static_cast<int>(protocol.query_idx.size()),
            "query descriptor count does not match the protocol");
  SAN_CHECK(gallery.size() == static_cast<int>(protocol.gallery_idx.size()),
            "gallery descriptor count does not match the protocol");
  Tensor dist = pairwise_distance(queries.mat, gallery.mat);
  RankOutcome cmc_outcome;
  EvalReport report;
  report.protocol = protocol.name;
  report.exclusion_rule = protocol.exclusion_rule;
  report.cmc = compute_cmc(dist, queries.ids, gallery.ids, protocol.exclusions,
                           max_rank, &cmc_outcome);
  report.map =
      compute_map(dist, queries.ids, gallery.ids, protocol.exclusions, nullptr);
  report.num_queries = queries.size();
  report.num_gallery = gallery.size();
  report.num_dropped_queries = cmc_outcome.dropped;
  report.per_query_ranks = std::move(cmc_outcome.first_match_rank);
  return report;
}

json EvalReport::to_json() const {
  json j;
  j["protocol"] = protocol;
  j["exclusion_rule"] = exclusion_rule;
  j["cmc"] = cmc;
  j["map"] = map;
  j["num_queries"] = num_queries;
  j["num_gallery"] = num_gallery;
  j["num_dropped_queries"] = num_dropped_queries;
  j["per_query_ranks"] = per_query_ranks;
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.protocol = j.at("protocol").get<std::string>();
  r.exclusion_rule = j.value("exclusion_rule", std::string());
  r.cmc = j.at("cmc").get<std::vector<double>>();
  r.map = j.at("map").get<double>();
  r.num_queries = j.value("num_queries", 0);
  r.num_gallery = j.value("num_gallery", 0);
  r.num_dropped_queries = j.value("num_dropped_queries", 0);
  if (j.contains("per_query_ranks"))
    r.per_query_ranks = j.at("per_query_ranks").get<std::vector<int>>();
  for (std::size_t k = 1; k < r.cmc.size(); ++k)
    SAN_CHECK_DATA(r.cmc[k] >= r.cmc[k - 1],
                   "report CMC is not monotone at rank ", k + 1);
  SAN_CHECK_DATA(r.map >= 0.0 && r.map <= 1.0, "report mAP out of [0, 1]");
  return r;
}

void write_report(const EvalReport& report, const std::string& json_path) {
  std::ofstream out(json_path);
  SAN_CHECK_DATA(out.good(), "cannot write report ", json_path);
  out << report.to_json().dump(2) << "\n";
}

EvalReport load_report(const std::string& json_path) {
  std::ifstream in(json_path);
  SAN_CHECK_DATA(in.good(), "cannot open report ", json_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(strcat("report ", json_path, ": parse error: ", e.what()));
  }
  return EvalReport::from_json(j);
}

void write_cmc_csv(const EvalReport& report, const std::string& csv_path) {
  std::ofstream out(csv_path);
  SAN_CHECK_DATA(out.good(), "cannot write csv ", csv_path);
  out << "rank,rate\n";
  for (std::size_t k = 0; k < report.cmc.size(); ++k)
    out << (k + 1) << "," << report.cmc[k] << "\n";
}

}  // namespace san
