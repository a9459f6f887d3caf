#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "san/eval.hpp"
#include "test_util.hpp"

using namespace san;
using test::random_tensor;

namespace {

// Sort-free counting oracle: the rank of gallery j for query i is one plus
// the number of non-excluded entries strictly closer, plus the number of
// equal-distance entries with a smaller index (the tie rule).
int rank_of(const Tensor& dist, const ExclusionMask& excl, int nq, int ng,
            int qi, int gj) {
  (void)nq;
  int rank = 1;
  const std::size_t base = static_cast<std::size_t>(qi) * ng;
  for (int k = 0; k < ng; ++k) {
    if (k == gj) continue;
    if (!excl.empty() && excl[base + k]) continue;
    if (dist[base + k] < dist[base + gj] ||
        (dist[base + k] == dist[base + gj] && k < gj))
      ++rank;
  }
  return rank;
}

std::vector<double> cmc_oracle(const Tensor& dist, const std::vector<int>& q_ids,
                               const std::vector<int>& g_ids,
                               const ExclusionMask& excl, int max_rank) {
  const int nq = dist.dim(0), ng = dist.dim(1);
  std::vector<double> cmc(max_rank, 0.0);
  int kept = 0;
  for (int i = 0; i < nq; ++i) {
    int best_rank = -1;
    for (int j = 0; j < ng; ++j) {
      if (!excl.empty() && excl[static_cast<std::size_t>(i) * ng + j]) continue;
      if (g_ids[j] != q_ids[i]) continue;
      const int r = rank_of(dist, excl, nq, ng, i, j);
      if (best_rank < 0 || r < best_rank) best_rank = r;
    }
    if (best_rank < 0) continue;
    ++kept;
    for (int k = best_rank - 1; k < max_rank; ++k) cmc[k] += 1.0;
  }
  for (double& v : cmc) v /= kept;
  return cmc;
}

double map_oracle(const Tensor& dist, const std::vector<int>& q_ids,
                  const std::vector<int>& g_ids, const ExclusionMask& excl) {
  const int nq = dist.dim(0), ng = dist.dim(1);
  double ap_sum = 0.0;
  int kept = 0;
  for (int i = 0; i < nq; ++i) {
    std::vector<int> match_ranks;
    for (int j = 0; j < ng; ++j) {
      if (!excl.empty() && excl[static_cast<std::size_t>(i) * ng + j]) continue;
      if (g_ids[j] != q_ids[i]) continue;
      match_ranks.push_back(rank_of(dist, excl, nq, ng, i, j));
    }
    if (match_ranks.empty()) continue;
    std::sort(match_ranks.begin(), match_ranks.end());
    double ap = 0.0;
    for (std::size_t h = 0; h < match_ranks.size(); ++h)
      ap += static_cast<double>(h + 1) / match_ranks[h];
    ap_sum += ap / match_ranks.size();
    ++kept;
  }
  return ap_sum / kept;
}

struct RandomInstance {
  Tensor dist;
  std::vector<int> q_ids, g_ids;
  ExclusionMask excl;
};

RandomInstance make_instance(Rng& rng, int nq, int ng, int id_pool,
                             bool with_exclusions) {
  RandomInstance inst;
  inst.dist = random_tensor({nq, ng}, rng, 0.0, 10.0);
  for (int i = 0; i < nq; ++i) inst.q_ids.push_back(rng.uniform_int(0, id_pool));
  for (int j = 0; j < ng; ++j) inst.g_ids.push_back(rng.uniform_int(0, id_pool));
  // Guarantee at least one reachable match per query.
  for (int i = 0; i < nq; ++i) inst.g_ids[rng.uniform_int(0, ng - 1)] = inst.q_ids[i];
  if (with_exclusions) {
    inst.excl.assign(static_cast<std::size_t>(nq) * ng, 0);
    for (std::size_t k = 0; k < inst.excl.size(); ++k)
      inst.excl[k] = rng.uniform() < 0.1 ? 1 : 0;
    for (int i = 0; i < nq; ++i) {
      bool any = false;
      for (int j = 0; j < ng; ++j)
        if (!inst.excl[static_cast<std::size_t>(i) * ng + j] &&
            inst.g_ids[j] == inst.q_ids[i])
          any = true;
      if (!any) {
        const int j = rng.uniform_int(0, ng - 1);
        inst.g_ids[j] = inst.q_ids[i];
        inst.excl[static_cast<std::size_t>(i) * ng + j] = 0;
      }
    }
  }
  return inst;
}

}  // namespace

TEST_CASE("euclidean distances match the naive double loop") {
  Rng rng(71);
  Tensor q = random_tensor({20, 33}, rng);
  Tensor g = random_tensor({30, 33}, rng);
  Tensor d = pairwise_distance(q, g);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 30; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 33; ++k) {
        const double diff = q.at(i, k) - g.at(j, k);
        acc += diff * diff;
      }
      CHECK(test::rel_err(d.at(i, j), std::sqrt(acc)) < 1e-12);
    }
}

TEST_CASE("the 3-4-5 triangle and the zero diagonal") {
  Tensor q({1, 2});
  q.at(0, 0) = 0.0;
  q.at(0, 1) = 0.0;
  Tensor g({1, 2});
  g.at(0, 0) = 3.0;
  g.at(0, 1) = 4.0;
  CHECK(pairwise_distance(q, g).at(0, 0) == doctest::Approx(5.0).epsilon(1e-15));

  Rng rng(73);
  Tensor s = random_tensor({6, 9}, rng);
  Tensor d = pairwise_distance(s, s);
  for (int i = 0; i < 6; ++i) CHECK(d.at(i, i) == 0.0);
}

TEST_CASE("dimension mismatches are rejected") {
  Tensor q({2, 3}), g({2, 4});
  CHECK_THROWS_AS(pairwise_distance(q, g), ContractError);
}

TEST_CASE("single query with its match at rank 3") {
  Tensor dist({1, 5});
  const double row[5] = {0.1, 0.2, 0.3, 0.4, 0.5};
  for (int j = 0; j < 5; ++j) dist.at(0, j) = row[j];
  std::vector<int> q_ids = {7};
  std::vector<int> g_ids = {1, 2, 7, 7, 3};
  std::vector<double> cmc = compute_cmc(dist, q_ids, g_ids, {}, 5);
  CHECK(cmc[0] == 0.0);
  CHECK(cmc[1] == 0.0);
  CHECK(cmc[2] == 1.0);
  CHECK(cmc[3] == 1.0);
  CHECK(cmc[4] == 1.0);
}

TEST_CASE("all-tie distances break by gallery index") {
  Tensor dist({1, 4});
  dist.fill(1.0);
  std::vector<int> q_ids = {5};
  std::vector<int> g_ids = {9, 5, 5, 9};
  std::vector<double> got = compute_cmc(dist, q_ids, g_ids, {}, 4);
  std::vector<double> want = cmc_oracle(dist, q_ids, g_ids, {}, 4);
  for (int k = 0; k < 4; ++k) CHECK(got[k] == want[k]);
  // First match is gallery 1 -> rank 2 under stable index order.
  CHECK(got[0] == 0.0);
  CHECK(got[1] == 1.0);
}

TEST_CASE("hand-derived AP: matches at ranks 1 and 3 of 10 give 5/6") {
  Tensor dist({1, 10});
  for (int j = 0; j < 10; ++j) dist.at(0, j) = j;  // ranked by index
  std::vector<int> q_ids = {1};
  std::vector<int> g_ids = {1, 0, 1, 0, 0, 0, 0, 0, 0, 0};
  CHECK(compute_map(dist, q_ids, g_ids, {}) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("perfect rankings give mAP 1") {
  Rng rng(79);
  const int nq = 4, ng = 8;
  Tensor dist({nq, ng});
  std::vector<int> q_ids, g_ids(ng);
  for (int j = 0; j < ng; ++j) g_ids[j] = j / 2;
  for (int i = 0; i < nq; ++i) {
    q_ids.push_back(i);
    for (int j = 0; j < ng; ++j)
      dist.at(i, j) = g_ids[j] == i ? rng.uniform(0.0, 1.0)
                                    : rng.uniform(2.0, 3.0);
  }
  CHECK(compute_map(dist, q_ids, g_ids, {}) == doctest::Approx(1.0));
  std::vector<double> cmc = compute_cmc(dist, q_ids, g_ids, {}, 3);
  CHECK(cmc[0] == 1.0);
}

TEST_CASE("random instances match the counting oracles") {
  Rng rng(83);
  for (int trial = 0; trial < 60; ++trial) {
    const int nq = rng.uniform_int(1, 12);
    const int ng = rng.uniform_int(2, 20);
    RandomInstance inst = make_instance(rng, nq, ng, 6, trial % 2 == 1);
    const int max_rank = std::min(ng, 10);

    std::vector<double> got =
        compute_cmc(inst.dist, inst.q_ids, inst.g_ids, inst.excl, max_rank);
    std::vector<double> want =
        cmc_oracle(inst.dist, inst.q_ids, inst.g_ids, inst.excl, max_rank);
    for (int k = 0; k < max_rank; ++k) CHECK(got[k] == want[k]);
    for (int k = 1; k < max_rank; ++k) CHECK(got[k] >= got[k - 1]);

    const double m = compute_map(inst.dist, inst.q_ids, inst.g_ids, inst.excl);
    CHECK(std::fabs(m - map_oracle(inst.dist, inst.q_ids, inst.g_ids,
                                   inst.excl)) < 1e-10);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
}

TEST_CASE("queries without any valid match are dropped and counted") {
  Tensor dist({2, 2});
  dist.fill(1.0);
  std::vector<int> q_ids = {0, 9};
  std::vector<int> g_ids = {0, 0};
  RankOutcome outcome;
  std::vector<double> cmc = compute_cmc(dist, q_ids, g_ids, {}, 2, &outcome);
  CHECK(outcome.kept == 1);
  CHECK(outcome.dropped == 1);
  CHECK(outcome.first_match_rank[1] == -1);
  CHECK(cmc[0] == 1.0);

  std::vector<int> q_none = {5, 9};
  CHECK_THROWS_AS(compute_cmc(dist, q_none, g_ids, {}, 2), ProtocolError);
}

TEST_CASE("uniform descriptor scaling changes no ranking metric") {
  Rng rng(89);
  Tensor q = random_tensor({6, 12}, rng);
  Tensor g = random_tensor({15, 12}, rng);
  std::vector<int> q_ids, g_ids;
  for (int i = 0; i < 6; ++i) q_ids.push_back(i % 3);
  for (int j = 0; j < 15; ++j) g_ids.push_back(j % 3);

  Tensor q2 = q, g2 = g;
  for (std::size_t i = 0; i < q2.size(); ++i) q2[i] *= 3.7;
  for (std::size_t i = 0; i < g2.size(); ++i) g2[i] *= 3.7;

  Tensor d1 = pairwise_distance(q, g);
  Tensor d2 = pairwise_distance(q2, g2);
  std::vector<double> c1 = compute_cmc(d1, q_ids, g_ids, {}, 10);
  std::vector<double> c2 = compute_cmc(d2, q_ids, g_ids, {}, 10);
  for (int k = 0; k < 10; ++k) CHECK(c1[k] == c2[k]);
  CHECK(compute_map(d1, q_ids, g_ids, {}) ==
        doctest::Approx(compute_map(d2, q_ids, g_ids, {})).epsilon(1e-12));
}

TEST_CASE("a distractor farther than everything changes nothing") {
  Rng rng(97);
  Tensor q = random_tensor({5, 8}, rng);
  Tensor g = random_tensor({10, 8}, rng);
  std::vector<int> q_ids, g_ids;
  for (int i = 0; i < 5; ++i) q_ids.push_back(i % 2);
  for (int j = 0; j < 10; ++j) g_ids.push_back(j % 2);

  Tensor d1 = pairwise_distance(q, g);
  // Append one gallery entry farther than all existing ones for every query.
  Tensor d2({5, 11});
  for (int i = 0; i < 5; ++i) {
    double mx = 0.0;
    for (int j = 0; j < 10; ++j) {
      d2.at(i, j) = d1.at(i, j);
      mx = std::max(mx, d1.at(i, j));
    }
    d2.at(i, 10) = mx + 1.0;
  }
  std::vector<int> g_ids2 = g_ids;
  g_ids2.push_back(999);

  std::vector<double> c1 = compute_cmc(d1, q_ids, g_ids, {}, 10);
  std::vector<double> c2 = compute_cmc(d2, q_ids, g_ids2, {}, 10);
  for (int k = 0; k < 10; ++k) CHECK(c1[k] == c2[k]);
  CHECK(compute_map(d1, q_ids, g_ids, {}) ==
        doctest::Approx(compute_map(d2, q_ids, g_ids2, {})).epsilon(1e-12));
}

TEST_CASE("plain protocol builds leave-one-out over non-train records") {
  DatasetManifest m;
  m.name = "t";
  for (int i = 0; i < 4; ++i) {
    VehicleRecord r;
    r.image_path = "x" + std::to_string(i) + ".png";
    r.orig_identity = i / 2;
    r.split = Split::kProbe;
    m.records.push_back(r);
  }
  finalize_manifest(m);
  Protocol p = build_protocol(m, "plain");
  CHECK(p.query_idx.size() == 4);
  CHECK(p.gallery_idx.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    int excluded = 0;
    for (std::size_t j = 0; j < 4; ++j)
      excluded += p.exclusions[i * 4 + j];
    CHECK(excluded == 1);  // itself and only itself
    CHECK(p.exclusions[i * 4 + i] == 1);
  }
}

TEST_CASE("veri protocol demands cameras and excludes same-camera entries") {
  DatasetManifest m;
  m.name = "t";
  for (int i = 0; i < 6; ++i) {
    VehicleRecord r;
    r.image_path = "x" + std::to_string(i) + ".png";
    r.orig_identity = i % 2;
    r.camera = i % 3;
    r.split = i < 2 ? Split::kProbe : Split::kGallery;
    m.records.push_back(r);
  }
  finalize_manifest(m);
  Protocol p = build_protocol(m, "veri");
  CHECK(p.query_idx.size() == 2);
  CHECK(p.gallery_idx.size() == 4);
  for (std::size_t i = 0; i < p.query_idx.size(); ++i)
    for (std::size_t j = 0; j < p.gallery_idx.size(); ++j) {
      const bool same_cam = *m.records[p.query_idx[i]].camera ==
                            *m.records[p.gallery_idx[j]].camera;
      CHECK(static_cast<bool>(p.exclusions[i * p.gallery_idx.size() + j]) ==
            same_cam);
    }

  m.records[0].camera.reset();
  CHECK_THROWS_AS(build_protocol(m, "veri"), ProtocolError);
}

TEST_CASE("resampled vehicleid draws keep one gallery image per identity") {
  DatasetManifest m;
  m.name = "t";
  for (int id = 0; id < 3; ++id)
    for (int j = 0; j < 4; ++j) {
      VehicleRecord r;
      r.image_path = "x.png";
      r.orig_identity = id;
      r.split = j == 0 ? Split::kGallery : Split::kProbe;
      m.records.push_back(r);
    }
  finalize_manifest(m);
  Rng rng(4);
  Protocol p = build_vehicleid_protocol_resampled(m, rng);
  CHECK(p.gallery_idx.size() == 3);
  CHECK(p.query_idx.size() == 9);
}

TEST_CASE("reports reject non-monotone CMC curves") {
  test::TempDir tmp("report");
  EvalReport r;
  r.protocol = "plain";
  r.cmc = {0.5, 0.4, 0.6};
  r.map = 0.5;
  const std::string path = tmp.str() + "/r.json";
  {
    std::ofstream out(path);
    out << r.to_json().dump();
  }
  CHECK_THROWS_AS(load_report(path), DataError);

  r.cmc = {0.4, 0.5, 0.6};
  {
    std::ofstream out(path);
    out << r.to_json().dump();
  }
  EvalReport back = load_report(path);
  CHECK(back.cmc.size() == 3);
  CHECK(back.map == 0.5);
}
