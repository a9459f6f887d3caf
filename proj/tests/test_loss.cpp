#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "san/loss.hpp"
#include "test_util.hpp"

using namespace san;
using test::random_tensor;

namespace {

// Full-sum route: softmax probabilities computed naively, then
// -sum_k q(k) log p(k) with a one-hot ground-truth distribution.
double cross_entropy_fullsum(const double* logits, int k, int target) {
  double denom = 0.0;
  for (int i = 0; i < k; ++i) denom += std::exp(logits[i]);
  double loss = 0.0;
  for (int i = 0; i < k; ++i) {
    const double q = i == target ? 1.0 : 0.0;
    if (q > 0.0) loss -= std::log(std::exp(logits[i]) / denom) * q;
  }
  return loss;
}

ForwardOutputs make_outputs(Rng& rng, int n, int q, int c_classes, int m_classes) {
  ForwardOutputs out;
  for (int i = 0; i < q; ++i)
    out.stripe_logits.push_back(random_tensor({n, c_classes}, rng, -2.0, 2.0));
  out.id_logits = random_tensor({n, c_classes}, rng, -2.0, 2.0);
  out.attr_logits = random_tensor({n, m_classes}, rng, -2.0, 2.0);
  return out;
}

}  // namespace

TEST_CASE("frozen oracle value: logits {1,2,3} target 2") {
  // High-precision direct evaluation of -log(e^3 / (e^1 + e^2 + e^3)).
  const std::vector<double> logits = {1.0, 2.0, 3.0};
  CHECK(cross_entropy(logits, 2) ==
        doctest::Approx(0.4076059644443803).epsilon(1e-12));
}

TEST_CASE("near-certain and uniform predictions") {
  CHECK(cross_entropy({100.0, 0.0, 0.0}, 0) == doctest::Approx(0.0).epsilon(1e-12));
  const int k = 7;
  std::vector<double> uniform(k, 0.42);
  CHECK(cross_entropy(uniform, 3) ==
        doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
}

TEST_CASE("target out of range is a contract error") {
  CHECK_THROWS_AS(cross_entropy({0.0, 1.0}, 2), ContractError);
  CHECK_THROWS_AS(cross_entropy({0.0, 1.0}, -1), ContractError);
}

TEST_CASE("simplified form equals the full-sum route to 1e-12") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = rng.uniform_int(2, 12);
    std::vector<double> logits(k);
    for (double& v : logits) v = rng.uniform(-5.0, 5.0);
    const int target = rng.uniform_int(0, k - 1);
    const double a = cross_entropy(logits, target);
    const double b = cross_entropy_fullsum(logits.data(), k, target);
    CHECK(std::fabs(a - b) < 1e-12);
  }
}

TEST_CASE("shift invariance of the softmax loss") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = rng.uniform_int(2, 9);
    std::vector<double> logits(k), shifted(k);
    const double c = rng.uniform(-30.0, 30.0);
    for (int i = 0; i < k; ++i) {
      logits[i] = rng.uniform(-3.0, 3.0);
      shifted[i] = logits[i] + c;
    }
    const int target = rng.uniform_int(0, k - 1);
    CHECK(std::fabs(cross_entropy(logits, target) -
                    cross_entropy(shifted, target)) < 1e-9);
  }
}

TEST_CASE("total decomposes exactly into stripe + id + attr terms") {
  Rng rng(47);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(1, 6);
    const int q = rng.uniform_int(0, 4);
    ForwardOutputs out = make_outputs(rng, n, q, 5, 3);
    std::vector<LossTarget> batch(n);
    for (LossTarget& t : batch) {
      t.identity = rng.uniform_int(0, 4);
      t.attribute = rng.uniform() < 0.3 ? -1 : rng.uniform_int(0, 2);
    }
    LossBreakdown loss = total_loss(out, batch);
    double resum = loss.id + loss.attr;
    for (double s : loss.stripe) resum += s;
    CHECK(loss.total == doctest::Approx(resum).epsilon(1e-15));
    CHECK(loss.id >= 0.0);
    CHECK(loss.attr >= 0.0);
    for (double s : loss.stripe) CHECK(s >= 0.0);
  }
}

TEST_CASE("hand-summed single record with q=2") {
  ForwardOutputs out;
  Tensor s0({1, 3}), s1({1, 3}), id({1, 3}), attr({1, 2});
  const double sv0[3] = {0.3, -1.2, 2.0};
  const double sv1[3] = {1.5, 0.0, -0.7};
  const double idv[3] = {-0.2, 0.9, 0.1};
  const double atv[2] = {0.8, -0.8};
  for (int i = 0; i < 3; ++i) {
    s0.at(0, i) = sv0[i];
    s1.at(0, i) = sv1[i];
    id.at(0, i) = idv[i];
  }
  for (int i = 0; i < 2; ++i) attr.at(0, i) = atv[i];
  out.stripe_logits = {s0, s1};
  out.id_logits = id;
  out.attr_logits = attr;

  std::vector<LossTarget> batch = {{1, 0}};
  LossBreakdown loss = total_loss(out, batch);
  const double expect = cross_entropy({sv0[0], sv0[1], sv0[2]}, 1) +
                        cross_entropy({sv1[0], sv1[1], sv1[2]}, 1) +
                        cross_entropy({idv[0], idv[1], idv[2]}, 1) +
                        cross_entropy({atv[0], atv[1]}, 0);
  CHECK(loss.total == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("soft and hard attribute records contribute identically") {
  // The loss receives plain targets; soft provenance changes nothing.
  Rng rng(53);
  ForwardOutputs out;
  out.attr_logits = Tensor({2, 4});
  for (int k = 0; k < 4; ++k) {
    const double v = rng.uniform(-1.0, 1.0);
    out.attr_logits.at(0, k) = v;
    out.attr_logits.at(1, k) = v;
  }
  out.id_logits = Tensor({2, 3});
  std::vector<LossTarget> batch = {{0, 2}, {0, 2}};
  HeadGrads grads;
  LossBreakdown loss = total_loss_with_grads(out, batch, {}, &grads);
  (void)loss;
  for (int k = 0; k < 4; ++k)
    CHECK(grads.attr_logits.at(0, k) ==
          doctest::Approx(grads.attr_logits.at(1, k)).epsilon(1e-15));
}

TEST_CASE("records without attributes are excluded from the attribute mean") {
  ForwardOutputs out;
  out.attr_logits = Tensor({2, 2});
  out.attr_logits.at(0, 0) = 3.0;
  out.attr_logits.at(1, 0) = 3.0;
  std::vector<LossTarget> batch = {{0, 0}, {0, -1}};
  LossBreakdown loss = total_loss(out, batch);
  // Mean over the single labeled record, not over the batch.
  CHECK(loss.attr == doctest::Approx(cross_entropy({3.0, 0.0}, 0)).epsilon(1e-14));

  std::vector<LossTarget> none = {{0, -1}, {0, -1}};
  CHECK(total_loss(out, none).attr == 0.0);
}

TEST_CASE("perfect predictions drive the total toward zero") {
  ForwardOutputs out;
  const int n = 3;
  out.stripe_logits.push_back(Tensor({n, 4}));
  out.id_logits = Tensor({n, 4});
  out.attr_logits = Tensor({n, 2});
  std::vector<LossTarget> batch(n);
  for (int b = 0; b < n; ++b) {
    batch[b] = {b, b % 2};
    out.stripe_logits[0].at(b, b) = 60.0;
    out.id_logits.at(b, b) = 60.0;
    out.attr_logits.at(b, b % 2) = 60.0;
  }
  CHECK(total_loss(out, batch).total < 1e-9);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(59);
  const int n = 3, q = 2;
  ForwardOutputs out = make_outputs(rng, n, q, 4, 3);
  std::vector<LossTarget> batch(n);
  for (LossTarget& t : batch) {
    t.identity = rng.uniform_int(0, 3);
    t.attribute = rng.uniform() < 0.3 ? -1 : rng.uniform_int(0, 2);
  }
  LossOptions opts;
  HeadGrads grads;
  total_loss_with_grads(out, batch, opts, &grads);

  const double h = 1e-6;
  auto fd_check = [&](Tensor& logits, const Tensor& grad) {
    for (int probe = 0; probe < 24; ++probe) {
      const std::size_t idx = rng.next_u64() % logits.size();
      const double saved = logits[idx];
      logits[idx] = saved + h;
      const double up = total_loss(out, batch, opts).total;
      logits[idx] = saved - h;
      const double dn = total_loss(out, batch, opts).total;
      logits[idx] = saved;
      const double fd = (up - dn) / (2 * h);
      CHECK(std::fabs(fd - grad[idx]) < 1e-4 * std::max(1.0, std::fabs(fd)));
    }
  };
  for (int i = 0; i < q; ++i)
    fd_check(out.stripe_logits[i], grads.stripe_logits[i]);
  fd_check(out.id_logits, grads.id_logits);
  fd_check(out.attr_logits, grads.attr_logits);
}

TEST_CASE("the weight triple scales each term group") {
  Rng rng(67);
  ForwardOutputs out = make_outputs(rng, 3, 2, 4, 3);
  std::vector<LossTarget> batch = {{0, 1}, {2, 0}, {3, -1}};
  LossOptions weighted;
  weighted.weights = {2.0, 0.5, 0.0};
  LossBreakdown w = total_loss(out, batch, weighted);
  LossBreakdown plain = total_loss(out, batch, {});
  // Components stay unweighted; only the total is scaled.
  CHECK(w.id == plain.id);
  CHECK(w.attr == plain.attr);
  double stripe_sum = 0.0;
  for (double s : w.stripe) stripe_sum += s;
  CHECK(w.total ==
        doctest::Approx(2.0 * stripe_sum + 0.5 * w.id).epsilon(1e-15));
}

TEST_CASE("label smoothing reduces to one-hot at epsilon 0 and stays positive") {
  Rng rng(61);
  std::vector<double> logits = {0.5, -0.25, 1.75};
  CHECK(cross_entropy(logits, 0, 0.0) == cross_entropy(logits, 0));
  const double smoothed = cross_entropy(logits, 0, 0.1);
  CHECK(smoothed > 0.0);
  CHECK(smoothed != cross_entropy(logits, 0));
}
