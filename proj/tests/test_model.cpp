#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "dba/model.hpp"
#include "dba/reference_adam.hpp"
#include "dba/rng.hpp"

using dba::Arch;
using dba::Batch;
using dba::FlatVector;
using dba::Matrix;
using dba::Rng;
using dba::ToyModel;

namespace {

Batch random_batch(std::size_t rows, std::size_t input_dim, std::size_t num_classes, Rng& rng) {
  Batch b;
  b.inputs = Matrix(rows, input_dim);
  for (double& x : b.inputs.data) x = rng.normal();
  b.labels.resize(rows);
  for (auto& y : b.labels) y = static_cast<std::uint32_t>(rng.index(num_classes));
  return b;
}

ToyModel random_model(Arch arch, std::uint64_t seed) {
  if (arch == Arch::softmax_regression) return ToyModel::make_softmax_regression(8, 4, seed);
  return ToyModel::make_mlp2(6, 5, 3, seed);
}

// Straightforward re-implementation of the mean cross-entropy, organized
// differently from the library path (explicit probabilities, no shared
// logits helper).
double naive_loss(const ToyModel& m, const Batch& batch) {
  double total = 0.0;
  for (std::size_t r = 0; r < batch.inputs.rows; ++r) {
    std::vector<double> z(m.num_classes, 0.0);
    if (m.arch == Arch::softmax_regression) {
      for (std::size_t c = 0; c < m.num_classes; ++c) {
        z[c] = m.params[1].values[c];
        for (std::size_t d = 0; d < m.input_dim; ++d)
          z[c] += m.params[0].values[c * m.input_dim + d] * batch.inputs(r, d);
      }
    } else {
      std::vector<double> h(m.hidden_dim, 0.0);
      for (std::size_t k = 0; k < m.hidden_dim; ++k) {
        double a = m.params[1].values[k];
        for (std::size_t d = 0; d < m.input_dim; ++d)
          a += m.params[0].values[k * m.input_dim + d] * batch.inputs(r, d);
        h[k] = std::tanh(a);
      }
      for (std::size_t c = 0; c < m.num_classes; ++c) {
        z[c] = m.params[3].values[c];
        for (std::size_t k = 0; k < m.hidden_dim; ++k)
          z[c] += m.params[2].values[c * m.hidden_dim + k] * h[k];
      }
    }
    double denom = 0.0;
    for (double x : z) denom += std::exp(x);
    total += -std::log(std::exp(z[batch.labels[r]]) / denom);
  }
  return total / static_cast<double>(batch.inputs.rows);
}

}  // namespace

TEST_CASE("forward_loss: uniform prediction gives ln(C)") {
  for (std::size_t classes : {2, 5, 10}) {
    ToyModel m = ToyModel::make_softmax_regression(4, classes, 1);
    for (auto& t : m.params) std::fill(t.values.begin(), t.values.end(), 0.0);
    Rng rng(2);
    const Batch b = random_batch(16, 4, classes, rng);
    CHECK_THAT(dba::forward_loss(m, b),
               Catch::Matchers::WithinRel(std::log(static_cast<double>(classes)), 1e-12));
  }
}

TEST_CASE("forward_loss: near-zero at a large margin") {
  ToyModel m = ToyModel::make_softmax_regression(2, 3, 1);
  for (auto& t : m.params) std::fill(t.values.begin(), t.values.end(), 0.0);
  m.params[0].values[0 * 2 + 0] = 20.0;  // class 0 fires on feature 0
  Batch b;
  b.inputs = Matrix(1, 2);
  b.inputs(0, 0) = 1.0;
  b.labels = {0};
  CHECK(dba::forward_loss(m, b) < 1e-3);
}

TEST_CASE("forward_loss: matches the naive oracle") {
  Rng rng(3);
  for (Arch arch : {Arch::softmax_regression, Arch::mlp2}) {
    for (int trial = 0; trial < 10; ++trial) {
      const ToyModel m = random_model(arch, 100 + static_cast<std::uint64_t>(trial));
      const Batch b = random_batch(7, m.input_dim, m.num_classes, rng);
      CHECK_THAT(dba::forward_loss(m, b),
                 Catch::Matchers::WithinRel(naive_loss(m, b), 1e-12));
    }
  }
}

TEST_CASE("forward_loss: invariant under row permutation") {
  Rng rng(4);
  const ToyModel m = random_model(Arch::mlp2, 11);
  const Batch b = random_batch(9, m.input_dim, m.num_classes, rng);
  Batch shuffled = b;
  const std::vector<std::size_t> perm = {4, 7, 0, 2, 8, 1, 6, 3, 5};
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t d = 0; d < m.input_dim; ++d)
      shuffled.inputs(r, d) = b.inputs(perm[r], d);
    shuffled.labels[r] = b.labels[perm[r]];
  }
  CHECK_THAT(dba::forward_loss(m, shuffled),
             Catch::Matchers::WithinRel(dba::forward_loss(m, b), 1e-13));
}

TEST_CASE("forward_loss: rejects shape mismatches") {
  const ToyModel m = random_model(Arch::softmax_regression, 5);
  Rng rng(6);
  Batch wrong = random_batch(3, m.input_dim + 1, m.num_classes, rng);
  CHECK_THROWS_AS(dba::forward_loss(m, wrong), std::invalid_argument);
  Batch bad_label = random_batch(3, m.input_dim, m.num_classes, rng);
  bad_label.labels[0] = static_cast<std::uint32_t>(m.num_classes);
  CHECK_THROWS_AS(dba::forward_loss(m, bad_label), std::invalid_argument);
}

TEST_CASE("backward: matches central finite differences") {
  Rng rng(7);
  for (Arch arch : {Arch::softmax_regression, Arch::mlp2}) {
    for (int trial = 0; trial < 20; ++trial) {
      const ToyModel m = random_model(arch, 300 + static_cast<std::uint64_t>(trial));
      const Batch b = random_batch(5, m.input_dim, m.num_classes, rng);
      const FlatVector g = dba::backward(m, b);
      const FlatVector fd = dba::finite_diff_grad(m, b, 1e-5);
      REQUIRE(g.size() == fd.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double diff = std::abs(g[i] - fd[i]);
        const bool ok = diff <= 1e-4 * std::abs(fd[i]) || diff < 1e-8;
        if (!ok) {
          CAPTURE(arch == Arch::mlp2, trial, i, g[i], fd[i]);
          CHECK(ok);
        }
      }
    }
  }
}

TEST_CASE("backward: zero gradient at an exact critical point") {
  // One input with both labels: by symmetry the zero model is the minimum.
  ToyModel m = ToyModel::make_softmax_regression(3, 2, 1);
  for (auto& t : m.params) std::fill(t.values.begin(), t.values.end(), 0.0);
  Batch b;
  b.inputs = Matrix(2, 3);
  for (std::size_t d = 0; d < 3; ++d) b.inputs(0, d) = b.inputs(1, d) = 0.5 + 0.25 * d;
  b.labels = {0, 1};
  CHECK(dba::norm(dba::backward(m, b)) < 1e-15);
}

TEST_CASE("backward: vanishing gradient after training to convergence") {
  // Overlapping classes so the optimum is finite; staged Adam drives the
  // full-batch gradient to ~0.
  Rng rng(8);
  Batch b;
  b.inputs = Matrix(24, 2);
  b.labels.resize(24);
  for (std::size_t r = 0; r < 24; ++r) {
    const std::uint32_t y = static_cast<std::uint32_t>(r % 2);
    b.labels[r] = y;
    b.inputs(r, 0) = (y == 0 ? -0.5 : 0.5) + rng.normal();
    b.inputs(r, 1) = rng.normal();
  }
  ToyModel m = ToyModel::make_softmax_regression(2, 2, 9);
  std::vector<double> params = m.flatten().data;
  for (double lr : {0.05, 0.01, 1e-3, 1e-4, 1e-5}) {
    dba::ReferenceAdamW opt(params.size(), lr, 0.9, 0.999, 1e-8, 0.0);
    for (int step = 0; step < 2000; ++step) {
      m.set_from_flat(FlatVector(params));
      opt.step(params, dba::backward(m, b).data);
    }
  }
  m.set_from_flat(FlatVector(params));
  CHECK(dba::norm(dba::backward(m, b)) < 1e-6);
}

TEST_CASE("backward: duplicated batch leaves the mean gradient unchanged") {
  Rng rng(10);
  const ToyModel m = random_model(Arch::mlp2, 13);
  const Batch b = random_batch(6, m.input_dim, m.num_classes, rng);
  Batch doubled;
  doubled.inputs = Matrix(12, m.input_dim);
  doubled.labels.resize(12);
  for (std::size_t r = 0; r < 12; ++r) {
    for (std::size_t d = 0; d < m.input_dim; ++d)
      doubled.inputs(r, d) = b.inputs(r % 6, d);
    doubled.labels[r] = b.labels[r % 6];
  }
  const FlatVector g1 = dba::backward(m, b);
  const FlatVector g2 = dba::backward(m, doubled);
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK_THAT(g2[i], Catch::Matchers::WithinAbs(g1[i], 1e-14 * (1.0 + std::abs(g1[i]))));
}

TEST_CASE("finite differences: exact on a quadratic") {
  ToyModel m = ToyModel::make_softmax_regression(2, 2, 3);
  const FlatVector g = dba::detail::central_diff(m, 0.125, [](const ToyModel& model) {
    double acc = 0.0;
    double coeff = 0.5;
    for (const auto& t : model.params)
      for (double x : t.values) {
        acc += coeff * x * x + 0.1 * x;
        coeff += 0.25;
      }
    return acc;
  });
  std::size_t i = 0;
  double coeff = 0.5;
  const FlatVector theta = m.flatten();
  for (; i < theta.size(); ++i) {
    CHECK_THAT(g[i], Catch::Matchers::WithinAbs(2.0 * coeff * theta[i] + 0.1, 1e-10));
    coeff += 0.25;
  }
}

TEST_CASE("finite differences: second-order accuracy") {
  Rng rng(14);
  const ToyModel m = random_model(Arch::mlp2, 15);
  const Batch b = random_batch(4, m.input_dim, m.num_classes, rng);
  const FlatVector g = dba::backward(m, b);

  auto err = [&](double h) {
    const FlatVector fd = dba::finite_diff_grad(m, b, h);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = fd[i] - g[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  const double e1 = err(1e-3);
  const double e2 = err(5e-4);
  CHECK(e1 / e2 > 3.0);
  CHECK(e1 / e2 < 5.5);

  CHECK_THROWS_AS(dba::finite_diff_grad(m, b, 0.0), std::invalid_argument);
}

TEST_CASE("eval_accuracy: tie-break and balanced baseline") {
  // Zero model predicts class 0 everywhere (ties break low), so a balanced
  // two-class set scores exactly 50.
  ToyModel m = ToyModel::make_softmax_regression(3, 2, 1);
  for (auto& t : m.params) std::fill(t.values.begin(), t.values.end(), 0.0);
  Rng rng(16);
  std::vector<Batch> data;
  for (int i = 0; i < 5; ++i) {
    Batch b = random_batch(8, 3, 2, rng);
    for (std::size_t r = 0; r < 8; ++r) b.labels[r] = static_cast<std::uint32_t>(r % 2);
    data.push_back(std::move(b));
  }
  CHECK(dba::eval_accuracy(m, data) == 50.0);

  CHECK_THROWS_AS(dba::eval_accuracy(m, {}), std::invalid_argument);
}

TEST_CASE("eval_accuracy: perfect on a separable set after training") {
  Rng rng(17);
  Batch train;
  train.inputs = Matrix(40, 2);
  train.labels.resize(40);
  for (std::size_t r = 0; r < 40; ++r) {
    const std::uint32_t y = static_cast<std::uint32_t>(r % 2);
    train.labels[r] = y;
    train.inputs(r, 0) = (y == 0 ? -3.0 : 3.0) + 0.3 * rng.normal();
    train.inputs(r, 1) = rng.normal();
  }
  ToyModel m = ToyModel::make_softmax_regression(2, 2, 18);
  std::vector<double> params = m.flatten().data;
  dba::ReferenceAdamW opt(params.size(), 0.1, 0.9, 0.999, 1e-8, 0.0);
  for (int step = 0; step < 500; ++step) {
    m.set_from_flat(FlatVector(params));
    opt.step(params, dba::backward(m, train).data);
  }
  m.set_from_flat(FlatVector(params));
  CHECK(dba::eval_accuracy(m, {train}) == 100.0);
}

TEST_CASE("parameter count and flatten round trip agree") {
  for (Arch arch : {Arch::softmax_regression, Arch::mlp2}) {
    ToyModel m = random_model(arch, 19);
    const std::size_t expected =
        arch == Arch::softmax_regression ? 8 * 4 + 4 : 6 * 5 + 5 + 5 * 3 + 3;
    CHECK(m.param_count() == expected);
    FlatVector flat = m.flatten();
    CHECK(flat.size() == expected);
    flat[0] += 1.0;
    m.set_from_flat(flat);
    CHECK(m.flatten().data == flat.data);
    CHECK_THROWS_AS(m.set_from_flat(FlatVector(expected + 1)), std::invalid_argument);
  }
}
