#pragma once
//
// Desk-scale classifiers with closed-form gradients: multinomial softmax
// regression and a two-layer tanh MLP. These stand in for the fine-tuned
// model; everything downstream only sees flattened parameter vectors.
//

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dba/errors.hpp"
#include "dba/linalg.hpp"
#include "dba/rng.hpp"

namespace dba {

enum class Arch { softmax_regression, mlp2 };

inline const char* arch_name(Arch a) {
  return a == Arch::softmax_regression ? "softmax-regression" : "mlp2";
}

// One named parameter tensor; dims has one entry for biases, two for weights.
struct Tensor {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<double> values;  // row-major

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
  }
};

struct Batch {
  Matrix inputs;                      // rows x input_dim
  std::vector<std::uint32_t> labels;  // rows entries, each < num_classes
};

class ToyModel {
 public:
  Arch arch = Arch::softmax_regression;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // mlp2 only
  std::size_t num_classes = 0;
  std::vector<Tensor> params;  // fixed registration order

  static ToyModel make_softmax_regression(std::size_t input_dim, std::size_t num_classes,
                                          std::uint64_t seed) {
    ToyModel m;
    m.arch = Arch::softmax_regression;
    m.input_dim = input_dim;
    m.num_classes = num_classes;
    Rng rng(seed);
    m.params.push_back(init_weight("w", num_classes, input_dim, rng));
    m.params.push_back(zero_bias("b", num_classes));
    return m;
  }

  static ToyModel make_mlp2(std::size_t input_dim, std::size_t hidden_dim,
                            std::size_t num_classes, std::uint64_t seed) {
    ToyModel m;
    m.arch = Arch::mlp2;
    m.input_dim = input_dim;
    m.hidden_dim = hidden_dim;
    m.num_classes = num_classes;
    Rng rng(seed);
    m.params.push_back(init_weight("w1", hidden_dim, input_dim, rng));
    m.params.push_back(zero_bias("b1", hidden_dim));
    m.params.push_back(init_weight("w2", num_classes, hidden_dim, rng));
    m.params.push_back(zero_bias("b2", num_classes));
    return m;
  }

  std::string model_id() const {
    std::string id = arch_name(arch);
    id += "(d=" + std::to_string(input_dim);
    if (arch == Arch::mlp2) id += ",h=" + std::to_string(hidden_dim);
    id += ",c=" + std::to_string(num_classes) + ")";
    return id;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params) n += t.count();
    return n;
  }

  FlatVector flatten() const {
    FlatVector out;
    out.data.reserve(param_count());
    for (const Tensor& t : params)
      out.data.insert(out.data.end(), t.values.begin(), t.values.end());
    return out;
  }

  void set_from_flat(const FlatVector& flat) {
    if (flat.size() != param_count())
      throw std::invalid_argument("set_from_flat: length mismatch");
    std::size_t off = 0;
    for (Tensor& t : params) {
      std::copy(flat.data.begin() + static_cast<std::ptrdiff_t>(off),
                flat.data.begin() + static_cast<std::ptrdiff_t>(off + t.count()),
                t.values.begin());
      off += t.count();
    }
  }

 private:
  static Tensor init_weight(const char* name, std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t{name, {rows, cols}, std::vector<double>(rows * cols)};
    for (double& x : t.values) x = rng.uniform(-0.1, 0.1);
    return t;
  }
  static Tensor zero_bias(const char* name, std::size_t n) {
    return Tensor{name, {n}, std::vector<double>(n, 0.0)};
  }
};

namespace detail {

inline void check_batch(const ToyModel& model, const Batch& batch) {
  if (batch.inputs.rows == 0) throw std::invalid_argument("batch: no rows");
  if (batch.inputs.cols != model.input_dim)
    throw std::invalid_argument("batch: feature width != input_dim");
  if (batch.labels.size() != batch.inputs.rows)
    throw std::invalid_argument("batch: label count != row count");
  for (std::uint32_t y : batch.labels)
    if (y >= model.num_classes) throw std::invalid_argument("batch: label out of range");
}

// Logits for one input row, plus the hidden activations for mlp2.
inline void logits_for_row(const ToyModel& m, const Matrix& inputs, std::size_t row,
                           std::vector<double>& hidden, std::vector<double>& z) {
  if (m.arch == Arch::softmax_regression) {
    const Tensor& w = m.params[0];
    const Tensor& b = m.params[1];
    z.assign(m.num_classes, 0.0);
    for (std::size_t c = 0; c < m.num_classes; ++c) {
      double acc = b.values[c];
      const double* wr = &w.values[c * m.input_dim];
      for (std::size_t d = 0; d < m.input_dim; ++d) acc += wr[d] * inputs(row, d);
      z[c] = acc;
    }
  } else {
    const Tensor& w1 = m.params[0];
    const Tensor& b1 = m.params[1];
    const Tensor& w2 = m.params[2];
    const Tensor& b2 = m.params[3];
    hidden.assign(m.hidden_dim, 0.0);
    for (std::size_t hcol = 0; hcol < m.hidden_dim; ++hcol) {
      double acc = b1.values[hcol];
      const double* wr = &w1.values[hcol * m.input_dim];
      for (std::size_t d = 0; d < m.input_dim; ++d) acc += wr[d] * inputs(row, d);
      hidden[hcol] = std::tanh(acc);
    }
    z.assign(m.num_classes, 0.0);
    for (std::size_t c = 0; c < m.num_classes; ++c) {
      double acc = b2.values[c];
      const double* wr = &w2.values[c * m.hidden_dim];
      for (std::size_t hcol = 0; hcol < m.hidden_dim; ++hcol) acc += wr[hcol] * hidden[hcol];
      z[c] = acc;
    }
  }
}

inline double log_sum_exp(const std::vector<double>& z) {
  double zmax = z[0];
  for (double x : z) zmax = std::max(zmax, x);
  double acc = 0.0;
  for (double x : z) acc += std::exp(x - zmax);
  return zmax + std::log(acc);
}

// Central-difference gradient of an arbitrary scalar function of the
// parameters; shared by finite_diff_grad and exact for quadratics.
template <typename LossFn>
FlatVector central_diff(ToyModel model, double h, LossFn&& loss) {
  FlatVector grad(model.param_count());
  std::size_t flat = 0;
  for (Tensor& t : model.params) {
    for (double& x : t.values) {
      const double saved = x;
      x = saved + h;
      const double up = loss(model);
      x = saved - h;
      const double down = loss(model);
      x = saved;
      grad[flat++] = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace detail

// Mean cross-entropy over the batch.
inline double forward_loss(const ToyModel& model, const Batch& batch) {
  detail::check_batch(model, batch);
  std::vector<double> hidden, z;
  double total = 0.0;
  for (std::size_t r = 0; r < batch.inputs.rows; ++r) {
    detail::logits_for_row(model, batch.inputs, r, hidden, z);
    total += detail::log_sum_exp(z) - z[batch.labels[r]];
  }
  const double loss = total / static_cast<double>(batch.inputs.rows);
  if (!std::isfinite(loss)) throw NumericalError("forward_loss: non-finite loss");
  return loss;
}

// Analytic gradient of forward_loss, flattened in registration order.
inline FlatVector backward(const ToyModel& model, const Batch& batch) {
  detail::check_batch(model, batch);
  const std::size_t rows = batch.inputs.rows;
  const double inv_b = 1.0 / static_cast<double>(rows);
  FlatVector grad(model.param_count());
  std::vector<double> hidden, z, dz;

  if (model.arch == Arch::softmax_regression) {
    double* gw = grad.data.data();
    double* gb = gw + model.params[0].count();
    for (std::size_t r = 0; r < rows; ++r) {
      detail::logits_for_row(model, batch.inputs, r, hidden, z);
      const double lse = detail::log_sum_exp(z);
      dz.assign(model.num_classes, 0.0);
      for (std::size_t c = 0; c < model.num_classes; ++c)
        dz[c] = std::exp(z[c] - lse) * inv_b;
      dz[batch.labels[r]] -= inv_b;
      for (std::size_t c = 0; c < model.num_classes; ++c) {
        gb[c] += dz[c];
        double* gwr = gw + c * model.input_dim;
        for (std::size_t d = 0; d < model.input_dim; ++d)
          gwr[d] += dz[c] * batch.inputs(r, d);
      }
    }
  } else {
    const Tensor& w2 = model.params[2];
    double* gw1 = grad.data.data();
    double* gb1 = gw1 + model.params[0].count();
    double* gw2 = gb1 + model.params[1].count();
    double* gb2 = gw2 + model.params[2].count();
    std::vector<double> dhidden(model.hidden_dim);
    for (std::size_t r = 0; r < rows; ++r) {
      detail::logits_for_row(model, batch.inputs, r, hidden, z);
      const double lse = detail::log_sum_exp(z);
      dz.assign(model.num_classes, 0.0);
      for (std::size_t c = 0; c < model.num_classes; ++c)
        dz[c] = std::exp(z[c] - lse) * inv_b;
      dz[batch.labels[r]] -= inv_b;
      std::fill(dhidden.begin(), dhidden.end(), 0.0);
      for (std::size_t c = 0; c < model.num_classes; ++c) {
        gb2[c] += dz[c];
        double* gw2r = gw2 + c * model.hidden_dim;
        const double* w2r = &w2.values[c * model.hidden_dim];
        for (std::size_t hcol = 0; hcol < model.hidden_dim; ++hcol) {
          gw2r[hcol] += dz[c] * hidden[hcol];
          dhidden[hcol] += dz[c] * w2r[hcol];
        }
      }
      for (std::size_t hcol = 0; hcol < model.hidden_dim; ++hcol) {
        const double da = dhidden[hcol] * (1.0 - hidden[hcol] * hidden[hcol]);
        gb1[hcol] += da;
        double* gw1r = gw1 + hcol * model.input_dim;
        for (std::size_t d = 0; d < model.input_dim; ++d)
          gw1r[d] += da * batch.inputs(r, d);
      }
    }
  }

  for (double g : grad.data)
    if (!std::isfinite(g)) throw NumericalError("backward: non-finite gradient");
  return grad;
}

// Central-difference estimate of the gradient; the test oracle for backward.
inline FlatVector finite_diff_grad(const ToyModel& model, const Batch& batch, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  return detail::central_diff(
      model, h, [&batch](const ToyModel& m) { return forward_loss(m, batch); });
}

// Percentage of argmax-correct predictions, ties broken toward the lowest
// class index.
inline double eval_accuracy(const ToyModel& model, const std::vector<Batch>& dataset) {
  std::size_t total = 0, correct = 0;
  std::vector<double> hidden, z;
  for (const Batch& batch : dataset) {
    detail::check_batch(model, batch);
    for (std::size_t r = 0; r < batch.inputs.rows; ++r) {
      detail::logits_for_row(model, batch.inputs, r, hidden, z);
      std::size_t best = 0;
      for (std::size_t c = 1; c < z.size(); ++c)
        if (z[c] > z[best]) best = c;
      if (best == batch.labels[r]) ++correct;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("eval_accuracy: empty dataset");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace dba
