#pragma once
//
// Stage 2: the DBA update. Per step, the domain gradient is boosted toward
// the fixed global gradient by a linearly decaying coefficient, the adaptive
// denominator is rescaled by a similarity-driven correction, and the
// learning rate is annealed linearly to zero. Each mechanism sits behind an
// ablation flag; with all three off this is plain AdamW.
//

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>

#include "dba/errors.hpp"
#include "dba/linalg.hpp"
#include "dba/model.hpp"

namespace dba {

struct DbaConfig {
  double eta0_anneal = 1e-4;  // paper-scale value is 1e-7; desk default is larger
  std::size_t T = 1;          // total fine-tuning steps
  std::optional<double> k0;   // boosted-magnitude base; defaults to 200/T
  double c0 = 0.01;           // base correction coefficient
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  bool enable_ggb = true;
  bool enable_dc = true;
  bool enable_anneal = true;

  double k0_value() const { return k0 ? *k0 : 200.0 / static_cast<double>(T); }

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw ConfigError("dba config: betas must be in (0,1)");
    if (T < 1) throw ConfigError("dba config: T must be >= 1");
    if (k0_value() < 0.0) throw ConfigError("dba config: k0 must be >= 0");
    if (!(c0 > 0.0)) throw ConfigError("dba config: c0 must be > 0");
    if (!(eta0_anneal >= 0.0)) throw ConfigError("dba config: eta0_anneal must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("dba config: weight_decay must be >= 0");
  }
};

struct StepTelemetry {
  double s_t = 0.0;
  double gamma_t = 0.0;
  double c_t = 1.0;
  double eta_t = 0.0;
  bool similarity_degenerate = false;
};

struct DbaState {
  FlatVector m;  // first moment of the boosted gradient
  FlatVector v;  // second moment of the boosted gradient
  std::size_t t = 1;
  std::optional<FlatVector> global_grad;  // reconstructed global gradient
  StepTelemetry last;
  bool clamp_warned = false;

  static DbaState init(std::size_t param_count, std::optional<FlatVector> global_grad) {
    DbaState st;
    st.m = FlatVector(param_count);
    st.v = FlatVector(param_count);
    st.global_grad = std::move(global_grad);
    if (st.global_grad && st.global_grad->size() != param_count)
      throw ConfigError("dba state: global gradient length != parameter count");
    return st;
  }
};

// Boosted magnitude k0*(1 - t/T), clamped to [0, 1].
inline double gamma_schedule(std::size_t t, std::size_t T, double k0) {
  if (t < 1 || t > T) throw std::invalid_argument("gamma_schedule: t out of range");
  const double raw = k0 * (1.0 - static_cast<double>(t) / static_cast<double>(T));
  return std::min(1.0, std::max(0.0, raw));
}

struct Similarity {
  double value = 0.0;
  bool degenerate = false;
};

// Absolute cosine similarity |g_d . g_hat| / (||g_d|| * ||g_hat||) in [0,1].
inline Similarity similarity(const FlatVector& g_d, const FlatVector& g_hat) {
  const double nd = norm(g_d);
  const double nh = norm(g_hat);
  if (nd < 1e-12 || nh < 1e-12) return {0.0, true};
  const double value = std::abs(dot(g_d, g_hat)) / (nd * nh);
  return {std::min(value, 1.0), false};
}

// g_B = gamma_t * g_hat + (1 - gamma_t) * g_d.
inline FlatVector boost(const FlatVector& g_d, const FlatVector& g_hat, double gamma_t) {
  if (g_d.size() != g_hat.size()) throw std::invalid_argument("boost: length mismatch");
  if (gamma_t < 0.0 || gamma_t > 1.0) throw std::invalid_argument("boost: gamma out of [0,1]");
  FlatVector out(g_d.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = gamma_t * g_hat[i] + (1.0 - gamma_t) * g_d[i];
  return out;
}

// Linear decay to zero without warmup.
inline double anneal_lr(std::size_t t, std::size_t T, double eta0) {
  if (t < 1 || t > T) throw std::invalid_argument("anneal_lr: t out of range");
  return eta0 * (1.0 - static_cast<double>(t) / static_cast<double>(T));
}

// One DBA step. Moments accumulate the boosted gradient; the similarity is
// computed from the raw domain gradient; weight decay is decoupled and
// applied before the update.
inline void dba_step(ToyModel& model, DbaState& state, const DbaConfig& cfg,
                     const FlatVector& g_d) {
  if (state.t > cfg.T) throw std::invalid_argument("dba_step: step after T");
  if (g_d.size() != model.param_count())
    throw std::invalid_argument("dba_step: gradient length mismatch");
  for (double g : g_d.data)
    if (!std::isfinite(g)) throw NumericalError("dba_step: non-finite gradient");

  Similarity sim{0.0, true};
  if (state.global_grad) sim = similarity(g_d, *state.global_grad);

  const double c_t = cfg.enable_dc ? sim.value + cfg.c0 : 1.0;

  double gamma_t = 0.0;
  if (cfg.enable_ggb) {
    if (!state.global_grad) throw ConfigError("dba_step: boosting requires a global gradient");
    const double raw = cfg.k0_value() * (1.0 - static_cast<double>(state.t) /
                                                   static_cast<double>(cfg.T));
    gamma_t = gamma_schedule(state.t, cfg.T, cfg.k0_value());
    if (raw > 1.0 && !state.clamp_warned) {
      state.clamp_warned = true;
      std::fprintf(stderr, "warning: boosted magnitude clamped to 1 (k0=%g, T=%zu)\n",
                   cfg.k0_value(), cfg.T);
    }
  }

  const FlatVector* g_b = &g_d;
  FlatVector boosted;
  if (cfg.enable_ggb) {
    boosted = boost(g_d, *state.global_grad, gamma_t);
    g_b = &boosted;
  }

  for (std::size_t i = 0; i < state.m.size(); ++i) {
    const double g = (*g_b)[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  const double eta_t =
      cfg.enable_anneal ? anneal_lr(state.t, cfg.T, cfg.eta0_anneal) : cfg.eta0_anneal;

  FlatVector theta = model.flatten();
  if (cfg.weight_decay > 0.0) {
    const double decay = 1.0 - eta_t * cfg.weight_decay;
    for (double& x : theta.data) x *= decay;
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    theta[i] -= eta_t * m_hat / (std::sqrt(c_t * v_hat) + cfg.epsilon);
  }
  model.set_from_flat(theta);

  state.last = StepTelemetry{sim.value, gamma_t, c_t, eta_t, sim.degenerate};
  ++state.t;
}

// The nonlinear term of the effective boosting coefficient: what exponential
// averaging of gamma_t * g_hat adds on top of the linear schedule.
inline double alpha_nonlinear_term(std::size_t t, std::size_t T, double k0, double beta1) {
  if (t < 1 || t > T) throw std::invalid_argument("alpha_nonlinear_term: t out of range");
  if (!(beta1 > 0.0 && beta1 < 1.0))
    throw std::invalid_argument("alpha_nonlinear_term: beta1 must be in (0,1)");
  const double td = static_cast<double>(t);
  const double numerator =
      1.0 - td * std::pow(beta1, td - 1.0) + (td - 1.0) * std::pow(beta1, td);
  return k0 * beta1 * numerator /
         (static_cast<double>(T) * (1.0 - beta1) * (1.0 - std::pow(beta1, td)));
}

// Diagnostic only; the schedule itself uses gamma_schedule.
inline double alpha_effective(std::size_t t, std::size_t T, double k0, double beta1) {
  const double linear = k0 * (1.0 - static_cast<double>(t) / static_cast<double>(T));
  return linear + alpha_nonlinear_term(t, T, k0, beta1);
}

// Empirical Var(g_B)/Var(g_D) over per-batch gradients with a fixed global
// gradient; equals (1-gamma)^2 up to rounding because g_hat is constant.
inline double boosted_variance_check(const ToyModel& model, const std::vector<Batch>& batches,
                                     const FlatVector& g_hat, double gamma) {
  if (batches.size() < 10)
    throw std::invalid_argument("boosted_variance_check: need at least 10 batches");
  if (gamma < 0.0 || gamma > 1.0)
    throw std::invalid_argument("boosted_variance_check: gamma out of [0,1]");

  const std::size_t n = batches.size();
  std::vector<FlatVector> domain_grads;
  domain_grads.reserve(n);
  for (const Batch& b : batches) domain_grads.push_back(backward(model, b));

  auto variance = [n](const std::vector<FlatVector>& samples) {
    FlatVector mean(samples.front().size());
    for (const FlatVector& g : samples)
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += g[i];
    for (double& x : mean.data) x /= static_cast<double>(n);
    double acc = 0.0;
    for (const FlatVector& g : samples) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < mean.size(); ++i) {
        const double d = g[i] - mean[i];
        d2 += d * d;
      }
      acc += d2;
    }
    return acc / static_cast<double>(n - 1);
  };

  const double var_d = variance(domain_grads);
  if (var_d < 1e-18) throw NumericalError("boosted_variance_check: domain variance vanished");

  std::vector<FlatVector> boosted_grads;
  boosted_grads.reserve(n);
  for (const FlatVector& g : domain_grads) boosted_grads.push_back(boost(g, g_hat, gamma));
  return variance(boosted_grads) / var_d;
}

}  // namespace dba
