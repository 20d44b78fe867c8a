#pragma once
//
// Stage 1: estimate the global gradient as the bias-corrected first momentum
// of a zero-learning-rate pass over general data, compress 2-D tensors with
// a rank-r SVD, and serialize the result. Also the gradient-noise-scale
// diagnostic used to characterize domains.
//

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dba/errors.hpp"
#include "dba/io.hpp"
#include "dba/linalg.hpp"
#include "dba/model.hpp"

namespace dba {

inline constexpr char kArtifactMagic[4] = {'D', 'B', 'A', 'G'};
inline constexpr std::uint32_t kArtifactVersion = 1;
inline constexpr std::uint32_t kArtifactFlagBiasCorrected = 1u << 0;

struct TensorPayload {
  enum class Kind : std::uint8_t { dense = 0, svd = 1 };

  std::string name;
  std::vector<std::size_t> dims;  // 1-D or 2-D
  Kind kind = Kind::dense;
  std::vector<double> dense;  // kind == dense
  SvdFactors factors;         // kind == svd

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
  }
};

// Serialized estimate of the global gradient: per-tensor payloads in the
// model's registration (= flatten) order. Model-specific, domain-agnostic.
struct GlobalGradientArtifact {
  std::string model_id;
  double beta1_est = 0.0;
  std::uint64_t steps_s = 0;
  bool bias_corrected = false;
  std::vector<TensorPayload> tensors;

  void validate_for(const ToyModel& model) const {
    if (model_id != model.model_id())
      throw ConfigError("artifact: model_id mismatch (artifact is for " + model_id +
                        ", target is " + model.model_id() + ")");
    if (tensors.size() != model.params.size())
      throw ConfigError("artifact: tensor count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (tensors[i].name != model.params[i].name || tensors[i].dims != model.params[i].dims)
        throw ConfigError("artifact: tensor shape mismatch at '" + tensors[i].name + "'");
    }
  }

  // Flattened dense view with SVD payloads expanded; computed once and cached.
  const FlatVector& reconstruct_dense() const {
    if (!cache_) {
      auto flat = std::make_shared<FlatVector>();
      std::size_t total = 0;
      for (const TensorPayload& t : tensors) total += t.count();
      flat->data.reserve(total);
      for (const TensorPayload& t : tensors) {
        if (t.kind == TensorPayload::Kind::dense) {
          if (t.dense.size() != t.count())
            throw ConfigError("artifact: dense payload size mismatch at '" + t.name + "'");
          flat->data.insert(flat->data.end(), t.dense.begin(), t.dense.end());
        } else {
          if (t.dims.size() != 2) throw ConfigError("artifact: svd payload on non-matrix tensor");
          Matrix m = reconstruct(t.factors);
          if (m.rows != t.dims[0] || m.cols != t.dims[1])
            throw ConfigError("artifact: svd factor shape mismatch at '" + t.name + "'");
          flat->data.insert(flat->data.end(), m.data.begin(), m.data.end());
        }
      }
      cache_ = std::move(flat);
    }
    return *cache_;
  }

 private:
  mutable std::shared_ptr<FlatVector> cache_;
};

// Bias-corrected momentum of the gradients seen over `s` steps of a
// zero-learning-rate pass: m_t = beta1*m_{t-1} + (1-beta1)*g_t, stored as
// m_s / (1 - beta1^s). The model is never updated.
inline GlobalGradientArtifact estimate_global_gradient(const ToyModel& model,
                                                       const std::vector<Batch>& general_stream,
                                                       double beta1, std::size_t steps) {
  if (general_stream.empty()) throw ConfigError("estimate_global_gradient: empty stream");
  if (!(beta1 > 0.0 && beta1 < 1.0))
    throw std::invalid_argument("estimate_global_gradient: beta1 must be in (0,1)");
  if (steps < 1) throw std::invalid_argument("estimate_global_gradient: steps must be >= 1");

  FlatVector momentum(model.param_count());
  for (std::size_t t = 1; t <= steps; ++t) {
    const Batch& batch = general_stream[(t - 1) % general_stream.size()];
    FlatVector g;
    try {
      g = backward(model, batch);
    } catch (const NumericalError& e) {
      throw NumericalError("estimate_global_gradient: step " + std::to_string(t) + ": " +
                           e.what());
    }
    for (std::size_t i = 0; i < momentum.size(); ++i)
      momentum[i] = beta1 * momentum[i] + (1.0 - beta1) * g[i];
  }
  const double correction = 1.0 - std::pow(beta1, static_cast<double>(steps));
  for (double& x : momentum.data) x /= correction;

  GlobalGradientArtifact artifact;
  artifact.model_id = model.model_id();
  artifact.beta1_est = beta1;
  artifact.steps_s = steps;
  artifact.bias_corrected = true;
  std::size_t off = 0;
  for (const Tensor& p : model.params) {
    TensorPayload t;
    t.name = p.name;
    t.dims = p.dims;
    t.kind = TensorPayload::Kind::dense;
    t.dense.assign(momentum.data.begin() + static_cast<std::ptrdiff_t>(off),
                   momentum.data.begin() + static_cast<std::ptrdiff_t>(off + p.count()));
    off += p.count();
    artifact.tensors.push_back(std::move(t));
  }
  return artifact;
}

// Replaces each 2-D payload with rank-min(r, rows, cols) SVD factors;
// 1-D tensors stay dense.
inline GlobalGradientArtifact compress(const GlobalGradientArtifact& artifact, std::size_t r) {
  if (r < 1) throw std::invalid_argument("compress: rank must be >= 1");
  GlobalGradientArtifact out;
  out.model_id = artifact.model_id;
  out.beta1_est = artifact.beta1_est;
  out.steps_s = artifact.steps_s;
  out.bias_corrected = artifact.bias_corrected;
  for (const TensorPayload& t : artifact.tensors) {
    if (t.kind != TensorPayload::Kind::dense)
      throw std::invalid_argument("compress: expected a dense artifact");
    TensorPayload c;
    c.name = t.name;
    c.dims = t.dims;
    if (t.dims.size() == 2) {
      Matrix m(t.dims[0], t.dims[1]);
      m.data = t.dense;
      const std::size_t eff = std::min({r, t.dims[0], t.dims[1]});
      c.kind = TensorPayload::Kind::svd;
      c.factors = truncated_svd(m, eff);
    } else {
      c.kind = TensorPayload::Kind::dense;
      c.dense = t.dense;
    }
    out.tensors.push_back(std::move(c));
  }
  return out;
}

// ---- artifact file format (little-endian, no padding) ----
//   magic "DBAG" | version u32 | flags u32 (bit0 bias_corrected)
//   beta1_est f64 | steps_s u64 | model_id str | tensor count u32
//   per tensor: name str | ndim u8 | dims u64 each | kind u8
//     dense: f32 values row-major
//     svd:   rank u32 | U rows*r f32 | S r f32 | V cols*r f32

inline std::string serialize_artifact(const GlobalGradientArtifact& a) {
  io::ByteWriter w;
  w.bytes(std::string_view(kArtifactMagic, 4));
  w.u32(kArtifactVersion);
  w.u32(a.bias_corrected ? kArtifactFlagBiasCorrected : 0u);
  w.f64(a.beta1_est);
  w.u64(a.steps_s);
  w.str(a.model_id);
  w.u32(static_cast<std::uint32_t>(a.tensors.size()));
  for (const TensorPayload& t : a.tensors) {
    w.str(t.name);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (std::size_t d : t.dims) w.u64(d);
    w.u8(static_cast<std::uint8_t>(t.kind));
    if (t.kind == TensorPayload::Kind::dense) {
      for (double x : t.dense) w.f32(static_cast<float>(x));
    } else {
      const std::uint32_t r = static_cast<std::uint32_t>(t.factors.s.size());
      w.u32(r);
      for (double x : t.factors.u.data) w.f32(static_cast<float>(x));
      for (double x : t.factors.s) w.f32(static_cast<float>(x));
      for (double x : t.factors.v.data) w.f32(static_cast<float>(x));
    }
  }
  return w.data();
}

inline GlobalGradientArtifact deserialize_artifact(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kArtifactMagic, 4)) throw ConfigError("artifact: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kArtifactVersion)
    throw ConfigError("artifact: unsupported version " + std::to_string(version));
  GlobalGradientArtifact a;
  const std::uint32_t flags = r.u32();
  a.bias_corrected = (flags & kArtifactFlagBiasCorrected) != 0;
  a.beta1_est = r.f64();
  a.steps_s = r.u64();
  a.model_id = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorPayload t;
    t.name = r.str();
    const std::uint8_t ndim = r.u8();
    if (ndim < 1 || ndim > 2) throw ConfigError("artifact: unsupported tensor rank");
    for (std::uint8_t d = 0; d < ndim; ++d) t.dims.push_back(r.u64());
    t.kind = static_cast<TensorPayload::Kind>(r.u8());
    if (t.kind == TensorPayload::Kind::dense) {
      t.dense.resize(t.count());
      for (double& x : t.dense) x = static_cast<double>(r.f32());
    } else if (t.kind == TensorPayload::Kind::svd) {
      if (ndim != 2) throw ConfigError("artifact: svd payload on non-matrix tensor");
      const std::uint32_t rank = r.u32();
      t.factors.u = Matrix(t.dims[0], rank);
      for (double& x : t.factors.u.data) x = static_cast<double>(r.f32());
      t.factors.s.resize(rank);
      for (double& x : t.factors.s) x = static_cast<double>(r.f32());
      t.factors.v = Matrix(t.dims[1], rank);
      for (double& x : t.factors.v.data) x = static_cast<double>(r.f32());
    } else {
      throw ConfigError("artifact: unknown payload kind");
    }
    a.tensors.push_back(std::move(t));
  }
  return a;
}

inline nlohmann::json artifact_meta(const GlobalGradientArtifact& a) {
  nlohmann::json meta;
  meta["magic"] = "DBAG";
  meta["version"] = kArtifactVersion;
  meta["bias_corrected"] = a.bias_corrected;
  meta["beta1_est"] = a.beta1_est;
  meta["steps_s"] = a.steps_s;
  meta["model_id"] = a.model_id;
  meta["tensors"] = nlohmann::json::array();
  for (const TensorPayload& t : a.tensors) {
    nlohmann::json jt;
    jt["name"] = t.name;
    jt["dims"] = t.dims;
    jt["kind"] = t.kind == TensorPayload::Kind::dense ? "dense" : "svd";
    if (t.kind == TensorPayload::Kind::svd) jt["rank"] = t.factors.s.size();
    meta["tensors"].push_back(std::move(jt));
  }
  return meta;
}

inline void save_artifact(const GlobalGradientArtifact& a, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_artifact(a));
  std::filesystem::path meta_path = path;
  meta_path += ".meta.json";
  io::write_file_atomic(meta_path, artifact_meta(a).dump(2) + "\n");
}

inline GlobalGradientArtifact load_artifact(const std::filesystem::path& path) {
  return deserialize_artifact(io::read_file(path));
}

// ---- model checkpoints reuse the artifact container (all tensors dense) ----

inline void save_checkpoint(const ToyModel& model, const std::filesystem::path& path) {
  GlobalGradientArtifact a;
  a.model_id = model.model_id();
  a.bias_corrected = false;
  for (const Tensor& p : model.params) {
    TensorPayload t;
    t.name = p.name;
    t.dims = p.dims;
    t.kind = TensorPayload::Kind::dense;
    t.dense = p.values;
    a.tensors.push_back(std::move(t));
  }
  save_artifact(a, path);
}

// Loads checkpointed parameters into a model shaped like `like`.
inline ToyModel load_checkpoint(const std::filesystem::path& path, const ToyModel& like) {
  const GlobalGradientArtifact a = load_artifact(path);
  a.validate_for(like);
  ToyModel model = like;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].kind != TensorPayload::Kind::dense)
      throw ConfigError("checkpoint: expected dense tensors");
    model.params[i].values = a.tensors[i].dense;
  }
  return model;
}

// ---- gradient noise scale ----

struct NoiseScaleReport {
  double mean_grad_norm = 0.0;
  double trace_cov = 0.0;
  double noise_scale = 0.0;
  std::size_t n_samples = 0;
  std::size_t batch_size = 0;
  bool degenerate = false;  // mean gradient vanished; noise_scale set to +inf
};

// noise_scale = trace_cov / ||mean gradient||^2 over n per-batch gradients.
inline NoiseScaleReport noise_scale(const ToyModel& model, const std::vector<Batch>& data,
                                    std::size_t n) {
  if (n < 2) throw std::invalid_argument("noise_scale: need at least 2 samples");
  if (data.size() < n) throw std::invalid_argument("noise_scale: not enough batches");

  std::vector<FlatVector> grads;
  grads.reserve(n);
  FlatVector mean(model.param_count());
  for (std::size_t i = 0; i < n; ++i) {
    grads.push_back(backward(model, data[i]));
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += grads.back()[k];
  }
  for (double& x : mean.data) x /= static_cast<double>(n);

  double trace = 0.0;
  for (const FlatVector& g : grads) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k) {
      const double d = g[k] - mean[k];
      d2 += d * d;
    }
    trace += d2;
  }
  trace /= static_cast<double>(n - 1);

  NoiseScaleReport report;
  report.mean_grad_norm = norm(mean);
  report.trace_cov = trace;
  report.n_samples = n;
  report.batch_size = data.front().inputs.rows;
  if (report.mean_grad_norm < 1e-12) {
    report.degenerate = true;
    report.noise_scale = std::numeric_limits<double>::infinity();
  } else {
    report.noise_scale = trace / (report.mean_grad_norm * report.mean_grad_norm);
  }
  return report;
}

}  // namespace dba
