#pragma once
//
// Synthetic general/specific domain generators. The general domain is a
// mixture of Gaussian-cluster subtasks sharing one label space, so per-batch
// gradients are heterogeneous; specific domains are a single subtask, either
// drawn from the same class-anchor prior (familiar) or displaced with its
// label semantics remapped (shifted). Generation is a pure function of
// (spec, split).
//

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dba/errors.hpp"
#include "dba/io.hpp"
#include "dba/model.hpp"
#include "dba/rng.hpp"

namespace dba {

enum class DomainKind : std::uint8_t { general = 0, specific_familiar = 1, specific_shifted = 2 };

inline const char* domain_kind_name(DomainKind k) {
  switch (k) {
    case DomainKind::general: return "general";
    case DomainKind::specific_familiar: return "specific-familiar";
    default: return "specific-shifted";
  }
}

struct DomainSpec {
  DomainKind kind = DomainKind::general;
  std::uint64_t seed = 0;
  std::size_t n_examples = 0;  // train split size
  std::size_t n_eval = 0;      // eval split size
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t num_subtasks = 0;   // general only
  double shift_magnitude = 0.0;   // shifted only

  static DomainSpec default_general(std::uint64_t seed) {
    return DomainSpec{DomainKind::general, seed, 20000, 2000, 64, 10, 8, 0.0};
  }
  static DomainSpec default_familiar(std::uint64_t seed) {
    return DomainSpec{DomainKind::specific_familiar, seed, 4000, 1000, 64, 10, 0, 0.0};
  }
  static DomainSpec default_shifted(std::uint64_t seed) {
    return DomainSpec{DomainKind::specific_shifted, seed, 4000, 1000, 64, 10, 0, 1.0};
  }

  void validate() const {
    if (input_dim == 0 || num_classes < 2) throw ConfigError("domain spec: bad dimensions");
    if (n_examples == 0) throw ConfigError("domain spec: n_examples must be positive");
    if (kind == DomainKind::general && num_subtasks < 2)
      throw ConfigError("domain spec: general domain needs num_subtasks >= 2");
    if (kind != DomainKind::general && num_subtasks != 0)
      throw ConfigError("domain spec: num_subtasks only valid for the general domain");
    if (kind != DomainKind::specific_shifted && shift_magnitude != 0.0)
      throw ConfigError("domain spec: shift_magnitude only valid for the shifted domain");
  }
};

enum class Split : std::uint8_t { train = 0, eval = 1 };

struct LabeledDataset {
  std::vector<Batch> batches;
  DomainSpec provenance;
  Split split = Split::train;

  std::size_t example_count() const {
    std::size_t n = 0;
    for (const Batch& b : batches) n += b.inputs.rows;
    return n;
  }
};

namespace detail {

// Geometry constants for the synthetic domains. Class anchors are fixed
// directions shared by every draw from the generative family; subtask and
// familiar-domain means scatter around them.
inline constexpr double kClassAnchorScale = 3.0;
inline constexpr double kSubtaskSpread = 1.0;
inline constexpr double kExampleNoise = 1.0;
inline constexpr double kGeneralLabelNoise = 0.05;
inline constexpr std::uint64_t kAnchorSeed = 0xa11c0a5e;

inline std::vector<std::vector<double>> class_anchors(std::size_t num_classes,
                                                      std::size_t input_dim) {
  Rng rng(kAnchorSeed);
  std::vector<std::vector<double>> anchors(num_classes, std::vector<double>(input_dim));
  for (auto& a : anchors) {
    double n2 = 0.0;
    for (double& x : a) {
      x = rng.normal();
      n2 += x * x;
    }
    const double scale = kClassAnchorScale / std::sqrt(n2);
    for (double& x : a) x *= scale;
  }
  return anchors;
}

// Permutation of the classes with no fixed point.
inline std::vector<std::size_t> derangement(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    bool fixed = false;
    for (std::size_t i = 0; i < n; ++i)
      if (perm[i] == i) fixed = true;
    if (!fixed) return perm;
  }
}

}  // namespace detail

// Per-subtask class means for a spec (one entry for specific domains).
// Exposed so the degenerate-shift relationship is testable directly.
inline std::vector<Matrix> domain_class_means(const DomainSpec& spec) {
  spec.validate();
  const auto anchors = detail::class_anchors(spec.num_classes, spec.input_dim);
  Rng rng(spec.seed);
  const std::size_t subtasks = spec.kind == DomainKind::general ? spec.num_subtasks : 1;

  std::vector<Matrix> means;
  for (std::size_t j = 0; j < subtasks; ++j) {
    Matrix m(spec.num_classes, spec.input_dim);
    for (std::size_t c = 0; c < spec.num_classes; ++c)
      for (std::size_t d = 0; d < spec.input_dim; ++d)
        m(c, d) = anchors[c][d] + detail::kSubtaskSpread * rng.normal();
    means.push_back(std::move(m));
  }

  if (spec.kind == DomainKind::specific_shifted) {
    const auto perm = detail::derangement(spec.num_classes, rng);
    std::vector<double> direction(spec.input_dim);
    double n2 = 0.0;
    for (double& x : direction) {
      x = rng.normal();
      n2 += x * x;
    }
    for (double& x : direction) x /= std::sqrt(n2);
    Matrix shifted(spec.num_classes, spec.input_dim);
    for (std::size_t c = 0; c < spec.num_classes; ++c)
      for (std::size_t d = 0; d < spec.input_dim; ++d)
        shifted(c, d) = means[0](perm[c], d) + spec.shift_magnitude * direction[d];
    means[0] = std::move(shifted);
  }
  return means;
}

namespace detail {

inline LabeledDataset generate(const DomainSpec& spec, Split split, std::size_t batch_size) {
  spec.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (spec.n_examples < batch_size)
    throw ConfigError("domain spec: n_examples smaller than batch size");

  const auto means = domain_class_means(spec);
  const std::size_t subtasks = means.size();

  // The example stream is forked from the mean draws so it does not depend
  // on how many draws the mean construction consumed.
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);

  const std::size_t train_batches = (spec.n_examples + batch_size - 1) / batch_size;
  const std::size_t eval_batches = (spec.n_eval + batch_size - 1) / batch_size;

  LabeledDataset out;
  out.provenance = spec;
  out.split = split;

  std::size_t global_batch = 0;
  auto emit = [&](std::size_t count, std::size_t remaining_examples, bool keep) {
    for (std::size_t b = 0; b < count; ++b, ++global_batch) {
      const std::size_t rows = std::min(batch_size, remaining_examples);
      remaining_examples -= rows;
      const Matrix& mu = means[global_batch % subtasks];
      Batch batch;
      batch.inputs = Matrix(rows, spec.input_dim);
      batch.labels.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t cls = rng.index(spec.num_classes);
        for (std::size_t d = 0; d < spec.input_dim; ++d)
          batch.inputs(r, d) = mu(cls, d) + kExampleNoise * rng.normal();
        std::uint32_t label = static_cast<std::uint32_t>(cls);
        if (spec.kind == DomainKind::general && rng.bernoulli(kGeneralLabelNoise))
          label = static_cast<std::uint32_t>(rng.index(spec.num_classes));
        batch.labels[r] = label;
      }
      if (keep) out.batches.push_back(std::move(batch));
    }
  };

  emit(train_batches, spec.n_examples, split == Split::train);
  emit(eval_batches, spec.n_eval, split == Split::eval);
  return out;
}

}  // namespace detail

inline LabeledDataset make_general(const DomainSpec& spec, Split split = Split::train,
                                   std::size_t batch_size = 8) {
  if (spec.kind != DomainKind::general) throw ConfigError("make_general: kind must be general");
  return detail::generate(spec, split, batch_size);
}

inline LabeledDataset make_specific(const DomainSpec& spec, Split split = Split::train,
                                    std::size_t batch_size = 8) {
  if (spec.kind == DomainKind::general)
    throw ConfigError("make_specific: kind must be specific-familiar or specific-shifted");
  return detail::generate(spec, split, batch_size);
}

inline LabeledDataset make_dataset(const DomainSpec& spec, Split split = Split::train,
                                   std::size_t batch_size = 8) {
  return spec.kind == DomainKind::general ? make_general(spec, split, batch_size)
                                          : make_specific(spec, split, batch_size);
}

// One epoch of the combined budget: each emitted batch comes from the
// general set with probability lambda, from the specific set otherwise.
// Sources are consumed in order and wrap around.
inline std::vector<Batch> mixture_stream(const LabeledDataset& general,
                                         const LabeledDataset& specific, double lambda,
                                         std::uint64_t seed) {
  if (general.batches.empty() || specific.batches.empty())
    throw ConfigError("mixture_stream: empty dataset");
  if (lambda < 0.0 || lambda >= 1.0)
    throw ConfigError("mixture_stream: lambda must be in [0, 1)");

  const double n_specific = static_cast<double>(specific.batches.size());
  const std::size_t length =
      static_cast<std::size_t>(std::llround(n_specific / (1.0 - lambda)));

  Rng rng(seed);
  std::vector<Batch> stream;
  stream.reserve(length);
  std::size_t gi = 0, si = 0;
  for (std::size_t i = 0; i < length; ++i) {
    if (rng.bernoulli(lambda)) {
      stream.push_back(general.batches[gi++ % general.batches.size()]);
    } else {
      stream.push_back(specific.batches[si++ % specific.batches.size()]);
    }
  }
  return stream;
}

// ---- binary container (same framing conventions as the artifact file) ----

inline constexpr char kDatasetMagic[4] = {'D', 'B', 'A', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::string serialize_dataset(const LabeledDataset& ds) {
  io::ByteWriter w;
  w.bytes(std::string_view(kDatasetMagic, 4));
  w.u32(kDatasetVersion);
  const DomainSpec& s = ds.provenance;
  w.u8(static_cast<std::uint8_t>(s.kind));
  w.u64(s.seed);
  w.u64(s.n_examples);
  w.u64(s.n_eval);
  w.u64(s.input_dim);
  w.u32(static_cast<std::uint32_t>(s.num_classes));
  w.u32(static_cast<std::uint32_t>(s.num_subtasks));
  w.f64(s.shift_magnitude);
  w.u8(static_cast<std::uint8_t>(ds.split));
  w.u32(static_cast<std::uint32_t>(ds.batches.size()));
  for (const Batch& b : ds.batches) {
    w.u32(static_cast<std::uint32_t>(b.inputs.rows));
    for (double x : b.inputs.data) w.f32(static_cast<float>(x));
    for (std::uint32_t y : b.labels) w.u32(y);
  }
  return w.data();
}

inline LabeledDataset deserialize_dataset(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kDatasetMagic, 4)) throw ConfigError("dataset: bad magic");
  if (r.u32() != kDatasetVersion) throw ConfigError("dataset: unsupported version");
  LabeledDataset ds;
  DomainSpec& s = ds.provenance;
  s.kind = static_cast<DomainKind>(r.u8());
  s.seed = r.u64();
  s.n_examples = r.u64();
  s.n_eval = r.u64();
  s.input_dim = r.u64();
  s.num_classes = r.u32();
  s.num_subtasks = r.u32();
  s.shift_magnitude = r.f64();
  ds.split = static_cast<Split>(r.u8());
  const std::uint32_t nb = r.u32();
  ds.batches.reserve(nb);
  for (std::uint32_t i = 0; i < nb; ++i) {
    Batch b;
    const std::uint32_t rows = r.u32();
    b.inputs = Matrix(rows, s.input_dim);
    for (double& x : b.inputs.data) x = static_cast<double>(r.f32());
    b.labels.resize(rows);
    for (std::uint32_t& y : b.labels) y = r.u32();
    ds.batches.push_back(std::move(b));
  }
  return ds;
}

inline void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_dataset(ds));
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  return deserialize_dataset(io::read_file(path));
}

}  // namespace dba
