#pragma once
//
// Experiment orchestration: JSON configs, the stage-1 precompute, stage-2
// fine-tuning under every method and ablation, S_D/S_G/S scoring,
// loss-landscape slices, and the k0 sweep. Runs are deterministic for a
// given (config, seed); the seed offsets the dataset and init seeds so that
// repeat-seed studies vary the whole testbed.
//

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dba/datasets.hpp"
#include "dba/errors.hpp"
#include "dba/gradestimate.hpp"
#include "dba/io.hpp"
#include "dba/model.hpp"
#include "dba/optimizer.hpp"

namespace dba {

struct ModelSpec {
  Arch arch = Arch::mlp2;
  std::size_t input_dim = 64;
  std::size_t hidden_dim = 32;
  std::size_t num_classes = 10;
  std::uint64_t init_seed = 1;
  // The base model stands in for the pretrained LLM: it is trained on the
  // general domain before any fine-tuning method runs. A step budget rather
  // than an epoch count, so the base sits short of the general optimum and
  // the general domain keeps a residual gradient of useful magnitude.
  std::size_t pretrain_steps = 100;
  double pretrain_eta = 3e-3;
};

struct Stage1Config {
  double beta1 = 0.999;
  std::size_t steps = 0;  // 0 = one epoch over the general train split
  std::size_t rank = 512;
};

enum class Method { direct, vanilla, dba, ablation };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::direct: return "direct";
    case Method::vanilla: return "vanilla";
    case Method::dba: return "dba";
    default: return "ablation";
  }
}

struct AblationFlags {
  bool ggb = true;
  bool dc = true;
  bool anneal = true;
};

struct LandscapeConfig {
  std::string theta0;  // checkpoint paths
  std::string thetaD;
  std::string domain = "specific";  // which eval split supplies the loss
  std::size_t grid_a = 9;
  std::size_t grid_b = 9;
  double a_min = -0.5, a_max = 1.5;
  double b_min = -1.0, b_max = 1.0;
  std::uint64_t direction_seed = 7;
};

struct ExperimentConfig {
  ModelSpec model;
  DomainSpec general = DomainSpec::default_general(101);
  DomainSpec specific = DomainSpec::default_shifted(202);
  Method method = Method::dba;
  double lambda = 0.0;       // vanilla only
  AblationFlags flags;       // ablation only
  DbaConfig dba;             // T is derived from the stream length at run time
  Stage1Config stage1;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  std::string out = "runs/out";
  std::string artifact;      // global-gradient artifact path (dba/ablation)
  LandscapeConfig landscape;

  // Seed-offset views: repeat-seed studies shift every random ingredient.
  DomainSpec general_effective() const {
    DomainSpec s = general;
    s.seed += seed;
    return s;
  }
  DomainSpec specific_effective() const {
    DomainSpec s = specific;
    s.seed += seed;
    return s;
  }
  std::uint64_t model_seed() const { return model.init_seed + seed; }
  std::uint64_t mixture_seed(std::size_t epoch) const {
    return (0xd1b54a32d192ed03ull ^ seed) + epoch;
  }

  AblationFlags method_flags() const {
    switch (method) {
      case Method::direct:
      case Method::vanilla: return {false, false, false};
      case Method::dba: return {true, true, true};
      default: return flags;
    }
  }

  void validate() const {
    general.validate();
    specific.validate();
    if (general.kind != DomainKind::general)
      throw ConfigError("config: 'general' must have kind general");
    if (specific.kind == DomainKind::general)
      throw ConfigError("config: 'specific' must be a specific domain");
    if (general.input_dim != model.input_dim || specific.input_dim != model.input_dim ||
        general.num_classes != model.num_classes || specific.num_classes != model.num_classes)
      throw ConfigError("config: domain dimensions must match the model");
    if (method == Method::vanilla && (lambda < 0.0 || lambda >= 1.0))
      throw ConfigError("config: vanilla requires lambda in [0, 1)");
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (out.empty()) throw ConfigError("config: 'out' is required");
    dba.validate();
  }
};

// ---- JSON config parsing (unknown keys rejected) ----

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
  if (!j.is_object()) throw ConfigError("config: '" + ctx + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) throw ConfigError("config: unknown key '" + it.key() + "' in " + ctx);
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

inline Arch parse_arch(const std::string& s) {
  if (s == "softmax-regression") return Arch::softmax_regression;
  if (s == "mlp2") return Arch::mlp2;
  throw ConfigError("config: unknown arch '" + s + "'");
}

inline DomainKind parse_kind(const std::string& s) {
  if (s == "general") return DomainKind::general;
  if (s == "specific-familiar") return DomainKind::specific_familiar;
  if (s == "specific-shifted") return DomainKind::specific_shifted;
  throw ConfigError("config: unknown domain kind '" + s + "'");
}

inline Method parse_method(const std::string& s) {
  if (s == "direct") return Method::direct;
  if (s == "vanilla") return Method::vanilla;
  if (s == "dba") return Method::dba;
  if (s == "ablation") return Method::ablation;
  throw ConfigError("config: unknown method '" + s + "'");
}

inline ModelSpec parse_model(const nlohmann::json& j) {
  check_keys(j, {"arch", "input_dim", "hidden_dim", "num_classes", "init_seed",
                 "pretrain_steps", "pretrain_eta"},
             "model");
  ModelSpec m;
  m.arch = parse_arch(get_or<std::string>(j, "arch", "mlp2"));
  m.input_dim = get_or<std::size_t>(j, "input_dim", m.input_dim);
  m.hidden_dim = get_or<std::size_t>(j, "hidden_dim", m.hidden_dim);
  m.num_classes = get_or<std::size_t>(j, "num_classes", m.num_classes);
  m.init_seed = get_or<std::uint64_t>(j, "init_seed", m.init_seed);
  m.pretrain_steps = get_or<std::size_t>(j, "pretrain_steps", m.pretrain_steps);
  m.pretrain_eta = get_or<double>(j, "pretrain_eta", m.pretrain_eta);
  return m;
}

inline DomainSpec parse_domain(const nlohmann::json& j, const std::string& ctx) {
  check_keys(j, {"kind", "seed", "n_examples", "n_eval", "input_dim", "num_classes",
                 "num_subtasks", "shift_magnitude"},
             ctx);
  if (!j.contains("kind")) throw ConfigError("config: '" + ctx + "' needs a kind");
  const DomainKind kind = parse_kind(j.at("kind").get<std::string>());
  DomainSpec s;
  switch (kind) {
    case DomainKind::general: s = DomainSpec::default_general(101); break;
    case DomainKind::specific_familiar: s = DomainSpec::default_familiar(202); break;
    case DomainKind::specific_shifted: s = DomainSpec::default_shifted(202); break;
  }
  if (kind != DomainKind::general && j.contains("num_subtasks"))
    throw ConfigError("config: num_subtasks only applies to the general domain");
  if (kind != DomainKind::specific_shifted && j.contains("shift_magnitude"))
    throw ConfigError("config: shift_magnitude only applies to the shifted domain");
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
  s.n_examples = get_or<std::size_t>(j, "n_examples", s.n_examples);
  s.n_eval = get_or<std::size_t>(j, "n_eval", s.n_eval);
  s.input_dim = get_or<std::size_t>(j, "input_dim", s.input_dim);
  s.num_classes = get_or<std::size_t>(j, "num_classes", s.num_classes);
  s.num_subtasks = get_or<std::size_t>(j, "num_subtasks", s.num_subtasks);
  s.shift_magnitude = get_or<double>(j, "shift_magnitude", s.shift_magnitude);
  return s;
}

inline DbaConfig parse_dba(const nlohmann::json& j) {
  check_keys(j, {"eta0_anneal", "k0", "c0", "beta1", "beta2", "epsilon", "weight_decay"},
             "dba");
  DbaConfig d;
  d.eta0_anneal = get_or<double>(j, "eta0_anneal", d.eta0_anneal);
  if (j.contains("k0") && !j.at("k0").is_null()) d.k0 = j.at("k0").get<double>();
  d.c0 = get_or<double>(j, "c0", d.c0);
  d.beta1 = get_or<double>(j, "beta1", d.beta1);
  d.beta2 = get_or<double>(j, "beta2", d.beta2);
  d.epsilon = get_or<double>(j, "epsilon", d.epsilon);
  d.weight_decay = get_or<double>(j, "weight_decay", d.weight_decay);
  return d;
}

inline Stage1Config parse_stage1(const nlohmann::json& j) {
  check_keys(j, {"beta1", "steps", "rank"}, "stage1");
  Stage1Config s;
  s.beta1 = get_or<double>(j, "beta1", s.beta1);
  s.steps = get_or<std::size_t>(j, "steps", s.steps);
  s.rank = get_or<std::size_t>(j, "rank", s.rank);
  return s;
}

inline LandscapeConfig parse_landscape(const nlohmann::json& j) {
  check_keys(j, {"theta0", "thetaD", "domain", "grid_a", "grid_b", "a_min", "a_max", "b_min",
                 "b_max", "direction_seed"},
             "landscape");
  LandscapeConfig l;
  l.theta0 = get_or<std::string>(j, "theta0", l.theta0);
  l.thetaD = get_or<std::string>(j, "thetaD", l.thetaD);
  l.domain = get_or<std::string>(j, "domain", l.domain);
  l.grid_a = get_or<std::size_t>(j, "grid_a", l.grid_a);
  l.grid_b = get_or<std::size_t>(j, "grid_b", l.grid_b);
  l.a_min = get_or<double>(j, "a_min", l.a_min);
  l.a_max = get_or<double>(j, "a_max", l.a_max);
  l.b_min = get_or<double>(j, "b_min", l.b_min);
  l.b_max = get_or<double>(j, "b_max", l.b_max);
  l.direction_seed = get_or<std::uint64_t>(j, "direction_seed", l.direction_seed);
  return l;
}

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"model", "general", "specific", "method", "lambda", "flags", "dba",
                      "stage1", "epochs", "batch_size", "seed", "out", "artifact", "landscape"},
                     "config");
  ExperimentConfig cfg;
  if (j.contains("model")) cfg.model = detail::parse_model(j.at("model"));
  if (j.contains("general")) cfg.general = detail::parse_domain(j.at("general"), "general");
  if (j.contains("specific")) cfg.specific = detail::parse_domain(j.at("specific"), "specific");
  if (!j.contains("method")) throw ConfigError("config: 'method' is required");
  cfg.method = detail::parse_method(j.at("method").get<std::string>());
  if (cfg.method == Method::vanilla) {
    if (!j.contains("lambda")) throw ConfigError("config: vanilla requires 'lambda'");
    cfg.lambda = j.at("lambda").get<double>();
  } else if (j.contains("lambda")) {
    throw ConfigError("config: 'lambda' only applies to the vanilla method");
  }
  if (cfg.method == Method::ablation) {
    if (!j.contains("flags")) throw ConfigError("config: ablation requires 'flags'");
    detail::check_keys(j.at("flags"), {"ggb", "dc", "anneal"}, "flags");
    cfg.flags.ggb = detail::get_or<bool>(j.at("flags"), "ggb", true);
    cfg.flags.dc = detail::get_or<bool>(j.at("flags"), "dc", true);
    cfg.flags.anneal = detail::get_or<bool>(j.at("flags"), "anneal", true);
  } else if (j.contains("flags")) {
    throw ConfigError("config: 'flags' only applies to the ablation method");
  }
  if (j.contains("dba")) cfg.dba = detail::parse_dba(j.at("dba"));
  if (j.contains("stage1")) cfg.stage1 = detail::parse_stage1(j.at("stage1"));
  cfg.epochs = detail::get_or<std::size_t>(j, "epochs", cfg.epochs);
  cfg.batch_size = detail::get_or<std::size_t>(j, "batch_size", cfg.batch_size);
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.out = detail::get_or<std::string>(j, "out", cfg.out);
  cfg.artifact = detail::get_or<std::string>(j, "artifact", cfg.artifact);
  if (j.contains("landscape")) cfg.landscape = detail::parse_landscape(j.at("landscape"));
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- scoring ----

struct MetricsRecord {
  double s_d = 0.0;
  double s_g = 0.0;
  double s = 0.0;
  std::string telemetry_path;
  double wall_time_sec = 0.0;
};

// S = harmonic mean of S_D and S_G; zero whenever either score is zero.
inline MetricsRecord compute_scores(double acc_d, double acc_g) {
  if (acc_d < 0.0 || acc_d > 100.0 || acc_g < 0.0 || acc_g > 100.0)
    throw std::invalid_argument("compute_scores: scores must be in [0,100]");
  MetricsRecord r;
  r.s_d = acc_d;
  r.s_g = acc_g;
  r.s = (acc_d + acc_g) == 0.0 ? 0.0 : 2.0 * acc_d * acc_g / (acc_d + acc_g);
  return r;
}

// ---- training core ----

namespace detail {

struct TrainOutcome {
  ToyModel model;
  std::string telemetry_csv;
  std::vector<StepTelemetry> telemetry;
};

inline TrainOutcome train_with_dba(ToyModel model, const std::vector<Batch>& stream,
                                   DbaConfig cfg, std::optional<FlatVector> global_grad) {
  cfg.T = stream.size();
  cfg.validate();
  DbaState state = DbaState::init(model.param_count(), std::move(global_grad));
  std::string csv = "step,loss,grad_norm,s_t,gamma_t,c_t,eta_t\n";
  TrainOutcome out{std::move(model), {}, {}};
  out.telemetry.reserve(stream.size());
  for (std::size_t t = 1; t <= stream.size(); ++t) {
    const Batch& batch = stream[t - 1];
    const double loss = forward_loss(out.model, batch);
    const FlatVector g = backward(out.model, batch);
    const double grad_norm = norm(g);
    dba_step(out.model, state, cfg, g);
    csv += std::to_string(t);
    csv += ',';
    csv += fmt_double(loss);
    csv += ',';
    csv += fmt_double(grad_norm);
    csv += ',';
    csv += fmt_double(state.last.s_t);
    csv += ',';
    csv += fmt_double(state.last.gamma_t);
    csv += ',';
    csv += fmt_double(state.last.c_t);
    csv += ',';
    csv += fmt_double(state.last.eta_t);
    csv += '\n';
    out.telemetry.push_back(state.last);
  }
  out.telemetry_csv = std::move(csv);
  return out;
}

inline std::vector<Batch> repeat_epochs(const std::vector<Batch>& base, std::size_t epochs) {
  std::vector<Batch> stream;
  stream.reserve(base.size() * epochs);
  for (std::size_t e = 0; e < epochs; ++e)
    stream.insert(stream.end(), base.begin(), base.end());
  return stream;
}

}  // namespace detail

inline ToyModel build_init_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.arch == Arch::softmax_regression)
    return ToyModel::make_softmax_regression(spec.input_dim, spec.num_classes, seed);
  return ToyModel::make_mlp2(spec.input_dim, spec.hidden_dim, spec.num_classes, seed);
}

// Initializes the model and trains it on the general domain; this is the
// pretrained starting point every fine-tuning method shares.
inline ToyModel prepare_base_model(const ExperimentConfig& cfg,
                                   const LabeledDataset& general_train) {
  ToyModel model = build_init_model(cfg.model, cfg.model_seed());
  if (cfg.model.pretrain_steps == 0) return model;
  std::vector<Batch> stream;
  stream.reserve(cfg.model.pretrain_steps);
  for (std::size_t t = 0; t < cfg.model.pretrain_steps; ++t)
    stream.push_back(general_train.batches[t % general_train.batches.size()]);
  DbaConfig pre;
  pre.eta0_anneal = cfg.model.pretrain_eta;
  pre.enable_ggb = false;
  pre.enable_dc = false;
  pre.enable_anneal = false;
  auto outcome = detail::train_with_dba(std::move(model), stream, pre, std::nullopt);
  return std::move(outcome.model);
}

// ---- stage 1 ----

struct Stage1Result {
  std::filesystem::path dense_path;
  std::filesystem::path svd_path;
  std::filesystem::path base_model_path;
};

// Estimates the global gradient at the base model over the general train
// stream and writes dense + compressed artifacts. Idempotent for a given
// (config, seed).
inline Stage1Result run_stage1(const ExperimentConfig& cfg) {
  cfg.validate();
  const LabeledDataset general_train =
      make_general(cfg.general_effective(), Split::train, cfg.batch_size);
  const ToyModel base = prepare_base_model(cfg, general_train);

  const std::size_t steps =
      cfg.stage1.steps > 0 ? cfg.stage1.steps : general_train.batches.size();
  const GlobalGradientArtifact dense =
      estimate_global_gradient(base, general_train.batches, cfg.stage1.beta1, steps);
  const GlobalGradientArtifact compressed = compress(dense, cfg.stage1.rank);

  std::filesystem::create_directories(cfg.out);
  Stage1Result result;
  result.dense_path = std::filesystem::path(cfg.out) / "global_gradient.dense.dbag";
  result.svd_path = std::filesystem::path(cfg.out) / "global_gradient.svd.dbag";
  result.base_model_path = std::filesystem::path(cfg.out) / "base_model.dbag";
  save_artifact(dense, result.dense_path);
  save_artifact(compressed, result.svd_path);
  save_checkpoint(base, result.base_model_path);
  return result;
}

// ---- stage 2 ----

struct FinetuneResult {
  MetricsRecord metrics;
  double pre_s_d = 0.0;  // base-model scores before fine-tuning
  double pre_s_g = 0.0;
  ToyModel base_model;
  ToyModel final_model;
  std::string telemetry_csv;
};

// Trains per the configured method and evaluates S_D on the specific eval
// split and S_G on the general eval split. Pure computation; file outputs
// are handled by run_finetune.
inline FinetuneResult run_finetune_inmem(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  const DomainSpec gen_spec = cfg.general_effective();
  const DomainSpec spec_spec = cfg.specific_effective();
  const LabeledDataset general_train = make_general(gen_spec, Split::train, cfg.batch_size);
  const LabeledDataset general_eval = make_general(gen_spec, Split::eval, cfg.batch_size);
  const LabeledDataset specific_train = make_specific(spec_spec, Split::train, cfg.batch_size);
  const LabeledDataset specific_eval = make_specific(spec_spec, Split::eval, cfg.batch_size);

  ToyModel base = prepare_base_model(cfg, general_train);

  const AblationFlags flags = cfg.method_flags();
  std::optional<FlatVector> global_grad;
  if (flags.ggb || flags.dc) {
    if (cfg.artifact.empty())
      throw ConfigError("config: method '" + std::string(method_name(cfg.method)) +
                        "' requires 'artifact'");
    const GlobalGradientArtifact artifact = load_artifact(cfg.artifact);
    artifact.validate_for(base);
    global_grad = artifact.reconstruct_dense();
  }

  std::vector<Batch> stream;
  if (cfg.method == Method::vanilla) {
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      auto epoch_stream =
          mixture_stream(general_train, specific_train, cfg.lambda, cfg.mixture_seed(e));
      stream.insert(stream.end(), std::make_move_iterator(epoch_stream.begin()),
                    std::make_move_iterator(epoch_stream.end()));
    }
  } else {
    stream = detail::repeat_epochs(specific_train.batches, cfg.epochs);
  }

  DbaConfig opt = cfg.dba;
  opt.enable_ggb = flags.ggb;
  opt.enable_dc = flags.dc;
  opt.enable_anneal = flags.anneal;

  FinetuneResult result;
  result.pre_s_d = eval_accuracy(base, specific_eval.batches);
  result.pre_s_g = eval_accuracy(base, general_eval.batches);
  result.base_model = base;

  auto outcome = detail::train_with_dba(std::move(base), stream, opt, std::move(global_grad));
  result.final_model = std::move(outcome.model);
  result.telemetry_csv = std::move(outcome.telemetry_csv);

  const double acc_d = eval_accuracy(result.final_model, specific_eval.batches);
  const double acc_g = eval_accuracy(result.final_model, general_eval.batches);
  result.metrics = compute_scores(acc_d, acc_g);
  result.metrics.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

inline nlohmann::json metrics_to_json(const MetricsRecord& m) {
  nlohmann::json j;
  j["s_d"] = m.s_d;
  j["s_g"] = m.s_g;
  j["s"] = m.s;
  j["telemetry"] = m.telemetry_path;
  j["wall_time_sec"] = m.wall_time_sec;
  return j;
}

// Full fine-tuning run with file outputs: telemetry.csv, metrics.json, and
// base/final checkpoints under cfg.out.
inline MetricsRecord run_finetune(const ExperimentConfig& cfg) {
  FinetuneResult result = run_finetune_inmem(cfg);
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path out_dir(cfg.out);

  io::write_file_atomic(out_dir / "telemetry.csv", result.telemetry_csv);
  save_checkpoint(result.base_model, out_dir / "base_model.dbag");
  save_checkpoint(result.final_model, out_dir / "model_final.dbag");

  result.metrics.telemetry_path = "telemetry.csv";
  nlohmann::json j = metrics_to_json(result.metrics);
  j["method"] = method_name(cfg.method);
  j["seed"] = cfg.seed;
  j["pre_finetune"] = {{"s_d", result.pre_s_d}, {"s_g", result.pre_s_g}};
  io::write_file_atomic(out_dir / "metrics.json", j.dump(2) + "\n");
  return result.metrics;
}

// ---- loss landscape ----

struct LandscapePoint {
  double a = 0.0;
  double b = 0.0;
  double loss = 0.0;
};

namespace detail {

inline double dataset_loss(const ToyModel& model, const LabeledDataset& ds) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Batch& b : ds.batches) {
    total += forward_loss(model, b) * static_cast<double>(b.inputs.rows);
    count += b.inputs.rows;
  }
  return total / static_cast<double>(count);
}

}  // namespace detail

// Two-dimensional slice of the loss surface: axis 1 is thetaD - theta0,
// axis 2 a seeded random direction orthogonalized against it and scaled to
// the same norm.
inline std::vector<LandscapePoint> landscape_slice(const ToyModel& theta0, const ToyModel& thetaD,
                                                   const LabeledDataset& dataset,
                                                   std::size_t grid_a, std::size_t grid_b,
                                                   double a_min, double a_max, double b_min,
                                                   double b_max, std::uint64_t direction_seed) {
  if (theta0.model_id() != thetaD.model_id())
    throw std::invalid_argument("landscape_slice: architecture mismatch");
  if (grid_a < 3 || grid_b < 3) throw std::invalid_argument("landscape_slice: grid must be >= 3x3");

  const FlatVector flat0 = theta0.flatten();
  const FlatVector flatD = thetaD.flatten();
  FlatVector d1(flat0.size());
  for (std::size_t i = 0; i < d1.size(); ++i) d1[i] = flatD[i] - flat0[i];
  const double n1 = norm(d1);
  if (n1 == 0.0) throw std::invalid_argument("landscape_slice: theta0 == thetaD");

  Rng rng(direction_seed);
  FlatVector raw(d1.size());
  for (double& x : raw.data) x = rng.normal();
  FlatVector d2 = orthogonalize(raw, d1);
  const double n2 = norm(d2);
  if (n2 == 0.0) throw NumericalError("landscape_slice: degenerate random direction");
  for (double& x : d2.data) x *= n1 / n2;

  ToyModel probe = theta0;
  FlatVector point(flat0.size());
  std::vector<LandscapePoint> grid;
  grid.reserve(grid_a * grid_b);
  for (std::size_t ia = 0; ia < grid_a; ++ia) {
    const double a = a_min + (a_max - a_min) * static_cast<double>(ia) /
                                 static_cast<double>(grid_a - 1);
    for (std::size_t ib = 0; ib < grid_b; ++ib) {
      const double b = b_min + (b_max - b_min) * static_cast<double>(ib) /
                                   static_cast<double>(grid_b - 1);
      for (std::size_t i = 0; i < point.size(); ++i)
        point[i] = flat0[i] + a * d1[i] + b * d2[i];
      probe.set_from_flat(point);
      grid.push_back({a, b, detail::dataset_loss(probe, dataset)});
    }
  }
  return grid;
}

inline std::string landscape_csv(const std::vector<LandscapePoint>& grid) {
  std::string csv = "a,b,loss\n";
  for (const LandscapePoint& p : grid) {
    csv += detail::fmt_double(p.a);
    csv += ',';
    csv += detail::fmt_double(p.b);
    csv += ',';
    csv += detail::fmt_double(p.loss);
    csv += '\n';
  }
  return csv;
}

// ---- ablation suite and k0 sweep ----

struct AblationRow {
  bool ggb = false;
  bool dc = false;
  MetricsRecord metrics;
};

// The four Table-style rows: AL only, AL+GGB, AL+DC, AL+GGB+DC, with a
// shared seed and testbed.
inline std::vector<AblationRow> run_ablation_suite(const ExperimentConfig& base_cfg) {
  const bool rows[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};
  std::vector<AblationRow> table;
  for (const auto& row : rows) {
    ExperimentConfig cfg = base_cfg;
    cfg.method = Method::ablation;
    cfg.flags = AblationFlags{row[0], row[1], true};
    AblationRow r;
    r.ggb = row[0];
    r.dc = row[1];
    r.metrics = run_finetune_inmem(cfg).metrics;
    table.push_back(std::move(r));
  }
  return table;
}

inline std::string ablation_csv(const std::vector<AblationRow>& table) {
  std::string csv = "al,ggb,dc,s_d,s_g,s\n";
  for (const AblationRow& r : table) {
    csv += "1,";
    csv += r.ggb ? "1," : "0,";
    csv += r.dc ? "1," : "0,";
    csv += detail::fmt_double(r.metrics.s_d);
    csv += ',';
    csv += detail::fmt_double(r.metrics.s_g);
    csv += ',';
    csv += detail::fmt_double(r.metrics.s);
    csv += '\n';
  }
  return csv;
}

struct K0Row {
  double k0 = 0.0;
  MetricsRecord metrics;
};

inline std::vector<K0Row> run_k0_sweep(const ExperimentConfig& base_cfg,
                                       const std::vector<double>& k0_values) {
  std::vector<K0Row> table;
  for (double k0 : k0_values) {
    ExperimentConfig cfg = base_cfg;
    cfg.method = Method::dba;
    cfg.dba.k0 = k0;
    K0Row row;
    row.k0 = k0;
    row.metrics = run_finetune_inmem(cfg).metrics;
    table.push_back(std::move(row));
  }
  return table;
}

// The sweep grid used when the caller does not pass explicit values:
// {50/T, 100/T, 150/T, 200/T, 250/T, 300/T} for T steps of fine-tuning.
inline std::vector<double> default_k0_values(std::size_t T) {
  std::vector<double> values;
  for (int mult = 50; mult <= 300; mult += 50)
    values.push_back(static_cast<double>(mult) / static_cast<double>(T));
  return values;
}

inline std::string k0_sweep_csv(const std::vector<K0Row>& table) {
  std::string csv = "k0,s_d,s_g,s\n";
  for (const K0Row& r : table) {
    csv += detail::fmt_double(r.k0);
    csv += ',';
    csv += detail::fmt_double(r.metrics.s_d);
    csv += ',';
    csv += detail::fmt_double(r.metrics.s_g);
    csv += ',';
    csv += detail::fmt_double(r.metrics.s);
    csv += '\n';
  }
  return csv;
}

}  // namespace dba
