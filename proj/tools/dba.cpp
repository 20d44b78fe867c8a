//
// Command-line front end for the DBA pipeline: stage-1 global-gradient
// estimation, fine-tuning under every method, the ablation table, the k0
// sweep, loss-landscape slices, the noise-scale diagnostic, and run reports.
//

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dba/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out, "override the output directory");
}

dba::ExperimentConfig load(const CommonArgs& args) {
  dba::ExperimentConfig cfg = dba::load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out) cfg.out = *args.out;
  return cfg;
}

void print_metrics(const char* label, const dba::MetricsRecord& m) {
  std::printf("%-10s S_D=%6.2f  S_G=%6.2f  S=%6.2f\n", label, m.s_d, m.s_g, m.s);
}

int cmd_estimate_global(const CommonArgs& args) {
  const auto cfg = load(args);
  const auto result = dba::run_stage1(cfg);
  std::printf("base model : %s\n", result.base_model_path.c_str());
  std::printf("dense      : %s\n", result.dense_path.c_str());
  std::printf("compressed : %s (rank %zu)\n", result.svd_path.c_str(), cfg.stage1.rank);
  return 0;
}

int cmd_finetune(const CommonArgs& args) {
  const auto cfg = load(args);
  const auto metrics = dba::run_finetune(cfg);
  print_metrics(dba::method_name(cfg.method), metrics);
  std::printf("outputs in %s\n", cfg.out.c_str());
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  const auto cfg = load(args);
  const auto table = dba::run_ablation_suite(cfg);
  fs::create_directories(cfg.out);
  dba::io::write_file_atomic(fs::path(cfg.out) / "ablation.csv", dba::ablation_csv(table));
  std::printf("AL GGB DC |   S_D    S_G      S\n");
  for (const auto& row : table)
    std::printf(" x   %c  %c | %6.2f %6.2f %6.2f\n", row.ggb ? 'x' : ' ', row.dc ? 'x' : ' ',
                row.metrics.s_d, row.metrics.s_g, row.metrics.s);
  std::printf("table written to %s/ablation.csv\n", cfg.out.c_str());
  return 0;
}

int cmd_sweep_k0(const CommonArgs& args) {
  const auto cfg = load(args);
  const std::size_t batches =
      (cfg.specific.n_examples + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t T = cfg.epochs * batches;
  const auto table = dba::run_k0_sweep(cfg, dba::default_k0_values(T));
  fs::create_directories(cfg.out);
  dba::io::write_file_atomic(fs::path(cfg.out) / "sweep_k0.csv", dba::k0_sweep_csv(table));
  std::printf("    k0     S_D    S_G      S\n");
  for (const auto& row : table)
    std::printf("%8.4f %6.2f %6.2f %6.2f\n", row.k0, row.metrics.s_d, row.metrics.s_g,
                row.metrics.s);
  std::printf("table written to %s/sweep_k0.csv\n", cfg.out.c_str());
  return 0;
}

int cmd_landscape(const CommonArgs& args) {
  const auto cfg = load(args);
  const auto& lc = cfg.landscape;
  if (lc.theta0.empty() || lc.thetaD.empty())
    throw dba::ConfigError("landscape: config needs landscape.theta0 and landscape.thetaD");

  const dba::ToyModel shape = dba::build_init_model(cfg.model, cfg.model_seed());
  const dba::ToyModel theta0 = dba::load_checkpoint(lc.theta0, shape);
  const dba::ToyModel thetaD = dba::load_checkpoint(lc.thetaD, shape);

  dba::LabeledDataset dataset;
  if (lc.domain == "general") {
    dataset = dba::make_general(cfg.general_effective(), dba::Split::eval, cfg.batch_size);
  } else if (lc.domain == "specific") {
    dataset = dba::make_specific(cfg.specific_effective(), dba::Split::eval, cfg.batch_size);
  } else {
    throw dba::ConfigError("landscape: domain must be 'general' or 'specific'");
  }

  const auto grid = dba::landscape_slice(theta0, thetaD, dataset, lc.grid_a, lc.grid_b,
                                         lc.a_min, lc.a_max, lc.b_min, lc.b_max,
                                         lc.direction_seed);
  fs::create_directories(cfg.out);
  dba::io::write_file_atomic(fs::path(cfg.out) / "landscape.csv", dba::landscape_csv(grid));
  std::printf("%zu x %zu slice written to %s/landscape.csv\n", lc.grid_a, lc.grid_b,
              cfg.out.c_str());
  return 0;
}

int cmd_noise_scale(const CommonArgs& args, std::size_t samples, bool at_base) {
  const auto cfg = load(args);

  // Per-instance gradients: regenerate both domains at batch size 1.
  auto gen_spec = cfg.general_effective();
  auto spec_spec = cfg.specific_effective();
  const auto general = dba::make_general(gen_spec, dba::Split::train, 1);
  const auto specific = dba::make_specific(spec_spec, dba::Split::train, 1);

  dba::ToyModel model = dba::build_init_model(cfg.model, cfg.model_seed());
  if (at_base) {
    const auto general_train =
        dba::make_general(gen_spec, dba::Split::train, cfg.batch_size);
    model = dba::prepare_base_model(cfg, general_train);
  }

  const auto general_report = dba::noise_scale(model, general.batches, samples);
  const auto specific_report = dba::noise_scale(model, specific.batches, samples);

  auto to_json = [](const dba::NoiseScaleReport& r) {
    nlohmann::json j;
    j["mean_grad_norm"] = r.mean_grad_norm;
    j["trace_cov"] = r.trace_cov;
    j["noise_scale"] = r.degenerate ? nlohmann::json("inf") : nlohmann::json(r.noise_scale);
    j["degenerate"] = r.degenerate;
    j["n_samples"] = r.n_samples;
    j["batch_size"] = r.batch_size;
    return j;
  };
  nlohmann::json j;
  j["at"] = at_base ? "base" : "init";
  j["general"] = to_json(general_report);
  j["specific"] = to_json(specific_report);
  fs::create_directories(cfg.out);
  dba::io::write_file_atomic(fs::path(cfg.out) / "noise_scale.json", j.dump(2) + "\n");

  std::printf("general : noise_scale=%.4f  |mean grad|=%.6f\n", general_report.noise_scale,
              general_report.mean_grad_norm);
  std::printf("specific: noise_scale=%.4f  |mean grad|=%.6f\n", specific_report.noise_scale,
              specific_report.mean_grad_norm);
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs) {
  std::printf("%-28s %-10s %7s %7s %7s\n", "run", "method", "S_D", "S_G", "S");
  for (const std::string& dir : run_dirs) {
    const fs::path path = fs::path(dir) / "metrics.json";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(dba::io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw dba::ConfigError("report: " + path.string() + ": " + e.what());
    }
    const double s_d = j.at("s_d").get<double>();
    const double s_g = j.at("s_g").get<double>();
    const double s = j.at("s").get<double>();
    const double expected = dba::compute_scores(s_d, s_g).s;
    if (std::abs(s - expected) > 1e-9)
      throw dba::NumericalError("report: " + dir + ": S is not the harmonic mean of S_D, S_G");
    std::printf("%-28s %-10s %7.2f %7.2f %7.2f\n", dir.c_str(),
                j.value("method", std::string("?")).c_str(), s_d, s_g, s);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dba: two-stage fine-tuning with a precomputed global gradient"};
  app.require_subcommand(1);

  CommonArgs estimate_args, finetune_args, ablate_args, sweep_args, landscape_args, noise_args;

  add_common(app.add_subcommand("estimate-global",
                                "stage 1: estimate and compress the global gradient"),
             estimate_args);
  add_common(app.add_subcommand("finetune", "stage 2: fine-tune per the configured method"),
             finetune_args);
  add_common(app.add_subcommand("ablate", "run the AL / +GGB / +DC / full ablation table"),
             ablate_args);
  add_common(app.add_subcommand("sweep-k0", "sweep the boosted-magnitude base k0"), sweep_args);
  add_common(app.add_subcommand("landscape", "loss surface slice between two checkpoints"),
             landscape_args);

  auto* noise_cmd =
      app.add_subcommand("noise-scale", "gradient noise scale of both domains");
  add_common(noise_cmd, noise_args);
  std::size_t noise_samples = 1000;
  bool noise_at_base = false;
  noise_cmd->add_option("--samples", noise_samples, "per-instance gradients to sample");
  noise_cmd->add_flag("--at-base", noise_at_base,
                      "measure at the pretrained base model instead of the init model");

  auto* report_cmd = app.add_subcommand("report", "summarize finished runs");
  std::vector<std::string> report_dirs;
  report_cmd->add_option("dirs", report_dirs, "run directories with metrics.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("estimate-global")) return cmd_estimate_global(estimate_args);
    if (app.got_subcommand("finetune")) return cmd_finetune(finetune_args);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args);
    if (app.got_subcommand("sweep-k0")) return cmd_sweep_k0(sweep_args);
    if (app.got_subcommand("landscape")) return cmd_landscape(landscape_args);
    if (app.got_subcommand("noise-scale"))
      return cmd_noise_scale(noise_args, noise_samples, noise_at_base);
    if (app.got_subcommand("report")) return cmd_report(report_dirs);
  } catch (const dba::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const dba::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
