#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dba/harness.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("DBA_CLI");
  REQUIRE(env != nullptr);
  return env;
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + cli_path() + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

nlohmann::json small_config_json(const fs::path& out) {
  return nlohmann::json{
      {"model",
       {{"arch", "mlp2"},
        {"input_dim", 16},
        {"hidden_dim", 8},
        {"num_classes", 4},
        {"pretrain_steps", 50}}},
      {"general",
       {{"kind", "general"},
        {"seed", 101},
        {"n_examples", 1600},
        {"n_eval", 320},
        {"input_dim", 16},
        {"num_classes", 4},
        {"num_subtasks", 4}}},
      {"specific",
       {{"kind", "specific-shifted"},
        {"seed", 202},
        {"n_examples", 800},
        {"n_eval", 160},
        {"input_dim", 16},
        {"num_classes", 4},
        {"shift_magnitude", 1.0}}},
      {"method", "dba"},
      {"stage1", {{"steps", 150}, {"rank", 8}}},
      {"seed", 1},
      {"out", out.string()}};
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  dba::io::write_file_atomic(path, j.dump(2));
}

}  // namespace

TEST_CASE("cli: full pipeline and exit codes") {
  const fs::path dir = fs::temp_directory_path() / "dba_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path out = dir / "run";

  nlohmann::json cfg = small_config_json(out);
  cfg["artifact"] = (out / "global_gradient.svd.dbag").string();
  const fs::path cfg_path = dir / "config.json";
  write_json(cfg_path, cfg);

  SECTION("estimate-global, finetune, report") {
    CHECK(run_cli("estimate-global --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(out / "global_gradient.dense.dbag"));
    CHECK(fs::exists(out / "global_gradient.svd.dbag"));
    CHECK(fs::exists(out / "global_gradient.svd.dbag.meta.json"));
    CHECK(fs::exists(out / "base_model.dbag"));

    CHECK(run_cli("finetune --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(out / "metrics.json"));
    const auto metrics = nlohmann::json::parse(dba::io::read_file(out / "metrics.json"));
    CHECK(metrics.at("method") == "dba");
    const std::string telemetry = dba::io::read_file(out / "telemetry.csv");
    CHECK(telemetry.substr(0, telemetry.find('\n')) ==
          "step,loss,grad_norm,s_t,gamma_t,c_t,eta_t");

    CHECK(run_cli("report " + out.string()) == 0);

    // landscape between the stage-2 endpoints
    nlohmann::json lcfg = cfg;
    lcfg["landscape"] = {{"theta0", (out / "base_model.dbag").string()},
                         {"thetaD", (out / "model_final.dbag").string()},
                         {"domain", "specific"},
                         {"grid_a", 5},
                         {"grid_b", 5}};
    const fs::path lcfg_path = dir / "landscape.json";
    write_json(lcfg_path, lcfg);
    CHECK(run_cli("landscape --config " + lcfg_path.string()) == 0);
    const std::string csv = dba::io::read_file(out / "landscape.csv");
    CHECK(csv.substr(0, csv.find('\n')) == "a,b,loss");

    CHECK(run_cli("noise-scale --config " + cfg_path.string() + " --samples 100") == 0);
    CHECK(fs::exists(out / "noise_scale.json"));
  }

  SECTION("numerical failures exit with code 3") {
    nlohmann::json diverging = small_config_json(dir / "run_nan");
    diverging["method"] = "direct";
    diverging["dba"] = {{"eta0_anneal", 1e150}};  // first update launches params to +-1e150
    const fs::path div_path = dir / "diverging.json";
    write_json(div_path, diverging);
    CHECK(run_cli("finetune --config " + div_path.string()) == 3);
  }

  SECTION("config errors exit with code 2") {
    nlohmann::json bad = small_config_json(out);
    bad["surprise"] = true;
    const fs::path bad_path = dir / "bad.json";
    write_json(bad_path, bad);
    CHECK(run_cli("finetune --config " + bad_path.string()) == 2);

    CHECK(run_cli("finetune --config " + (dir / "missing.json").string()) == 2);

    // artifact estimated for a different architecture: shape mismatch
    CHECK(run_cli("estimate-global --config " + cfg_path.string()) == 0);
    nlohmann::json mismatched = small_config_json(dir / "run_b");
    mismatched["model"]["hidden_dim"] = 12;
    mismatched["general"] = cfg["general"];
    mismatched["specific"] = cfg["specific"];
    mismatched["artifact"] = (out / "global_gradient.svd.dbag").string();
    const fs::path mm_path = dir / "mismatched.json";
    write_json(mm_path, mismatched);
    CHECK(run_cli("finetune --config " + mm_path.string()) == 2);
  }

  fs::remove_all(dir);
}

TEST_CASE("cli: ablate and sweep-k0 emit tables") {
  const fs::path dir = fs::temp_directory_path() / "dba_cli_tables";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path out = dir / "run";

  nlohmann::json cfg = small_config_json(out);
  cfg["artifact"] = (out / "global_gradient.svd.dbag").string();
  const fs::path cfg_path = dir / "config.json";
  write_json(cfg_path, cfg);

  REQUIRE(run_cli("estimate-global --config " + cfg_path.string()) == 0);
  CHECK(run_cli("ablate --config " + cfg_path.string()) == 0);
  const std::string ablation = dba::io::read_file(out / "ablation.csv");
  CHECK(ablation.substr(0, ablation.find('\n')) == "al,ggb,dc,s_d,s_g,s");
  CHECK(std::count(ablation.begin(), ablation.end(), '\n') == 5);  // header + 4 rows

  CHECK(run_cli("sweep-k0 --config " + cfg_path.string()) == 0);
  const std::string sweep = dba::io::read_file(out / "sweep_k0.csv");
  CHECK(sweep.substr(0, sweep.find('\n')) == "k0,s_d,s_g,s");
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 7);  // header + 6 rows

  fs::remove_all(dir);
}
