#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "sparsevb/arch.hpp"
#include "sparsevb/errors.hpp"
#include "sparsevb/harness.hpp"
#include "sparsevb/train.hpp"
#include "sparsevb/verify.hpp"

namespace fs = std::filesystem;
using namespace sparsevb;

namespace {

constexpr int kOk = 0;
constexpr int kViolation = 1;
constexpr int kConfigError = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  int workers = 0;
};

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

ExperimentConfig load_config(const Globals& g) {
  if (g.config.empty()) throw ConfigError("this subcommand needs --config <path>");
  if (!fs::exists(g.config)) throw ConfigError("config file not found: " + g.config);
  auto cfg = load_experiment_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

// Wall-clock information is kept out of the reproducible payloads.
void write_metadata(const fs::path& out, const std::string& command, double seconds) {
  nlohmann::ordered_json j{{"command", command},
                           {"finished_unix", static_cast<long long>(std::time(nullptr))},
                           {"runtime_seconds", seconds},
                           {"workers", omp_get_max_threads()}};
  write_file(out / "metadata.json", j.dump(2) + "\n");
}

int run_rate_study(const ExperimentConfig& cfg, const fs::path& out) {
  const auto rep = rate_study(cfg);
  std::ostringstream csv;
  rep.write_csv(csv);
  write_file(out / "rate_study.csv", csv.str());
  auto j = rep.to_json();
  j["config"] = cfg.to_json();
  write_file(out / "rate_study.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return rep.failures > 0 ? kViolation : kOk;
}

int run_select_study(const ExperimentConfig& cfg, const fs::path& out) {
  const auto rep = select_study(cfg);
  std::ostringstream csv;
  rep.write_csv(csv);
  write_file(out / "selection.csv", csv.str());
  auto j = rep.to_json();
  j["config"] = cfg.to_json();
  write_file(out / "selection.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse variational inference for deep ReLU networks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Root seed (overrides the config)");
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--workers", g.workers, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);

  auto* arch_cmd = app.add_subcommand("arch", "Holder-target architecture and rates as JSON");
  std::size_t n = 1024;
  int d = 1;
  double beta = 1.0, cd = 1.0, bound = 2.0;
  std::string slab = "uniform";
  arch_cmd->add_option("--n", n)->required();
  arch_cmd->add_option("--d", d)->required();
  arch_cmd->add_option("--beta", beta)->required();
  arch_cmd->add_option("--cd", cd, "Width constant C_D");
  arch_cmd->add_option("--bound", bound, "Coefficient bound B");
  arch_cmd->add_option("--slab", slab, "uniform or gaussian");

  auto* rate_cmd = app.add_subcommand("rate", "Rate formula for an explicit architecture");
  int L = 3, D = 1;
  std::size_t S = 1;
  rate_cmd->add_option("--n", n)->required();
  rate_cmd->add_option("--d", d)->required();
  rate_cmd->add_option("--L", L)->required();
  rate_cmd->add_option("--D", D)->required();
  rate_cmd->add_option("--S", S)->required();
  rate_cmd->add_option("--bound", bound);
  rate_cmd->add_option("--slab", slab);

  auto* train_cmd = app.add_subcommand("train", "Fit one explicit architecture (config n_grid[0] samples)");
  auto* select_cmd = app.add_subcommand("select", "Penalized-ELBO selection");
  std::string manifest;
  select_cmd->add_option("--manifest", manifest, "Candidates with trained ELBOs (skips training)");
  auto* verify_cmd = app.add_subcommand("verify", "Randomized bound certification");
  std::string suite = "all";
  std::size_t trials = 1000;
  verify_cmd->add_option("--suite", suite);
  verify_cmd->add_option("--trials", trials);
  auto* exp_cmd = app.add_subcommand("experiment", "Run the study named in the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  if (g.workers > 0) omp_set_num_threads(g.workers);
  const fs::path out(g.out);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  try {
    if (arch_cmd->parsed()) {
      const auto h = holder_architecture(n, d, beta, cd);
      const auto family = slab_family_from_string(slab);
      const Architecture a(d, h.depth, h.width, bound);
      const auto T = a.num_coefficients();
      const std::size_t s = h.max_sparsity < static_cast<double>(T) ? static_cast<std::size_t>(h.max_sparsity) : T;
      nlohmann::ordered_json j{{"L", h.depth},
                               {"D", h.width},
                               {"S_max", h.max_sparsity},
                               {"T", T},
                               {"S", s},
                               {"r_n", rate(a, s, n, family).value},
                               {"minimax_rate", minimax_rate(beta, d, static_cast<double>(n))},
                               {"C_D", cd},
                               {"B", bound},
                               {"slab", slab}};
      std::cout << j.dump(2) << "\n";
      return kOk;
    }
    if (rate_cmd->parsed()) {
      const auto r = rate(Architecture(d, L, D, bound), S, n, slab_family_from_string(slab));
      nlohmann::ordered_json j{{"value", r.value}, {"components", r.components}, {"slab", to_string(r.variant)},
                               {"S", S},          {"n", n},                     {"d", d},
                               {"L", L},          {"D", D},                     {"B", bound}};
      std::cout << j.dump(2) << "\n";
      return kOk;
    }
    if (verify_cmd->parsed()) {
      bool violated = false;
      const auto j = run_verify_suite(suite, trials, g.seed.value_or(0), violated);
      std::cout << j.dump(2) << "\n";
      if (g.out != ".") write_file(out / "verify.json", j.dump(2) + "\n");
      return violated ? kViolation : kOk;
    }
    if (select_cmd->parsed() && !manifest.empty()) {
      std::ifstream in(manifest);
      if (!in) throw ConfigError("manifest file not found: " + manifest);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest " + manifest + " is not valid JSON: " + e.what());
      }
      if (!j.contains("d") || !j.contains("candidates")) throw ConfigError("manifest needs keys d and candidates");
      std::vector<Candidate> cands;
      for (const auto& c : j.at("candidates"))
        cands.push_back({c.at("S").get<std::size_t>(), c.at("L").get<int>(), c.at("D").get<int>(),
                         c.at("elbo").get<double>()});
      ArchPriorBelief belief{j.at("d").get<int>()};
      if (j.contains("L_max")) belief.max_depth = j.at("L_max").get<int>();
      const auto sel = penalized_elbo_select(cands, belief);
      std::ostringstream csv;
      write_score_csv(csv, sel.table);
      if (g.out != ".") write_file(out / "selection.csv", csv.str());
      const auto& c = cands[sel.index];
      std::cout << nlohmann::ordered_json{{"S", c.sparsity}, {"L", c.depth}, {"D", c.width}}.dump() << "\n"
                << csv.str();
      return kOk;
    }

    const auto cfg = load_config(g);
    int status = kOk;
    if (train_cmd->parsed()) {
      const auto& a = cfg.architecture;
      if (a.source != ArchitectureSpec::Source::Explicit) throw ConfigError("train needs architecture.source = explicit");
      const auto f0 = make_target(cfg.target);
      const auto data = gen_data(f0, cfg.n_grid.front(), cfg.sigma2, Rng(cfg.seed, "cli-train").next_u64());
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      const SpikeSlabPrior prior(Architecture(f0.dim(), a.depth, a.width, a.bound), a.sparsity, cfg.slab);
      const auto res = fit(data, prior, cfg.alpha, tc);
      std::ostringstream trace;
      write_jsonl(trace, res.trace, false);
      write_file(out / "trace.jsonl", trace.str());
      const auto& ev = res.trace.final_evaluation;
      nlohmann::ordered_json summary{{"config_digest", cfg.digest()},
                                     {"elbo", ev.value},
                                     {"elbo_std_error", ev.std_error},
                                     {"kl_term", ev.kl_term},
                                     {"fit_term", ev.fit_term},
                                     {"alpha", cfg.alpha},
                                     {"restart", res.trace.restart},
                                     {"posterior", to_json(res.posterior)}};
      write_file(out / "train.json", summary.dump(2) + "\n");
      std::cout << summary.dump(2) << "\n";
    } else if (select_cmd->parsed()) {
      status = run_select_study(cfg, out);
    } else if (exp_cmd->parsed()) {
      status = cfg.study == "rate" ? run_rate_study(cfg, out) : run_select_study(cfg, out);
    }
    write_metadata(out, app.get_subcommands().front()->get_name(), elapsed());
    return status;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kViolation;
  }
}
