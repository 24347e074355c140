/*
 * Copyright 2026 The MARS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mars/error.hpp"
#include "mars/io.hpp"
#include "mars/search.hpp"
#include "mars/simulator.hpp"
#include "mars/telemetry.hpp"

namespace mars::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Stream tags for runs the CLI simulates itself.
constexpr std::uint64_t kFinalRunTag = 4;
constexpr std::uint64_t kCorrelationTag = 5;

class MismatchError : public Error {
 public:
  using Error::Error;
};

struct GlobalArgs {
  std::uint64_t seed = 42;
  std::string config;
  std::string out;
  std::string format;
};

struct SimulateArgs {
  std::vector<int> ranks{8, 16, 32, 64};
  std::vector<std::int64_t> checkpoints{128, 256};
  int runs = -1;
};

struct FitArgs {
  std::string telemetry;
  std::string dataset_out;
  std::vector<std::int64_t> checkpoints{128, 256};
  int patience = kDefaultPatience;
  double min_delta = 0.0;
  bool no_run_end = false;
  FitConfig fit;
};

struct SearchArgs {
  std::string coefficients;
  SearchConfig search;
};

struct OracleArgs {
  std::vector<int> grid{8, 16, 32, 64};
  std::int64_t d_target = 8192;
};

struct ReportArgs {
  std::string search;
  std::string oracle;
  std::string scatter_out;
  std::vector<int> ranks{8, 16, 32, 64};
  std::vector<std::int64_t> checkpoints{128, 256};
  std::vector<std::int64_t> tiers{512, 1024, 2048, 4096, 8192};
  bool shared_backbone = false;
  int parallel_heads = 4;
};

void AddSimFlags(CLI::App* app, SimConfig& cfg) {
  app->add_option("--lambda", cfg.gap_penalty_lambda, "Gap penalty weight")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--penalty-power", cfg.gap_penalty_power, "Gap penalty exponent")
      ->check(CLI::PositiveNumber);
  app->add_option("--noise-sigma", cfg.noise_sigma_log, "Log-normal perplexity noise")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--conv-noise-sigma", cfg.conv_noise_sigma_log,
                  "Log-normal convergence-time noise")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--batch-size", cfg.batch_size)->check(CLI::PositiveNumber);
  app->add_option("--eval-interval", cfg.eval_interval)->check(CLI::PositiveNumber);
  app->add_option("--sim-patience", cfg.patience)->check(CLI::PositiveNumber);
}

std::string Joined(const std::vector<int>& v) {
  return fmt::format("{}", fmt::join(v, ","));
}

// Fills options the command line left unset from a JSON object. Top-level
// keys apply to the root and active command; an object under the command's
// name applies to that command only and wins over top-level keys.
void ApplyConfig(CLI::App& app, CLI::App* command, const json& config) {
  if (!config.is_object()) throw UsageError("--config must hold a JSON object");
  auto assign = [](CLI::Option* opt, const json& value) {
    if (opt->count() > 0) return;  // the command line wins
    auto text = [](const json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(text(v));
    } else {
      opt->add_result(text(value));
    }
    opt->run_callback();
  };
  auto lookup = [](CLI::App* scope, std::string key) -> CLI::Option* {
    std::replace(key.begin(), key.end(), '_', '-');
    return scope->get_option_no_throw("--" + key);
  };
  auto known_elsewhere = [&](const std::string& key) {
    for (auto* sub : app.get_subcommands({})) {
      if (lookup(sub, key) != nullptr) return true;
    }
    return false;
  };

  if (config.contains(command->get_name())) {
    const auto& section = config.at(command->get_name());
    if (!section.is_object()) {
      throw UsageError(fmt::format("config section '{}' must be an object",
                                   command->get_name()));
    }
    for (const auto& [key, value] : section.items()) {
      auto* opt = lookup(command, key);
      if (opt == nullptr) opt = lookup(&app, key);
      if (opt == nullptr) {
        throw UsageError(fmt::format("unknown config key '{}.{}'",
                                     command->get_name(), key));
      }
      assign(opt, value);
    }
  }
  for (const auto& [key, value] : config.items()) {
    if (value.is_object()) {
      if (app.get_subcommand_no_throw(key) == nullptr) {
        throw UsageError(fmt::format("unknown config section '{}'", key));
      }
      continue;
    }
    if (key == "config") continue;
    if (auto* opt = lookup(command, key)) {
      assign(opt, value);
    } else if (auto* root = lookup(&app, key)) {
      assign(root, value);
    } else if (!known_elsewhere(key)) {
      throw UsageError(fmt::format("unknown config key '{}'", key));
    }
  }
}

TelemetryFormat ResolveFormat(const std::string& flag, const fs::path& path) {
  if (flag == "csv") return TelemetryFormat::kCsv;
  if (flag == "json" || flag == "jsonl") return TelemetryFormat::kJsonl;
  if (!flag.empty()) return ParseTelemetryFormat(flag);
  return path.extension() == ".csv" ? TelemetryFormat::kCsv : TelemetryFormat::kJsonl;
}

json ParseJsonFile(const fs::path& path) {
  const auto text = ReadFile(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: invalid JSON ({})", path.string(), e.what()), 0);
  }
}

double Pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

int Simulate(const GlobalArgs& g, const SimulateArgs& a, const SimConfig& cfg,
             std::ostream& out) {
  if (g.out.empty()) throw UsageError("simulate needs --out DIR");
  const fs::path dir = g.out;
  const auto format = ResolveFormat(g.format, "telemetry.jsonl");
  const auto plan = GenerateCalibrationPlan(cfg, a.ranks, a.checkpoints);
  if (a.runs > static_cast<int>(plan.runs.size())) {
    throw UsageError(fmt::format("--runs {} exceeds the {} planned runs", a.runs,
                                 plan.runs.size()));
  }
  const std::size_t n = a.runs < 0 ? plan.runs.size() : static_cast<std::size_t>(a.runs);
  const std::span<const SimRunOutput> runs(plan.runs.data(), n);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create directory {}", dir.string()));

  std::vector<TelemetryRun> telemetry;
  for (const auto& r : runs) telemetry.push_back(r.run);
  std::ostringstream text;
  WriteTelemetry(text, telemetry, format);
  const auto name =
      format == TelemetryFormat::kCsv ? "telemetry.csv" : "telemetry.jsonl";
  WriteFileAtomic(dir / name, text.str());

  auto truth = GroundTruthJson(runs);
  truth["seed"] = cfg.seed;
  truth["anti_diagonal_augmented"] = plan.anti_diagonal_augmented;
  truth["checkpoints"] = a.checkpoints;
  WriteFileAtomic(dir / "ground_truth.json", Dump(truth));
  out << fmt::format("simulated {} runs (seed {}) -> {}\n", n, cfg.seed,
                     (dir / name).string());
  return kExitOk;
}

int Fit(const GlobalArgs& g, const FitArgs& a, std::string& stage,
        std::ostream& out) {
  const fs::path path = a.telemetry;
  const auto runs = ParseTelemetryFile(path, ResolveFormat(g.format, path));
  CalibrationOptions options;
  options.checkpoint_steps = a.checkpoints;
  options.patience = a.patience;
  options.min_delta = a.min_delta;
  options.include_run_end = !a.no_run_end;
  const auto dataset = BuildCalibrationDataset(runs, options);

  stage = "law_c_ve";
  const auto ve = FitLawC(dataset, Module::kVisionEncoder, a.fit);
  stage = "law_c_llm";
  const auto llm = FitLawC(dataset, Module::kLlm, a.fit);
  stage = "law_p";
  const auto p = FitLawP(dataset, a.fit);
  stage.clear();

  CoefficientsFile file;
  file.law_p = p.coefficients;
  file.law_c_ve = ve.coefficients;
  file.law_c_llm = llm.coefficients;
  file.fit_meta = {a.fit.huber_delta, p.starts_tried,      ve.starts_tried,
                   llm.starts_tried,  p.objective_value,   ve.objective_value,
                   llm.objective_value};
  const fs::path target = g.out.empty() ? "coefficients.json" : g.out;
  WriteFileAtomic(target, Dump(ToJson(file)));
  if (!a.dataset_out.empty()) WriteFileAtomic(a.dataset_out, Dump(ToJson(dataset)));

  out << fmt::format("calibration: {} perf_obs, {} ve / {} llm conv_obs "
                     "({} / {} censored, {} checkpoints skipped)\n",
                     dataset.perf_obs.size(), dataset.conv_obs_ve.size(),
                     dataset.conv_obs_llm.size(), dataset.diagnostics.censored_ve,
                     dataset.diagnostics.censored_llm,
                     dataset.diagnostics.skipped_checkpoints);
  auto summary = [&](const char* name, const auto& report) {
    out << fmt::format("{:<10} objective {:.6e}  holdout MAE(log) {:.6e}{}  "
                       "R2(log) {:.6f}  starts {}/{}\n",
                       name, report.objective_value, report.holdout_mae_log,
                       report.holdout_used ? "" : " (in-sample)", report.r_squared_log,
                       report.converged_starts, report.starts_tried);
  };
  summary("law_p", p);
  summary("law_c_ve", ve);
  summary("law_c_llm", llm);
  out << fmt::format("wrote {}\n", target.string());
  return kExitOk;
}

int Search(const GlobalArgs& g, const SearchArgs& a, std::ostream& out) {
  const auto coefficients = CoefficientsFromJson(ParseJsonFile(a.coefficients));
  auto candidates = GenerateCandidates(coefficients.law_c_ve, coefficients.law_c_llm,
                                       a.search);
  const auto result = SelectBest(std::move(candidates), coefficients.law_p,
                                 static_cast<double>(a.search.d_target));
  const fs::path target = g.out.empty() ? "search.json" : g.out;
  WriteFileAtomic(target, Dump(ToJson(result)));

  out << fmt::format("{:>6} {:>12} {:>5} {:>14} {:>14} {:>10} {:>8}\n", "r_llm",
                     "r_ve*", "r_ve", "t_ve", "t_llm", "L_hat", "fallback");
  for (const auto& c : result.candidates) {
    const auto cont = c.r_ve_continuous ? fmt::format("{:.6g}", *c.r_ve_continuous)
                                        : std::string("-");
    out << fmt::format("{:>6} {:>12} {:>5} {:>14.2f} {:>14.2f} {:>10.6f} {:>8}\n",
                       c.ranks.r_llm, cont, c.ranks.r_ve, c.predicted_t_ve,
                       c.predicted_t_llm, c.predicted_loss,
                       c.fallback_used ? "yes" : (c.clamped ? "clamped" : "no"));
  }
  out << fmt::format("chosen {} (L_hat {:.6f}, fallback rate {:.2f}) -> {}\n",
                     ToString(result.chosen), result.chosen_predicted_loss,
                     result.fallback_rate, target.string());
  return kExitOk;
}

int Oracle(const GlobalArgs& g, const OracleArgs& a, const SimConfig& cfg,
           std::ostream& out) {
  const auto grid = CrossGrid(a.grid, a.grid);
  const auto result = OracleGrid(cfg, grid, a.d_target);
  const fs::path target = g.out.empty() ? "oracle.csv" : g.out;
  WriteFileAtomic(target, OracleCsv(result.table));
  double best = 0.0;
  for (const auto& row : result.table) {
    if (row.ranks == result.best) best = row.true_perplexity;
  }
  out << fmt::format("oracle best {} (true perplexity {:.6f}) over {} pairs at D={} -> {}\n",
                     ToString(result.best), best, grid.size(), a.d_target,
                     target.string());
  return kExitOk;
}

int Report(const GlobalArgs& g, const ReportArgs& a, const SimConfig& cfg,
           std::ostream& out) {
  const auto result = SearchResultFromJson(ParseJsonFile(a.search));
  const auto table = ParseOracleCsv(ReadFile(a.oracle));
  if (table.empty()) throw MismatchError("oracle table is empty");

  std::set<int> search_llm;
  for (const auto& c : result.candidates) search_llm.insert(c.ranks.r_llm);
  std::set<int> oracle_llm;
  for (const auto& row : table) oracle_llm.insert(row.ranks.r_llm);
  if (search_llm != oracle_llm) {
    throw MismatchError(fmt::format(
        "search r_llm options {{{}}} differ from the oracle grid {{{}}}",
        fmt::join(search_llm, ","), fmt::join(oracle_llm, ",")));
  }

  const OracleRow* best = &table.front();
  for (const auto& row : table) {
    if (std::make_tuple(row.true_perplexity, row.ranks.r_llm, row.ranks.r_ve) <
        std::make_tuple(best->true_perplexity, best->ranks.r_llm, best->ranks.r_ve)) {
      best = &row;
    }
  }
  const auto d_target = result.d_target;
  const double chosen_true =
      TruePerplexity(cfg, result.chosen, static_cast<double>(d_target));
  const double regret = chosen_true / best->true_perplexity - 1.0;

  const std::vector<int> grid(oracle_llm.begin(), oracle_llm.end());
  const auto naive = NaiveSearch(cfg, grid, d_target);
  const auto plan = GenerateCalibrationPlan(cfg, a.ranks, a.checkpoints);
  const auto final_run = SimulateRun(cfg, result.chosen, d_target,
                                     DeriveRunSeed(result.chosen, d_target, kFinalRunTag));
  const auto calibration_steps = plan.run_steps();
  const auto cost = MakeCostReport(naive.total_steps, naive.runs, calibration_steps,
                                   static_cast<double>(final_run.steps_run),
                                   a.shared_backbone, a.parallel_heads);

  std::string scatter = "d_f,r_ve,r_llm,gap,perplexity\n";
  json correlation = json::array();
  for (const auto tier : a.tiers) {
    std::vector<double> gaps;
    std::vector<double> perplexities;
    for (const auto& pair : CrossGrid(grid, grid)) {
      const auto run = SimulateRun(cfg, pair, tier, DeriveRunSeed(pair, tier, kCorrelationTag));
      gaps.push_back(std::abs(run.true_t_ve - run.true_t_llm));
      perplexities.push_back(run.run.curve.back().value);
      scatter += fmt::format("{},{},{},{},{}\n", tier, pair.r_ve, pair.r_llm,
                             FormatExact(gaps.back()), FormatExact(perplexities.back()));
    }
    correlation.push_back({{"d_f", tier},
                           {"pearson", Pearson(gaps, perplexities)},
                           {"pairs", gaps.size()}});
  }

  const json report = {
      {"chosen", {{"r_ve", result.chosen.r_ve}, {"r_llm", result.chosen.r_llm}}},
      {"chosen_true_perplexity", chosen_true},
      {"oracle_best", {{"r_ve", best->ranks.r_ve}, {"r_llm", best->ranks.r_llm}}},
      {"oracle_best_true_perplexity", best->true_perplexity},
      {"regret", regret},
      {"d_target", d_target},
      {"cost", ToJson(cost)},
      {"correlation", correlation}};
  const fs::path target = g.out.empty() ? "report.json" : g.out;
  const fs::path scatter_path =
      a.scatter_out.empty() ? target.parent_path() / "gap_vs_perplexity.csv"
                            : fs::path(a.scatter_out);
  WriteFileAtomic(target, Dump(report));
  WriteFileAtomic(scatter_path, scatter);

  out << fmt::format("chosen {} true perplexity {:.6f}; oracle best {} {:.6f}; regret {:+.4f}%\n",
                     ToString(result.chosen), chosen_true, ToString(best->ranks),
                     best->true_perplexity, 100.0 * regret);
  out << fmt::format("cost: naive {} runs / {:.0f} steps, MARS calibration {:.0f} + final "
                     "{:.0f} steps{} -> speedup {:.2f}x\n",
                     cost.naive_runs, cost.naive_steps, cost.mars_calibration_steps,
                     cost.mars_final_steps,
                     cost.shared_backbone_mode
                         ? fmt::format(" (shared backbone, {} heads)", cost.parallel_heads)
                         : std::string(),
                     cost.speedup);
  for (const auto& c : correlation) {
    out << fmt::format("gap/perplexity pearson at D={}: {:.4f}\n", c["d_f"].get<std::int64_t>(),
                       c["pearson"].get<double>());
  }
  out << fmt::format("wrote {} and {}\n", target.string(), scatter_path.string());
  return kExitOk;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rank search for multimodal LoRA fine-tuning", "mars"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs global;
  app.add_option("--seed", global.seed, "Simulator seed")->capture_default_str();
  app.add_option("--config", global.config, "JSON file with option values");
  app.add_option("--out", global.out, "Output file (directory for simulate)");
  app.add_option("--format", global.format, "Telemetry format")
      ->check(CLI::IsMember({"json", "jsonl", "csv"}));

  SimConfig sim = ScenarioS1();

  auto* simulate = app.add_subcommand("simulate", "Simulate the calibration runs");
  SimulateArgs simulate_args;
  AddSimFlags(simulate, sim);
  simulate->add_option("--ranks", simulate_args.ranks)->delimiter(',');
  simulate->add_option("--checkpoints", simulate_args.checkpoints)->delimiter(',');
  simulate->add_option("--runs", simulate_args.runs, "Number of runs to write")
      ->check(CLI::NonNegativeNumber);

  auto* fit = app.add_subcommand("fit", "Fit both scaling laws to telemetry");
  FitArgs fit_args;
  fit->add_option("--telemetry", fit_args.telemetry)->required();
  fit->add_option("--dataset-out", fit_args.dataset_out, "Also write the calibration dataset");
  fit->add_option("--checkpoints", fit_args.checkpoints)->delimiter(',');
  fit->add_option("--patience", fit_args.patience)->check(CLI::PositiveNumber);
  fit->add_option("--min-delta", fit_args.min_delta)->check(CLI::NonNegativeNumber);
  fit->add_flag("--no-run-end", fit_args.no_run_end,
                "Only observe convergence at the checkpoints");
  fit->add_option("--huber-delta", fit_args.fit.huber_delta)->check(CLI::PositiveNumber);
  fit->add_option("--max-starts", fit_args.fit.max_starts)->check(CLI::PositiveNumber);
  fit->add_option("--max-iterations", fit_args.fit.max_iterations)
      ->check(CLI::PositiveNumber);
  fit->add_option("--holdout-stride", fit_args.fit.holdout_stride)
      ->check(CLI::NonNegativeNumber);

  auto* search = app.add_subcommand("search", "Prune and select a rank pair");
  SearchArgs search_args;
  search->add_option("--coefficients", search_args.coefficients)->required();
  search->add_option("--d-target", search_args.search.d_target)->check(CLI::PositiveNumber);
  search->add_option("--r-options", search_args.search.r_options)->delimiter(',');
  search->add_option("--r-min", search_args.search.r_min)->check(CLI::PositiveNumber);
  search->add_option("--r-max", search_args.search.r_max)->check(CLI::PositiveNumber);

  auto* oracle = app.add_subcommand("oracle", "Exhaustive noiseless grid evaluation");
  OracleArgs oracle_args;
  AddSimFlags(oracle, sim);
  oracle->add_option("--grid", oracle_args.grid)->delimiter(',');
  oracle->add_option("--d-target", oracle_args.d_target)->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Regret, cost and correlation report");
  ReportArgs report_args;
  AddSimFlags(report, sim);
  report->add_option("--search", report_args.search)->required();
  report->add_option("--oracle", report_args.oracle)->required();
  report->add_option("--scatter-out", report_args.scatter_out);
  report->add_option("--ranks", report_args.ranks)->delimiter(',');
  report->add_option("--checkpoints", report_args.checkpoints)->delimiter(',');
  report->add_option("--tiers", report_args.tiers)->delimiter(',');
  report->add_flag("--shared-backbone", report_args.shared_backbone);
  report->add_option("--parallel-heads", report_args.parallel_heads)
      ->check(CLI::PositiveNumber);

  std::string stage;
  auto fail = [&](int code, const std::exception& e) {
    err << "mars: " << (stage.empty() ? "" : stage + ": ") << e.what() << "\n";
    return code;
  };
  try {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }
    CLI::App* command = app.get_subcommands().front();
    if (!global.config.empty()) {
      ApplyConfig(app, command, ParseJsonFile(global.config));
    }
    sim.seed = global.seed;

    if (command == simulate) return Simulate(global, simulate_args, sim, out);
    if (command == fit) return Fit(global, fit_args, stage, out);
    if (command == search) return Search(global, search_args, out);
    if (command == oracle) return Oracle(global, oracle_args, sim, out);
    return Report(global, report_args, sim, out);
  } catch (const CLI::ParseError& e) {
    // Raised by validators while applying --config.
    return fail(kExitUsage, e);
  } catch (const IdentifiabilityError& e) {
    return fail(kExitMismatch, e);
  } catch (const MismatchError& e) {
    return fail(kExitMismatch, e);
  } catch (const FitFailure& e) {
    return fail(kExitFitFailure, e);
  } catch (const NumericRangeError& e) {
    return fail(kExitFitFailure, e);
  } catch (const IoError& e) {
    return fail(kExitIo, e);
  } catch (const ParseError& e) {
    return fail(kExitIo, e);
  } catch (const ValidationError& e) {
    return fail(kExitIo, e);
  } catch (const UsageError& e) {
    return fail(kExitUsage, e);
  } catch (const ArgumentError& e) {
    return fail(kExitUsage, e);
  } catch (const ConfigError& e) {
    return fail(kExitUsage, e);
  } catch (const std::exception& e) {
    return fail(kExitInternal, e);
  }
}

}  // namespace mars::cli
