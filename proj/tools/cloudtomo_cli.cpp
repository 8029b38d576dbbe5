// Copyright 2026 The cloudtomo Authors
// SPDX-License-Identifier: Apache-2.0
//
// cloudtomo command-line driver.
//
// Exit codes: 0 success, 1 runtime failure (I/O, bad data), 2 usage or
// configuration error.
#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cloudtomo/config.hpp"
#include "cloudtomo/eval.hpp"
#include "cloudtomo/pipeline.hpp"
#include "cloudtomo/rng.hpp"

using namespace cloudtomo;

namespace {

// Shared knob loading: recipe defaults, then an optional config file, then
// repeated --set key=value overrides.
struct ConfigArgs {
  std::string recipe = "smoke";
  std::string config_file;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--recipe", recipe, "Base recipe for defaults (smoke, reproduce-trends)");
    cmd->add_option("--config", config_file, "Key/value config file (docs/CONFIG.md)");
    cmd->add_option("--set", sets, "Override a single key, e.g. --set grid_n=16");
  }

  RunConfig resolve(uint64_t* seed_flag) const {
    RunConfig cfg = RunConfig::for_recipe(recipe);
    if (!config_file.empty()) cfg.apply_overrides(parse_kv_file(config_file));
    KvMap extra;
    for (const std::string& s : sets) {
      auto kv = parse_kv_text(s);
      extra.insert(kv.begin(), kv.end());
    }
    if (!extra.empty()) cfg.apply_overrides(extra);
    if (seed_flag) cfg.seed = *seed_flag;
    cfg.validate();
    return cfg;
  }
};

int cmd_generate(const ConfigArgs& args, uint64_t seed, const std::string& kind,
                 const std::string& out) {
  RunConfig cfg = [&] {
    RunConfig c = args.resolve(&seed);
    return c;
  }();
  DatasetBuildOptions opts = cfg.dataset_options();
  opts.seed = seed;
  DatasetManifest manifest;
  if (kind == "fixed") {
    manifest = build_fixed_sun_dataset(cfg.fixed_train, cfg.fixed_test, opts, out);
  } else if (kind == "sun") {
    manifest = build_varying_sun_dataset(cfg.sun_base_train, cfg.sun_base_test,
                                         cfg.suns_per_scene, false, opts, out);
  } else if (kind == "pert") {
    manifest = build_varying_sun_dataset(cfg.pert_base_train, cfg.pert_base_test,
                                         cfg.suns_per_scene, true, opts, out);
  } else {
    throw ConfigError("unknown dataset kind: " + kind + " (expected fixed, sun, pert)");
  }
  std::cout << manifest.name << ": " << manifest.train_ids.size() << " train, "
            << manifest.test_ids.size() << " test scenes at " << out << "\n";
  return 0;
}

int cmd_train(const ConfigArgs& args, uint64_t seed, const std::string& stage,
              const std::string& fixed_dir, const std::vector<std::string>& varying_dirs,
              const std::string& init_ckpt, const std::string& out, const std::string& log_path) {
  RunConfig cfg = args.resolve(nullptr);
  std::vector<DatasetManifest> varying;
  for (const auto& d : varying_dirs) varying.push_back(load_manifest(resolve_data_path(d)));

  TrainOutcome outcome;
  if (stage == "1") {
    if (fixed_dir.empty()) throw ConfigError("--fixed is required for stage 1");
    DatasetManifest fixed = load_manifest(resolve_data_path(fixed_dir));
    TrainConfig t = cfg.train_config(1, derive_seed(seed, "train-stage1"));
    outcome = train_stage1(t, cfg.model, fixed, derive_seed(seed, "init"), log_path);
  } else if (stage == "2") {
    if (init_ckpt.empty()) throw ConfigError("--init-ckpt is required for stage 2");
    if (varying.empty()) throw ConfigError("--varying is required for stage 2");
    Checkpoint stage1 = load_checkpoint(init_ckpt);
    TrainConfig t = cfg.train_config(2, derive_seed(seed, "train-stage2"));
    outcome = train_stage2(t, stage1, varying, log_path);
  } else if (stage == "single") {
    if (varying.empty()) throw ConfigError("--varying is required for the single-stage baseline");
    TrainConfig t = cfg.train_config(3, derive_seed(seed, "train-single"));
    outcome = train_single_stage_baseline(t, cfg.model, varying, derive_seed(seed, "init-single"),
                                          log_path);
  } else {
    throw ConfigError("unknown stage: " + stage + " (expected 1, 2, single)");
  }
  save_checkpoint(outcome.checkpoint, out);
  std::cout << "stage " << outcome.checkpoint.stage << " checkpoint saved to " << out
            << " (val " << outcome.initial_val << " -> " << outcome.final_val << ")\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_dir,
             const std::string& split, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  DatasetManifest manifest = load_manifest(resolve_data_path(dataset_dir));
  Split s = split == "train" ? Split::Train : Split::Test;
  if (split != "train" && split != "test") throw ConfigError("split must be train or test");
  EvalReport report = evaluate(ckpt, manifest, s);
  if (!out.empty()) save_report(report, out);
  std::cout << report.checkpoint_id << " on " << manifest.name << "/" << report.split << ": eps "
            << report.mean << " +/- " << report.std << " over " << report.eps.size()
            << " scenes\n";
  return 0;
}

int cmd_sweep(const std::string& ckpt_path, const std::string& dataset_dir, double bin_deg,
              const std::string& csv, const std::string& plot) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  DatasetManifest manifest = load_manifest(resolve_data_path(dataset_dir));
  ZenithSweep sweep = zenith_sweep(ckpt, manifest, Split::Test, bin_deg);
  if (!csv.empty()) save_sweep_csv(sweep, csv);
  if (!plot.empty()) plot_sweep(sweep, plot);
  for (size_t b = 0; b < sweep.counts.size(); ++b) {
    std::cout << "|zenith-30| in [" << sweep.bin_lo[b] << "," << sweep.bin_hi[b] << "): ";
    if (sweep.counts[b] > 0)
      std::cout << "eps " << sweep.mean_eps[b] << " +/- " << sweep.std_eps[b] << " (n="
                << sweep.counts[b] << ")\n";
    else
      std::cout << "no scenes\n";
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& report_paths, const std::string& out) {
  // Rows group by checkpoint id, columns by dataset name, both in first-seen
  // order.
  std::vector<std::string> rows, cols;
  std::map<std::pair<std::string, std::string>, EvalReport> cells;
  for (const auto& p : report_paths) {
    EvalReport r = load_report(p);
    if (std::find(rows.begin(), rows.end(), r.checkpoint_id) == rows.end())
      rows.push_back(r.checkpoint_id);
    if (std::find(cols.begin(), cols.end(), r.manifest_name) == cols.end())
      cols.push_back(r.manifest_name);
    cells[{r.checkpoint_id, r.manifest_name}] = std::move(r);
  }
  std::vector<std::vector<EvalReport>> table;
  for (const auto& row : rows) {
    std::vector<EvalReport> cells_row;
    for (const auto& col : cols) {
      auto it = cells.find({row, col});
      if (it == cells.end())
        throw ConfigError("missing report for checkpoint " + row + " on dataset " + col);
      cells_row.push_back(it->second);
    }
    table.push_back(std::move(cells_row));
  }
  std::string text = comparison_table(rows, cols, table);
  std::cout << text;
  if (!out.empty()) {
    std::ofstream os(out);
    if (!os) throw IoError("cannot write " + out);
    os << text;
  }
  return 0;
}

int cmd_run(const ConfigArgs& args, uint64_t seed, const std::string& out) {
  RunConfig cfg = args.resolve(&seed);
  RunResult result = run_recipe(cfg, out, &std::cout);
  std::cout << result.artifacts.size() << " artifacts under " << result.run_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cloudtomo: sun-conditioned neural scattering tomography"};
  app.require_subcommand(1);

  ConfigArgs gen_cfg, train_cfg, run_cfg;
  uint64_t seed = 0;
  std::string kind = "fixed", out, stage = "1", fixed_dir, init_ckpt, ckpt_path, dataset_dir;
  std::string split = "test", log_path, csv, plot;
  std::vector<std::string> varying_dirs, report_paths;
  double bin_deg = 10.0;

  auto* generate = app.add_subcommand("generate", "Build a dataset");
  gen_cfg.attach(generate);
  generate->add_option("--kind", kind, "fixed, sun, or pert")->required();
  generate->add_option("--out", out, "Dataset directory")->required();
  generate->add_option("--seed", seed, "Dataset seed");

  auto* train = app.add_subcommand("train", "Train one arm");
  train_cfg.attach(train);
  train->add_option("--stage", stage, "1, 2, or single")->required();
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--fixed", fixed_dir, "Fixed-sun dataset (stage 1)");
  train->add_option("--varying", varying_dirs, "Varying-sun datasets (stage 2, single)");
  train->add_option("--init-ckpt", init_ckpt, "Stage-1 checkpoint (stage 2)");
  train->add_option("--out", out, "Output checkpoint path")->required();
  train->add_option("--log", log_path, "Training log path");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  eval_cmd->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  eval_cmd->add_option("--split", split, "train or test");
  eval_cmd->add_option("--out", out, "Report JSON output");

  auto* sweep = app.add_subcommand("sweep", "Relative error vs |sun zenith - 30|");
  sweep->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  sweep->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  sweep->add_option("--bin", bin_deg, "Bin width in degrees");
  sweep->add_option("--csv", csv, "CSV output path");
  sweep->add_option("--plot", plot, "PPM plot output path");

  auto* compare = app.add_subcommand("compare", "Tabulate saved eval reports");
  compare->add_option("--reports", report_paths, "Report JSON files")->required();
  compare->add_option("--out", out, "Table output path");

  auto* run = app.add_subcommand("run", "End-to-end recipe");
  run_cfg.attach(run);
  run->add_option("--seed", seed, "Global run seed");
  run->add_option("--out", out, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen_cfg, seed, kind, out);
    if (train->parsed())
      return cmd_train(train_cfg, seed, stage, fixed_dir, varying_dirs, init_ckpt, out, log_path);
    if (eval_cmd->parsed()) return cmd_eval(ckpt_path, dataset_dir, split, out);
    if (sweep->parsed()) return cmd_sweep(ckpt_path, dataset_dir, bin_deg, csv, plot);
    if (compare->parsed()) return cmd_compare(report_paths, out);
    if (run->parsed()) return cmd_run(run_cfg, seed, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
