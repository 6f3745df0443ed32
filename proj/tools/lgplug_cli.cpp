// lgplug — LLM-guided plug-and-play OOD detection for text-attributed graphs.
//
// Pipeline stages: ingest -> align -> expose -> train -> eval, each persisting
// its artifacts into the output directory with a manifest. `run` executes a
// stage subset in order, `sweep` fans out expose/train/eval over a parameter
// grid, `report` pretty-prints a stored evaluation report.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <json.hpp>

#include "lgplug/evalx.hpp"
#include "lgplug/kernels.hpp"
#include "lgplug/pipeline.hpp"

using namespace lgplug;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  bool force = false;
  std::string isa;
};

PipelineConfig make_config(const GlobalArgs& args) {
  ConfigDoc doc =
      args.config_path.empty() ? ConfigDoc{} : ConfigDoc::parse_file(args.config_path);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    const auto dot = kv.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ConfigError("--set expects section.key=value, got: " + kv);
    doc.set(kv.substr(0, dot), kv.substr(dot + 1, eq - dot - 1), kv.substr(eq + 1));
  }
  if (!args.output_dir.empty()) doc.set("pipeline", "output_dir", args.output_dir);
  if (args.force) doc.set("pipeline", "force", "true");
  return PipelineConfig::from_doc(std::move(doc));
}

void print_outcomes(const std::vector<StageOutcome>& outcomes) {
  for (const auto& o : outcomes) {
    if (o.skipped) {
      std::printf("[%s] up to date, skipped\n", stage_name(o.stage));
    } else {
      std::printf("[%s] wrote", stage_name(o.stage));
      for (const auto& f : o.files) std::printf(" %s", f.c_str());
      std::printf("\n");
    }
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ParseError*>(&e)) return 3;
  if (dynamic_cast<const IntegrityError*>(&e)) return 4;
  if (dynamic_cast<const DependencyError*>(&e)) return 5;
  if (dynamic_cast<const BackendError*>(&e)) return 6;
  if (dynamic_cast<const NumericError*>(&e)) return 7;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM-guided plug-and-play OOD detection on text-attributed graphs"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "Config file (INI-style sections)");
  app.add_option("--set", args.overrides, "Override a config key: section.key=value")
      ->take_all();
  app.add_option("--out", args.output_dir, "Output directory (overrides pipeline.output_dir)");
  app.add_flag("--force", args.force, "Re-run stages even when up to date");
  app.add_option("--isa", args.isa, "Force the kernel instruction set (ref, avx2, neon)");

  std::string stages_spec = "all";
  auto* run = app.add_subcommand("run", "Run a subset of pipeline stages in order");
  run->add_option("--stages", stages_spec, "Comma list of stages or 'all'");

  app.add_subcommand("ingest", "Materialize the graph and the ID/OOD split");
  app.add_subcommand("align", "Train the topology-text encoders and export embeddings");
  app.add_subcommand("expose", "Build the consensus-driven OOD exposure set");
  app.add_subcommand("train", "Train the detector (with margin regularization when beta > 0)");
  app.add_subcommand("eval", "Compute AUROC/FPR95 and the score-density artifact");

  std::vector<std::string> grid_specs;
  std::size_t max_points = 64;
  auto* sweep = app.add_subcommand("sweep", "Grid-sweep expose/train/eval over parameters");
  sweep->add_option("--grid", grid_specs, "Axis spec: section.key=v1,v2,... (repeatable)")
      ->required()
      ->take_all();
  sweep->add_option("--max-points", max_points, "Grid size cap");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Print a stored evaluation report");
  report->add_option("--dir", report_dir, "Run directory containing report.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!args.isa.empty()) kern::force_isa(args.isa);

    if (report->parsed()) {
      const std::string dir = !report_dir.empty() ? report_dir
                              : !args.output_dir.empty()
                                  ? args.output_dir
                                  : make_config(args).output_dir;
      EvalReport r = EvalReport::load(dir + "/report.json");
      std::printf("report: %s/report.json\n", dir.c_str());
      std::printf("  auroc              %.4f\n", r.auroc);
      std::printf("  fpr95              %.4f\n", r.fpr95);
      std::printf("  threshold@tpr95    %.6g\n", r.threshold_at_tpr95);
      std::printf("  test nodes         %zu ID / %zu OOD\n", r.n_id, r.n_ood);
      return 0;
    }

    PipelineConfig cfg = make_config(args);

    if (sweep->parsed()) {
      SweepGrid grid = parse_sweep_axes(grid_specs, max_points);
      const auto points = run_sweep(cfg, grid);
      const std::string csv = cfg.output_dir + "/sweep.csv";
      save_sweep_csv(points, grid, csv);
      std::printf("sweep: %zu points -> %s\n", points.size(), csv.c_str());
      for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (p.status == "ok")
          std::printf("  point %zu: auroc=%.4f fpr95=%.4f queries=%zu\n", i, p.auroc, p.fpr95,
                      p.query_count);
        else
          std::printf("  point %zu: %s\n", i, p.status.c_str());
      }
      return 0;
    }

    std::vector<Stage> stages;
    if (run->parsed()) {
      stages = parse_stages(stages_spec);
    } else if (app.get_subcommand(std::string("ingest"))->parsed()) {
      stages = {Stage::Ingest};
    } else if (app.get_subcommand(std::string("align"))->parsed()) {
      stages = {Stage::Align};
    } else if (app.get_subcommand(std::string("expose"))->parsed()) {
      stages = {Stage::Expose};
    } else if (app.get_subcommand(std::string("train"))->parsed()) {
      stages = {Stage::Train};
    } else if (app.get_subcommand(std::string("eval"))->parsed()) {
      stages = {Stage::Eval};
    }
    print_outcomes(run_pipeline(cfg, stages));
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    const auto* as_runtime = dynamic_cast<const std::runtime_error*>(&e);
    return as_runtime ? exit_code_for(*as_runtime) : 1;
  }
}
