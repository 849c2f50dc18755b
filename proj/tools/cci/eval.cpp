#include <memory>

#include "cci/error.hpp"
#include "cci/log.hpp"
#include "common.hpp"

namespace cci::tool {
namespace {

struct EvalArgs {
  RunConfig cfg;
  std::string config;
  std::string mode = "both";
  std::string task = "classification";
  std::size_t retrieval_k = 5;
  fs::path maps;
};

void run(EvalArgs& a) {
  RunConfig& cfg = a.cfg;
  require_file(cfg.model, "--model");
  require_file(cfg.text_bank, "--text-bank");
  require_file(cfg.manifest, "--manifest");
  if (!a.maps.empty()) require_dir(a.maps, "--maps");

  const auto manifest = read_manifest(cfg.manifest);
  if (manifest.empty()) throw InputError("manifest has no entries: " + cfg.manifest.string());
  const ModelBundle bundle = load_model(cfg.model);
  const ViTConfig& vc = bundle.config();
  const auto bank = load_text_bank(cfg.text_bank, vc.embed_dim, cfg.normalize_bank);
  const ViTEncoder encoder(bundle);

  std::vector<CurveMode> modes;
  if (a.mode == "deletion" || a.mode == "both") modes.push_back(CurveMode::deletion);
  if (a.mode == "insertion" || a.mode == "both") modes.push_back(CurveMode::insertion);

  PerturbationOptions popt;
  popt.schedule = {cfg.steps, cfg.step_frac, cfg.seed};
  popt.schedule.validate();
  popt.blank = parse_blank(cfg.blank);
  popt.config = &vc;

  EvalTask task;
  task.kind = a.task == "retrieval" ? EvalTask::Kind::retrieval : EvalTask::Kind::classification;
  task.retrieval_k = a.retrieval_k;

  // Images run in parallel; the masked passes inside each stay serial.
  CciOptions copt = cci_options(cfg);
  copt.workers = 1;
  const CciMapProvider cci_maps(encoder, copt);
  const FileMapProvider file_maps(a.maps, vc.image_size);
  const MapProvider& maps = a.maps.empty() ? static_cast<const MapProvider&>(cci_maps) : file_maps;

  const auto loader = [&vc](const ManifestEntry& e) { return load_image(e.path, vc); };
  const DatasetCurves curves =
      dataset_curves(manifest, loader, encoder, maps, bank, modes, popt, task, worker_count(cfg));

  fs::create_directories(cfg.out);
  for (const auto& c : curves.per_mode) write_text(cfg.out / ("curve_" + to_string(c.mode) + ".csv"), curve_csv(c));

  std::string per_image = "image,mode,auc_top1,auc_top5\n";
  for (std::size_t m = 0; m < modes.size(); ++m)
    for (std::size_t i = 0; i < curves.image_ids.size(); ++i)
      per_image += curves.image_ids[i] + "," + to_string(modes[m]) + "," +
                   nlohmann::json(curves.per_image[m][i].auc_top1).dump() + "," +
                   nlohmann::json(curves.per_image[m][i].auc_top5).dump() + "\n";
  write_text(cfg.out / "per_image.csv", per_image);

  nlohmann::json summary = curves_summary(curves);
  summary["task"] = a.task;
  summary["steps"] = cfg.steps;
  summary["step_frac"] = cfg.step_frac;
  summary["blank"] = cfg.blank;
  summary["seed"] = cfg.seed;
  summary["map_source"] = a.maps.empty() ? "cci" : "files";
  write_text(cfg.out / "summary.json", summary.dump(2) + "\n");
  log::info("eval_done", {{"images", curves.evaluated}, {"skipped", curves.skipped}});
}

}  // namespace

void register_eval(CLI::App& app) {
  auto args = std::make_shared<EvalArgs>();
  CLI::App* cmd = app.add_subcommand("eval", "deletion/insertion faithfulness curves over a manifest");
  add_common_options(*cmd, args->cfg);
  add_config_option(*cmd, args->config);
  cmd->add_option("--manifest", args->cfg.manifest, "CSV path,label");
  cmd->add_option("--mode", args->mode, "deletion|insertion|both")
      ->check(CLI::IsMember({"deletion", "insertion", "both"}));
  cmd->add_option("--steps", args->cfg.steps, "perturbation steps")->check(CLI::PositiveNumber);
  cmd->add_option("--step-frac", args->cfg.step_frac, "fraction of pixels per step")->check(CLI::PositiveNumber);
  cmd->add_option("--blank", args->cfg.blank, "insertion canvas: mean|black|noise")
      ->check(CLI::IsMember({"mean", "black", "noise"}));
  cmd->add_option("--task", args->task, "classification|retrieval")
      ->check(CLI::IsMember({"classification", "retrieval"}));
  cmd->add_option("--retrieval-k", args->retrieval_k, "top-k for text retrieval hits")->check(CLI::PositiveNumber);
  cmd->add_option("--maps", args->maps, "directory of precomputed <id>.f32 maps instead of CCI");
  cmd->callback([cmd, args] {
    if (!args->config.empty()) apply_config_file(*cmd, args->config);
    run(*args);
  });
}

}  // namespace cci::tool
