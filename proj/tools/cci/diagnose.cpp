#include <memory>
#include <optional>

#include "cci/diagnose.hpp"
#include "cci/error.hpp"
#include "cci/log.hpp"
#include "cci/parallel.hpp"
#include "common.hpp"

namespace cci::tool {
namespace {

struct DiagnoseArgs {
  RunConfig cfg;
  std::string config;
  fs::path masks;
  fs::path judge_fixture;
  std::string judge_url;
  std::string judge_model;
};

struct Prepared {
  bool ok = false;
  std::string pred;
  std::optional<ImportanceMap> map;
  BinaryMask foreground;
};

std::unique_ptr<SimilarityJudge> make_judge(const DiagnoseArgs& a) {
  if (a.cfg.judge == "http") {
    HttpJudgeConfig base;
    if (!a.judge_url.empty()) base.url = a.judge_url;
    if (!a.judge_model.empty()) base.model = a.judge_model;
    return std::make_unique<HttpJudge>(http_judge_config_from_env(base));
  }
  if (a.judge_fixture.empty()) return std::make_unique<OfflineJudge>(builtin_judge_fixture());
  require_file(a.judge_fixture, "--judge-fixture");
  return std::make_unique<OfflineJudge>(OfflineJudge::from_file(a.judge_fixture));
}

void run(DiagnoseArgs& a) {
  RunConfig& cfg = a.cfg;
  // Judge first: a missing credential exits before any model work.
  auto judge = make_judge(a);
  require_file(cfg.model, "--model");
  require_file(cfg.text_bank, "--text-bank");
  require_file(cfg.manifest, "--manifest");
  require_dir(a.masks, "--masks");
  if (!(cfg.binarize_mass > 0.0 && cfg.binarize_mass <= 1.0)) throw InputError("--binarize-mass must be in (0, 1]");

  const auto manifest = read_manifest(cfg.manifest);
  if (manifest.empty()) throw InputError("manifest has no entries: " + cfg.manifest.string());
  const ModelBundle bundle = load_model(cfg.model);
  const ViTConfig& vc = bundle.config();
  const auto bank = load_text_bank(cfg.text_bank, vc.embed_dim, cfg.normalize_bank);
  for (const auto& e : manifest)
    if (!bank.index_of(e.label)) throw InputError("label not in text bank: " + e.label);
  const ViTEncoder encoder(bundle);
  CciOptions copt = cci_options(cfg);
  copt.workers = 1;

  std::vector<Prepared> prepared(manifest.size());
  parallel_for(manifest.size(), worker_count(cfg), [&](std::size_t i) {
    const ManifestEntry& e = manifest[i];
    Prepared& p = prepared[i];
    const fs::path mask_path = a.masks / (e.id + ".png");
    if (!fs::is_regular_file(mask_path)) {
      log::warn("mask_missing", {{"image", e.id}, {"path", mask_path.string()}});
      return;
    }
    ImageTensor image;
    try {
      image = load_image(e.path, vc);
      p.foreground = read_mask_png(mask_path, vc.image_size, vc.image_size);
    } catch (const Error& err) {
      log::warn("image_skipped", {{"image", e.id}, {"error", err.what()}});
      return;
    }
    const ZeroShotResult zs = zero_shot(encoder, image, bank, e.label);
    p.pred = bank[zs.ranking.front()].label;
    if (p.pred != e.label) p.map = compute_cci(encoder, image, bank[*bank.index_of(p.pred)].vector, copt);
    p.ok = true;
  });

  // Judge calls run in manifest order.
  std::vector<ErrorRecord> records;
  std::string jsonl;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    Prepared& p = prepared[i];
    if (!p.ok) {
      ++skipped;
      continue;
    }
    records.push_back(classify(manifest[i].id, p.map ? &*p.map : nullptr, p.foreground, manifest[i].label, p.pred,
                               *judge, cfg.binarize_mass));
    jsonl += to_json(records.back()).dump() + "\n";
  }

  fs::create_directories(cfg.out);
  write_text(cfg.out / "records.jsonl", jsonl);
  const TaxonomyReport report = aggregate_taxonomy(records);
  nlohmann::json tj = to_json(report);
  tj["skipped"] = skipped;
  tj["judge"] = cfg.judge;
  tj["binarize_mass"] = cfg.binarize_mass;
  write_text(cfg.out / "taxonomy.json", tj.dump(2) + "\n");
  write_text(cfg.out / "taxonomy.csv", taxonomy_csv(report));
  log::info("diagnose_done", {{"records", records.size()}, {"skipped", skipped}});
}

}  // namespace

void register_diagnose(CLI::App& app) {
  auto args = std::make_shared<DiagnoseArgs>();
  CLI::App* cmd = app.add_subcommand("diagnose", "error taxonomy from heatmaps, masks and a similarity judge");
  add_common_options(*cmd, args->cfg);
  add_config_option(*cmd, args->config);
  cmd->add_option("--manifest", args->cfg.manifest, "CSV path,label");
  cmd->add_option("--masks", args->masks, "directory of <id>.png foreground masks");
  cmd->add_option("--judge", args->cfg.judge, "offline|http")->check(CLI::IsMember({"offline", "http"}));
  cmd->add_option("--judge-fixture", args->judge_fixture, "offline verdict table (default: built-in examples)");
  cmd->add_option("--judge-url", args->judge_url, "chat-completions endpoint for --judge http");
  cmd->add_option("--judge-model", args->judge_model, "model name sent to the endpoint");
  cmd->add_option("--binarize-mass", args->cfg.binarize_mass, "fraction of positive weight kept in the binary map");
  cmd->callback([cmd, args] {
    if (!args->config.empty()) apply_config_file(*cmd, args->config);
    run(*args);
  });
}

}  // namespace cci::tool
