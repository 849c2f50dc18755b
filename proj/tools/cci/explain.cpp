#include <algorithm>
#include <fstream>
#include <memory>

#include "cci/covar.hpp"
#include "cci/error.hpp"
#include "cci/log.hpp"
#include "common.hpp"

namespace cci::tool {
namespace {

struct ExplainArgs {
  RunConfig cfg;
  std::string config;
  std::vector<std::string> inputs;
  std::string label;
  fs::path embedding;
};

// Files as given; directories contribute their *.png entries in name order.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".png") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      require_file(p, "image");
      out.push_back(p);
    }
  }
  if (out.empty()) throw InputError("no input images");
  return out;
}

// JSON array of numbers, or {"vector": [...]} with an optional "label".
std::pair<std::string, std::vector<float>> read_embedding(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embedding file: " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    if (j.is_array()) return {path.stem().string(), j.get<std::vector<float>>()};
    return {j.value("label", path.stem().string()), j.at("vector").get<std::vector<float>>()};
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void run(ExplainArgs& a) {
  RunConfig& cfg = a.cfg;
  require_file(cfg.model, "--model");
  const auto images = expand_inputs(a.inputs);
  const ModelBundle bundle = load_model(cfg.model);
  const ViTConfig& vc = bundle.config();

  std::string label;
  std::vector<float> text;
  if (!a.embedding.empty()) {
    std::tie(label, text) = read_embedding(a.embedding);
    if (!a.label.empty()) label = a.label;
  } else {
    if (a.label.empty()) throw InputError("explain needs --label or --embedding");
    require_file(cfg.text_bank, "--text-bank");
    const auto bank = load_text_bank(cfg.text_bank, vc.embed_dim, cfg.normalize_bank);
    const auto idx = bank.index_of(a.label);
    if (!idx) throw InputError("label not in text bank: " + a.label);
    label = a.label;
    text = bank[*idx].vector;
  }
  if (text.size() != vc.embed_dim)
    throw InputError("text embedding has dimension " + std::to_string(text.size()) + ", model needs " +
                     std::to_string(vc.embed_dim));

  const ViTEncoder encoder(bundle);
  const CciOptions opt = cci_options(cfg);
  fs::create_directories(cfg.out);
  for (const auto& path : images) {
    const Raster raster = read_png(path);
    const ImportanceMap map = compute_cci(encoder, preprocess(raster, vc), text, opt);
    const Raster shown = (raster.width == vc.image_size && raster.height == vc.image_size)
                             ? raster
                             : resize_bilinear(raster, vc.image_size, vc.image_size);
    const Overlay overlay = render_overlay(shown, map.pixel_map);
    const std::string stem = path.stem().string();
    write_text(cfg.out / (stem + "_cci.png"), std::string(overlay.png.begin(), overlay.png.end()));
    nlohmann::json report = cci_report(map, label);
    report["image"] = path.filename().string();
    report["overlay_degenerate"] = overlay.degenerate;
    write_text(cfg.out / (stem + "_cci.json"), report.dump(2) + "\n");
    log::info("explained", {{"image", path.string()}, {"s", map.score.base}, {"degenerate", map.score.degenerate}});
  }
}

}  // namespace

void register_explain(CLI::App& app) {
  auto args = std::make_shared<ExplainArgs>();
  CLI::App* cmd = app.add_subcommand("explain", "importance map overlay + JSON report per image");
  add_common_options(*cmd, args->cfg);
  add_config_option(*cmd, args->config);
  cmd->add_option("images", args->inputs, "PNG files or directories of PNGs");
  cmd->add_option("--label", args->label, "class label looked up in the text bank");
  cmd->add_option("--embedding", args->embedding, "raw text embedding JSON instead of a bank label");
  cmd->callback([cmd, args] {
    if (!args->config.empty()) apply_config_file(*cmd, args->config);
    run(*args);
  });
}

}  // namespace cci::tool
