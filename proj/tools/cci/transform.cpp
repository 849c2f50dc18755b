#include <memory>
#include <sstream>

#include "cci/covar.hpp"
#include "cci/error.hpp"
#include "cci/log.hpp"
#include "cci/parallel.hpp"
#include "common.hpp"

namespace cci::tool {
namespace {

struct TransformArgs {
  std::string config;
  fs::path manifest;
  fs::path out = "variants";
  std::string kinds;
  std::uint64_t seed = 0;
  std::string fill = "reflect";
  std::vector<int> fill_color{0, 0, 0};
  std::string hook;
  std::size_t workers = 0;
};

std::vector<std::string> split_kinds(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void run(TransformArgs& a) {
  require_file(a.manifest, "--manifest");
  const auto manifest = read_manifest(a.manifest);
  if (manifest.empty()) throw InputError("manifest has no entries: " + a.manifest.string());

  SubsetOptions o;
  if (!a.kinds.empty()) o.kinds = split_kinds(a.kinds);
  for (const auto& k : o.kinds) parse_variant_kind(k);
  o.seed = a.seed;
  o.out_dir = a.out;
  o.workers = a.workers == 0 ? default_workers() : a.workers;
  if (a.fill == "constant") {
    if (a.fill_color.size() != 3) throw InputError("--fill-color needs three values");
    o.fill.mode = FillMode::constant;
    for (std::size_t c = 0; c < 3; ++c) {
      if (a.fill_color[c] < 0 || a.fill_color[c] > 255) throw InputError("--fill-color values must be 0..255");
      o.fill.color[c] = static_cast<std::uint8_t>(a.fill_color[c]);
    }
  } else if (a.fill == "hook") {
    if (a.hook.empty()) throw InputError("--fill hook needs --hook");
    o.fill.mode = FillMode::hook;
    o.fill.hook_command = a.hook;
  } else {
    o.fill.mode = FillMode::reflect;
  }

  const SubsetResult r = make_subset(manifest, o);
  std::size_t pending = 0;
  for (const auto& row : r.rows) pending += row.out_path.empty();
  log::info("transform_done", {{"rows", r.rows.size()}, {"hook_pending", pending}, {"skipped", r.skipped}});
}

}  // namespace

void register_transform(CLI::App& app) {
  auto args = std::make_shared<TransformArgs>();
  CLI::App* cmd = app.add_subcommand("transform", "covariate-shift variants of every manifest image");
  add_config_option(*cmd, args->config);
  cmd->add_option("--manifest", args->manifest, "CSV path,label");
  cmd->add_option("--out", args->out, "output directory for PNGs and variants.csv");
  cmd->add_option("--kinds", args->kinds, "comma list, e.g. hflip,rotate,scale:4 (default: all 11)");
  cmd->add_option("--seed", args->seed, "parameter seed");
  cmd->add_option("--fill", args->fill, "reflect|constant|hook")->check(CLI::IsMember({"reflect", "constant", "hook"}));
  cmd->add_option("--fill-color", args->fill_color, "R G B for constant fill")->expected(3);
  cmd->add_option("--hook", args->hook, "inpainting command: <cmd> <in.png> <mask.png> <out.png>");
  cmd->add_option("--workers", args->workers, "worker threads (0 = available parallelism)");
  cmd->callback([cmd, args] {
    if (!args->config.empty()) apply_config_file(*cmd, args->config);
    run(*args);
  });
}

}  // namespace cci::tool
