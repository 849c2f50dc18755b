#include "common.hpp"

#include <fstream>

#include "cci/error.hpp"
#include "cci/parallel.hpp"

namespace cci::tool {

void add_common_options(CLI::App& cmd, RunConfig& cfg) {
  cmd.add_option("--model", cfg.model, "weights container (sidecar <name>.json alongside)");
  cmd.add_option("--text-bank", cfg.text_bank, "text embedding bank (JSON or container)");
  cmd.add_option("--k", cfg.k, "number of concept clusters")->check(CLI::PositiveNumber);
  cmd.add_option("--seed", cfg.seed, "seed for clustering and noise");
  cmd.add_option("--upsample", cfg.upsample, "bilinear|nearest")->check(CLI::IsMember({"bilinear", "nearest"}));
  cmd.add_flag("--clamp-negative", cfg.clamp_negative, "normalize max(drop, 0) instead of signed drops");
  cmd.add_flag("--normalize-bank", cfg.normalize_bank, "L2-normalize text vectors on load");
  cmd.add_option("--workers", cfg.workers, "worker threads (0 = available parallelism)");
  cmd.add_option("--out", cfg.out, "output directory");
}

void add_config_option(CLI::App& cmd, std::string& config_path) {
  cmd.add_option("--config", config_path, "JSON config; command-line flags take precedence");
}

void apply_config_file(CLI::App& cmd, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw InputError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = cmd.get_option_no_throw("--" + name);
    if (!opt || name == "config") throw InputError("unknown config key: " + key);
    if (opt->count() > 0) continue;
    std::vector<std::string> values;
    if (value.is_array()) {
      for (const auto& v : value) values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      values.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
    try {
      for (const auto& v : values) opt->add_result(v);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw InputError("config key " + key + ": " + e.what());
    }
  }
}

void require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) throw InputError(what + " is required");
  if (!fs::is_regular_file(path)) throw InputError(what + " not found: " + path.string());
}

void require_dir(const fs::path& path, const std::string& what) {
  if (path.empty()) throw InputError(what + " is required");
  if (!fs::is_directory(path)) throw InputError(what + " not found: " + path.string());
}

std::size_t worker_count(const RunConfig& cfg) { return cfg.workers == 0 ? default_workers() : cfg.workers; }

UpsampleMode parse_upsample(const std::string& s) {
  if (s == "bilinear") return UpsampleMode::bilinear;
  if (s == "nearest") return UpsampleMode::nearest;
  throw InputError("unknown upsample mode: " + s);
}

BlankMode parse_blank(const std::string& s) {
  if (s == "mean") return BlankMode::mean;
  if (s == "black") return BlankMode::black;
  if (s == "noise") return BlankMode::noise;
  throw InputError("unknown blank mode: " + s);
}

CciOptions cci_options(const RunConfig& cfg) {
  CciOptions o;
  o.k = cfg.k;
  o.seed = cfg.seed;
  o.clamp_negative = cfg.clamp_negative;
  o.upsample = parse_upsample(cfg.upsample);
  o.workers = worker_count(cfg);
  return o;
}

ImageTensor load_image(const fs::path& path, const ViTConfig& config) { return preprocess(read_png(path), config); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace cci::tool
