#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cci/cci.hpp"
#include "cci/faith.hpp"
#include "cci/model_io.hpp"

namespace cci::tool {

namespace fs = std::filesystem;

// Every knob a command may read. Fields unused by a command are ignored.
struct RunConfig {
  fs::path model;
  fs::path text_bank;
  fs::path out = "out";
  fs::path manifest;
  std::size_t k = 7;
  std::uint64_t seed = 0;
  std::size_t steps = 100;
  double step_frac = 0.005;
  std::string upsample = "bilinear";
  std::string blank = "mean";
  double binarize_mass = 0.5;
  std::string judge = "offline";
  bool clamp_negative = false;
  std::size_t workers = 0;  // 0 = available parallelism
  bool normalize_bank = false;
};

// Registers the flags shared by the model-driven commands.
void add_common_options(CLI::App& cmd, RunConfig& cfg);
void add_config_option(CLI::App& cmd, std::string& config_path);

// Fills options that were not given on the command line from a JSON
// object whose keys are long option names ("step-frac" or "step_frac").
void apply_config_file(CLI::App& cmd, const fs::path& path);

void require_file(const fs::path& path, const std::string& what);
void require_dir(const fs::path& path, const std::string& what);
std::size_t worker_count(const RunConfig& cfg);

UpsampleMode parse_upsample(const std::string& s);
BlankMode parse_blank(const std::string& s);
CciOptions cci_options(const RunConfig& cfg);

ImageTensor load_image(const fs::path& path, const ViTConfig& config);
void write_text(const fs::path& path, const std::string& text);

// Each adds its subcommand; the work runs in the subcommand callback.
void register_explain(CLI::App& app);
void register_eval(CLI::App& app);
void register_diagnose(CLI::App& app);
void register_transform(CLI::App& app);
void register_make_fixture(CLI::App& app);

}  // namespace cci::tool
