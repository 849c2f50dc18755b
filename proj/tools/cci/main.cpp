// cci: concept importance maps, faithfulness curves, error diagnosis and
// image variants from the command line.

#include <iostream>
#include <map>

#include "cci/error.hpp"
#include "cci/log.hpp"
#include "common.hpp"

namespace {

int fail(int code, const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", message}, {"kind", kind}, {"exit_code", code}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-based concept importance for ViT image encoders"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug|info|warn|error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}))
      ->each([](const std::string& level) {
        static const std::map<std::string, cci::log::Level> levels{{"debug", cci::log::Level::debug},
                                                                   {"info", cci::log::Level::info},
                                                                   {"warn", cci::log::Level::warn},
                                                                   {"error", cci::log::Level::error}};
        cci::log::set_min_level(levels.at(level));
      });

  cci::tool::register_explain(app);
  cci::tool::register_eval(app);
  cci::tool::register_diagnose(app);
  cci::tool::register_transform(app);
  cci::tool::register_make_fixture(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  } catch (const cci::InputError& e) {
    return fail(2, "input", e.what());
  } catch (const cci::ServiceError& e) {
    return fail(1, "service", e.what());
  } catch (const std::exception& e) {
    return fail(1, "internal", e.what());
  }
  return 0;
}
