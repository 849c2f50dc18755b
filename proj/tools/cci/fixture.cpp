#include <memory>
#include <random>

#include "cci/error.hpp"
#include "cci/log.hpp"
#include "cci/synthetic.hpp"
#include "common.hpp"

namespace cci::tool {
namespace {

struct FixtureArgs {
  fs::path out = "fixture";
  std::uint64_t seed = 0;
  std::size_t images = 6;
  std::size_t image_size = 32;
  std::size_t patch = 8;
  std::size_t layers = 2;
  std::size_t width = 16;
  std::size_t heads = 2;
};

// Judge table: cat/dog, car/truck and apple/pear are similar, every other pair different.
const std::vector<std::string> kClasses = {"cat", "dog", "car", "truck", "apple", "pear"};

void run(FixtureArgs& a) {
  if (a.images == 0) throw InputError("--images must be positive");
  const ViTConfig vc = tiny_config(a.image_size, a.patch, a.layers, a.width, a.heads);
  const ModelBundle bundle = random_bundle(vc, a.seed);
  fs::create_directories(a.out / "images");
  fs::create_directories(a.out / "masks");
  save_model(bundle, a.out / "model.safetensors");

  std::mt19937_64 rng(a.seed ^ 0x5eedf1c7u);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<TextEmbedding> entries;
  for (const auto& name : kClasses) {
    TextEmbedding t{name, std::vector<float>(vc.embed_dim)};
    for (auto& v : t.vector) v = normal(rng);
    entries.push_back(std::move(t));
  }
  save_text_bank(TextEmbeddingBank(std::move(entries), true), a.out / "bank.json");

  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < kClasses.size(); ++i)
    for (std::size_t j = i + 1; j < kClasses.size(); ++j)
      pairs.push_back({{"gt", kClasses[i]},
                       {"pred", kClasses[j]},
                       {"verdict", (i / 2 == j / 2) ? "similar" : "different"}});
  write_text(a.out / "judge.json", nlohmann::json{{"pairs", pairs}}.dump(2) + "\n");

  // 1.5x the model input side.
  const std::size_t side = a.image_size + a.image_size / 2;
  std::string manifest = "path,label\n";
  for (std::size_t i = 0; i < a.images; ++i) {
    const std::string id = "img" + std::to_string(i);
    write_png(a.out / "images" / (id + ".png"), random_raster(side, side, a.seed * 1000 + i));
    BinaryMask fg(side, side);
    for (std::size_t y = side / 4; y < side - side / 4; ++y)
      for (std::size_t x = side / 4 + i % 3; x < side - side / 4; ++x) fg.set(x, y, true);
    write_png(a.out / "masks" / (id + ".png"), mask_to_raster(fg));
    manifest += "images/" + id + ".png," + kClasses[i % kClasses.size()] + "\n";
  }
  write_text(a.out / "manifest.csv", manifest);
  log::info("fixture_written", {{"out", a.out.string()}, {"images", a.images}});
}

}  // namespace

void register_make_fixture(CLI::App& app) {
  auto args = std::make_shared<FixtureArgs>();
  CLI::App* cmd = app.add_subcommand("make-fixture", "random tiny model, text bank, images, masks and manifest");
  cmd->add_option("--out", args->out, "output directory");
  cmd->add_option("--seed", args->seed, "seed for weights, bank and images");
  cmd->add_option("--images", args->images, "number of images");
  cmd->add_option("--image-size", args->image_size, "model input side");
  cmd->add_option("--patch", args->patch, "patch side");
  cmd->add_option("--layers", args->layers, "transformer blocks");
  cmd->add_option("--width", args->width, "token width");
  cmd->add_option("--heads", args->heads, "attention heads");
  cmd->callback([args] { run(*args); });
}

}  // namespace cci::tool
