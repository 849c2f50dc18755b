#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cci/error.hpp"
#include "cci/faith.hpp"
#include "cci/rng.hpp"
#include "cci/synthetic.hpp"
#include "stubs.hpp"
#include "tempdir.hpp"

using namespace cci;
using testing::RegionStub;

namespace {

ImageTensor random_image(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor t(size);
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

// Closed-form stub curve: correct while at least half of the 100 region
// pixels are untouched (deletion) or revealed (insertion), with the region
// ranked first.
std::vector<double> stub_curve(CurveMode mode, std::size_t steps, double frac, std::size_t pixels) {
  std::vector<double> c;
  for (std::size_t m = 0; m <= steps; ++m) {
    const auto touched = std::min<std::size_t>(100, static_cast<std::size_t>(std::floor(m * frac * pixels + 1e-9)));
    const std::size_t good = mode == CurveMode::deletion ? 100 - touched : touched;
    c.push_back(2 * good >= 100 ? 1.0 : 0.0);
  }
  return c;
}

double trapezoid_ref(const std::vector<double>& v) {
  double a = 0;
  for (std::size_t i = 1; i < v.size(); ++i) a += (v[i] + v[i - 1]) / 2 * (1.0 / (v.size() - 1));
  return a;
}

class FixedMaps final : public MapProvider {
 public:
  explicit FixedMaps(std::vector<ScalarMap> maps) : maps_(std::move(maps)) {}
  ScalarMap map_for(const ImageTensor&, const ManifestEntry& e, std::span<const float>) const override {
    return maps_[std::stoul(e.id) % maps_.size()];
  }

 private:
  std::vector<ScalarMap> maps_;
};

}  // namespace

TEST_CASE("trapezoid AUC") {
  const std::vector<double> ones(101, 1.0);
  CHECK(trapezoid_auc(ones) == 1.0);
  std::vector<double> ramp(101);
  for (std::size_t i = 0; i <= 100; ++i) ramp[i] = i / 100.0;
  CHECK(std::abs(trapezoid_auc(ramp) - 0.5) <= 1e-9);
  CHECK(trapezoid_auc(std::vector<double>{0, 1}) == 0.5);
}

TEST_CASE("schedule") {
  const StepSchedule s;
  CHECK(s.modified_after(100, 224 * 224) == 224 * 224 / 2);
  CHECK(s.modified_after(100, 1024) == 512);
  CHECK(s.modified_after(1, 1024) == 5);
  CHECK(s.modified_after(10, 1024) == 51);
  CHECK_THROWS_AS((StepSchedule{100, 0.02}.validate()), InputError);
  CHECK_THROWS_AS((StepSchedule{0, 0.005}.validate()), InputError);
  CHECK_THROWS_AS((StepSchedule{10, -0.1}.validate()), InputError);
}

TEST_CASE("pixel ranking is a stable permutation") {
  ScalarMap m(4);
  m.values = {0, 2, 1, 2, 0, 0, 3, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  const auto r = pixel_ranking(m);
  CHECK(std::vector<std::size_t>(r.begin(), r.begin() + 6) == std::vector<std::size_t>{6, 1, 3, 2, 7, 0});
  auto sorted = r;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 16; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("zero-shot ranking") {
  SUBCASE("single label") {
    const TextEmbeddingBank bank({{"only", {1, 0, 0}}}, false);
    CHECK(zero_shot(std::vector<float>{0.2f, 1, 0}, bank, 0).top1_hit);
  }
  SUBCASE("truth along the embedding, others orthogonal") {
    const TextEmbeddingBank bank({{"a", {0, 1, 0}}, {"b", {2, 0, 0}}, {"c", {0, 0, 1}}}, false);
    const auto r = zero_shot(std::vector<float>{3, 0, 0}, bank, 1);
    CHECK(r.ranking.front() == 1);
    CHECK(r.top1_hit);
    CHECK(r.ranked_labels(bank).front() == "b");
  }
  SUBCASE("tiny model against exhaustive scoring") {
    const auto bundle = random_bundle(tiny_config(), 3);
    const ViTEncoder enc(bundle);
    Rng rng(4);
    std::vector<TextEmbedding> entries;
    for (int i = 0; i < 5; ++i) {
      std::vector<float> v(16);
      for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
      entries.push_back({"label" + std::to_string(i), v});
    }
    const TextEmbeddingBank bank(entries, false);
    const auto image = random_image(32, 4);
    const auto cls = enc.encode(image).cls;
    for (std::size_t t = 0; t < 5; ++t) {
      const auto r = zero_shot(enc, image, bank, "label" + std::to_string(t));
      for (std::size_t i = 0; i < 5; ++i) {
        double best_other = 0;
        std::size_t rank = 0;
        const double si = cosine(cls, bank[i].vector);
        for (std::size_t j = 0; j < 5; ++j) {
          const double sj = cosine(cls, bank[j].vector);
          if (sj > si || (sj == si && j < i)) ++rank;
          best_other = std::max(best_other, sj);
        }
        CHECK(r.ranking[rank] == i);
      }
      CHECK(r.top1_hit == (r.ranking[0] == t));
      CHECK(r.top5_hit);
    }
    CHECK_THROWS_AS(zero_shot(enc, image, bank, "missing"), InputError);
  }
}

TEST_CASE("always-correct scorer") {
  const testing::ConstantStub stub({1, 0});
  const TextEmbeddingBank bank({{"truth", {1, 0}}, {"other", {0, 1}}}, false);
  const auto image = random_image(32, 1);
  const ScalarMap map(32, 0.0f);
  for (auto curve : {deletion_curve(stub, image, map, bank, "truth"), insertion_curve(stub, image, map, bank, "truth")}) {
    CHECK(curve.top1.size() == 101);
    for (double v : curve.top1) CHECK(v == 1.0);
    CHECK(curve.auc_top1 == 1.0);
    CHECK(curve.fraction_modified.back() == 0.5);
  }
}

TEST_CASE("region-indicator stub") {
  const auto rc = testing::region_case(3);
  const RegionStub stub(rc.image, rc.region);
  const ScalarMap uniform(32, 1.0f);
  ScalarMap negated = rc.indicator;
  for (float& v : negated.values) v = -v;

  const auto del_info = deletion_curve(stub, rc.image, rc.indicator, rc.bank, "truth");
  const auto del_unif = deletion_curve(stub, rc.image, uniform, rc.bank, "truth");
  const auto ins_info = insertion_curve(stub, rc.image, rc.indicator, rc.bank, "truth");
  const auto ins_unif = insertion_curve(stub, rc.image, uniform, rc.bank, "truth");
  const auto ins_neg = insertion_curve(stub, rc.image, negated, rc.bank, "truth");

  const auto expect_del = stub_curve(CurveMode::deletion, 100, 0.005, 1024);
  const auto expect_ins = stub_curve(CurveMode::insertion, 100, 0.005, 1024);
  CHECK(del_info.top1 == expect_del);
  CHECK(ins_info.top1 == expect_ins);
  CHECK(std::abs(del_info.auc_top1 - trapezoid_ref(expect_del)) <= 1e-12);
  CHECK(std::abs(ins_info.auc_top1 - trapezoid_ref(expect_ins)) <= 1e-12);
  // Row-major ties never reach the bottom rows within half the image.
  CHECK(del_unif.auc_top1 == 1.0);
  CHECK(ins_unif.auc_top1 == 0.0);

  CHECK(del_info.auc_top1 <= del_unif.auc_top1 - 0.2);
  CHECK(ins_info.auc_top1 >= ins_unif.auc_top1 + 0.2);
  CHECK(ins_neg.auc_top1 <= ins_unif.auc_top1);
  for (std::size_t i = 0; i < del_info.top1.size(); ++i) CHECK(del_info.top1[i] <= del_unif.top1[i]);
}

TEST_CASE("perturbation mechanics") {
  const auto image = random_image(32, 2);
  ScalarMap map(32);
  Rng rng(8);
  for (float& v : map.values) v = static_cast<float>(rng.uniform());
  std::vector<ImageTensor> seen;
  HitFn record = [&](const ImageTensor& t) {
    seen.push_back(t);
    return std::pair{true, true};
  };
  PerturbationOptions opt;
  opt.schedule = {20, 0.025, 99};
  perturbation_curve(CurveMode::deletion, image, map, record, opt);
  REQUIRE(seen.size() == 21);
  const auto [lo, hi] = std::minmax_element(image.data.begin(), image.data.end());
  const auto order = pixel_ranking(map);
  const std::size_t P = 1024;
  for (std::size_t m = 0; m <= 20; ++m) {
    std::size_t changed = 0;
    for (std::size_t p = 0; p < P; ++p) {
      bool diff = false;
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = seen[m].data[c * P + p];
        diff |= v != image.data[c * P + p];
        CHECK((v >= *lo && v <= *hi));
      }
      changed += diff;
    }
    CHECK(changed == static_cast<std::size_t>(std::floor(m * 0.025 * P + 1e-9)));
  }
  // Modified pixels are exactly the top-ranked prefix.
  for (std::size_t i = 0; i < 512; ++i) CHECK(seen[20].data[order[i]] != image.data[order[i]]);
  for (std::size_t i = 512; i < P; ++i) CHECK(seen[20].data[order[i]] == image.data[order[i]]);

  std::vector<ImageTensor> again;
  HitFn record2 = [&](const ImageTensor& t) {
    again.push_back(t);
    return std::pair{true, true};
  };
  perturbation_curve(CurveMode::deletion, image, map, record2, opt);
  CHECK(again == seen);

  SUBCASE("blank canvases") {
    seen.clear();
    perturbation_curve(CurveMode::insertion, image, map, record, opt);
    for (float v : seen[0].data) CHECK(v == 0.0f);
    const ViTConfig cfg = tiny_config();
    opt.blank = BlankMode::black;
    opt.config = &cfg;
    seen.clear();
    perturbation_curve(CurveMode::insertion, image, map, record, opt);
    CHECK(seen[0].at(1, 3, 3) == standardize(0.0f, 1, cfg));
    CHECK(seen[20] != seen[0]);
    opt.config = nullptr;
    CHECK_THROWS_AS(perturbation_curve(CurveMode::insertion, image, map, record, opt), InputError);
  }
  CHECK_THROWS_AS(perturbation_curve(CurveMode::deletion, image, ScalarMap(16), record, opt), InputError);
}

TEST_CASE("retrieval curve") {
  SUBCASE("single caption") {
    const testing::ConstantStub stub({1, 1});
    const TextEmbeddingBank one({{"c", {0, 1}}}, false);
    const auto c = retrieval_curve(CurveMode::deletion, stub, random_image(32, 1), ScalarMap(32), one, 0, 1);
    for (double v : c.top1) CHECK(v == 1.0);
  }
  SUBCASE("orthogonal truth, parallel distractor") {
    const testing::ConstantStub stub({1, 0});
    const TextEmbeddingBank bank({{"truth", {0, 1}}, {"twin", {1, 0}}}, false);
    const auto c = retrieval_curve(CurveMode::insertion, stub, random_image(32, 1), ScalarMap(32), bank, 0, 1);
    for (double v : c.top1) CHECK(v == 0.0);
  }
  SUBCASE("tiny model against a top-k scan") {
    const auto bundle = random_bundle(tiny_config(), 9);
    const ViTEncoder enc(bundle);
    const auto image = random_image(32, 9);
    Rng rng(10);
    std::vector<TextEmbedding> caps;
    for (int i = 0; i < 10; ++i) {
      std::vector<float> v(16);
      for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
      caps.push_back({"caption " + std::to_string(i), v});
    }
    const TextEmbeddingBank bank(caps, false);
    ScalarMap map(32);
    for (float& v : map.values) v = static_cast<float>(rng.uniform());
    PerturbationOptions opt;
    opt.schedule = {10, 0.1, 0};
    for (std::size_t truth : {0u, 4u, 7u}) {
      const auto curve = retrieval_curve(CurveMode::insertion, enc, image, map, bank, truth, 3, opt);
      const auto order = pixel_ranking(map);
      for (std::size_t m = 0; m <= 10; ++m) {
        ImageTensor canvas(32, 0.0f);
        const auto n = static_cast<std::size_t>(std::floor(m * 0.1 * 1024 + 1e-9));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < 3; ++c) canvas.data[c * 1024 + order[i]] = image.data[c * 1024 + order[i]];
        const auto cls = enc.encode(canvas).cls;
        const double st = cosine(cls, bank[truth].vector);
        std::size_t ahead = 0;
        for (std::size_t j = 0; j < 10; ++j) {
          const double sj = cosine(cls, bank[j].vector);
          ahead += sj > st || (sj == st && j < truth);
        }
        CHECK(curve.top1[m] == (ahead < 3 ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("dataset aggregation") {
  const auto rc = testing::region_case(5);
  const RegionStub stub(rc.image, rc.region);
  ScalarMap shifted(32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) shifted.at(y, x) = static_cast<float>(y * 32 + x) / 1024.0f;
  const FixedMaps maps({rc.indicator, ScalarMap(32, 1.0f), shifted});
  auto load = [&](const ManifestEntry&) { return rc.image; };
  const std::vector<CurveMode> both{CurveMode::deletion, CurveMode::insertion};

  SUBCASE("one image") {
    const std::vector<ManifestEntry> one{{"0.png", "truth", "0"}};
    const auto d = dataset_curves(one, load, stub, maps, rc.bank, both, {});
    CHECK(d.per_mode[0].top1 == deletion_curve(stub, rc.image, rc.indicator, rc.bank, "truth",
                                               {StepSchedule{100, 0.005, 0}}).top1);
    CHECK(d.per_mode.size() == 2);
  }
  SUBCASE("two images average pointwise") {
    const std::vector<ManifestEntry> two{{"0.png", "truth", "0"}, {"2.png", "truth", "2"}};
    const auto d = dataset_curves(two, load, stub, maps, rc.bank, both, {});
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t i = 0; i <= 100; ++i)
        CHECK(d.per_mode[m].top1[i] == (d.per_image[m][0].top1[i] + d.per_image[m][1].top1[i]) / 2);
  }
  SUBCASE("twenty images: mean AUC equals AUC of the mean") {
    std::vector<ManifestEntry> many;
    for (int i = 0; i < 20; ++i) many.push_back({std::to_string(i) + ".png", "truth", std::to_string(i)});
    const auto d = dataset_curves(many, load, stub, maps, rc.bank, both, {}, {}, 3);
    CHECK(d.evaluated == 20);
    for (std::size_t m = 0; m < 2; ++m) {
      double mean = 0;
      for (const auto& c : d.per_image[m]) mean += c.auc_top1;
      CHECK(std::abs(d.per_mode[m].auc_top1 - mean / 20) <= 1e-9);
    }
    const auto serial = dataset_curves(many, load, stub, maps, rc.bank, both, {}, {}, 1);
    CHECK(curve_csv(serial.per_mode[0]) == curve_csv(d.per_mode[0]));
    const auto j = curves_summary(d);
    CHECK(j["images"] == 20);
    CHECK(j["curves"].contains("deletion"));
    CHECK(j["curves"]["insertion"].contains("auc_top5"));
  }
  SUBCASE("unreadable entries are counted") {
    std::vector<ManifestEntry> mixed{{"0.png", "truth", "0"}, {"x.png", "truth", "1"}, {"1.png", "nope", "1"}};
    auto flaky = [&](const ManifestEntry& e) -> ImageTensor {
      if (e.path == "x.png") throw InputError("unreadable");
      return rc.image;
    };
    const auto d = dataset_curves(mixed, flaky, stub, maps, rc.bank, both, {});
    CHECK(d.skipped == 2);
    CHECK(d.evaluated == 1);
    CHECK(curves_summary(d)["skipped"] == 2);
  }
}

TEST_CASE("manifest and map files") {
  testing::TempDir dir;
  testing::spit(dir / "m.csv", "path,label\na.png,cat\n/abs/b.png,\"big, dog\"\n");
  const auto m = read_manifest(dir / "m.csv");
  REQUIRE(m.size() == 2);
  CHECK(m[0].path == dir.path() / "a.png");
  CHECK(m[0].id == "a");
  CHECK(m[1].label == "big, dog");

  ScalarMap map(4);
  std::iota(map.values.begin(), map.values.end(), 0.0f);
  write_map_file(dir / "a.f32", map);
  const FileMapProvider files(dir.path(), 4);
  CHECK(files.map_for(ImageTensor(4), m[0], {}) == map);
  const FileMapProvider wrong(dir.path(), 5);
  CHECK_THROWS_AS(wrong.map_for(ImageTensor(5), m[0], {}), InputError);

  FaithfulnessCurve c;
  c.top1 = {1, 0};
  c.top5 = {1, 1};
  c.fraction_modified = {0, 0.005};
  CHECK(curve_csv(c) == "step,frac_modified,acc_top1,acc_top5\n0,0,1,1\n1,0.005,0,1\n");
}
