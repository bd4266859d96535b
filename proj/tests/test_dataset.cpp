#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dragguide/dataset.hpp"
#include "dragguide/rng.hpp"

using namespace dragguide;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dragguide_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ImageTensor random_image(Shape s, std::uint64_t seed) {
  const RandomStream rs = RandomStream::from_seed(seed);
  ImageTensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rs.uniform(i);
  return t;
}

}  // namespace

TEST_CASE("oracle label by hand") {
  const SynthVehicleParams p{200, 60, 30, 45, 45, 20};
  CHECK(synth_drag_oracle(p) == doctest::Approx(0.40833333333).epsilon(1e-10));
  SynthVehicleParams bad = p;
  bad.windshield_angle = 5;
  CHECK_THROWS((void)bad.validate());
  bad = p;
  bad.body_height = 250;
  CHECK_THROWS((void)bad.validate());
  bad = p;
  bad.wheel_radius = 40;
  CHECK_THROWS((void)bad.validate());
}

TEST_CASE("synthetic labels stay inside the interval bound") {
  // Extremes of each term over the drawing ranges.
  const double lo = 0.15 + 0.25 * (0.12 / 0.85) + 2 * 0.15 * (1 - 80.0 / 90) + 0.05 * 2 * 0.2;
  const double hi = 0.15 + 0.25 * (0.24 / 0.55) + 2 * 0.15 * (1 - 10.0 / 90) + 0.05 * 2 * 0.5;
  CHECK(lo > 0.15);
  CHECK(hi < 0.75);
  const auto data = synth_vehicle_dataset(1000, 7, 32);
  double mn = 1, mx = 0;
  for (const auto& r : data) {
    mn = std::min(mn, r.drag_label);
    mx = std::max(mx, r.drag_label);
    CHECK(r.drag_label >= lo - 1e-12);
    CHECK(r.drag_label <= hi + 1e-12);
  }
  CHECK(mx - mn > 0.1);
}

TEST_CASE("synthetic dataset is deterministic and valid") {
  const auto a = synth_vehicle_dataset(6, 3, 48);
  const auto b = synth_vehicle_dataset(6, 3, 48);
  REQUIRE(a.size() == 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].drag_label == b[i].drag_label);
    CHECK(a[i].image.shape() == Shape{3, 48, 48});
    for (double v : a[i].image.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(channels_identical(a[i].image));
  }
  CHECK(synth_vehicle_dataset(1, 4, 48)[0].image != a[0].image);
  CHECK_THROWS((void)synth_vehicle_dataset(0, 1, 48));
}

TEST_CASE("taller bodies draw more dark pixels") {
  SynthVehicleParams p{40, 8, 5, 45, 45, 2};
  const auto dark = [](const ImageTensor& im) {
    double s = 0;
    for (double v : im.data()) s += 1.0 - v;
    return s;
  };
  const double low = dark(render_vehicle(p, 64));
  p.body_height = 14;
  CHECK(dark(render_vehicle(p, 64)) > low);
}

TEST_CASE("dataset round trip") {
  const fs::path dir = scratch("roundtrip");
  std::vector<DatasetRecord> recs;
  for (int i = 0; i < 3; ++i) {
    recs.push_back({"img" + std::to_string(i), random_image(Shape{3, 5, 7}, i), 0.1 + i / 3.0,
                    i == 1 ? Condition("coupe") : Condition{}});
  }
  save_dataset(dir, recs);
  const auto back = load_dataset(dir);
  REQUIRE(back.size() == 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].drag_label == recs[i].drag_label);
    CHECK(back[i].condition == recs[i].condition);
    for (std::size_t k = 0; k < recs[i].image.size(); ++k) {
      CHECK(std::abs(back[i].image[k] - recs[i].image[k]) <= 0.5 / 255 + 1e-12);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("dataset loading errors") {
  const fs::path dir = scratch("errors");
  { std::ofstream(dir / "labels.csv") << ""; }
  CHECK(load_dataset(dir).empty());
  { std::ofstream(dir / "labels.csv") << "filename,cd,condition\nmissing.png,0.3,\n"; }
  try {
    (void)load_dataset(dir);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("missing.png") != std::string::npos);
  }
  { std::ofstream(dir / "labels.csv") << "filename,cd,condition\nx.png,abc,\n"; }
  try {
    (void)load_dataset(dir);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("x.png") != std::string::npos);
  }
  { std::ofstream(dir / "labels.csv") << "filename,cd,condition\nx.png,nan,\n"; }
  CHECK_THROWS((void)load_dataset(dir));
  CHECK_THROWS((void)load_dataset(dir / "nowhere"));
  fs::remove_all(dir);
}

TEST_CASE("augmentation") {
  const DatasetRecord rec{"car", random_image(Shape{3, 32, 32}, 9), 0.37, {}};
  SUBCASE("neutral draw is the identity") {
    CHECK(apply_augment(rec.image, AugmentParams{}) == rec.image);
  }
  SUBCASE("flip is an involution") {
    CHECK(flip_horizontal(flip_horizontal(rec.image)) == rec.image);
    CHECK(flip_horizontal(rec.image).at(1, 3, 0) == rec.image.at(1, 3, 31));
  }
  SUBCASE("shift replicates the edge rows") {
    const ImageTensor down = shift_vertical(rec.image, 3);
    CHECK(down.at(0, 10, 4) == rec.image.at(0, 7, 4));
    CHECK(down.at(2, 0, 4) == rec.image.at(2, 0, 4));
    CHECK(down.at(2, 2, 4) == rec.image.at(2, 0, 4));
    const ImageTensor up = shift_vertical(rec.image, -2);
    CHECK(up.at(0, 31, 5) == rec.image.at(0, 31, 5));
    CHECK(up.at(0, 3, 5) == rec.image.at(0, 5, 5));
  }
  SUBCASE("ten labelled copies, deterministic and in range") {
    const auto copies = augment(rec, 5);
    REQUIRE(copies.size() == 10u);
    const auto again = augment(rec, 5);
    int flips = 0;
    for (int k = 0; k < 10; ++k) {
      CHECK(copies[k].drag_label == rec.drag_label);
      CHECK(copies[k].image == again[k].image);
      CHECK(copies[k].id == "car_aug" + std::to_string(k));
      for (double v : copies[k].image.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      const AugmentParams p = draw_augment_params(5, k);
      flips += p.flip;
      CHECK(std::abs(p.shift) <= 25.0);
      CHECK(std::abs(p.brightness - 1) <= 0.05);
      CHECK(std::abs(p.contrast - 1) <= 0.05);
      CHECK(std::abs(p.saturation - 1) <= 0.05);
      CHECK(std::abs(p.hue) <= 0.05);
    }
    (void)flips;
  }
  SUBCASE("flip rate is about one half") {
    int flips = 0;
    for (int k = 0; k < 2000; ++k) flips += draw_augment_params(static_cast<std::uint64_t>(k), k % 10).flip;
    CHECK(std::abs(flips / 2000.0 - 0.5) < 0.05);
  }
  SUBCASE("grey images stay grey") {
    const auto grey = synth_vehicle_dataset(1, 1, 32)[0];
    for (const auto& c : augment(grey, 3)) CHECK(channels_identical(c.image));
  }
}

TEST_CASE("split by id hash") {
  const auto data = synth_vehicle_dataset(500, 1, 16);
  const auto split = split_by_id_hash(data);
  CHECK(split.train.size() + split.test.size() == 500u);
  CHECK(std::abs(static_cast<double>(split.test.size()) / 500.0 - 0.2) < 0.06);
  for (const auto& r : split.test) CHECK(stable_id_hash(r.id) % 5 == 0);
  // FNV-1a reference values
  CHECK(stable_id_hash("") == 0xcbf29ce484222325ULL);
  CHECK(stable_id_hash("a") == 0xaf63dc4c8601ec8cULL);
}
