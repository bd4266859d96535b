#include "dragguide/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "dragguide/csv.hpp"
#include "dragguide/png_io.hpp"
#include "dragguide/resize.hpp"
#include "dragguide/rng.hpp"

namespace dragguide {
namespace fs = std::filesystem;

std::vector<DatasetRecord> load_dataset(const fs::path& directory) {
  const fs::path labels = directory / "labels.csv";
  std::ifstream in(labels);
  if (!in) throw std::runtime_error("missing labels file '" + labels.string() + "'");

  std::vector<DatasetRecord> records;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (row == 1 && !fields.empty() && fields[0] == "filename") continue;
    if (fields.size() < 2 || fields.size() > 3) {
      throw std::runtime_error(labels.string() + " row " + std::to_string(row) +
                               ": expected filename,cd[,condition], got '" + line + "'");
    }
    DatasetRecord rec;
    const fs::path file = directory / fields[0];
    rec.id = fs::path(fields[0]).stem().string();
    try {
      std::size_t used = 0;
      rec.drag_label = std::stod(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::runtime_error(labels.string() + " row " + std::to_string(row) +
                               ": unparsable drag label '" + fields[1] + "' for " + fields[0]);
    }
    if (!std::isfinite(rec.drag_label)) {
      throw std::runtime_error(labels.string() + " row " + std::to_string(row) +
                               ": non-finite drag label for " + fields[0]);
    }
    if (fields.size() == 3 && !fields[2].empty()) rec.condition = fields[2];
    if (!fs::exists(file)) {
      throw std::runtime_error(labels.string() + " row " + std::to_string(row) +
                               ": missing image file '" + file.string() + "'");
    }
    rec.image = read_png(file);
    records.push_back(std::move(rec));
  }
  return records;
}

void save_dataset(const fs::path& directory, const std::vector<DatasetRecord>& records) {
  std::error_code ec;
  fs::create_directories(directory / "images", ec);
  if (ec) {
    throw std::runtime_error("cannot create dataset directory '" + directory.string() +
                             "': " + ec.message());
  }
  CsvWriter csv(directory / "labels.csv");
  csv.header({"filename", "cd", "condition"});
  for (const auto& rec : records) {
    const std::string name = "images/" + rec.id + ".png";
    write_png(directory / name, rec.image, 0.0, 1.0);
    csv.row(name, rec.drag_label, rec.condition.value_or(""));
  }
}

AugmentParams draw_augment_params(std::uint64_t seed, int copy) {
  const RandomStream s = RandomStream::from_seed(seed).derive("augment").derive(
      static_cast<std::uint64_t>(copy));
  AugmentParams p;
  p.flip = s.uniform(0) < 0.5;
  p.shift = s.uniform(1, -kMaxShiftPixels, kMaxShiftPixels);
  p.brightness = s.uniform(2, 1.0 - kJitter, 1.0 + kJitter);
  p.contrast = s.uniform(3, 1.0 - kJitter, 1.0 + kJitter);
  p.saturation = s.uniform(4, 1.0 - kJitter, 1.0 + kJitter);
  p.hue = s.uniform(5, -kJitter, kJitter);
  return p;
}

ImageTensor flip_horizontal(const ImageTensor& image) {
  ImageTensor out(image.shape());
  const int w = image.width();
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = image.at(c, y, w - 1 - x);
    }
  }
  return out;
}

ImageTensor shift_vertical(const ImageTensor& image, int pixels) {
  if (pixels == 0) return image;
  ImageTensor out(image.shape());
  const int h = image.height();
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      const int src = std::clamp(y - pixels, 0, h - 1);
      for (int x = 0; x < image.width(); ++x) out.at(c, y, x) = image.at(c, src, x);
    }
  }
  return out;
}

namespace {

constexpr std::array<double, 3> kLuma{0.299, 0.587, 0.114};

double luma(const ImageTensor& img, int y, int x) {
  if (img.channels() != 3) return img.at(0, y, x);
  return kLuma[0] * img.at(0, y, x) + kLuma[1] * img.at(1, y, x) + kLuma[2] * img.at(2, y, x);
}

// Rotation by `turns` about the grey axis of RGB space.
void rotate_hue(ImageTensor& img, double turns) {
  if (img.channels() != 3) return;
  const double theta = 2.0 * std::numbers::pi * turns;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double k = 1.0 / 3.0;
  const double sq = std::sqrt(k);
  const double m[3][3] = {
      {cs + (1 - cs) * k, (1 - cs) * k - sq * sn, (1 - cs) * k + sq * sn},
      {(1 - cs) * k + sq * sn, cs + (1 - cs) * k, (1 - cs) * k - sq * sn},
      {(1 - cs) * k - sq * sn, (1 - cs) * k + sq * sn, cs + (1 - cs) * k},
  };
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      // The grey component is fixed by the rotation; only the chroma turns.
      const double grey = (img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x)) / 3.0;
      const double r = img.at(0, y, x) - grey;
      const double g = img.at(1, y, x) - grey;
      const double b = img.at(2, y, x) - grey;
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = grey + (m[c][0] * r + m[c][1] * g + m[c][2] * b);
      }
    }
  }
}

}  // namespace

ImageTensor apply_augment(const ImageTensor& image, const AugmentParams& params) {
  ImageTensor out = params.flip ? flip_horizontal(image) : image;
  const int shift_px =
      static_cast<int>(std::lround(params.shift * image.height() / 224.0));
  out = shift_vertical(out, shift_px);

  if (params.brightness != 1.0) {
    for (double& v : out.data()) v *= params.brightness;
  }
  if (params.contrast != 1.0) {
    double mean = 0.0;
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) mean += luma(out, y, x);
    }
    mean /= static_cast<double>(out.height()) * out.width();
    for (double& v : out.data()) v = mean + params.contrast * (v - mean);
  }
  if (params.saturation != 1.0) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        const double l = luma(out, y, x);
        for (int c = 0; c < out.channels(); ++c) {
          out.at(c, y, x) = l + params.saturation * (out.at(c, y, x) - l);
        }
      }
    }
  }
  if (params.hue != 0.0) rotate_hue(out, params.hue);
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::vector<DatasetRecord> augment(const DatasetRecord& record, std::uint64_t seed) {
  std::vector<DatasetRecord> out;
  out.reserve(kAugmentCopies);
  for (int k = 0; k < kAugmentCopies; ++k) {
    DatasetRecord copy;
    copy.id = record.id + "_aug" + std::to_string(k);
    copy.image = apply_augment(record.image, draw_augment_params(seed, k));
    copy.drag_label = record.drag_label;
    copy.condition = record.condition;
    out.push_back(std::move(copy));
  }
  return out;
}

ImageTensor resize_to_224(const ImageTensor& image) {
  if (image.empty()) throw std::invalid_argument("resize_to_224: empty image");
  return resize_bilinear(image, 224, 224);
}

void SynthVehicleParams::validate() const {
  const bool ok = body_height > 0.0 && body_height < body_length && cabin_height > 0.0 &&
                  wheel_radius > 0.0 && wheel_radius <= 0.5 * body_height &&
                  windshield_angle >= 10.0 && windshield_angle <= 80.0 &&
                  rear_slope_angle >= 10.0 && rear_slope_angle <= 80.0;
  if (!ok) throw std::invalid_argument("SynthVehicleParams: parameters outside documented ranges");
}

double synth_drag_oracle(const SynthVehicleParams& p) {
  p.validate();
  return 0.15 + 0.25 * (p.body_height / p.body_length) +
         0.15 * (1.0 - p.windshield_angle / 90.0) + 0.15 * (1.0 - p.rear_slope_angle / 90.0) +
         0.05 * (2.0 * p.wheel_radius / p.body_height);
}

SynthVehicleParams draw_vehicle_params(std::uint64_t seed, int index, int side) {
  const RandomStream s = RandomStream::from_seed(seed).derive("vehicle").derive(
      static_cast<std::uint64_t>(index));
  SynthVehicleParams p;
  p.body_length = s.uniform(0, 0.55, 0.85) * side;
  p.body_height = s.uniform(1, 0.12, 0.24) * side;
  p.cabin_height = s.uniform(2, 0.5, 0.9) * p.body_height;
  p.windshield_angle = s.uniform(3, 10.0, 80.0);
  p.rear_slope_angle = s.uniform(4, 10.0, 80.0);
  p.wheel_radius = s.uniform(5, 0.2, 0.5) * p.body_height;
  return p;
}

ImageTensor render_vehicle(const SynthVehicleParams& p, int side) {
  p.validate();
  if (side < 8) throw std::invalid_argument("render_vehicle: side too small");
  constexpr double kBackground = 1.0;
  constexpr double kBody = 0.3;
  constexpr double kWheel = 0.05;
  constexpr int kSub = 4;

  const double ground = 0.82 * side;
  const double wheel_y = ground - p.wheel_radius;
  const double body_bottom = wheel_y;
  const double body_top = body_bottom - p.body_height;
  const double x0 = 0.5 * (side - p.body_length);
  const double x1 = x0 + p.body_length;
  const double cabin_front = x0 + 0.2 * p.body_length;
  const double cabin_rear = x0 + 0.9 * p.body_length;
  const double tan_a = std::tan(p.windshield_angle * std::numbers::pi / 180.0);
  const double tan_r = std::tan(p.rear_slope_angle * std::numbers::pi / 180.0);
  const std::array<double, 2> wheel_x{x0 + 0.2 * p.body_length, x0 + 0.8 * p.body_length};

  auto shade = [&](double x, double y) {
    for (double wx : wheel_x) {
      const double dx = x - wx, dy = y - wheel_y;
      if (dx * dx + dy * dy <= p.wheel_radius * p.wheel_radius) return kWheel;
    }
    if (x >= x0 && x <= x1 && y >= body_top && y <= body_bottom) return kBody;
    const double rise = body_top - y;
    if (rise >= 0.0 && rise <= p.cabin_height && x >= cabin_front + rise * tan_a &&
        x <= cabin_rear - rise * tan_r) {
      return kBody;
    }
    return kBackground;
  };

  ImageTensor img(3, side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          acc += shade(x + (sx + 0.5) / kSub, y + (sy + 0.5) / kSub);
        }
      }
      const double v = acc / (kSub * kSub);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
    }
  }
  return img;
}

std::vector<DatasetRecord> synth_vehicle_dataset(int n, std::uint64_t seed, int side) {
  if (n < 1) throw std::invalid_argument("synth_vehicle_dataset: n must be >= 1");
  std::vector<DatasetRecord> records;
  records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const SynthVehicleParams p = draw_vehicle_params(seed, i, side);
    char id[32];
    std::snprintf(id, sizeof id, "car_%05d", i);
    records.push_back({id, render_vehicle(p, side), synth_drag_oracle(p), std::nullopt});
  }
  return records;
}

std::uint64_t stable_id_hash(const std::string& id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : id) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

DatasetSplit split_by_id_hash(const std::vector<DatasetRecord>& records) {
  DatasetSplit split;
  for (const auto& r : records) {
    (stable_id_hash(r.id) % 5 == 0 ? split.test : split.train).push_back(r);
  }
  return split;
}

}  // namespace dragguide
