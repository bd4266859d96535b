#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dragguide/denoiser.hpp"
#include "dragguide/tensor.hpp"

namespace dragguide {

struct DatasetRecord {
  std::string id;
  ImageTensor image;  // 3×H×W, values in [0, 1]
  double drag_label = 0.0;
  Condition condition;
};

/// Reads `labels.csv` (filename,cd,condition) and the PNGs it references.
/// Errors name the offending row or file.
[[nodiscard]] std::vector<DatasetRecord> load_dataset(const std::filesystem::path& directory);

/// Writes `labels.csv` and `images/<id>.png` (8-bit RGB).
void save_dataset(const std::filesystem::path& directory,
                  const std::vector<DatasetRecord>& records);

/// One draw of the augmentation recipe. `shift` is in 224-pixel reference
/// units and is rescaled to the image height when applied.
struct AugmentParams {
  bool flip = false;
  double shift = 0.0;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;  // fraction of a full turn of the hue wheel
};

inline constexpr int kAugmentCopies = 10;
inline constexpr double kMaxShiftPixels = 25.0;
inline constexpr double kJitter = 0.05;

[[nodiscard]] AugmentParams draw_augment_params(std::uint64_t seed, int copy);

/// Applies flip → vertical shift (edge rows replicated) → brightness →
/// contrast → saturation → hue, then clamps to [0, 1].
[[nodiscard]] ImageTensor apply_augment(const ImageTensor& image, const AugmentParams& params);

[[nodiscard]] ImageTensor flip_horizontal(const ImageTensor& image);
[[nodiscard]] ImageTensor shift_vertical(const ImageTensor& image, int pixels);

/// Ten jittered copies with the label unchanged.
[[nodiscard]] std::vector<DatasetRecord> augment(const DatasetRecord& record, std::uint64_t seed);

/// Bilinear resize to C×224×224 (the surrogate's kernel).
[[nodiscard]] ImageTensor resize_to_224(const ImageTensor& image);

/// Side-view silhouette parameters, in pixels and degrees. Angles are
/// measured from the vertical, so small angles are blunt.
struct SynthVehicleParams {
  double body_length = 0.0;      // L
  double body_height = 0.0;      // H
  double cabin_height = 0.0;     // h
  double windshield_angle = 0.0; // a
  double rear_slope_angle = 0.0; // r
  double wheel_radius = 0.0;     // ρ

  /// 0 < H < L, 0 < h, 0 < ρ ≤ H/2 and 10° ≤ a, r ≤ 80°.
  void validate() const;
};

/// cd = 0.15 + 0.25·H/L + 0.15·(1 − a/90) + 0.15·(1 − r/90) + 0.05·2ρ/H
[[nodiscard]] double synth_drag_oracle(const SynthVehicleParams& params);

/// Draws parameters for an image of the given side:
/// L ∈ [0.55, 0.85]·side, H ∈ [0.12, 0.24]·side, h ∈ [0.5, 0.9]·H,
/// a, r ∈ [10°, 80°], ρ ∈ [0.2, 0.5]·H.
[[nodiscard]] SynthVehicleParams draw_vehicle_params(std::uint64_t seed, int index, int side);

/// Grey silhouette on white, 4×4 supersampled.
[[nodiscard]] ImageTensor render_vehicle(const SynthVehicleParams& params, int side);

[[nodiscard]] std::vector<DatasetRecord> synth_vehicle_dataset(int n, std::uint64_t seed,
                                                               int side = 64);

/// Stable 64-bit FNV-1a hash of an id.
[[nodiscard]] std::uint64_t stable_id_hash(const std::string& id);

/// 80/20 split: ids whose hash is ≡ 0 mod 5 go to the test set.
struct DatasetSplit {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> test;
};
[[nodiscard]] DatasetSplit split_by_id_hash(const std::vector<DatasetRecord>& records);

}  // namespace dragguide
