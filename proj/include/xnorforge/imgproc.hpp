#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xnorforge/engine.hpp"
#include "xnorforge/modelio.hpp"

namespace xnorforge {

/// 8-bit RGB image, interleaved row-major.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(std::size_t(3) * w * h) {}

  std::uint8_t at(int x, int y, int c) const {
    return pixels[(std::size_t(y) * width + x) * 3 + c];
  }
  std::uint8_t& at(int x, int y, int c) {
    return pixels[(std::size_t(y) * width + x) * 3 + c];
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary PPM (P6, maxval 255) decode; comments and whitespace per the PPM
/// grammar.
RgbImage load_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_ppm(const RgbImage& img);

/// Pixel rectangle with inclusive corners.
struct RoiBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

struct Annotation {
  std::string filename;
  int width = 0, height = 0;
  RoiBox roi;
  int class_id = 0;  // 0..42
};

/// Semicolon-separated annotation rows
/// (Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId); the first
/// line is the header.  Malformed rows report their 1-based line number:
/// thrown by default, or collected into `row_errors` (skipping the rows)
/// when a sink is given.
std::vector<Annotation> parse_annotations(
    std::string_view csv, std::vector<std::string>* row_errors = nullptr);

/// Bilinear resample of the ROI to target x target.  Sample positions use
/// half-pixel centers: src = x1 + (dst + 0.5) * roi_w / target - 0.5.
RgbImage crop_resize(const RgbImage& img, const RoiBox& roi, int target = 32);

struct YcbcrPlanes {
  int width = 0, height = 0;
  std::vector<std::uint8_t> y, cb, cr;
};

/// BT.601 full-range conversion, integer-rounded; round trip is within +-1
/// per 8-bit channel.
YcbcrPlanes rgb_to_ycbcr(const RgbImage& img);
RgbImage ycbcr_to_rgb(const YcbcrPlanes& planes);

/// Absolute per-tile histogram clip: min(clip_limit * area / 256, area), but
/// at least ceil(area / 256) so the clipped histogram can still hold the
/// tile's mass.
std::uint32_t clahe_clip_bound(std::uint32_t tile_area, double clip_limit);

/// Clips bins to `bound` and spreads the excess over the histogram without
/// pushing any bin back over the bound.  Exposed for verification.
void clip_and_redistribute(std::array<std::uint32_t, 256>& hist,
                           std::uint32_t bound);

/// Contrast-limited adaptive histogram equalization of one 8-bit plane with
/// tiles_x x tiles_y tiles and bilinear blending between tile mappings.
/// Single-valued tiles map identically (the classic degenerate-histogram
/// guard), so a constant plane is a fixed point for any parameters.
std::vector<std::uint8_t> clahe(std::span<const std::uint8_t> plane, int width,
                                int height, int tiles_x, int tiles_y,
                                double clip_limit);

struct AugmentParams {
  double rotation_deg = 0.0;
  double shear_deg = 0.0;
  double scale = 1.0;
  double translate_x = 0.0;  // fraction of width
  double translate_y = 0.0;  // fraction of height
};

struct AugmentRanges {
  double max_rotation_deg = 10.0;
  double max_shear_deg = 10.0;
  double max_translate = 0.1;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
};

/// Throws std::invalid_argument when params fall outside the ranges.
void validate_augment_params(const AugmentParams& params,
                             const AugmentRanges& ranges);

AugmentParams draw_augment_params(DetRng& rng, const AugmentRanges& ranges);

/// Params for augmented sample `ordinal` of class `class_id`, derived from
/// (seed, class, ordinal) alone so any evaluation order gives the same draw.
AugmentParams augment_params_for(std::uint64_t seed, int class_id,
                                 std::uint64_t ordinal,
                                 const AugmentRanges& ranges);

/// Single affine warp scale * rotation * shear about the image center plus
/// translation, bilinear sampling with border replication.
RgbImage augment(const RgbImage& img, const AugmentParams& params);

/// Augmented samples to synthesize per class to reach `target` examples.
std::vector<std::size_t> balance_plan(std::span<const std::size_t> class_counts,
                                      std::size_t target = 10000);

/// 8-bit image to a real feature map: [-1,1] (v / 127.5 - 1) or [0,1]
/// (v / 255).
FeatureMap normalize(const RgbImage& img, InputRange range);

/// One record of the preprocessed-dataset cache.
struct CachedImage {
  int class_id = -1;  // -1 when unlabeled
  RgbImage image;
};

/// Record container used by the dataset cache: per record a XNORIMG1 header
/// (version u16, class i16, width u16, height u16, all little-endian)
/// followed by the raw R, G, B planes.
void append_record(std::vector<std::uint8_t>& out, const CachedImage& record);
std::vector<CachedImage> parse_records(std::span<const std::uint8_t> bytes);

}  // namespace xnorforge
