#include "xnorforge/imgproc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace xnorforge {

namespace {

struct PpmCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  bool eof() const { return pos >= bytes.size(); }
  char peek() const { return char(bytes[pos]); }

  void skip_space_and_comments() {
    while (!eof()) {
      const char c = peek();
      if (c == '#') {
        while (!eof() && peek() != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        return;
      }
    }
  }

  int number() {
    skip_space_and_comments();
    if (eof() || !std::isdigit(static_cast<unsigned char>(peek())))
      throw std::invalid_argument("ppm: expected a decimal number");
    long v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (peek() - '0');
      if (v > 1 << 20) throw std::invalid_argument("ppm: number out of range");
      ++pos;
    }
    return int(v);
  }
};

}  // namespace

RgbImage load_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw std::invalid_argument("ppm: not a P6 file");
  PpmCursor cur{bytes, 2};
  const int width = cur.number();
  const int height = cur.number();
  const int maxval = cur.number();
  if (width < 1 || height < 1)
    throw std::invalid_argument("ppm: non-positive dimensions");
  if (maxval != 255)
    throw std::invalid_argument("ppm: maxval " + std::to_string(maxval) +
                                " unsupported (need 255)");
  // Exactly one whitespace byte separates the header from the payload.
  if (cur.eof() || !std::isspace(static_cast<unsigned char>(cur.peek())))
    throw std::invalid_argument("ppm: missing header terminator");
  ++cur.pos;
  const std::size_t need = std::size_t(3) * width * height;
  if (bytes.size() - cur.pos < need)
    throw std::invalid_argument("ppm: payload truncated (" +
                                std::to_string(bytes.size() - cur.pos) +
                                " of " + std::to_string(need) + " bytes)");
  RgbImage img(width, height);
  std::memcpy(img.pixels.data(), bytes.data() + cur.pos, need);
  return img;
}

std::vector<std::uint8_t> write_ppm(const RgbImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

namespace {

int parse_int_field(std::string_view field, std::size_t line,
                    const char* what) {
  int v = 0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw std::invalid_argument("annotations line " + std::to_string(line) +
                                ": bad " + what + " \"" + std::string(field) +
                                "\"");
  return v;
}

Annotation parse_annotation_row(std::string_view line, std::size_t line_no) {
  std::array<std::string_view, 8> fields;
  std::size_t start = 0, n = 0;
  for (; n < 8; ++n) {
    const std::size_t semi = line.find(';', start);
    fields[n] = line.substr(start, semi == std::string_view::npos
                                       ? std::string_view::npos
                                       : semi - start);
    if (semi == std::string_view::npos) {
      ++n;
      break;
    }
    start = semi + 1;
  }
  if (n != 8)
    throw std::invalid_argument("annotations line " + std::to_string(line_no) +
                                ": expected 8 semicolon-separated fields");
  Annotation a;
  a.filename = std::string(fields[0]);
  a.width = parse_int_field(fields[1], line_no, "Width");
  a.height = parse_int_field(fields[2], line_no, "Height");
  a.roi.x1 = parse_int_field(fields[3], line_no, "Roi.X1");
  a.roi.y1 = parse_int_field(fields[4], line_no, "Roi.Y1");
  a.roi.x2 = parse_int_field(fields[5], line_no, "Roi.X2");
  a.roi.y2 = parse_int_field(fields[6], line_no, "Roi.Y2");
  a.class_id = parse_int_field(fields[7], line_no, "ClassId");
  const auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("annotations line " + std::to_string(line_no) +
                                ": " + msg);
  };
  if (a.width < 1 || a.height < 1) fail("non-positive image size");
  if (a.class_id < 0 || a.class_id > 42)
    fail("ClassId " + std::to_string(a.class_id) + " outside 0..42");
  if (a.roi.x1 >= a.roi.x2 || a.roi.y1 >= a.roi.y2) fail("degenerate ROI box");
  if (a.roi.x1 < 0 || a.roi.y1 < 0 || a.roi.x2 >= a.width ||
      a.roi.y2 >= a.height)
    fail("ROI outside image bounds");
  return a;
}

}  // namespace

std::vector<Annotation> parse_annotations(
    std::string_view csv, std::vector<std::string>* row_errors) {
  std::vector<Annotation> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t end = std::min(csv.find('\n', pos), csv.size());
    std::string_view line = csv.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) continue;  // header row
    if (line.empty()) continue;
    try {
      out.push_back(parse_annotation_row(line, line_no));
    } catch (const std::invalid_argument& e) {
      if (!row_errors) throw;
      row_errors->push_back(e.what());
    }
  }
  return out;
}

namespace {

double bilinear_sample(const RgbImage& img, double px, double py, int c) {
  px = std::clamp(px, 0.0, double(img.width - 1));
  py = std::clamp(py, 0.0, double(img.height - 1));
  const int x0 = int(px);
  const int y0 = int(py);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = px - x0;
  const double fy = py - y0;
  const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
  const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
  return (1.0 - fy) * top + fy * bot;
}

std::uint8_t to_byte(double v) {
  return std::uint8_t(std::clamp<long>(std::lround(v), 0, 255));
}

}  // namespace

RgbImage crop_resize(const RgbImage& img, const RoiBox& roi, int target) {
  if (target < 1) throw std::invalid_argument("crop_resize: bad target");
  if (roi.x1 < 0 || roi.y1 < 0 || roi.x2 >= img.width || roi.y2 >= img.height)
    throw std::invalid_argument("crop_resize: roi outside image");
  if (roi.x1 >= roi.x2 || roi.y1 >= roi.y2)
    throw std::invalid_argument("crop_resize: degenerate roi");
  const int rw = roi.x2 - roi.x1 + 1;
  const int rh = roi.y2 - roi.y1 + 1;
  const double sx = double(rw) / target;
  const double sy = double(rh) / target;
  RgbImage out(target, target);
  for (int y = 0; y < target; ++y) {
    for (int x = 0; x < target; ++x) {
      const double px =
          std::clamp(roi.x1 + (x + 0.5) * sx - 0.5, double(roi.x1),
                     double(roi.x2));
      const double py =
          std::clamp(roi.y1 + (y + 0.5) * sy - 0.5, double(roi.y1),
                     double(roi.y2));
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = to_byte(bilinear_sample(img, px, py, c));
    }
  }
  return out;
}

YcbcrPlanes rgb_to_ycbcr(const RgbImage& img) {
  YcbcrPlanes p;
  p.width = img.width;
  p.height = img.height;
  const std::size_t n = std::size_t(img.width) * img.height;
  p.y.resize(n);
  p.cb.resize(n);
  p.cr.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = img.pixels[3 * i + 0];
    const double g = img.pixels[3 * i + 1];
    const double b = img.pixels[3 * i + 2];
    p.y[i] = to_byte(0.299 * r + 0.587 * g + 0.114 * b);
    p.cb[i] = to_byte(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
    p.cr[i] = to_byte(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
  }
  return p;
}

RgbImage ycbcr_to_rgb(const YcbcrPlanes& planes) {
  RgbImage img(planes.width, planes.height);
  const std::size_t n = std::size_t(planes.width) * planes.height;
  if (planes.y.size() != n || planes.cb.size() != n || planes.cr.size() != n)
    throw std::invalid_argument("ycbcr_to_rgb: plane size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double y = planes.y[i];
    const double cb = planes.cb[i] - 128.0;
    const double cr = planes.cr[i] - 128.0;
    img.pixels[3 * i + 0] = to_byte(y + 1.402 * cr);
    img.pixels[3 * i + 1] = to_byte(y - 0.344136 * cb - 0.714136 * cr);
    img.pixels[3 * i + 2] = to_byte(y + 1.772 * cb);
  }
  return img;
}

std::uint32_t clahe_clip_bound(std::uint32_t tile_area, double clip_limit) {
  const double raw = clip_limit * tile_area / 256.0;
  const auto capped =
      std::uint32_t(std::min<double>(raw, double(tile_area)));
  return std::max(capped, (tile_area + 255) / 256);
}

void clip_and_redistribute(std::array<std::uint32_t, 256>& hist,
                           std::uint32_t bound) {
  std::uint64_t excess = 0;
  for (std::uint32_t& h : hist) {
    if (h > bound) {
      excess += h - bound;
      h = bound;
    }
  }
  while (excess > 0) {
    const std::uint64_t step = std::max<std::uint64_t>(1, excess / 256);
    bool progressed = false;
    for (std::uint32_t& h : hist) {
      if (excess == 0) break;
      const std::uint64_t room = bound - h;
      const std::uint64_t add = std::min({step, room, excess});
      if (add > 0) {
        h += std::uint32_t(add);
        excess -= add;
        progressed = true;
      }
    }
    // bound * 256 >= tile area, so there is always room; the guard only
    // protects against a caller-supplied bound that cannot hold the mass.
    if (!progressed) break;
  }
}

namespace {

/// Per-tile mapping 256 -> 256.  Classic anchored normalization: a flat
/// histogram maps to the identity, and a single-valued tile short-circuits
/// to the identity outright.
std::array<std::uint8_t, 256> tile_lut(
    const std::array<std::uint32_t, 256>& hist, std::uint32_t area) {
  std::array<std::uint8_t, 256> lut{};
  std::uint64_t cdf = 0, cmin = 0;
  for (int v = 0; v < 256; ++v) {
    if (hist[v] > 0) {
      cmin = hist[v];
      break;
    }
  }
  if (cmin == area) {
    for (int v = 0; v < 256; ++v) lut[v] = std::uint8_t(v);
    return lut;
  }
  for (int v = 0; v < 256; ++v) {
    cdf += hist[v];
    const double scaled =
        double(std::int64_t(cdf) - std::int64_t(cmin)) * 255.0 /
        double(area - cmin);
    lut[v] = std::uint8_t(std::clamp<long>(std::lround(scaled), 0, 255));
  }
  return lut;
}

}  // namespace

std::vector<std::uint8_t> clahe(std::span<const std::uint8_t> plane, int width,
                                int height, int tiles_x, int tiles_y,
                                double clip_limit) {
  if (width < 1 || height < 1 ||
      plane.size() != std::size_t(width) * height)
    throw std::invalid_argument("clahe: bad plane dimensions");
  if (tiles_x < 1 || tiles_y < 1)
    throw std::invalid_argument("clahe: tile counts must be >= 1");
  if (tiles_x > width || tiles_y > height)
    throw std::invalid_argument("clahe: tile smaller than one pixel");
  if (!(clip_limit >= 1.0))
    throw std::invalid_argument("clahe: clip limit must be >= 1");

  std::vector<int> x0(tiles_x + 1), y0(tiles_y + 1);
  for (int t = 0; t <= tiles_x; ++t) x0[t] = t * width / tiles_x;
  for (int t = 0; t <= tiles_y; ++t) y0[t] = t * height / tiles_y;

  std::vector<std::array<std::uint8_t, 256>> luts(std::size_t(tiles_x) *
                                                  tiles_y);
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      std::array<std::uint32_t, 256> hist{};
      for (int y = y0[ty]; y < y0[ty + 1]; ++y)
        for (int x = x0[tx]; x < x0[tx + 1]; ++x)
          ++hist[plane[std::size_t(y) * width + x]];
      const auto area =
          std::uint32_t((x0[tx + 1] - x0[tx]) * (y0[ty + 1] - y0[ty]));
      // The degenerate guard fires on the raw histogram: clipping a
      // single-valued tile would only smear its delta.
      const bool single_valued =
          std::any_of(hist.begin(), hist.end(),
                      [area](std::uint32_t h) { return h == area; });
      if (!single_valued)
        clip_and_redistribute(hist, clahe_clip_bound(area, clip_limit));
      luts[std::size_t(ty) * tiles_x + tx] = tile_lut(hist, area);
    }
  }

  // Tile centers for the bilinear blend between neighboring mappings.
  std::vector<double> cx(tiles_x), cy(tiles_y);
  for (int t = 0; t < tiles_x; ++t) cx[t] = x0[t] + (x0[t + 1] - x0[t] - 1) / 2.0;
  for (int t = 0; t < tiles_y; ++t) cy[t] = y0[t] + (y0[t + 1] - y0[t] - 1) / 2.0;

  const auto locate = [](const std::vector<double>& centers, int coord,
                         int& lo, int& hi, double& frac) {
    const int last = int(centers.size()) - 1;
    if (coord <= centers[0]) {
      lo = hi = 0;
      frac = 0.0;
    } else if (coord >= centers[last]) {
      lo = hi = last;
      frac = 0.0;
    } else {
      hi = 1;
      while (centers[hi] < coord) ++hi;
      lo = hi - 1;
      frac = (coord - centers[lo]) / (centers[hi] - centers[lo]);
    }
  };

  std::vector<std::uint8_t> out(plane.size());
  for (int y = 0; y < height; ++y) {
    int iy0, iy1;
    double fy;
    locate(cy, y, iy0, iy1, fy);
    for (int x = 0; x < width; ++x) {
      int ix0, ix1;
      double fx;
      locate(cx, x, ix0, ix1, fx);
      const std::uint8_t v = plane[std::size_t(y) * width + x];
      const auto lut = [&](int ty, int tx) {
        return double(luts[std::size_t(ty) * tiles_x + tx][v]);
      };
      std::uint8_t res;
      if (iy0 == iy1 && ix0 == ix1) {
        res = luts[std::size_t(iy0) * tiles_x + ix0][v];
      } else {
        const double top = (1.0 - fx) * lut(iy0, ix0) + fx * lut(iy0, ix1);
        const double bot = (1.0 - fx) * lut(iy1, ix0) + fx * lut(iy1, ix1);
        const double blended = (1.0 - fy) * top + fy * bot;
        res = std::uint8_t(std::clamp<long>(std::lround(blended), 0, 255));
      }
      out[std::size_t(y) * width + x] = res;
    }
  }
  return out;
}

void validate_augment_params(const AugmentParams& params,
                             const AugmentRanges& ranges) {
  const auto fail = [](const std::string& what) {
    throw std::invalid_argument("augment params out of range: " + what);
  };
  if (std::abs(params.rotation_deg) > ranges.max_rotation_deg)
    fail("rotation " + std::to_string(params.rotation_deg));
  if (std::abs(params.shear_deg) > ranges.max_shear_deg)
    fail("shear " + std::to_string(params.shear_deg));
  if (std::abs(params.translate_x) > ranges.max_translate ||
      std::abs(params.translate_y) > ranges.max_translate)
    fail("translation");
  if (params.scale < ranges.scale_lo || params.scale > ranges.scale_hi)
    fail("scale " + std::to_string(params.scale));
}

AugmentParams draw_augment_params(DetRng& rng, const AugmentRanges& ranges) {
  AugmentParams p;
  p.rotation_deg = rng.uniform(-ranges.max_rotation_deg, ranges.max_rotation_deg);
  p.translate_x = rng.uniform(-ranges.max_translate, ranges.max_translate);
  p.translate_y = rng.uniform(-ranges.max_translate, ranges.max_translate);
  p.shear_deg = rng.uniform(-ranges.max_shear_deg, ranges.max_shear_deg);
  p.scale = rng.uniform(ranges.scale_lo, ranges.scale_hi);
  return p;
}

AugmentParams augment_params_for(std::uint64_t seed, int class_id,
                                 std::uint64_t ordinal,
                                 const AugmentRanges& ranges) {
  DetRng rng(mix_seed(mix_seed(seed, std::uint64_t(class_id)), ordinal));
  return draw_augment_params(rng, ranges);
}

RgbImage augment(const RgbImage& img, const AugmentParams& params) {
  if (!(params.scale > 0.0))
    throw std::invalid_argument("augment: scale must be positive");
  const double rad = params.rotation_deg * std::numbers::pi / 180.0;
  const double sh = std::tan(params.shear_deg * std::numbers::pi / 180.0);
  const double cs = std::cos(rad), sn = std::sin(rad);
  // Forward map: q = S * R * Sh * (p - c) + c + t.
  const double m00 = params.scale * cs;
  const double m01 = params.scale * (cs * sh - sn);
  const double m10 = params.scale * sn;
  const double m11 = params.scale * (sn * sh + cs);
  const double det = m00 * m11 - m01 * m10;
  if (std::abs(det) < 1e-12)
    throw std::invalid_argument("augment: degenerate transform");
  const double i00 = m11 / det, i01 = -m01 / det;
  const double i10 = -m10 / det, i11 = m00 / det;
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  const double tx = params.translate_x * img.width;
  const double ty = params.translate_y * img.height;

  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - cx - tx;
      const double dy = y - cy - ty;
      const double px = i00 * dx + i01 * dy + cx;
      const double py = i10 * dx + i11 * dy + cy;
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = to_byte(bilinear_sample(img, px, py, c));
    }
  }
  return out;
}

std::vector<std::size_t> balance_plan(std::span<const std::size_t> class_counts,
                                      std::size_t target) {
  std::vector<std::size_t> extra(class_counts.size());
  for (std::size_t i = 0; i < class_counts.size(); ++i) {
    if (class_counts[i] == 0)
      throw std::invalid_argument("balance_plan: class " + std::to_string(i) +
                                  " has no examples");
    extra[i] = class_counts[i] >= target ? 0 : target - class_counts[i];
  }
  return extra;
}

FeatureMap normalize(const RgbImage& img, InputRange range) {
  FeatureMap map(Shape{img.height, img.width, 3});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        map.at(y, x, c) = range == InputRange::SymmetricUnit
                              ? img.at(x, y, c) / 127.5 - 1.0
                              : img.at(x, y, c) / 255.0;
  return map;
}

namespace {

constexpr char kRecordMagic[8] = {'X', 'N', 'O', 'R', 'I', 'M', 'G', '1'};
constexpr std::uint16_t kRecordVersion = 1;

}  // namespace

void append_record(std::vector<std::uint8_t>& out, const CachedImage& record) {
  const RgbImage& img = record.image;
  if (img.width < 1 || img.height < 1 ||
      img.pixels.size() != std::size_t(3) * img.width * img.height)
    throw std::invalid_argument("append_record: malformed image");
  if (record.class_id < -1 || record.class_id > 42)
    throw std::invalid_argument("append_record: class id out of range");
  out.insert(out.end(), kRecordMagic, kRecordMagic + 8);
  const auto u16 = [&out](std::uint16_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
  };
  u16(kRecordVersion);
  u16(std::uint16_t(std::int16_t(record.class_id)));
  u16(std::uint16_t(img.width));
  u16(std::uint16_t(img.height));
  // Planar payload: all R, then all G, then all B.
  const std::size_t n = std::size_t(img.width) * img.height;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(img.pixels[3 * i + c]);
}

std::vector<CachedImage> parse_records(std::span<const std::uint8_t> bytes) {
  std::vector<CachedImage> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 16)
      throw std::invalid_argument("image records: truncated header");
    if (std::memcmp(bytes.data() + pos, kRecordMagic, 8) != 0)
      throw std::invalid_argument("image records: bad magic at offset " +
                                  std::to_string(pos));
    const auto u16 = [&](std::size_t off) {
      return std::uint16_t(bytes[pos + off] | bytes[pos + off + 1] << 8);
    };
    if (u16(8) != kRecordVersion)
      throw std::invalid_argument("image records: unsupported version");
    const int class_id = std::int16_t(u16(10));
    const int width = u16(12);
    const int height = u16(14);
    if (width < 1 || height < 1)
      throw std::invalid_argument("image records: bad dimensions");
    const std::size_t n = std::size_t(width) * height;
    if (bytes.size() - pos - 16 < 3 * n)
      throw std::invalid_argument("image records: truncated payload");
    CachedImage rec;
    rec.class_id = class_id;
    rec.image = RgbImage(width, height);
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < n; ++i)
        rec.image.pixels[3 * i + c] = bytes[pos + 16 + c * n + i];
    pos += 16 + 3 * n;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace xnorforge
