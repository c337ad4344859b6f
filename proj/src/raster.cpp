#include "shrubmap/raster.hpp"

#include <cmath>
#include <cstring>

#include "shrubmap/binary_io.hpp"
#include "shrubmap/error.hpp"
#include "shrubmap/parallel.hpp"

namespace shrubmap {

GridTransform::GridTransform(double ox, double oy, double res, std::uint32_t w, std::uint32_t h)
    : origin_x(ox), origin_y(oy), resolution(res), width(w), height(h) {
  if (!(res > 0.0) || !std::isfinite(res)) throw DimensionError("grid resolution must be positive");
  if (w == 0 || h == 0) throw DimensionError("grid dimensions must be at least 1x1");
  if (!std::isfinite(ox) || !std::isfinite(oy)) throw DimensionError("grid origin must be finite");
}

std::optional<std::pair<std::uint32_t, std::uint32_t>> GridTransform::map_to_pixel(double x, double y) const {
  const double c = std::floor((x - origin_x) / resolution);
  const double r = std::floor((origin_y - y) / resolution);
  if (c < 0.0 || r < 0.0 || c >= width || r >= height) return std::nullopt;
  return std::pair{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(r)};
}

GridTransform GridTransform::coarsened(std::uint32_t factor) const {
  if (factor == 0 || width % factor != 0 || height % factor != 0)
    throw DimensionError("grid " + std::to_string(width) + "x" + std::to_string(height) +
                         " is not divisible by factor " + std::to_string(factor));
  return GridTransform(origin_x, origin_y, resolution * factor, width / factor, height / factor);
}

GridTransform GridTransform::refined(std::uint32_t factor) const {
  if (factor == 0) throw DimensionError("refinement factor must be positive");
  return GridTransform(origin_x, origin_y, resolution / factor, width * factor, height * factor);
}

GridTransform GridTransform::window(std::uint32_t col0, std::uint32_t row0, std::uint32_t w, std::uint32_t h) const {
  if (static_cast<std::uint64_t>(col0) + w > width || static_cast<std::uint64_t>(row0) + h > height)
    throw DimensionError("window exceeds grid bounds");
  return GridTransform(origin_x + col0 * resolution, origin_y - row0 * resolution, resolution, w, h);
}

// ---------------------------------------------------------------------------

Raster::Raster(GridTransform transform, DType dtype, double nodata)
    : transform_(transform), dtype_(dtype), nodata_(nodata),
      cells_(transform.cell_count(), static_cast<float>(nodata)) {
  validate();
}

Raster::Raster(GridTransform transform, DType dtype, double nodata, std::vector<float> cells)
    : transform_(transform), dtype_(dtype), nodata_(nodata), cells_(std::move(cells)) {
  validate();
}

Raster Raster::filled(GridTransform transform, DType dtype, double nodata, float value) {
  Raster r(transform, dtype, nodata);
  std::fill(r.cells_.begin(), r.cells_.end(), value);
  r.validate();
  return r;
}

void Raster::validate() const {
  if (transform_.width == 0 || transform_.height == 0) throw DimensionError("raster dimensions must be at least 1x1");
  if (cells_.size() != transform_.cell_count())
    throw DimensionError("cell count " + std::to_string(cells_.size()) + " does not match grid " +
                         std::to_string(transform_.width) + "x" + std::to_string(transform_.height));
  if (dtype_ == DType::Float32) return;
  const auto code_ok = [](double v) { return v >= 0.0 && v <= 255.0 && std::floor(v) == v; };
  if (!code_ok(nodata_)) throw FormatError("8-bit raster nodata must be an integer code in [0,255]");
  for (float v : cells_) {
    if (is_nodata(v)) continue;
    if (dtype_ == DType::Boolean ? (v != 0.0f && v != 1.0f) : !code_ok(v))
      throw FormatError("invalid cell value " + std::to_string(v) + " for 8-bit raster");
  }
}

bool Raster::is_nodata(float v) const {
  if (std::isnan(nodata_)) return std::isnan(v);
  return v == static_cast<float>(nodata_);
}

std::size_t Raster::count_valid() const {
  std::size_t n = 0;
  for (float v : cells_) n += is_nodata(v) ? 0 : 1;
  return n;
}

bool Raster::operator==(const Raster& other) const {
  if (!(transform_ == other.transform_) || dtype_ != other.dtype_) return false;
  if (std::memcmp(&nodata_, &other.nodata_, sizeof(double)) != 0) return false;
  return cells_.size() == other.cells_.size() &&
         std::memcmp(cells_.data(), other.cells_.data(), cells_.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::uint8_t kSrasVersion = 1;
constexpr std::size_t kSrasHeaderBytes = 40;
}  // namespace

std::vector<std::uint8_t> encode_raster(const Raster& r) {
  bin::Writer w;
  const std::size_t cell_bytes = r.dtype() == DType::Float32 ? 4 : 1;
  w.reserve(kSrasHeaderBytes + r.size() * cell_bytes);
  w.tag("SRAS");
  w.u8(kSrasVersion);
  w.u8(static_cast<std::uint8_t>(r.dtype()));
  w.u8(0);
  w.u8(0);
  const auto& t = r.transform();
  w.u32(t.width);
  w.u32(t.height);
  w.f64(t.resolution);
  w.f64(t.origin_x);
  w.f64(t.origin_y);
  w.f64(r.nodata());
  if (r.dtype() == DType::Float32) {
    for (float v : r.cells()) w.f32(v);
  } else {
    for (float v : r.cells()) w.u8(static_cast<std::uint8_t>(v));
  }
  return w.take();
}

Raster decode_raster(std::span<const std::uint8_t> bytes) {
  bin::Reader in(bytes);
  if (!in.tag("SRAS")) throw FormatError("not an SRAS raster (bad magic)");
  if (in.remaining() < kSrasHeaderBytes - 4) throw FormatError("SRAS header truncated");
  const auto version = in.u8();
  if (version != kSrasVersion) throw FormatError("unsupported SRAS version " + std::to_string(version));
  const auto code = in.u8();
  if (code < 1 || code > 3) throw FormatError("unknown SRAS dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  if (in.u8() != 0 || in.u8() != 0) throw FormatError("SRAS reserved bytes must be zero");
  const auto width = in.u32();
  const auto height = in.u32();
  const double res = in.f64();
  const double ox = in.f64();
  const double oy = in.f64();
  const double nodata = in.f64();
  GridTransform t;
  try {
    t = GridTransform(ox, oy, res, width, height);
  } catch (const DimensionError& e) {
    throw FormatError(std::string("invalid SRAS header: ") + e.what());
  }
  const std::size_t cell_bytes = dtype == DType::Float32 ? 4 : 1;
  const std::size_t n = t.cell_count();
  if (in.remaining() != n * cell_bytes)
    throw TruncationError("SRAS cell payload has " + std::to_string(in.remaining()) + " bytes, expected " +
                          std::to_string(n * cell_bytes));
  std::vector<float> cells(n);
  if (dtype == DType::Float32) {
    for (auto& c : cells) c = in.f32();
  } else {
    for (auto& c : cells) c = static_cast<float>(in.u8());
  }
  return Raster(t, dtype, nodata, std::move(cells));
}

Raster read_raster(const std::string& path) {
  const auto bytes = bin::read_file(path);
  try {
    return decode_raster(bytes);
  } catch (const TruncationError& e) {
    throw TruncationError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_raster(const Raster& r, const std::string& path) { bin::write_file(path, encode_raster(r)); }

// ---------------------------------------------------------------------------

void require_aligned(const Raster& a, const Raster& b, const std::string& what) {
  if (!(a.transform() == b.transform())) throw AlignmentError(what + ": rasters do not share one grid");
}

bool MaskSpec::masks(float code, bool code_valid, float elevation, bool elevation_valid) const {
  if (code_valid && excluded_classes.count(static_cast<std::uint8_t>(code)) > 0) return true;
  return elevation_valid && elevation > max_elevation_m;
}

Raster apply_mask(const Raster& target, const Raster& landcover, const Raster& dem, const MaskSpec& spec) {
  require_aligned(target, landcover, "apply_mask(landcover)");
  require_aligned(target, dem, "apply_mask(dem)");
  Raster out = target;
  const float nd = out.nodata_value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (spec.masks(landcover[i], !landcover.is_nodata_at(i), dem[i], !dem.is_nodata_at(i))) out[i] = nd;
  }
  return out;
}

Raster aggregate_majority(const Raster& fine, std::uint32_t factor, double threshold_fraction) {
  if (fine.dtype() != DType::Boolean) throw ParameterError("aggregate_majority expects a boolean raster");
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
    throw ParameterError("threshold_fraction must lie in (0,1)");
  const GridTransform coarse = fine.transform().coarsened(factor);
  Raster out(coarse, DType::Boolean, kByteNodata);
  const double needed = threshold_fraction * static_cast<double>(factor) * factor;
  const auto& ft = fine.transform();
  parallel_for(coarse.height, [&](std::size_t crow) {
    std::vector<std::uint32_t> counts(coarse.width, 0);
    for (std::uint32_t dr = 0; dr < factor; ++dr) {
      const std::size_t row = crow * factor + dr;
      const float* line = fine.cells().data() + row * ft.width;
      for (std::uint32_t ccol = 0; ccol < coarse.width; ++ccol) {
        const float* block = line + static_cast<std::size_t>(ccol) * factor;
        std::uint32_t c = 0;
        for (std::uint32_t dc = 0; dc < factor; ++dc) c += block[dc] == 1.0f ? 1u : 0u;
        counts[ccol] += c;
      }
    }
    for (std::uint32_t ccol = 0; ccol < coarse.width; ++ccol)
      out.set(ccol, static_cast<std::uint32_t>(crow), counts[ccol] > needed ? 1.0f : 0.0f);
  });
  return out;
}

Raster crop(const Raster& r, std::uint32_t col0, std::uint32_t row0, std::uint32_t w, std::uint32_t h) {
  const GridTransform t = r.transform().window(col0, row0, w, h);
  std::vector<float> cells(t.cell_count());
  for (std::uint32_t row = 0; row < h; ++row)
    for (std::uint32_t col = 0; col < w; ++col) cells[t.index(col, row)] = r.at(col0 + col, row0 + row);
  return Raster(t, r.dtype(), r.nodata(), std::move(cells));
}

void paste(Raster& dst, const Raster& src, std::uint32_t col0, std::uint32_t row0) {
  if (dst.transform().resolution != src.transform().resolution || dst.dtype() != src.dtype())
    throw AlignmentError("paste: resolution or dtype mismatch");
  if (!(dst.transform().window(col0, row0, src.width(), src.height()) == src.transform()))
    throw AlignmentError("paste: source footprint does not match destination window");
  for (std::uint32_t row = 0; row < src.height(); ++row)
    for (std::uint32_t col = 0; col < src.width(); ++col) {
      const float v = src.at(col, row);
      dst.set(col0 + col, row0 + row, src.is_nodata(v) ? dst.nodata_value() : v);
    }
}

}  // namespace shrubmap
