#include <filesystem>

#include "doctest.h"
#include "shrubmap/binary_io.hpp"
#include "shrubmap/error.hpp"
#include "shrubmap/random.hpp"
#include "shrubmap/raster.hpp"
#include "support/oracles.hpp"

using namespace shrubmap;

namespace {

Raster random_bool(std::uint32_t w, std::uint32_t h, double p, Rng& rng, double nodata_share = 0.0) {
  Raster r(GridTransform(0, h, 1.0, w, h), DType::Boolean, kByteNodata);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (rng.bernoulli(nodata_share)) continue;
    r[i] = rng.bernoulli(p) ? 1.0f : 0.0f;
  }
  return r;
}

Raster block_with(std::uint32_t trues) {
  Raster r = Raster::filled(GridTransform(0, 30, 1.0, 30, 30), DType::Boolean, kByteNodata, 0.0f);
  for (std::uint32_t i = 0; i < trues; ++i) r[i] = 1.0f;
  return r;
}

const std::string kData = SHRUBMAP_TEST_DATA;

}  // namespace

TEST_SUITE("raster") {
  TEST_CASE("pixel centres and map-to-pixel round trip") {
    const GridTransform g(500000, 4700000, 30, 4, 3);
    for (std::uint32_t r = 0; r < 3; ++r)
      for (std::uint32_t c = 0; c < 4; ++c) {
        const auto [x, y] = g.pixel_center(c, r);
        CHECK(x == doctest::Approx(500000 + (c + 0.5) * 30));
        CHECK(y == doctest::Approx(4700000 - (r + 0.5) * 30));
        const auto px = g.map_to_pixel(x, y);
        REQUIRE(px);
        CHECK(px->first == c);
        CHECK(px->second == r);
      }
    CHECK_FALSE(g.map_to_pixel(499999, 4699990));
    CHECK_FALSE(g.map_to_pixel(500010, 4700001));
  }

  TEST_CASE("invalid grids are rejected") {
    CHECK_THROWS_AS(GridTransform(0, 0, 0.0, 1, 1), DimensionError);
    CHECK_THROWS_AS(GridTransform(0, 0, 1.0, 0, 1), DimensionError);
    CHECK_THROWS_AS(GridTransform(0, 0, 1.0, 1, 0), DimensionError);
    CHECK_THROWS_AS(Raster(GridTransform(0, 0, 1, 2, 2), DType::Float32, kFloatNodata, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Raster(GridTransform(0, 0, 1, 1, 1), DType::Boolean, kByteNodata, {2.0f}), FormatError);
  }

  TEST_CASE("coarsen, refine and window") {
    const GridTransform g(10, 100, 1.0, 60, 90);
    const auto c = g.coarsened(30);
    CHECK(c.resolution == 30.0);
    CHECK(c.width == 2);
    CHECK(c.height == 3);
    CHECK(c.refined(30) == g);
    CHECK_THROWS_AS(g.coarsened(7), DimensionError);
    const auto w = g.window(5, 10, 3, 4);
    CHECK(w.origin_x == 15.0);
    CHECK(w.origin_y == 90.0);
    CHECK_THROWS_AS(g.window(59, 0, 2, 1), DimensionError);
  }

  TEST_CASE("golden float raster decodes and re-encodes byte for byte") {
    const auto bytes = bin::read_file(kData + "/golden_3x3.sras");
    CHECK(bytes.size() == 48 + 9 * 4);
    const Raster r = decode_raster(bytes);
    CHECK(r.dtype() == DType::Float32);
    CHECK(r.transform() == GridTransform(500000.0, 4700000.0, 30.0, 3, 3));
    CHECK(r.nodata() == -9999.0);
    CHECK(r.at(0, 0) == 1.5f);
    CHECK(r.at(2, 0) == 3.25f);
    CHECK(r.is_nodata(r.at(1, 1)));
    CHECK(r.at(1, 2) == 6.75f);
    CHECK(r.count_valid() == 8);
    CHECK(encode_raster(r) == bytes);
  }

  TEST_CASE("golden boolean raster decodes and re-encodes byte for byte") {
    const auto bytes = bin::read_file(kData + "/golden_4x2_bool.sras");
    const Raster r = decode_raster(bytes);
    CHECK(r.dtype() == DType::Boolean);
    CHECK(r.width() == 4);
    CHECK(r.height() == 2);
    CHECK(r.at(0, 0) == 1.0f);
    CHECK(r.is_nodata(r.at(2, 0)));
    CHECK(r.is_nodata(r.at(3, 1)));
    CHECK(encode_raster(r) == bytes);
  }

  TEST_CASE("1x1 raster encodes to a 48-byte header plus one float") {
    const Raster r = Raster::filled(GridTransform(0, 0, 1, 1, 1), DType::Float32, kFloatNodata, 5.0f);
    const auto bytes = encode_raster(r);
    REQUIRE(bytes.size() == 52);
    bin::Reader in(bytes);
    CHECK(in.tag("SRAS"));
    CHECK(in.u8() == 1);
    CHECK(in.u8() == 1);
    CHECK(in.u8() == 0);
    CHECK(in.u8() == 0);
    CHECK(in.u32() == 1);
    CHECK(in.u32() == 1);
    in.f64();
    in.f64();
    in.f64();
    CHECK(in.f64() == kFloatNodata);
    CHECK(in.f32() == 5.0f);
  }

  TEST_CASE("file round trip and deterministic bytes") {
    const auto dir = oracle::fresh_dir("raster_io");
    Rng rng(1);
    Raster r(GridTransform(3, 9, 0.5, 7, 5), DType::Float32, kFloatNodata);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<float>(rng.normal());
    r[4] = r.nodata_value();
    write_raster(r, (dir / "a.sras").string());
    write_raster(r, (dir / "b.sras").string());
    CHECK(bin::read_file((dir / "a.sras").string()) == bin::read_file((dir / "b.sras").string()));
    const Raster back = read_raster((dir / "a.sras").string());
    CHECK(back == r);
    write_raster(back, (dir / "c.sras").string());
    CHECK(bin::read_file((dir / "a.sras").string()) == bin::read_file((dir / "c.sras").string()));
  }

  TEST_CASE("malformed files") {
    auto bytes = bin::read_file(kData + "/golden_3x3.sras");
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_raster(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode_raster(bad_version), FormatError);
    auto bad_dtype = bytes;
    bad_dtype[5] = 7;
    CHECK_THROWS_AS(decode_raster(bad_dtype), FormatError);
    auto short_cells = bytes;
    short_cells.pop_back();
    CHECK_THROWS_AS(decode_raster(short_cells), TruncationError);
    auto long_cells = bytes;
    long_cells.push_back(0);
    CHECK_THROWS_AS(decode_raster(long_cells), TruncationError);
    CHECK_THROWS_AS(decode_raster(std::span(bytes).first(20)), FormatError);
  }

  TEST_CASE("mask excludes non-vegetation classes and elevations strictly above the cutoff") {
    const GridTransform g(0, 5, 1, 5, 1);
    const Raster target = Raster::filled(g, DType::Float32, kFloatNodata, 3.0f);
    const Raster lc(g, DType::UInt8, kByteNodata,
                    {landcover::kDeveloped, landcover::kTreeCover, landcover::kTreeCover, landcover::kWater,
                     landcover::kGrassShrub});
    const Raster dem(g, DType::Float32, kFloatNodata, {100.0f, 1068.0f, 1067.0f, 10.0f, 500.0f});
    const Raster out = apply_mask(target, lc, dem);
    CHECK(out.is_nodata_at(0));  // developed
    CHECK(out.is_nodata_at(1));  // 1068 m
    CHECK(out[2] == 3.0f);       // 1067 m is kept
    CHECK(out.is_nodata_at(3));  // water
    CHECK(out[4] == 3.0f);
    CHECK(apply_mask(out, lc, dem) == out);  // idempotent
  }

  TEST_CASE("vegetated low raster is left unchanged by the mask") {
    const GridTransform g(0, 3, 1, 3, 3);
    const Raster target = Raster::filled(g, DType::Float32, kFloatNodata, 1.0f);
    const Raster lc = Raster::filled(g, DType::UInt8, kByteNodata, landcover::kTreeCover);
    const Raster dem = Raster::filled(g, DType::Float32, kFloatNodata, 300.0f);
    CHECK(apply_mask(target, lc, dem) == target);
  }

  TEST_CASE("misaligned mask inputs") {
    const Raster a(GridTransform(0, 3, 1, 3, 3), DType::Float32, kFloatNodata);
    const Raster b(GridTransform(1, 3, 1, 3, 3), DType::UInt8, kByteNodata);
    CHECK_THROWS_AS(apply_mask(a, b, a), AlignmentError);
  }

  TEST_CASE("majority boundary: 451 of 900 is shrub, 450 is not") {
    CHECK(aggregate_majority(block_with(451), 30)[0] == 1.0f);
    CHECK(aggregate_majority(block_with(450), 30)[0] == 0.0f);
    CHECK(aggregate_majority(block_with(900), 30)[0] == 1.0f);
    CHECK(aggregate_majority(block_with(0), 30)[0] == 0.0f);
  }

  TEST_CASE("nodata subpixels count as non-shrub") {
    Raster r = block_with(451);
    r[0] = r.nodata_value();
    CHECK(aggregate_majority(r, 30)[0] == 0.0f);
  }

  TEST_CASE("majority matches the brute-force block counter") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
      const Raster fine = random_bool(90, 90, rng.uniform(0.3, 0.7), rng, trial % 2 ? 0.1 : 0.0);
      CHECK(aggregate_majority(fine, 30) == oracle::block_majority(fine, 30));
    }
  }

  TEST_CASE("majority is monotone in true subpixels") {
    Rng rng(5);
    Raster fine = random_bool(60, 60, 0.5, rng);
    const Raster before = aggregate_majority(fine, 30);
    for (std::size_t i = 0; i < fine.size(); i += 7) fine[i] = 1.0f;
    const Raster after = aggregate_majority(fine, 30);
    for (std::size_t i = 0; i < before.size(); ++i)
      if (before[i] == 1.0f) CHECK(after[i] == 1.0f);
  }

  TEST_CASE("majority rejects non-divisible grids") {
    Rng rng(1);
    CHECK_THROWS_AS(aggregate_majority(random_bool(31, 30, 0.5, rng), 30), DimensionError);
  }

  TEST_CASE("crop and paste") {
    Raster big(GridTransform(0, 10, 1, 10, 10), DType::Float32, kFloatNodata);
    for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<float>(i);
    const Raster piece = crop(big, 2, 3, 4, 5);
    CHECK(piece.at(0, 0) == big.at(2, 3));
    CHECK(piece.at(3, 4) == big.at(5, 7));
    Raster blank(big.transform(), DType::Float32, kFloatNodata);
    paste(blank, piece, 2, 3);
    CHECK(blank.at(5, 7) == big.at(5, 7));
    CHECK(blank.is_nodata(blank.at(0, 0)));
    CHECK_THROWS_AS(paste(blank, piece, 3, 3), AlignmentError);
  }
}
