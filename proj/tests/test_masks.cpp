#include <doctest.h>

#include <fstream>

#include "ptgan/errors.hpp"
#include "ptgan/image_io.hpp"
#include "ptgan/masks.hpp"
#include "support.hpp"

using namespace ptgan;
using ptgan::testing::TempDir;

namespace {

PersonRecord record_with_mask(const std::filesystem::path& mask) {
  PersonRecord r;
  r.image_path = "unused.png";
  r.person_id = "1";
  r.mask_path = mask.string();
  return r;
}

void write_constant_mask(const std::filesystem::path& p, int value, int size = 16) {
  Raster r{size, size, 1, std::vector<std::uint8_t>(static_cast<size_t>(size) * size, static_cast<std::uint8_t>(value))};
  write_png(p, r);
}

}  // namespace

TEST_CASE("load_mask maps 0, 128 and 255 files to weights") {
  TempDir dir("masks");
  write_constant_mask(dir / "full.png", 255);
  write_constant_mask(dir / "empty.png", 0);
  write_constant_mask(dir / "half.png", 128);

  const auto full = load_mask(record_with_mask(dir / "full.png"), 32);
  CHECK(full.height == 32);
  CHECK((full.weights.array() == 1.0f).all());
  const auto empty = load_mask(record_with_mask(dir / "empty.png"), 32);
  CHECK((empty.weights.array() == 0.0f).all());
  const auto half = load_mask(record_with_mask(dir / "half.png"), 8);
  CHECK((half.weights.array() - 128.0f / 255.0f).abs().maxCoeff() <= 1.0f / 255.0f);
}

TEST_CASE("load_mask errors") {
  TempDir dir("masks_err");
  PersonRecord no_mask;
  no_mask.image_path = "x.png";
  CHECK_THROWS_AS(load_mask(no_mask, 16), MissingMask);
  CHECK_THROWS_AS(load_mask(record_with_mask(dir / "absent.png"), 16), MissingMask);
  std::ofstream(dir / "garbage.png") << "definitely not a png";
  CHECK_THROWS_AS(load_mask(record_with_mask(dir / "garbage.png"), 16), CorruptMask);
}

TEST_CASE("mask save/load round-trip is lossless up to 1/255") {
  TempDir dir("masks_rt");
  Rng rng(4);
  const auto m = ptgan::testing::random_mask<float>(rng, 24, 24);
  write_mask_file(dir / "m.png", m);
  const auto back = load_mask(record_with_mask(dir / "m.png"), 24);
  CHECK((back.weights - m.weights).cwiseAbs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("baseline prior: center 1, corner 0, mass in range, mirror symmetric") {
  const auto m = baseline_prior_mask(256, 256);
  CHECK(m.weights(128, 128) == 1.0f);
  CHECK(m.weights(0, 0) == 0.0f);
  CHECK(m.weights(255, 255) == 0.0f);
  const double mass = m.weights.cast<double>().sum();
  CHECK(mass > 0.0);
  CHECK(mass < 256.0 * 256.0);
  CHECK(is_valid_mask(m));
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 256; ++x) CHECK_EQ(m.weights(y, x), m.weights(y, 255 - x));
  }
  // there is a soft band: some weights strictly between 0 and 1
  CHECK(((m.weights.array() > 0.0f) && (m.weights.array() < 1.0f)).any());
  CHECK(baseline_prior_mask(64, 32).weights == baseline_prior_mask(64, 32).weights);
}

TEST_CASE("mask_coverage is the mean weight") {
  CHECK(mask_coverage(ForegroundMask<float>(8, 8, 1.0f)) == 1.0);
  CHECK(mask_coverage(ForegroundMask<float>(8, 8, 0.0f)) == 0.0);
  ForegroundMask<float> half(8, 8, 0.0f);
  half.weights.topRows(4).setOnes();
  CHECK(mask_coverage(half) == 0.5);
}

TEST_CASE("mask_for dispatches and fails fast for file sources") {
  PersonRecord r;
  r.image_path = "x.png";
  CHECK_THROWS_AS(mask_for(r, MaskSource::from_files(), 16), MissingMask);
  CHECK_THROWS_AS(mask_for(r, MaskSource::exact(), 16), MissingMask);
  const auto prior = mask_for(r, MaskSource::baseline(), 16);
  CHECK(prior.weights == baseline_prior_mask(16, 16).weights);
  CHECK(mask_kind_from_string(to_string(MaskSource::Kind::baseline_prior)) == MaskSource::Kind::baseline_prior);
  CHECK_THROWS_AS(mask_kind_from_string("psp"), InvalidConfig);
}
