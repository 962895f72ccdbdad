// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "drope/dmri_io.hpp"
#include "drope/nifti.hpp"
#include "drope/phantom.hpp"
#include "gradcheck.hpp"

using namespace drope;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = DROPE_FIXTURE_DIR;

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "drope_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

void expect_float_fixture(const nifti::Image& img) {
  ASSERT_EQ(img.data.shape(), (nd::Shape{16, 16, 8}));
  for (std::size_t x = 0; x < 16; ++x)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t z = 0; z < 8; ++z)
        ASSERT_EQ(img.data.at({x, y, z}), 0.25 * double(x + 16 * y + 256 * z) - 3.0);
  EXPECT_EQ(img.spacing()[2], 2.5);
  EXPECT_EQ(img.header.vox_offset, 352.0f);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST(Nifti, LittleEndianFixture) {
  const auto img = nifti::read(kFixtures / "float32_le.nii");
  EXPECT_FALSE(img.header.big_endian);
  expect_float_fixture(img);
}

TEST(Nifti, BigEndianFixtureParsesIdentically) {
  const auto be = nifti::read(kFixtures / "float32_be.nii");
  EXPECT_TRUE(be.header.big_endian);
  expect_float_fixture(be);
}

TEST(Nifti, ScaledInt16InBothByteOrders) {
  for (const char* name : {"int16_scaled_le.nii", "int16_scaled_be.nii"}) {
    const auto img = nifti::read(kFixtures / name);
    ASSERT_EQ(img.data.shape(), (nd::Shape{4, 3, 2, 2}));
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t z = 0; z < 2; ++z)
          for (std::size_t t = 0; t < 2; ++t) {
            const double raw = double(x + 4 * y + 12 * z + 24 * t) - 20.0;
            ASSERT_EQ(img.data.at({x, y, z, t}), 0.5 * raw + 1.0) << name;
          }
  }
}

TEST(Nifti, DistinctErrors) {
  auto kind_of = [](const char* name) {
    try {
      nifti::read(kFixtures / name);
    } catch (const nifti::Error& e) {
      return e.kind();
    }
    return nifti::Error::Kind::io;
  };
  EXPECT_EQ(kind_of("bad_magic.nii"), nifti::Error::Kind::bad_magic);
  EXPECT_EQ(kind_of("truncated.nii"), nifti::Error::Kind::truncated);
  EXPECT_EQ(kind_of("unsupported_datatype.nii"), nifti::Error::Kind::unsupported_datatype);
  EXPECT_THROW(nifti::read(kFixtures / "missing.nii"), nifti::Error);
}

TEST(Nifti, Float64RoundTripIsBitExact) {
  Rng rng(61);
  auto x = check::random_tensor({8, 8, 4}, rng, false, -1e3, 1e3);
  x.data()[5] = -0.0;
  x.data()[6] = 1e-310;
  const auto path = temp_path("rt64.nii");
  nifti::write(x, {1.5, 1.5, 2.0}, path);
  const auto back = nifti::read(path);
  ASSERT_EQ(back.data.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_TRUE(same_bits(back.data.data()[i], x.data()[i]));
  EXPECT_EQ(back.header.dim[0], 3);
  EXPECT_EQ(back.header.vox_offset, 352.0f);
  EXPECT_EQ(back.header.magic_string(), "n+1");
  EXPECT_EQ(fs::file_size(path), 352u + 8u * x.numel());
}

TEST(Nifti, Float32RoundTripIsBitExact) {
  Rng rng(62);
  std::vector<double> v(6 * 5 * 4 * 3);
  for (double& d : v) d = static_cast<float>(rng.uniform(-5, 5));
  const auto x = nd::Tensor::from({6, 5, 4, 3}, v);
  const auto path = temp_path("rt32.nii");
  nifti::write(x, {1, 1, 1}, path, nifti::Datatype::float32);
  const auto back = nifti::read(path);
  EXPECT_EQ(back.header.dim[0], 4);
  EXPECT_EQ(back.header.datatype, 16);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_TRUE(same_bits(back.data.data()[i], v[i]));
}

TEST(Nifti, WrittenHeaderMatchesFixtureLayout) {
  // Same volume as the independent fixture; header fields must agree.
  std::vector<double> v(16 * 16 * 8);
  for (std::size_t x = 0; x < 16; ++x)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t z = 0; z < 8; ++z)
        v[(x * 16 + y) * 8 + z] = 0.25 * double(x + 16 * y + 256 * z) - 3.0;
  const auto path = temp_path("layout.nii");
  nifti::write(nd::Tensor::from({16, 16, 8}, v), {2, 2, 2.5}, path, nifti::Datatype::float32);
  std::ifstream a(path, std::ios::binary), b(kFixtures / "float32_le.nii", std::ios::binary);
  std::vector<char> da((std::istreambuf_iterator<char>(a)), {}), db((std::istreambuf_iterator<char>(b)), {});
  ASSERT_EQ(da.size(), db.size());
  // Payload bytes and the dim/datatype/bitpix/vox_offset fields are identical.
  EXPECT_TRUE(std::equal(da.begin() + 352, da.end(), db.begin() + 352));
  EXPECT_TRUE(std::equal(da.begin() + 40, da.begin() + 76, db.begin() + 40));
  EXPECT_TRUE(std::equal(da.begin() + 108, da.begin() + 112, db.begin() + 108));
}

TEST(Gradients, ReadsFixture) {
  const auto t = io::read_bvals_bvecs(kFixtures / "small.bval", kFixtures / "small.bvec");
  ASSERT_EQ(t.size(), 3u);
  EXPECT_TRUE(t[0].is_reference());
  EXPECT_EQ(t.reference_indices().size(), 1u);
  EXPECT_EQ(t[1].b, 1000.0);
  EXPECT_EQ(t[1].dir.x(), 1.0);
  EXPECT_EQ(t[2].dir.y(), 1.0);
}

TEST(Gradients, ThresholdAndNormalization) {
  const auto t = io::read_bvals_bvecs(kFixtures / "scaled.bval", kFixtures / "scaled.bvec");
  EXPECT_TRUE(t[0].is_reference());
  EXPECT_EQ(t[0].b, 0.0);
  EXPECT_EQ(t[1].dir.x(), 1.0);
  EXPECT_EQ(t[1].dir.y(), 0.0);
}

TEST(Gradients, Errors) {
  EXPECT_THROW(io::read_bvals_bvecs(kFixtures / "zero_dir.bval", kFixtures / "zero_dir.bvec"),
               std::invalid_argument);
  EXPECT_THROW(io::read_bvals_bvecs(kFixtures / "mismatch.bval", kFixtures / "small.bvec"),
               std::invalid_argument);
  EXPECT_THROW(io::read_bvals_bvecs(kFixtures / "text.bval", kFixtures / "small.bvec"),
               std::invalid_argument);
}

TEST(Gradients, WriteReadRoundTrip) {
  const auto t = phantom::acquisition_table(phantom::PhantomSpec{});
  const auto a = temp_path("rt.bval"), b = temp_path("rt.bvec");
  io::write_bvals_bvecs(t, a, b);
  const auto back = io::read_bvals_bvecs(a, b);
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(back[i].b, t[i].b);
    if (!t[i].is_reference())
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(back[i].dir.components()[c], t[i].dir.components()[c], 1e-15);
  }
}

namespace {

dspace::GradientTable b0_and(std::size_t n) {
  std::vector<dspace::DiffusionPoint> pts = {dspace::DiffusionPoint()};
  for (std::size_t i = 0; i < n; ++i)
    pts.emplace_back(1000, dspace::BVector(1.0, double(i), 0.5));
  return dspace::GradientTable(pts);
}

}  // namespace

TEST(Normalize, Examples) {
  const auto table = b0_and(3);
  std::vector<double> raw = {
      100, 100, 50, 500,   // voxel 0: equal, half, 5x
      0, 1, 2, 3,          // voxel 1: S0 = 0
  };
  const auto set = io::normalize_by_b0(nd::Tensor::from({2, 1, 1, 4}, raw), table);
  ASSERT_EQ(set.signal.shape(), (nd::Shape{2, 1, 1, 3}));
  EXPECT_EQ(set.signal.at({0, 0, 0, 0}), 1.0);
  EXPECT_EQ(set.signal.at({0, 0, 0, 1}), 0.5);
  EXPECT_EQ(set.signal.at({0, 0, 0, 2}), 2.0);
  for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(set.signal.at({1, 0, 0, n}), 0.0);
  EXPECT_EQ(set.table.size(), 3u);
}

TEST(Normalize, MeanOfReferencesAndErrors) {
  std::vector<dspace::DiffusionPoint> pts = {dspace::DiffusionPoint(), dspace::DiffusionPoint(),
                                             dspace::DiffusionPoint(1000, dspace::BVector())};
  const auto set = io::normalize_by_b0(nd::Tensor::from({1, 1, 1, 3}, {80, 120, 50}),
                                       dspace::GradientTable(pts));
  EXPECT_EQ(set.signal.item(), 0.5);
  const dspace::GradientTable no_ref({dspace::DiffusionPoint(1000, dspace::BVector())});
  EXPECT_THROW(io::normalize_by_b0(nd::Tensor::zeros({1, 1, 1, 1}), no_ref),
               std::invalid_argument);
}

TEST(Normalize, BoundedAndIdempotentWithUnitReference) {
  Rng rng(63);
  const auto table = b0_and(4);
  std::vector<double> raw(3 * 2 * 2 * 5);
  for (double& v : raw) v = rng.uniform(0, 500);
  const auto a = io::normalize_by_b0(nd::Tensor::from({3, 2, 2, 5}, raw), table);
  for (double v : a.signal.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
  }
  std::vector<double> again;
  for (std::size_t vox = 0; vox < 12; ++vox) {
    again.push_back(1.0);
    for (std::size_t n = 0; n < 4; ++n) again.push_back(a.signal.data()[vox * 4 + n]);
  }
  const auto b = io::normalize_by_b0(nd::Tensor::from({3, 2, 2, 5}, again), table);
  for (std::size_t i = 0; i < a.signal.numel(); ++i) EXPECT_EQ(a.signal.data()[i], b.signal.data()[i]);
}

TEST(Patchify, SlotCountAndMeans) {
  Rng rng(64);
  io::DWIVolumeSet vol;
  vol.signal = check::random_tensor({16, 16, 8, 2}, rng, false, 0, 2);
  vol.table = dspace::GradientTable({dspace::DiffusionPoint(1000, dspace::BVector(1, 0, 0)),
                                     dspace::DiffusionPoint(2000, dspace::BVector(0, 1, 0))});
  const io::PatchSize patch{8, 8, 4};
  layers::Linear mean_proj;
  mean_proj.weight = nd::Tensor::full({1, 256}, 1.0 / 256);
  mean_proj.bias = nd::Tensor::zeros({1});
  const auto grid = io::patchify(vol, patch, mean_proj);
  ASSERT_EQ(grid.tokens.shape(), (nd::Shape{8, 2, 1}));
  EXPECT_EQ(grid.spatial.size(), 8u);
  EXPECT_EQ(grid.spatial[5], (posenc::SpatialIndex{1, 0, 1}));
  // Slot 5 covers x in [8,16), y in [0,8), z in [4,8).
  double acc = 0;
  for (std::size_t x = 8; x < 16; ++x)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t z = 4; z < 8; ++z) acc += vol.signal.at({x, y, z, 1});
  EXPECT_NEAR(grid.tokens.at({5, 1, 0}), acc / 256, 1e-14);
}

TEST(Patchify, UnpatchifyRoundTripIsBitExact) {
  Rng rng(65);
  const auto x = check::random_tensor({8, 12, 6, 3}, rng, false);
  const io::PatchSize patch{4, 3, 2};
  const auto back = io::unpatchify(io::extract_patches(x, patch), {8, 12, 6}, patch);
  ASSERT_EQ(back.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(back.data()[i], x.data()[i]);
}

TEST(Patchify, DivisibilityEnforced) {
  EXPECT_THROW(io::extract_patches(nd::Tensor::zeros({10, 16, 8, 1}), {8, 8, 4}),
               std::invalid_argument);
}

TEST(Phantom, AttenuationExamples) {
  const auto d = phantom::diagonal(1.7e-3, 0.2e-3, 0.2e-3);
  EXPECT_NEAR(phantom::attenuation(d, 1000, dspace::BVector(1, 0, 0)), 0.18268352405273466, 1e-15);
  EXPECT_EQ(phantom::attenuation(d, 0, dspace::BVector(0, 1, 1)), 1.0);
  Rng rng(66);
  const auto iso = phantom::diagonal(1e-3, 1e-3, 1e-3);
  for (int t = 0; t < 20; ++t)
    EXPECT_NEAR(phantom::attenuation(iso, 2000, dspace::BVector(rng.normal(), rng.normal(), rng.normal())),
                std::exp(-2.0), 1e-14);
}

TEST(Phantom, AntipodalInvariance) {
  Rng rng(67);
  for (int t = 0; t < 200; ++t) {
    const auto d = phantom::axial(rng.uniform(1e-3, 2e-3), rng.uniform(1e-4, 5e-4),
                                  dspace::BVector(rng.normal(), rng.normal(), rng.normal()));
    const dspace::BVector v(rng.normal(), rng.normal(), rng.normal());
    EXPECT_EQ(phantom::attenuation(d, 1000, v), phantom::attenuation(d, 1000, v.negated()));
  }
}

TEST(Phantom, GenerateIsDeterministicAndBounded) {
  const auto spec = phantom::random_spec(5, {16, 16, 8}, {1000, 2000}, 4, 0.05);
  const auto a = phantom::generate(spec), b = phantom::generate(spec);
  ASSERT_EQ(a.volume.signal.shape(), (nd::Shape{16, 16, 8, 8}));
  for (std::size_t i = 0; i < a.volume.signal.numel(); ++i) {
    EXPECT_EQ(a.volume.signal.data()[i], b.volume.signal.data()[i]);
    EXPECT_GE(a.volume.signal.data()[i], 0.0);
    EXPECT_LE(a.volume.signal.data()[i], 2.0);
  }
  EXPECT_EQ(a.full_table.reference_indices().size(), 1u);
  for (const auto& p : a.volume.table.entries())
    EXPECT_NEAR(std::sqrt(p.dir.dot(p.dir)), 1.0, 1e-12);
}

TEST(Phantom, NoiselessVoxelsFollowTheTensorModel) {
  auto spec = phantom::random_spec(6, {16, 16, 8}, {1000}, 6, 0.0);
  const auto ph = phantom::generate(spec);
  const std::size_t nd = ph.volume.volumes();
  for (std::size_t i = 0; i < ph.tissue.size(); i += 37) {
    for (std::size_t n = 0; n < nd; ++n) {
      const auto& p = ph.volume.table[n];
      const double expect = ph.tissue[i] ? phantom::attenuation(ph.tensors[i], p.b, p.dir) : 0.0;
      EXPECT_EQ(ph.volume.signal.data()[i * nd + n], expect);
    }
  }
}

TEST(Phantom, RawSignalNormalizesBack) {
  const auto spec = phantom::random_spec(7, {8, 8, 4}, {1000, 2000}, 3, 0.02);
  const auto ph = phantom::generate(spec);
  const auto back = io::normalize_by_b0(ph.raw_signal(spec.signal_scale), ph.full_table);
  for (std::size_t i = 0; i < back.signal.numel(); ++i)
    EXPECT_NEAR(back.signal.data()[i], ph.volume.signal.data()[i], 1e-13);
}

TEST(Phantom, RejectsNonSpdTensor) {
  phantom::PhantomSpec spec;
  spec.regions.push_back({"bad", {0.5, 0.5, 0.5}, {0.3, 0.3, 0.3}, phantom::diagonal(1e-3, -1e-4, 1e-3), 1.0});
  EXPECT_THROW(phantom::generate(spec), std::invalid_argument);
}

TEST(Phantom, SpecJsonRoundTrip) {
  const auto spec = phantom::random_spec(8, {32, 32, 8}, {1000, 2000}, 15, 0.02);
  const auto back = phantom::from_json(phantom::to_json(spec));
  EXPECT_EQ(phantom::to_json(back), phantom::to_json(spec));
  const auto a = phantom::generate(spec), b = phantom::generate(back);
  for (std::size_t i = 0; i < a.volume.signal.numel(); ++i)
    ASSERT_EQ(a.volume.signal.data()[i], b.volume.signal.data()[i]);
}
