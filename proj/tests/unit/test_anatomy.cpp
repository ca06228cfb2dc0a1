/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The echotrace Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "echotrace/anatomy.hpp"
#include "test_support.hpp"

using namespace echotrace;
using echotrace::testing::ball_volume;
using echotrace::testing::TempDir;
using echotrace::testing::write_bytes;

namespace {

void write_header(const std::filesystem::path& p, const std::string& dims, const std::string& dtype,
                  const std::string& data) {
  write_bytes(p, "{\"dims\": " + dims + ", \"spacing_mm\": [1,1,1], \"origin_mm\": [0,0,0], \"dtype\": \"" +
                     dtype + "\", \"data\": \"" + data + "\"}");
}

// 64^3, unit spacing, radius-20 ball centred on voxel (32,32,32).
const SegmentationVolume& sphere64() {
  static const SegmentationVolume seg = ball_volume(64, {1, 1, 1}, {32.5, 32.5, 32.5}, 20.0);
  return seg;
}

}  // namespace

TEST_CASE("load_segmentation: all-zero u8 payload") {
  TempDir dir;
  write_header(dir / "z.json", "[2,2,2]", "u8", "z.raw");
  write_bytes(dir / "z.raw", std::string(8, '\0'));
  const SegmentationVolume seg = load_segmentation(dir / "z.json");
  CHECK(seg.grid.dims == std::array<int64_t, 3>{2, 2, 2});
  CHECK(seg.labels.size() == 8);
  for (Label l : seg.labels) CHECK(l == 0);
}

TEST_CASE("load_segmentation: errors") {
  TempDir dir;
  write_header(dir / "short.json", "[2,2,2]", "u8", "short.raw");
  write_bytes(dir / "short.raw", std::string(7, '\0'));
  CHECK_THROWS(load_segmentation(dir / "short.json"));

  write_header(dir / "f.json", "[2,2,2]", "f32", "f.raw");
  write_bytes(dir / "f.raw", std::string(32, '\0'));
  CHECK_THROWS(load_segmentation(dir / "f.json"));

  CHECK_THROWS(load_segmentation(dir / "missing.json"));
}

TEST_CASE("load_segmentation: sphere payload, x-fastest") {
  TempDir dir;
  const int n = 64;
  std::string bytes(n * n * n, '\0');
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double dx = i + 0.5 - 32.5, dy = j + 0.5 - 32.5, dz = k + 0.5 - 32.5;
        if (dx * dx + dy * dy + dz * dz <= 400.0) bytes[i + n * (j + n * k)] = 1;
      }
  write_header(dir / "s.json", "[64,64,64]", "u8", "s.raw");
  write_bytes(dir / "s.raw", bytes);
  const SegmentationVolume seg = load_segmentation(dir / "s.json");
  CHECK(seg.at(32, 32, 32) == 1);
  CHECK(seg.at(0, 0, 0) == 0);
  size_t mismatches = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) mismatches += seg.at(i, j, k) != static_cast<Label>(bytes[i + n * (j + n * k)]);
  CHECK(mismatches == 0);
}

TEST_CASE("segmentation save/load round trip, u16") {
  TempDir dir;
  GridGeometry g;
  g.dims = {5, 4, 3};
  g.spacing = {0.5, 0.25, 2.0};
  g.origin = {-1.0, 2.0, 3.5};
  SegmentationVolume seg = SegmentationVolume::filled(g);
  for (size_t i = 0; i < seg.labels.size(); ++i) seg.labels[i] = static_cast<Label>(i * 977 % 65536);
  save_segmentation(seg, dir / "v.json", "u16");
  const SegmentationVolume back = load_segmentation(dir / "v.json");
  CHECK(back.labels == seg.labels);
  CHECK(back.grid.spacing == g.spacing);
  CHECK(back.grid.origin == g.origin);
}

TEST_CASE("build_sparse_grid: empty and single voxel") {
  GridGeometry g;
  g.dims = {64, 64, 64};
  SegmentationVolume seg = SegmentationVolume::filled(g);
  CHECK(build_sparse_grid(seg, 8).tile_count() == 0);
  seg.at(0, 0, 0) = 5;
  const SparseLabelGrid grid = build_sparse_grid(seg, 8);
  CHECK(grid.tile_count() == 1);
  CHECK(grid.label_at_index(0, 0, 0) == 5);
  CHECK(grid.label_at_index(1, 0, 0) == 0);
  CHECK_THROWS(build_sparse_grid(seg, 1));
}

TEST_CASE("build_sparse_grid: sphere equals dense lookup everywhere") {
  const SegmentationVolume& seg = sphere64();
  const SparseLabelGrid grid = build_sparse_grid(seg, 8);
  size_t mismatches = 0;
  for (int k = 0; k < 64; ++k)
    for (int j = 0; j < 64; ++j)
      for (int i = 0; i < 64; ++i) mismatches += grid.label_at_index(i, j, k) != seg.at(i, j, k);
  CHECK(mismatches == 0);
  // sparsity: the ball fills ~14% of the volume
  CHECK(grid.tile_count() < grid.dense_tile_count());
}

TEST_CASE("property: sparse grid round trip on random blobs and tile sizes") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    std::uniform_int_distribution<int> dim(1, 70);
    GridGeometry g;
    g.dims = {dim(rng), dim(rng), dim(rng)};
    SegmentationVolume seg = SegmentationVolume::filled(g);
    std::uniform_int_distribution<int> coord(0, 69), lab(1, 9);
    for (int blob = 0; blob < 5; ++blob) {
      const Vec3 c{double(coord(rng) % g.dims[0]), double(coord(rng) % g.dims[1]), double(coord(rng) % g.dims[2])};
      const double r = 1.0 + coord(rng) % 12;
      const Label l = static_cast<Label>(lab(rng));
      for (int64_t k = 0; k < g.dims[2]; ++k)
        for (int64_t j = 0; j < g.dims[1]; ++j)
          for (int64_t i = 0; i < g.dims[0]; ++i)
            if (norm(g.voxel_center(i, j, k) - c) <= r) seg.at(i, j, k) = l;
    }
    const int ts = 2 + trial;
    const SparseLabelGrid grid = build_sparse_grid(seg, ts);
    size_t mismatches = 0;
    for (int64_t k = 0; k < g.dims[2]; ++k)
      for (int64_t j = 0; j < g.dims[1]; ++j)
        for (int64_t i = 0; i < g.dims[0]; ++i) mismatches += grid.label_at_index(i, j, k) != seg.at(i, j, k);
    CHECK(mismatches == 0);
    CHECK(grid.label_at_index(-1, 0, 0) == 0);
    CHECK(grid.label_at_index(g.dims[0], 0, 0) == 0);
  }
}

TEST_CASE("property: tile count of a ball scales with its size, below dense count") {
  for (double r : {4.0, 10.0, 20.0, 28.0}) {
    const SegmentationVolume seg = ball_volume(64, {1, 1, 1}, {32, 32, 32}, r);
    const SparseLabelGrid grid = build_sparse_grid(seg, 8);
    // tiles touched by the ball's bounding cube
    const double span = std::ceil((2 * r + 2) / 8.0) + 1;
    CHECK(grid.tile_count() <= static_cast<size_t>(span * span * span));
    CHECK(grid.tile_count() < grid.dense_tile_count());
  }
}

TEST_CASE("label_at: outside, centre and corner convention") {
  const SparseLabelGrid grid = build_sparse_grid(sphere64(), 8);
  CHECK(grid.label_at({-0.5, 10, 10}) == 0);
  CHECK(grid.label_at({100, 10, 10}) == 0);
  CHECK(grid.label_at({32.5, 32.5, 32.5}) == 1);

  GridGeometry g;
  g.dims = {8, 8, 8};
  SegmentationVolume seg = SegmentationVolume::filled(g);
  seg.at(3, 3, 3) = 7;
  const SparseLabelGrid one = build_sparse_grid(seg, 4);
  CHECK(one.label_at({3.0, 3.0, 3.0}) == 7);       // corner shared by 8 voxels floors to (3,3,3)
  CHECK(one.label_at({4.0, 4.0, 4.0}) == 0);       // floors to (4,4,4)
  CHECK(one.label_at({2.999, 3.5, 3.5}) == 0);
}

TEST_CASE("build_sdf: analytic sphere values") {
  const NarrowBandSdf sdf = build_sdf(sphere64(), 1, 3);
  // voxel (50,32,32) is 18 mm from the centre, (54,32,32) is 22 mm
  const auto inside = sdf.value_at_index(50, 32, 32);
  const auto outside = sdf.value_at_index(54, 32, 32);
  REQUIRE(inside);
  REQUIRE(outside);
  CHECK(std::abs(*inside + 2.0) <= 0.6);
  CHECK(std::abs(*outside - 2.0) <= 0.6);
  // boundary voxel
  const auto edge = sdf.value_at_index(52, 32, 32);
  REQUIRE(edge);
  CHECK(std::abs(*edge) <= 1.0);
  // 5 mm outside the surface exceeds the 3-voxel band
  CHECK_FALSE(sdf.value_at_index(57, 32, 32));
  CHECK_FALSE(sdf.value_at_index(32, 32, 32));
  CHECK_THROWS(build_sdf(sphere64(), 2, 3));
}

TEST_CASE("property: SDF band, sign and analytic accuracy on the sphere") {
  const SegmentationVolume& seg = sphere64();
  const NarrowBandSdf sdf = build_sdf(seg, 1, 3);
  size_t count = 0, sign_ok = 0, close = 0;
  double worst_band = 0.0;
  sdf.for_each([&](int64_t i, int64_t j, int64_t k, double v) {
    ++count;
    const bool inside = seg.at(i, j, k) == 1;
    sign_ok += (inside ? v < 0.0 : v > 0.0);
    worst_band = std::max(worst_band, std::abs(v));
    const double analytic = norm(seg.grid.voxel_center(i, j, k) - Vec3{32.5, 32.5, 32.5}) - 20.0;
    close += std::abs(v - analytic) <= 0.6;
  });
  CHECK(count > 1000);
  CHECK(sign_ok == count);
  CHECK(worst_band <= 3.0 + 1e-6);
  CHECK(double(close) / count >= 0.95);
}

namespace {

double eikonal_fraction(const NarrowBandSdf& sdf) {
  const Vec3& h = sdf.grid().spacing;
  size_t total = 0, good = 0;
  sdf.for_each([&](int64_t i, int64_t j, int64_t k, double) {
    const auto xp = sdf.value_at_index(i + 1, j, k), xm = sdf.value_at_index(i - 1, j, k);
    const auto yp = sdf.value_at_index(i, j + 1, k), ym = sdf.value_at_index(i, j - 1, k);
    const auto zp = sdf.value_at_index(i, j, k + 1), zm = sdf.value_at_index(i, j, k - 1);
    if (!xp || !xm || !yp || !ym || !zp || !zm) return;
    const Vec3 grad{(*xp - *xm) / (2 * h.x), (*yp - *ym) / (2 * h.y), (*zp - *zm) / (2 * h.z)};
    ++total;
    const double m = norm(grad);
    good += m >= 0.8 && m <= 1.2;
  });
  return total ? double(good) / total : 0.0;
}

}  // namespace

TEST_CASE("property: eikonal gradient magnitude on smooth shapes") {
  CHECK(eikonal_fraction(build_sdf(sphere64(), 1, 3)) >= 0.95);

  const SegmentationVolume aniso = ball_volume(48, {0.8, 1.0, 1.5}, {20, 24, 36}, 14.0);
  CHECK(eikonal_fraction(build_sdf(aniso, 1, 3)) >= 0.95);

  GridGeometry g;
  g.dims = {48, 48, 48};
  SegmentationVolume ell = SegmentationVolume::filled(g);
  for (int k = 0; k < 48; ++k)
    for (int j = 0; j < 48; ++j)
      for (int i = 0; i < 48; ++i) {
        const Vec3 p = g.voxel_center(i, j, k) - Vec3{24, 24, 24};
        if (p.x * p.x / 400 + p.y * p.y / 225 + p.z * p.z / 100 <= 1.0) ell.at(i, j, k) = 3;
      }
  CHECK(eikonal_fraction(build_sdf(ell, 3, 3)) >= 0.95);
}

TEST_CASE("anisotropic spacing: distances are in millimetres") {
  const SegmentationVolume seg = ball_volume(48, {0.8, 1.0, 1.5}, {20, 24, 36}, 14.0);
  const NarrowBandSdf sdf = build_sdf(seg, 1, 3);
  size_t count = 0, close = 0;
  sdf.for_each([&](int64_t i, int64_t j, int64_t k, double v) {
    ++count;
    const double analytic = norm(seg.grid.voxel_center(i, j, k) - Vec3{20, 24, 36}) - 14.0;
    close += std::abs(v - analytic) <= 0.6 * 1.5;
    CHECK(std::abs(v) <= 3 * 1.5 + 1e-6);
  });
  CHECK(double(close) / count >= 0.95);
}

TEST_CASE("surface_normal: sphere axis point") {
  const NarrowBandSdf sdf = build_sdf(sphere64(), 1, 3);
  const auto n = surface_normal(sdf, {32.5 + 20.0, 32.5, 32.5});
  REQUIRE(n);
  CHECK(dot(*n, Vec3{1, 0, 0}) >= 0.99);
  CHECK(norm(*n) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("property: sphere normals agree with the radial direction") {
  const NarrowBandSdf sdf = build_sdf(sphere64(), 1, 3);
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  int ok = 0, total = 0;
  for (int s = 0; s < 400; ++s) {
    const Vec3 dir = normalized(Vec3{nd(rng), nd(rng), nd(rng)});
    const auto n = surface_normal(sdf, Vec3{32.5, 32.5, 32.5} + 20.0 * dir);
    if (!n) continue;
    ++total;
    ok += dot(*n, dir) >= 0.95;
  }
  CHECK(total == 400);
  CHECK(ok >= 380);
}

TEST_CASE("surface_normal: flat slab") {
  GridGeometry g;
  g.dims = {24, 24, 24};
  SegmentationVolume seg = SegmentationVolume::filled(g);
  for (int k = 12; k < 24; ++k)
    for (int j = 0; j < 24; ++j)
      for (int i = 0; i < 24; ++i) seg.at(i, j, k) = 2;
  const NarrowBandSdf sdf = build_sdf(seg, 2, 3);
  const auto n = surface_normal(sdf, {11.3, 12.7, 12.0});
  REQUIRE(n);
  // label occupies z >= 12, so the outward normal points to -z
  CHECK(dot(*n, Vec3{0, 0, -1}) >= 0.999);
}

TEST_CASE("surface_normal: degenerate and out-of-band queries") {
  GridGeometry g;
  g.dims = {8, 8, 8};
  NarrowBandSdf flat(g, 1, 3);
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) flat.set(i, j, k, 1.0);
  CHECK_FALSE(surface_normal(flat, {4, 4, 4}));

  const NarrowBandSdf sdf = build_sdf(sphere64(), 1, 3);
  CHECK_FALSE(surface_normal(sdf, {32.5, 32.5, 32.5}));
  CHECK_FALSE(surface_normal(sdf, {-10, 0, 0}));
}

TEST_CASE("anatomy scene: validation and SVDB round trip") {
  const SegmentationVolume& seg = sphere64();
  TissueTable tissues;
  tissues[0] = echotrace::testing::water();
  CHECK_THROWS_WITH(build_anatomy(seg, tissues), doctest::Contains("label 1"));

  TissueProperties liver;
  liver.name = "liver";
  liver.z = 1.65e6;
  liver.alpha = 0.5;
  liver.mu0 = 0.3;
  liver.sigma0 = 0.1;
  liver.mu1 = 0.5;
  tissues[1] = liver;
  const AnatomyVolume scene = build_anatomy(seg, tissues, 8, 3, 2);
  CHECK_NOTHROW(scene.validate());
  CHECK(scene.sdfs.size() == 1);

  TempDir dir;
  save_scene(scene, dir / "scene.svdb");
  const AnatomyVolume back = load_scene(dir / "scene.svdb");
  CHECK(back.label_grid.tile_count() == scene.label_grid.tile_count());
  size_t mismatches = 0;
  for (int k = 0; k < 64; ++k)
    for (int j = 0; j < 64; ++j)
      for (int i = 0; i < 64; ++i) mismatches += back.label_grid.label_at_index(i, j, k) != seg.at(i, j, k);
  CHECK(mismatches == 0);
  const NarrowBandSdf& a = scene.sdfs.at(1);
  const NarrowBandSdf& b = back.sdfs.at(1);
  CHECK(a.stored_count() == b.stored_count());
  size_t diff = 0;
  a.for_each([&](int64_t i, int64_t j, int64_t k, double v) {
    const auto w = b.value_at_index(i, j, k);
    diff += !w || *w != v;
  });
  CHECK(diff == 0);
  CHECK(back.tissue(1).name == "liver");
  CHECK(back.tissue(1).z == liver.z);

  write_bytes(dir / "bad.svdb", "NOPE");
  CHECK_THROWS(load_scene(dir / "bad.svdb"));
}

TEST_CASE("tissue validation") {
  TissueProperties t = echotrace::testing::water();
  CHECK_NOTHROW(t.validate());
  t.mu1 = 1.5;
  CHECK_THROWS(t.validate());
  t = echotrace::testing::water();
  t.gamma = -2.5;
  CHECK_THROWS(t.validate());
  t = echotrace::testing::water();
  t.z = 0;
  CHECK_THROWS(t.validate());

  TempDir dir;
  write_bytes(dir / "t.json",
              R"({"0": {"name": "gel", "z": 1.5e6, "alpha_db_cm_mhz": 0.5, "c_m_s": 1540, "mu0": 0.1,
                  "sigma0": 0.0, "mu1": 0.2, "tau": 1, "gamma": 0}})");
  const TissueTable table = load_tissue_table(dir / "t.json");
  CHECK(table.at(0).name == "gel");
  CHECK(table.at(0).alpha == 0.5);
  write_bytes(dir / "bad.json", R"({"x": {}})");
  CHECK_THROWS(load_tissue_table(dir / "bad.json"));
}
