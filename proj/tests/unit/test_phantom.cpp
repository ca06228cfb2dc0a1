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
#include <set>

#include "echotrace/phantom.hpp"
#include "test_support.hpp"

using namespace echotrace;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.name = "small";
  s.extent = {40.0, 6.0, 60.0};
  s.imaging_depth = 60.0;
  return s;
}

size_t count_label(const SegmentationVolume& seg, Label label) {
  size_t n = 0;
  for (Label l : seg.labels) n += l == label;
  return n;
}

}  // namespace

TEST_CASE("lesion_tissue: identity, anechoic, +6 dB") {
  TissueProperties base;
  base.mu0 = 0.3;
  base.mu1 = 0.8;
  const TissueProperties same = lesion_tissue(base, 0.0);
  CHECK(same.mu0 == doctest::Approx(0.3));
  CHECK(same.mu1 == doctest::Approx(0.8));
  const TissueProperties dark = lesion_tissue(base, kAnechoic);
  CHECK(dark.mu0 == 0.0);
  CHECK(dark.mu1 == 0.0);
  CHECK(lesion_tissue(base, 6.0).mu0 == doctest::Approx(0.5985).epsilon(1e-4));
  CHECK(lesion_tissue(base, 10.0).mu0 == doctest::Approx(0.3 * std::pow(10.0, 0.5)).epsilon(1e-12));
  CHECK(lesion_tissue(base, 30.0).mu0 == 1.0);
  CHECK(lesion_tissue(base, -200.0).mu0 == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("sphere tissues") {
  const TissueProperties bg = PhantomSpec().background;
  const TissueProperties an = sphere_tissue(bg, SphereKind::Anechoic);
  CHECK(an.mu1 == 0.0);
  CHECK(an.z == bg.z);
  CHECK(an.alpha == 0.0);
  const TissueProperties att = sphere_tissue(bg, SphereKind::HighAttenuation);
  CHECK(att.alpha == 20.0);
  CHECK(att.z > 4 * bg.z);
  CHECK(sphere_tissue(bg, SphereKind::Reflective).z == 2.0 * bg.z);
  for (SphereKind k : {SphereKind::Anechoic, SphereKind::HighAttenuation, SphereKind::Reflective})
    CHECK(parse_sphere_kind(sphere_kind_name(k)) == k);
  CHECK_THROWS(parse_sphere_kind("glass"));
}

TEST_CASE("empty spec gives a uniform background") {
  const PhantomScene scene = build_phantom(small_spec(), 0.5);
  CHECK(count_label(scene.segmentation, 0) == scene.segmentation.labels.size());
  CHECK(scene.tissues.size() == 1);
  CHECK(scene.warnings.empty());
  const Box3 b = scene.segmentation.grid.bounds();
  CHECK(b.lo.x <= -20.0);
  CHECK(b.hi.x >= 20.0);
  CHECK(b.lo.z <= 0.0);
  CHECK(b.hi.z >= 60.0);
  CHECK_THROWS(build_phantom(small_spec(), 0.0));
}

TEST_CASE("one wire: exact truth, label present within the radius") {
  PhantomSpec s = small_spec();
  s.wires.push_back({"g", 0.0, 40.0, 0.25});
  const PhantomScene scene = build_phantom(s, 0.5);
  REQUIRE(scene.truth.wires.size() == 1);
  CHECK(scene.truth.wires[0].x == 0.0);
  CHECK(scene.truth.wires[0].z == 40.0);
  const GridGeometry& g = scene.segmentation.grid;
  const Index3 v = g.voxel_of({0.0, 0.0, 40.0});
  for (int64_t j = 0; j < g.dims[1]; ++j) CHECK(scene.segmentation.at(v[0], j, v[2]) == 1);
  CHECK(g.voxel_center(v[0], 0, v[2]).x == doctest::Approx(0.0));
  CHECK(g.voxel_center(v[0], 0, v[2]).z == doctest::Approx(40.0));
  CHECK(scene.tissues.at(1).mu0 > s.background.mu0);
}

TEST_CASE("property: wire blob centroid within half a voxel of the truth") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(-15.0, 15.0), uz(5.0, 55.0), ur(0.05, 1.5);
  for (double spacing : {0.25, 0.5, 0.7}) {
    PhantomSpec s = small_spec();
    for (int n = 0; n < 6; ++n) s.wires.push_back({"g" + std::to_string(n), ux(rng), uz(rng), ur(rng)});
    // keep wires apart so blobs can be told apart by distance
    bool ok = true;
    for (size_t a = 0; a < s.wires.size(); ++a)
      for (size_t b = a + 1; b < s.wires.size(); ++b)
        ok &= std::hypot(s.wires[a].x - s.wires[b].x, s.wires[a].z - s.wires[b].z) > 4.0;
    if (!ok) continue;
    const PhantomScene scene = build_phantom(s, spacing);
    const GridGeometry& g = scene.segmentation.grid;
    for (const WireTarget& w : s.wires) {
      double sx = 0, sz = 0;
      size_t n = 0;
      for (int64_t k = 0; k < g.dims[2]; ++k)
        for (int64_t i = 0; i < g.dims[0]; ++i) {
          if (scene.segmentation.at(i, 0, k) != 1) continue;
          const Vec3 c = g.voxel_center(i, 0, k);
          if (std::hypot(c.x - w.x, c.z - w.z) > 2.0) continue;
          sx += c.x, sz += c.z, ++n;
        }
      REQUIRE(n > 0);
      CHECK(std::abs(sx / n - w.x) <= spacing / 2 + 1e-9);
      CHECK(std::abs(sz / n - w.z) <= spacing / 2 + 1e-9);
    }
  }
}

TEST_CASE("lesion: cylinder voxels, tissue scaled, truth exact") {
  PhantomSpec s = small_spec();
  s.lesions.push_back({"hyper", 5.0, 30.0, 4.0, 15.0});
  s.lesions.push_back({"dark", -8.0, 30.0, 3.0, kAnechoic});
  const PhantomScene scene = build_phantom(s, 0.5);
  CHECK(scene.tissues.at(2).mu0 == doctest::Approx(s.background.mu0 * std::pow(10.0, 0.75)));
  CHECK(scene.tissues.at(3).mu1 == 0.0);
  const GridGeometry& g = scene.segmentation.grid;
  for (int64_t k = 0; k < g.dims[2]; ++k)
    for (int64_t j = 0; j < g.dims[1]; ++j)
      for (int64_t i = 0; i < g.dims[0]; ++i) {
        const Vec3 c = g.voxel_center(i, j, k);
        const Label l = scene.segmentation.at(i, j, k);
        CHECK((l == 2) == (std::hypot(c.x - 5.0, c.z - 30.0) <= 4.0));
        CHECK((l == 3) == (std::hypot(c.x + 8.0, c.z - 30.0) <= 3.0));
      }
  REQUIRE(scene.truth.lesions.size() == 2);
  CHECK(scene.truth.lesions[1].anechoic());
  CHECK(scene.truth.lesions[0].contains(5.0, 33.9));
  CHECK_FALSE(scene.truth.lesions[0].contains(5.0, 34.1));
}

TEST_CASE("sphere: ball voxels and plane radius") {
  PhantomSpec s = small_spec();
  s.extent.y = 8.0;
  s.spheres.push_back({"ball", {0.0, 1.0, 30.0}, 2.5, SphereKind::HighAttenuation});
  const PhantomScene scene = build_phantom(s, 0.5);
  const GridGeometry& g = scene.segmentation.grid;
  size_t n = 0;
  for (int64_t k = 0; k < g.dims[2]; ++k)
    for (int64_t j = 0; j < g.dims[1]; ++j)
      for (int64_t i = 0; i < g.dims[0]; ++i) {
        const bool in = norm(g.voxel_center(i, j, k) - Vec3{0.0, 1.0, 30.0}) <= 2.5;
        CHECK((scene.segmentation.at(i, j, k) == 2) == in);
        n += in;
      }
  CHECK(static_cast<double>(n) * 0.125 == doctest::Approx(4.0 / 3.0 * kPi * 2.5 * 2.5 * 2.5).epsilon(0.1));
  CHECK(scene.truth.spheres[0].plane_radius() == doctest::Approx(std::sqrt(2.5 * 2.5 - 1.0)));
  SphereTruth off = scene.truth.spheres[0];
  off.center.y = 3.0;
  CHECK(off.plane_radius() == 0.0);
}

TEST_CASE("overlaps: later shape wins with a warning; labels exclusive") {
  PhantomSpec s = small_spec();
  s.lesions.push_back({"first", 0.0, 30.0, 4.0, 6.0});
  s.lesions.push_back({"second", 3.0, 30.0, 4.0, kAnechoic});
  const PhantomScene scene = build_phantom(s, 0.5);
  REQUIRE(scene.warnings.size() == 1);
  CHECK(scene.warnings[0].find("second") != std::string::npos);
  CHECK(scene.warnings[0].find("first") != std::string::npos);
  const GridGeometry& g = scene.segmentation.grid;
  const Index3 mid = g.voxel_of({1.5, 0.0, 30.0});
  CHECK(scene.segmentation.at(mid[0], 0, mid[2]) == 3);
  std::set<Label> seen(scene.segmentation.labels.begin(), scene.segmentation.labels.end());
  CHECK(seen == std::set<Label>{0, 2, 3});
}

TEST_CASE("validation: shapes inside the extent, radii positive") {
  PhantomSpec s = small_spec();
  s.wires.push_back({"g", 30.0, 10.0, 0.25});
  CHECK_THROWS(build_phantom(s));
  s = small_spec();
  s.lesions.push_back({"l", 0.0, 30.0, 0.0, 6.0});
  CHECK_THROWS(build_phantom(s));
  s = small_spec();
  s.spheres.push_back({"b", {0.0, 0.0, 58.0}, 5.0, SphereKind::Anechoic});
  CHECK_THROWS(build_phantom(s));
  s = small_spec();
  s.extent.y = 0.0;
  CHECK_THROWS(build_phantom(s));
}

TEST_CASE("spec JSON round trip and errors") {
  PhantomSpec s = small_spec();
  s.z_offset = 5.0;
  s.wires.push_back({"row", -5.0, 20.0, 0.3});
  s.lesions.push_back({"dark", 5.0, 30.0, 3.0, kAnechoic});
  s.lesions.push_back({"bright", -5.0, 40.0, 3.0, 6.0});
  s.spheres.push_back({"ball", {0.0, 0.0, 50.0}, 2.0, SphereKind::Reflective});
  s.beam.focused = false;
  s.beam.sigma_l = 0.8;
  const PhantomSpec r = parse_phantom_spec(phantom_spec_to_json(s));
  CHECK(r.name == "small");
  CHECK(r.z_offset == 5.0);
  CHECK(r.extent.x == 40.0);
  REQUIRE(r.wires.size() == 1);
  CHECK(r.wires[0].radius == 0.3);
  CHECK(r.lesions[0].contrast_db == kAnechoic);
  CHECK(r.lesions[1].contrast_db == 6.0);
  CHECK(r.spheres[0].kind == SphereKind::Reflective);
  CHECK_FALSE(r.beam.focused);
  CHECK(r.beam.sigma_l == 0.8);
  CHECK(r.background.mu0 == s.background.mu0);

  try {
    parse_phantom_spec("{\n  \"name\": \"x\",\n  \"wires\": [ {\"x\": 1, } ]\n}");
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  try {
    parse_phantom_spec(R"({"wires": [{"x": 0, "z": 10}, {"x": 0}]})");
    FAIL("expected a field error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("wires[1]") != std::string::npos);
    CHECK(std::string(e.what()).find("'z'") != std::string::npos);
  }
  CHECK_THROWS(parse_phantom_spec(R"({"spheres": [{"center": [0, 0, 10], "radius": 1, "kind": "glass"}]})"));
  CHECK_THROWS(parse_phantom_spec(R"({"lesions": [{"x": 0, "z": 10, "contrast_db": "bright"}]})"));
}

TEST_CASE("ground truth file round trip") {
  testing::TempDir dir;
  PhantomSpec s = small_spec();
  s.wires.push_back({"a", -5.0, 20.0, 0.25});
  s.wires.push_back({"b", 5.0, 20.0, 0.25});
  s.lesions.push_back({"dark", 5.0, 40.0, 3.0, kAnechoic});
  s.spheres.push_back({"ball", {0.0, 0.0, 50.0}, 2.0, SphereKind::Anechoic});
  const GroundTruth t = build_phantom(s).truth;
  save_ground_truth(t, dir / "truth.json");
  const GroundTruth r = load_ground_truth(dir / "truth.json");
  CHECK(r.name == "small");
  CHECK(r.imaging_depth == 60.0);
  REQUIRE(r.wires.size() == 2);
  CHECK(r.wires[1].group == "b");
  CHECK(r.wires[1].x == 5.0);
  CHECK(r.wire_groups() == std::vector<std::string>{"a", "b"});
  CHECK(r.lesions[0].anechoic());
  CHECK(r.spheres[0].radius == 2.0);
  CHECK_THROWS(load_ground_truth(dir / "missing.json"));
}

TEST_CASE("built-in phantoms") {
  const std::vector<std::string> names = builtin_phantom_names();
  CHECK(names.size() == 7);
  for (const std::string& n : names) {
    const PhantomSpec s = builtin_phantom(n);
    CHECK_NOTHROW(s.validate());
    CHECK(s.name == n);
  }
  CHECK_THROWS(builtin_phantom("nope"));

  // 40 x 40 mm uniform region of unit scatterers at 600 per mm^2
  const PhantomSpec sp = builtin_phantom("speckle");
  CHECK(sp.extent.x == 40.0);
  CHECK(sp.extent.z == 40.0);
  CHECK(sp.scatter_density == 600.0);
  CHECK(sp.background.mu0 == 1.0);
  CHECK(sp.background.sigma0 == 0.0);
  CHECK_FALSE(sp.beam.focused);

  // each wire view: a vertical column plus near and far horizontal rows, 20 targets in all
  int total = 0;
  for (int v = 1; v <= 3; ++v) {
    const GroundTruth t = build_phantom(builtin_phantom("wires_view" + std::to_string(v))).truth;
    CHECK(t.wire_groups() == std::vector<std::string>{"vertical", "horizontal_near", "horizontal_far"});
    double near_z = 0, far_z = 0;
    for (const WireTruth& w : t.wires) {
      if (w.group == "horizontal_near") near_z = w.z;
      if (w.group == "horizontal_far") far_z = w.z;
    }
    CHECK(far_z > near_z + 30.0);
    total += static_cast<int>(t.wires.size());
  }
  CHECK(total == 60);

  const GroundTruth lesions = build_phantom(builtin_phantom("lesions")).truth;
  CHECK(lesions.lesions.size() == 5);
  CHECK(builtin_phantom("shadow").spheres[0].kind == SphereKind::HighAttenuation);
  CHECK(builtin_phantom("enhancement").spheres[0].kind == SphereKind::Anechoic);
}

TEST_CASE("phantom beam: focused table narrows at the focus") {
  const PhantomSpec s = builtin_phantom("wires_view1");
  const BeamProfile b = phantom_beam_profile(s);
  CHECK(beam_weight(b, 0.0, 0.0, s.beam.focus) == doctest::Approx(1.0).epsilon(0.01));
  // lateral 1/e^(1/2) point sits at sigma_l at the focus and further out away from it
  CHECK(beam_weight(b, s.beam.sigma_l, 0.0, s.beam.focus) / beam_weight(b, 0.0, 0.0, s.beam.focus) ==
        doctest::Approx(std::exp(-0.5)).epsilon(0.02));
  const double far = s.beam.focus + s.beam.depth_of_field;
  CHECK(beam_weight(b, s.beam.sigma_l, 0.0, far) / beam_weight(b, 0.0, 0.0, far) > std::exp(-0.5) + 0.05);
  const BeamProfile flat = phantom_beam_profile(builtin_phantom("speckle"));
  CHECK(beam_weight(flat, 1.0, 0.0, 10.0) == doctest::Approx(std::exp(-0.5)));
}
