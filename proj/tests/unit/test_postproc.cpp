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

#include <fstream>
#include <numeric>
#include <random>

#include "echotrace/postproc.hpp"
#include "test_support.hpp"

using namespace echotrace;

namespace {

// Hand-built fan: odd number of lines symmetric about the axis, radial step half a pixel.
std::vector<Scanline> fan(int n, double half_angle, int samples, double dr) {
  std::vector<Scanline> lines(n);
  for (int i = 0; i < n; ++i) {
    Scanline& s = lines[i];
    s.index = i;
    s.steering = -half_angle + 2.0 * half_angle * i / (n - 1);
    s.direction = {std::sin(s.steering), 0.0, std::cos(s.steering)};
    s.lateral = {std::cos(s.steering), 0.0, -std::sin(s.steering)};
    s.elevation = {0, 1, 0};
    s.num_samples = samples;
    s.sample_spacing = dr;
  }
  return lines;
}

EnvelopeFrame constant_frame(int lines, int samples, double v) {
  EnvelopeFrame f(lines, samples);
  std::fill(f.values.begin(), f.values.end(), v);
  return f;
}

std::vector<Scanline> probe_lines(ScanGeometry geometry, double depth) {
  TransducerConfig cfg;
  cfg.geometry = geometry;
  return make_scanlines(cfg, ProbePose{}, depth);
}

}  // namespace

TEST_CASE("TGC gain in the amplitude domain") {
  auto lines = fan(3, 0.3, 201, 0.5);  // 0 .. 100 mm
  const EnvelopeFrame env = constant_frame(3, 201, 1.0);
  const EnvelopeFrame same = apply_tgc(env, 0.0, lines);
  CHECK(same.values == env.values);
  const EnvelopeFrame g = apply_tgc(env, 1.5, lines);
  CHECK(g.at(1, 0) == 1.0);
  CHECK(g.at(1, 200) == doctest::Approx(5.6234132519).epsilon(1e-9));
  CHECK(g.at(2, 100) == doctest::Approx(std::pow(10.0, 7.5 / 20.0)).epsilon(1e-12));
}

TEST_CASE("log compression levels and reject floor") {
  PostprocParams p;  // DR 75, reject 40
  EnvelopeFrame env(1, 4);
  env.values = {1.0, std::pow(10.0, -30.0 / 20), std::pow(10.0, -50.0 / 20), std::pow(10.0, -75.0 / 20)};
  const EnvelopeFrame out = log_compress(env, p);
  CHECK(out.values[0] == 1.0);
  CHECK(out.values[1] == doctest::Approx(45.0 / 75.0));
  CHECK(out.values[2] == 0.0);  // below -35 dB
  CHECK(out.values[3] == 0.0);

  p.reject_db = 0.0;
  const EnvelopeFrame open = log_compress(env, p);
  CHECK(open.values[2] == doctest::Approx(1.0 / 3.0));
  CHECK(open.values[3] == doctest::Approx(0.0).scale(1.0));

  const EnvelopeFrame zeros = log_compress(EnvelopeFrame(2, 8), PostprocParams{});
  for (double v : zeros.values) CHECK(v == 0.0);
}

TEST_CASE("log compression is monotone") {
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> dist(0.0, 3.0);
  EnvelopeFrame env(1, 5000);
  for (double& v : env.values) v = dist(rng);
  for (double reject : {0.0, 40.0}) {
    PostprocParams p;
    p.reject_db = reject;
    const EnvelopeFrame out = log_compress(env, p);
    std::vector<size_t> order(env.values.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return env.values[a] < env.values[b]; });
    for (size_t i = 1; i < order.size(); ++i) CHECK(out.values[order[i]] >= out.values[order[i - 1]]);
  }
}

TEST_CASE("parameter validation") {
  PostprocParams p;
  p.dynamic_range_db = 0.0;
  CHECK_THROWS(p.validate());
  p = {};
  p.reject_db = -1.0;
  CHECK_THROWS(p.validate());
  p = {};
  p.pixel_spacing = 0.0;
  CHECK_THROWS(p.validate());
}

TEST_CASE("linear scan conversion of a constant frame is constant inside the mask") {
  const auto lines = probe_lines(ScanGeometry::Linear, 60.0);
  const int ns = lines.front().num_samples;
  const EnvelopeFrame f = constant_frame(static_cast<int>(lines.size()), ns, 0.6);
  const ScanImage img = resample(f, lines, PostprocParams{});
  int inside = 0;
  for (size_t i = 0; i < img.values.size(); ++i) {
    if (!img.mask[i]) {
      CHECK(img.values[i] == 0.0);
      continue;
    }
    ++inside;
    CHECK(img.values[i] == doctest::Approx(0.6).epsilon(1e-12));
  }
  // Array aperture 127 * 0.325 mm wide, 60 mm deep.
  const double expected = (127 * 0.325 / 0.23) * (60.0 / 0.23);
  CHECK(inside == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("pixel on a scanline sample takes the sample value") {
  const double ps = 0.23;
  const auto lines = fan(5, 0.4, 801, ps / 2);
  EnvelopeFrame f(5, 801);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : f.values) v = u(rng);
  PostprocParams p;
  p.width = 321;  // odd: the middle column sits on the axis
  p.height = 400;
  const ScanImage img = resample(f, lines, p);
  const int mid = 160;
  CHECK(img.grid.x(mid) == doctest::Approx(0.0).scale(1.0));
  for (int row : {0, 17, 123, 399}) {
    REQUIRE(img.inside(mid, row));
    CHECK(img.at(mid, row) == doctest::Approx(f.at(2, 2 * row + 1)).epsilon(1e-12));
  }
}

TEST_CASE("radially symmetric frame converts to a radially symmetric image") {
  const auto lines = probe_lines(ScanGeometry::Phased, 100.0);
  const int nl = static_cast<int>(lines.size()), ns = lines.front().num_samples;
  const double dr = lines.front().sample_spacing;
  auto field = [](double r) { return 2.0 + std::cos(r / 5.0); };
  EnvelopeFrame f(nl, ns);
  for (int l = 0; l < nl; ++l)
    for (int k = 0; k < ns; ++k) f.at(l, k) = field(k * dr);
  const ScanImage img = resample(f, lines, PostprocParams{});
  const PixelGrid& g = img.grid;
  double worst = 0.0, worst_mirror = 0.0;
  int inside = 0;
  for (int row = 0; row < g.height; ++row)
    for (int col = 0; col < g.width; ++col) {
      if (!img.inside(col, row)) continue;
      ++inside;
      worst = std::max(worst, std::abs(img.at(col, row) - field(std::hypot(g.x(col), g.z(row)))));
      const int mirror = g.width - 1 - col;
      if (img.inside(mirror, row)) worst_mirror = std::max(worst_mirror, std::abs(img.at(col, row) - img.at(mirror, row)));
    }
  CHECK(inside > 100000);
  CHECK(worst < 1e-3);
  CHECK(worst_mirror < 1e-3);
}

TEST_CASE("mask matches the fan exactly") {
  const auto lines = probe_lines(ScanGeometry::Phased, 80.0);
  const double depth = (lines.front().num_samples - 1) * lines.front().sample_spacing;
  const double a = lines.front().steering, b = lines.back().steering;
  const ScanImage img = resample(EnvelopeFrame(static_cast<int>(lines.size()), lines.front().num_samples), lines,
                                 PostprocParams{});
  const PixelGrid& g = img.grid;
  for (int row = 0; row < g.height; ++row)
    for (int col = 0; col < g.width; ++col) {
      const double x = g.x(col), z = g.z(row);
      const double th = std::atan2(x, z), r = std::hypot(x, z);
      const bool in = th >= a - 1e-12 && th <= b + 1e-12 && r <= depth + 1e-9;
      CHECK(static_cast<bool>(img.inside(col, row)) == in);
    }
}

TEST_CASE("a point target lands within one pixel of its analytic position") {
  const auto lines = probe_lines(ScanGeometry::Phased, 120.0);
  const int nl = static_cast<int>(lines.size()), ns = lines.front().num_samples;
  const double dr = lines.front().sample_spacing;
  const double dth = lines[1].steering - lines[0].steering;
  for (auto [line, depth] : {std::pair{64, 40.0}, {90, 75.0}, {20, 105.0}, {71, 22.2}, {127, 118.0}}) {
    const double theta = lines[line].steering;
    EnvelopeFrame f(nl, ns);
    for (int l = 0; l < nl; ++l)
      for (int k = 0; k < ns; ++k) {
        const double da = (lines[l].steering - theta) / dth, dd = (k * dr - depth) / 0.3;
        f.at(l, k) = std::exp(-0.5 * (da * da + dd * dd));
      }
    const ScanImage img = resample(f, lines, PostprocParams{});
    size_t best = 0;
    for (size_t i = 1; i < img.values.size(); ++i)
      if (img.values[i] > img.values[best]) best = i;
    const double col = static_cast<double>(best % img.grid.width), row = static_cast<double>(best / img.grid.width);
    CHECK(std::abs(col - img.grid.col_of(depth * std::sin(theta))) <= 1.0);
    CHECK(std::abs(row - img.grid.row_of(depth * std::cos(theta))) <= 1.0);
  }
}

TEST_CASE("grid sizing") {
  const auto lines = probe_lines(ScanGeometry::Phased, 100.0);
  const PixelGrid g = image_grid(lines, PostprocParams{});
  const double depth = (lines.front().num_samples - 1) * lines.front().sample_spacing;
  CHECK(g.pixel_spacing == 0.23);
  CHECK(g.height == static_cast<int>(std::ceil(depth / 0.23)));
  CHECK(g.width * 0.23 >= 2 * depth * std::sin(lines.back().steering));
  CHECK(g.origin_x == doctest::Approx(-0.5 * g.width * 0.23));

  PostprocParams small;
  small.width = g.width - 2;
  small.height = g.height;
  CHECK_THROWS_AS(image_grid(lines, small), std::invalid_argument);
  small.width = g.width;
  small.height = g.height / 2;
  CHECK_THROWS_AS(image_grid(lines, small), std::invalid_argument);
  PostprocParams big;
  big.width = g.width + 40;
  big.height = g.height + 10;
  const PixelGrid gb = image_grid(lines, big);
  CHECK(gb.width == g.width + 40);
  CHECK(gb.x(0) < g.x(0));

  CHECK_THROWS(resample(EnvelopeFrame(3, lines.front().num_samples), lines, PostprocParams{}));
}

TEST_CASE("end to end image: zero outside the mask, 8-bit inside") {
  const auto lines = probe_lines(ScanGeometry::Phased, 60.0);
  const int nl = static_cast<int>(lines.size()), ns = lines.front().num_samples;
  EnvelopeFrame env(nl, ns);
  std::mt19937_64 rng(1);
  std::exponential_distribution<double> e(1.0);
  for (double& v : env.values) v = e(rng);
  const BModeImage img = postprocess(env, lines, PostprocParams{});
  int lit = 0;
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    if (!img.mask[i]) CHECK(img.pixels[i] == 0);
    lit += img.pixels[i] > 0;
  }
  CHECK(lit > 1000);
}

TEST_CASE("PGM round trip") {
  testing::TempDir dir;
  BModeImage img;
  img.grid.width = 7;
  img.grid.height = 3;
  img.pixels.resize(21);
  for (size_t i = 0; i < 21; ++i) img.pixels[i] = static_cast<uint8_t>(i * 12);
  write_pgm(img, dir / "a.pgm");
  std::ifstream in(dir / "a.pgm", std::ios::binary);
  std::string magic;
  in >> magic;
  CHECK(magic == "P5");
  CHECK(std::filesystem::file_size(dir / "a.pgm") == std::string("P5\n7 3\n255\n").size() + 21);
  const BModeImage back = read_pgm(dir / "a.pgm");
  CHECK(back.grid.width == 7);
  CHECK(back.grid.height == 3);
  CHECK(back.pixels == img.pixels);
  testing::write_bytes(dir / "bad.pgm", "P2\n1 1\n255\n0");
  CHECK_THROWS(read_pgm(dir / "bad.pgm"));
  testing::write_bytes(dir / "short.pgm", "P5\n4 4\n255\nab");
  CHECK_THROWS(read_pgm(dir / "short.pgm"));
}
