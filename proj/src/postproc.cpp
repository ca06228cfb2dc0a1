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

#include "echotrace/postproc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "echotrace/parallel.hpp"

namespace echotrace {

void PostprocParams::validate() const {
  if (!(dynamic_range_db > 0.0)) throw std::invalid_argument("dynamic_range_db must be positive");
  if (!(reject_db >= 0.0)) throw std::invalid_argument("reject_db must be non-negative");
  if (!(pixel_spacing > 0.0)) throw std::invalid_argument("pixel_spacing must be positive");
  if (!std::isfinite(tgc_db_per_cm)) throw std::invalid_argument("tgc_db_per_cm must be finite");
  if (width < 0 || height < 0) throw std::invalid_argument("output pixel counts must be non-negative");
}

namespace {

void check_frame(const EnvelopeFrame& env, const std::vector<Scanline>& scanlines) {
  if (env.num_scanlines != static_cast<int>(scanlines.size()))
    throw std::invalid_argument("frame has " + std::to_string(env.num_scanlines) + " scanlines, expected " +
                                std::to_string(scanlines.size()));
  if (env.values.size() != static_cast<size_t>(env.num_scanlines) * env.num_samples)
    throw std::invalid_argument("frame size does not match its dimensions");
  for (const Scanline& s : scanlines)
    if (s.num_samples != env.num_samples) throw std::invalid_argument("scanline sample count does not match the frame");
}

// Fans steer their lines; linear arrays shift them.
bool is_fan(const std::vector<Scanline>& lines) {
  return lines.size() > 1 && lines.front().steering != lines.back().steering;
}

// Fractional position of v in a strictly increasing sequence; negative when outside.
double fractional_index(const std::vector<double>& keys, double v) {
  const double tol = 1e-12 * std::max(1.0, std::abs(keys.back() - keys.front()));
  if (v < keys.front() - tol || v > keys.back() + tol) return -1.0;
  if (v <= keys.front()) return 0.0;
  if (v >= keys.back()) return static_cast<double>(keys.size() - 1);
  const size_t hi = static_cast<size_t>(std::upper_bound(keys.begin(), keys.end(), v) - keys.begin());
  const size_t lo = hi - 1;
  return lo + (v - keys[lo]) / (keys[hi] - keys[lo]);
}

}  // namespace

EnvelopeFrame apply_tgc(const EnvelopeFrame& env, double tgc_db_per_cm, const std::vector<Scanline>& scanlines) {
  check_frame(env, scanlines);
  EnvelopeFrame out = env;
  if (tgc_db_per_cm == 0.0) return out;
  for (int l = 0; l < env.num_scanlines; ++l) {
    const double dr = scanlines[l].sample_spacing;
    double* row = out.row(l);
    for (int k = 0; k < env.num_samples; ++k) row[k] *= std::pow(10.0, tgc_db_per_cm * (k * dr / 10.0) / 20.0);
  }
  return out;
}

EnvelopeFrame log_compress(const EnvelopeFrame& env, const PostprocParams& params) {
  params.validate();
  EnvelopeFrame out(env.num_scanlines, env.num_samples);
  double peak = 0.0;
  for (double v : env.values) peak = std::max(peak, v);
  if (!(peak > 0.0)) return out;
  const double dr = params.dynamic_range_db;
  const double floor_db = -(dr - params.reject_db);
  for (size_t i = 0; i < env.values.size(); ++i) {
    const double v = env.values[i];
    if (!(v > 0.0)) continue;
    const double level = 20.0 * std::log10(v / peak);
    if (level < floor_db) continue;
    out.values[i] = std::clamp((level + dr) / dr, 0.0, 1.0);
  }
  return out;
}

PixelGrid image_grid(const std::vector<Scanline>& scanlines, const PostprocParams& params) {
  params.validate();
  if (scanlines.size() < 2) throw std::invalid_argument("scan conversion needs at least two scanlines");
  const Scanline& first = scanlines.front();
  const double depth = (first.num_samples - 1) * first.sample_spacing;
  double x_lo, x_hi;
  if (is_fan(scanlines)) {
    const double a = first.steering, b = scanlines.back().steering;
    x_lo = depth * std::min(0.0, std::sin(std::max(a, -kPi / 2)));
    x_hi = depth * std::max(0.0, std::sin(std::min(b, kPi / 2)));
  } else {
    x_lo = first.offset;
    x_hi = scanlines.back().offset;
  }
  // Grid centred on the probe axis laterally, top edge at the apex.
  const double half = std::max(-x_lo, x_hi);
  PixelGrid g;
  g.pixel_spacing = params.pixel_spacing;
  const int need_w = static_cast<int>(std::ceil(2.0 * half / g.pixel_spacing - 1e-9));
  const int need_h = static_cast<int>(std::ceil(depth / g.pixel_spacing - 1e-9));
  g.width = params.width > 0 ? params.width : std::max(1, need_w);
  g.height = params.height > 0 ? params.height : std::max(1, need_h);
  if (g.width < need_w || g.height < need_h)
    throw std::invalid_argument("pixel grid " + std::to_string(g.width) + "x" + std::to_string(g.height) +
                                " is too small for the scan area (needs " + std::to_string(need_w) + "x" +
                                std::to_string(need_h) + ")");
  g.origin_x = -0.5 * g.width * g.pixel_spacing;
  g.origin_z = 0.0;
  return g;
}

ScanImage resample(const EnvelopeFrame& frame, const std::vector<Scanline>& scanlines, const PostprocParams& params,
                   unsigned threads) {
  check_frame(frame, scanlines);
  ScanImage img;
  img.grid = image_grid(scanlines, params);
  const PixelGrid& g = img.grid;
  img.values.assign(static_cast<size_t>(g.width) * g.height, 0.0);
  img.mask.assign(img.values.size(), 0);

  const bool fan = is_fan(scanlines);
  std::vector<double> keys;
  keys.reserve(scanlines.size());
  for (const Scanline& s : scanlines) keys.push_back(fan ? s.steering : s.offset);
  for (size_t i = 1; i < keys.size(); ++i)
    if (!(keys[i] > keys[i - 1])) throw std::invalid_argument("scanlines must be ordered by steering or offset");

  const int ns = frame.num_samples;
  const double dr = scanlines.front().sample_spacing;
  const int nl = static_cast<int>(scanlines.size());
  parallel_for(static_cast<size_t>(g.height), threads, [&](size_t row, unsigned) {
    const double z = g.z(static_cast<int>(row));
    for (int col = 0; col < g.width; ++col) {
      const double x = g.x(col);
      double u, radius;
      if (fan) {
        u = fractional_index(keys, std::atan2(x, z));
        radius = std::hypot(x, z);
      } else {
        u = fractional_index(keys, x);
        radius = z;
      }
      const double v = radius / dr;
      if (u < 0.0 || v < 0.0 || v > ns - 1 + 1e-9) continue;
      const int l0 = std::min(static_cast<int>(u), nl - 2);
      const int k0 = std::min(static_cast<int>(v), ns - 2);
      const double fu = std::clamp(u - l0, 0.0, 1.0), fv = std::clamp(v - k0, 0.0, 1.0);
      const double* a = frame.row(l0);
      const double* b = frame.row(l0 + 1);
      const double top = (1 - fv) * a[k0] + fv * a[k0 + 1];
      const double bottom = (1 - fv) * b[k0] + fv * b[k0 + 1];
      const size_t idx = row * g.width + col;
      img.values[idx] = (1 - fu) * top + fu * bottom;
      img.mask[idx] = 1;
    }
  });
  return img;
}

BModeImage scan_convert(const EnvelopeFrame& frame, const std::vector<Scanline>& scanlines,
                        const PostprocParams& params, unsigned threads) {
  if (frame.num_samples < 2) throw std::invalid_argument("scan conversion needs at least two radial samples");
  const ScanImage img = resample(frame, scanlines, params, threads);
  BModeImage out;
  out.grid = img.grid;
  out.mask = img.mask;
  out.pixels.assign(img.values.size(), 0);
  for (size_t i = 0; i < img.values.size(); ++i)
    if (img.mask[i]) out.pixels[i] = static_cast<uint8_t>(std::lround(255.0 * std::clamp(img.values[i], 0.0, 1.0)));
  return out;
}

BModeImage postprocess(const EnvelopeFrame& env, const std::vector<Scanline>& scanlines, const PostprocParams& params,
                       unsigned threads) {
  params.validate();
  const EnvelopeFrame compressed = log_compress(apply_tgc(env, params.tgc_db_per_cm, scanlines), params);
  return scan_convert(compressed, scanlines, params, threads);
}

void write_pgm(const BModeImage& image, const std::filesystem::path& path) {
  const PixelGrid& g = image.grid;
  if (image.pixels.size() != static_cast<size_t>(g.width) * g.height)
    throw std::invalid_argument("image size does not match its dimensions");
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << g.width << " " << g.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

BModeImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t += c;
    }
    return t;
  };
  if (token() != "P5") throw std::runtime_error(path.string() + " is not a binary PGM");
  BModeImage img;
  try {
    img.grid.width = std::stoi(token());
    img.grid.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw std::runtime_error("unsupported PGM maxval");
  } catch (const std::logic_error&) {
    throw std::runtime_error(path.string() + " has a malformed PGM header");
  }
  img.pixels.resize(static_cast<size_t>(img.grid.width) * img.grid.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw std::runtime_error(path.string() + " is truncated");
  img.mask.assign(img.pixels.size(), 1);
  return img;
}

}  // namespace echotrace
