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

#include "echotrace/rfsynth.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "echotrace/parallel.hpp"

namespace echotrace {

double default_sigma_r(const TransducerConfig& cfg, double c_ref) {
  const double lambda = c_ref * 1e3 / cfg.center_frequency;
  return 2.0 * lambda / 2.355;
}

PsfKernel make_kernel(const TransducerConfig& cfg, double sigma_r, double c_ref) {
  cfg.validate();
  if (!(sigma_r > 0.0)) throw std::invalid_argument("sigma_r must be positive");
  if (!(c_ref > 0.0)) throw std::invalid_argument("reference sound speed must be positive");
  PsfKernel k;
  k.sigma_r = sigma_r;
  k.center_frequency = cfg.center_frequency;
  k.sampling_frequency = cfg.sampling_frequency;
  k.sample_spacing = radial_sample_spacing(cfg.sampling_frequency, c_ref);
  const int half = static_cast<int>(std::ceil(3.0 * sigma_r / k.sample_spacing));
  const double c_mm = c_ref * 1e3;
  k.in_phase.resize(2 * half + 1);
  k.quadrature.resize(2 * half + 1);
  for (int i = -half; i <= half; ++i) {
    const double r = i * k.sample_spacing;
    const double g = std::exp(-0.5 * r * r / (sigma_r * sigma_r));
    const double phase = 2.0 * kPi * cfg.center_frequency * (2.0 * r / c_mm);
    k.in_phase[i + half] = g * std::cos(phase);
    k.quadrature[i + half] = g * std::sin(phase);
  }
  return k;
}

std::vector<double> impulse_trains(const IntensityMap& map, const std::vector<Scatterer>& scatterers,
                                   const BeamProfile& profile, const std::vector<Scanline>& scanlines,
                                   const SynthOptions& options) {
  if (map.num_scanlines != static_cast<int>(scanlines.size()))
    throw std::invalid_argument("intensity map has " + std::to_string(map.num_scanlines) + " scanlines, expected " +
                                std::to_string(scanlines.size()));
  for (const Scanline& s : scanlines)
    if (s.num_samples != map.num_samples)
      throw std::invalid_argument("intensity map sample count does not match the scanlines");
  const int ns = map.num_samples;
  std::vector<double> trains(static_cast<size_t>(map.num_scanlines) * ns, 0.0);
  const ScatterIndex index(scatterers, scanlines, profile.lateral_cutoff());
  parallel_for(scanlines.size(), options.threads, [&](size_t line, unsigned) {
    double* out = trains.data() + line * ns;
    const double* intensity = map.intensity_row(static_cast<int>(line));
    const double* echo = map.echo_row(static_cast<int>(line));
    index.for_each(line, [&](size_t q, const Projection& p) {
      const double w = beam_weight(profile, p.delta_l, p.delta_e, p.radial);
      out[p.bin] += w * scatterers[q].amplitude;
    });
    for (int k = 0; k < ns; ++k) out[k] = out[k] * intensity[k] + options.echo_gain * echo[k];
  });
  return trains;
}

void convolve_line(const double* train, int n, const PsfKernel& kernel, double* in_phase, double* quadrature) {
  const int half = kernel.half_width();
  const double* ki = kernel.in_phase.data() + half;
  const double* kq = kernel.quadrature.data() + half;
  std::fill(in_phase, in_phase + n, 0.0);
  if (quadrature) std::fill(quadrature, quadrature + n, 0.0);
  for (int j = 0; j < n; ++j) {
    const double a = train[j];
    if (a == 0.0) continue;
    const int lo = std::max(-half, -j), hi = std::min(half, n - 1 - j);
    for (int t = lo; t <= hi; ++t) in_phase[j + t] += a * ki[t];
    if (quadrature)
      for (int t = lo; t <= hi; ++t) quadrature[j + t] += a * kq[t];
  }
}

RfFrame synthesize(const IntensityMap& map, const std::vector<Scatterer>& scatterers, const BeamProfile& profile,
                   const PsfKernel& kernel, const std::vector<Scanline>& scanlines, const SynthOptions& options) {
  if (kernel.in_phase.empty() || kernel.in_phase.size() % 2 == 0 || kernel.quadrature.size() != kernel.in_phase.size())
    throw std::invalid_argument("kernel must have an odd, matching number of taps");
  const std::vector<double> trains = impulse_trains(map, scatterers, profile, scanlines, options);
  RfFrame rf(map.num_scanlines, map.num_samples, kernel.sampling_frequency, true);
  const int ns = map.num_samples;
  parallel_for(scanlines.size(), options.threads, [&](size_t line, unsigned) {
    convolve_line(trains.data() + line * ns, ns, kernel, rf.in_phase.data() + line * ns,
                  rf.quadrature.data() + line * ns);
  });
  return rf;
}

std::vector<double> hilbert_quadrature(const std::vector<double>& x, int half_length) {
  if (half_length < 1) throw std::invalid_argument("Hilbert filter half length must be positive");
  std::vector<double> taps(2 * half_length + 1, 0.0);
  const int len = 2 * half_length + 1;
  for (int k = -half_length; k <= half_length; ++k) {
    if (k % 2 == 0) continue;
    const double n = k + half_length;
    const double w = 0.42 - 0.5 * std::cos(2 * kPi * n / (len - 1)) + 0.08 * std::cos(4 * kPi * n / (len - 1));
    taps[k + half_length] = w * 2.0 / (kPi * k);
  }
  const int n = static_cast<int>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    const int lo = std::max(-half_length, i - n + 1), hi = std::min(half_length, i);
    for (int k = lo; k <= hi; ++k) acc += taps[k + half_length] * x[i - k];
    y[i] = acc;
  }
  return y;
}

EnvelopeFrame envelope(const RfFrame& rf) {
  const size_t total = static_cast<size_t>(rf.num_scanlines) * rf.num_samples;
  if (rf.in_phase.size() != total) throw std::invalid_argument("RF frame size does not match its dimensions");
  EnvelopeFrame env(rf.num_scanlines, rf.num_samples);
  if (rf.quadrature.size() == total) {
    for (size_t i = 0; i < total; ++i) env.values[i] = std::hypot(rf.in_phase[i], rf.quadrature[i]);
    return env;
  }
  if (!rf.quadrature.empty()) throw std::invalid_argument("RF quadrature size does not match its dimensions");
  for (int l = 0; l < rf.num_scanlines; ++l) {
    const auto begin = rf.in_phase.begin() + static_cast<std::ptrdiff_t>(l) * rf.num_samples;
    const std::vector<double> line(begin, begin + rf.num_samples);
    const std::vector<double> q = hilbert_quadrature(line);
    for (int k = 0; k < rf.num_samples; ++k) env.at(l, k) = std::hypot(line[k], q[k]);
  }
  return env;
}

void write_rf(const RfFrame& rf, const std::filesystem::path& header_path) {
  const std::string payload = header_path.stem().string() + ".f32";
  nlohmann::json h;
  h["num_scanlines"] = rf.num_scanlines;
  h["num_samples"] = rf.num_samples;
  h["fs"] = rf.sampling_frequency;
  h["dtype"] = "f32";
  h["data"] = payload;
  std::ofstream out(header_path);
  out << h.dump(2) << "\n";
  std::vector<float> f(rf.in_phase.begin(), rf.in_phase.end());
  std::ofstream raw(header_path.parent_path() / payload, std::ios::binary);
  raw.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!out || !raw) throw std::runtime_error("failed writing RF dump " + header_path.string());
}

RfFrame read_rf(const std::filesystem::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw std::runtime_error("cannot open RF header " + header_path.string());
  try {
    nlohmann::json h;
    in >> h;
    RfFrame rf(h.at("num_scanlines").get<int>(), h.at("num_samples").get<int>(), h.at("fs").get<double>(), false);
    std::ifstream raw(header_path.parent_path() / h.at("data").get<std::string>(), std::ios::binary);
    std::vector<float> f(rf.in_phase.size());
    raw.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (raw.gcount() != static_cast<std::streamsize>(f.size() * sizeof(float)))
      throw std::runtime_error("RF payload for " + header_path.string() + " is truncated");
    rf.in_phase.assign(f.begin(), f.end());
    return rf;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("RF header " + header_path.string() + ": " + e.what());
  }
}

}  // namespace echotrace
