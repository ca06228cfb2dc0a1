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

#include "echotrace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json_io.hpp"

namespace echotrace {

using detail::json;

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

// Population variance.
double variance(const std::vector<double>& v, double m) {
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// TRE

std::optional<double> sample_image(const BModeImage& image, double x, double z) {
  const PixelGrid& g = image.grid;
  const double fc = g.col_of(x), fr = g.row_of(z);
  if (fc < 0.0 || fr < 0.0 || fc > g.width - 1 || fr > g.height - 1) return std::nullopt;
  const int c0 = std::min(static_cast<int>(fc), g.width - 2 < 0 ? 0 : g.width - 2);
  const int r0 = std::min(static_cast<int>(fr), g.height - 2 < 0 ? 0 : g.height - 2);
  const int c1 = std::min(c0 + 1, g.width - 1), r1 = std::min(r0 + 1, g.height - 1);
  const int nc = static_cast<int>(std::lround(fc)), nr = static_cast<int>(std::lround(fr));
  if (!image.mask.empty() && !image.mask[static_cast<size_t>(nr) * g.width + nc]) return std::nullopt;
  const double tc = fc - c0, tr = fr - r0;
  const double top = (1 - tc) * image.at(c0, r0) + tc * image.at(c1, r0);
  const double bottom = (1 - tc) * image.at(c0, r1) + tc * image.at(c1, r1);
  return (1 - tr) * top + tr * bottom;
}

std::vector<double> find_peaks(const std::vector<double>& y, double fraction) {
  std::vector<double> peaks;
  if (y.size() < 3) return peaks;
  const double top = *std::max_element(y.begin(), y.end());
  if (!(top > 0.0)) return peaks;
  const double floor = fraction * top;
  for (size_t i = 1; i + 1 < y.size(); ++i) {
    if (!(y[i] > floor && y[i] > y[i - 1] && y[i] >= y[i + 1])) continue;
    const double den = y[i - 1] - 2.0 * y[i] + y[i + 1];
    double off = den < 0.0 ? 0.5 * (y[i - 1] - y[i + 1]) / den : 0.0;
    off = std::clamp(off, -0.5, 0.5);
    peaks.push_back(static_cast<double>(i) + off);
  }
  return peaks;
}

TreResult measure_tre(const BModeImage& image, const GroundTruth& truth, const TreOptions& options) {
  if (truth.wires.empty()) throw std::invalid_argument("ground truth has no wires");
  const double step = options.step > 0.0 ? options.step : image.grid.pixel_spacing;
  TreResult out;
  std::vector<double> all;
  for (const std::string& group : truth.wire_groups()) {
    std::vector<const WireTruth*> wires;
    for (const WireTruth& w : truth.wires)
      if (w.group == group) wires.push_back(&w);

    // Line through the targets: centroid plus principal direction.
    double cx = 0, cz = 0;
    for (const WireTruth* w : wires) cx += w->x, cz += w->z;
    cx /= wires.size();
    cz /= wires.size();
    double sxx = 0, szz = 0, sxz = 0;
    for (const WireTruth* w : wires) {
      sxx += (w->x - cx) * (w->x - cx);
      szz += (w->z - cz) * (w->z - cz);
      sxz += (w->x - cx) * (w->z - cz);
    }
    double dx = 1.0, dz = 0.0;
    if (sxx + szz > 0.0) {
      const double angle = 0.5 * std::atan2(2.0 * sxz, sxx - szz);
      dx = std::cos(angle);
      dz = std::sin(angle);
    }
    if (std::abs(dz) > std::abs(dx) ? dz < 0.0 : dx < 0.0) dx = -dx, dz = -dz;

    std::vector<double> expected;
    for (const WireTruth* w : wires) expected.push_back((w->x - cx) * dx + (w->z - cz) * dz);
    const double t0 = *std::min_element(expected.begin(), expected.end()) - options.margin;
    const double t1 = *std::max_element(expected.begin(), expected.end()) + options.margin;
    const int n = static_cast<int>(std::floor((t1 - t0) / step)) + 1;
    std::vector<double> profile(n);
    for (int i = 0; i < n; ++i) {
      const double t = t0 + i * step;
      profile[i] = sample_image(image, cx + t * dx, cz + t * dz).value_or(0.0);
    }
    const std::vector<double> peaks = find_peaks(profile, options.peak_fraction);

    TreGroup summary;
    summary.group = group;
    std::vector<double> errors;
    for (size_t w = 0; w < wires.size(); ++w) {
      TreEntry e;
      e.target_id = wires[w]->id;
      e.group = group;
      e.expected = expected[w];
      double best_height = -1.0;
      for (double p : peaks) {
        const double t = t0 + p * step;
        if (std::abs(t - expected[w]) > options.gate) continue;
        const double h = profile[static_cast<size_t>(std::lround(p))];
        if (h > best_height) {
          best_height = h;
          e.detected = t;
          e.found = true;
        }
      }
      if (e.found) {
        e.error = std::abs(e.detected - e.expected);
        errors.push_back(e.error);
        all.push_back(e.error);
      } else {
        ++summary.failures;
        ++out.failures;
      }
      out.entries.push_back(e);
    }
    std::tie(summary.mean, summary.std) = mean_std(errors);
    summary.count = static_cast<int>(errors.size());
    out.groups.push_back(summary);
  }
  std::tie(out.mean, out.std) = mean_std(all);
  return out;
}

// ---------------------------------------------------------------------------------------------
// contrast

double gcnr(const std::vector<double>& inside, const std::vector<double>& outside, int bins) {
  if (inside.empty() || outside.empty()) throw std::invalid_argument("gCNR needs samples in both regions");
  if (bins < 1) throw std::invalid_argument("gCNR needs at least one bin");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* v : {&inside, &outside})
    for (double x : *v) lo = std::min(lo, x), hi = std::max(hi, x);
  if (!(hi > lo)) return 0.0;
  auto histogram = [&](const std::vector<double>& v) {
    std::vector<double> h(bins, 0.0);
    for (double x : v) h[std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins))] += 1.0;
    for (double& c : h) c /= static_cast<double>(v.size());
    return h;
  };
  const std::vector<double> a = histogram(inside), b = histogram(outside);
  double overlap = 0.0;
  for (int i = 0; i < bins; ++i) overlap += std::min(a[i], b[i]);
  return std::clamp(1.0 - overlap, 0.0, 1.0);
}

ContrastResult measure_contrast(const std::vector<double>& inside, const std::vector<double>& outside) {
  if (inside.empty() || outside.empty()) throw std::invalid_argument("contrast needs samples in both regions");
  ContrastResult r;
  r.n_in = inside.size();
  r.n_out = outside.size();
  r.mean_in = std::accumulate(inside.begin(), inside.end(), 0.0) / static_cast<double>(inside.size());
  r.mean_out = std::accumulate(outside.begin(), outside.end(), 0.0) / static_cast<double>(outside.size());
  if (!(r.mean_out > 0.0)) throw std::invalid_argument("background mean is zero");
  r.contrast_db = r.mean_in > 0.0 ? 20.0 * std::log10(r.mean_in / r.mean_out) : -std::numeric_limits<double>::infinity();
  const double spread = std::sqrt(variance(inside, r.mean_in) + variance(outside, r.mean_out));
  r.cnr = spread > 0.0 ? std::abs(r.mean_in - r.mean_out) / spread : 0.0;
  r.gcnr = gcnr(inside, outside);
  return r;
}

ContrastResult measure_contrast(const ScanImage& image, const std::vector<uint8_t>& lesion_mask,
                                const std::vector<uint8_t>& background_mask) {
  if (lesion_mask.size() != image.values.size() || background_mask.size() != image.values.size())
    throw std::invalid_argument("mask size does not match the image");
  std::vector<double> in, out;
  for (size_t i = 0; i < image.values.size(); ++i) {
    if (lesion_mask[i] && background_mask[i]) throw std::invalid_argument("lesion and background masks overlap");
    if (lesion_mask[i]) in.push_back(image.values[i]);
    if (background_mask[i]) out.push_back(image.values[i]);
  }
  if (in.size() < 100 || out.size() < 100)
    throw std::invalid_argument("lesion and background regions need at least 100 pixels each");
  return measure_contrast(in, out);
}

std::vector<uint8_t> region_mask(const PixelGrid& grid, const std::vector<uint8_t>& fan_mask,
                                 const std::function<bool(double, double)>& inside) {
  std::vector<uint8_t> m(static_cast<size_t>(grid.width) * grid.height, 0);
  for (int r = 0; r < grid.height; ++r)
    for (int c = 0; c < grid.width; ++c) {
      const size_t i = static_cast<size_t>(r) * grid.width + c;
      if ((fan_mask.empty() || fan_mask[i]) && inside(grid.x(c), grid.z(r))) m[i] = 1;
    }
  return m;
}

std::pair<std::vector<uint8_t>, std::vector<uint8_t>> lesion_masks(const ScanImage& image, const LesionTruth& lesion,
                                                                   double gap) {
  const double r_in = lesion.radius + gap;
  const double r_out = std::sqrt(r_in * r_in + lesion.radius * lesion.radius);
  auto d2 = [&](double x, double z) { return (x - lesion.x) * (x - lesion.x) + (z - lesion.z) * (z - lesion.z); };
  auto in = region_mask(image.grid, image.mask, [&](double x, double z) { return d2(x, z) <= lesion.radius * lesion.radius; });
  auto out = region_mask(image.grid, image.mask, [&](double x, double z) {
    const double d = d2(x, z);
    return d >= r_in * r_in && d <= r_out * r_out;
  });
  return {std::move(in), std::move(out)};
}

// ---------------------------------------------------------------------------------------------
// speckle

SpeckleStats speckle_stats(const std::vector<double>& samples, int bins) {
  if (samples.size() < 2) throw std::invalid_argument("speckle statistics need samples");
  if (bins < 1) throw std::invalid_argument("speckle histogram needs at least one bin");
  const auto [m, s] = mean_std(samples);
  if (!(s > 0.0)) throw std::invalid_argument("speckle region is constant");
  SpeckleStats st;
  st.count = samples.size();
  st.snr = m / s;
  double sq = 0.0, top = 0.0;
  for (double x : samples) sq += x * x, top = std::max(top, x);
  const double sigma2 = sq / (2.0 * static_cast<double>(samples.size()));
  st.fitted_scale = std::sqrt(sigma2);
  const double width = top / bins;
  std::vector<double> h(bins, 0.0);
  for (double x : samples) h[std::min(bins - 1, static_cast<int>(x / width))] += 1.0;
  double sse = 0.0;
  for (int i = 0; i < bins; ++i) {
    const double density = h[i] / (static_cast<double>(samples.size()) * width);
    const double x = (i + 0.5) * width;
    const double pdf = x / sigma2 * std::exp(-x * x / (2.0 * sigma2));
    sse += (density - pdf) * (density - pdf);
  }
  st.rayleigh_sse = sse;
  return st;
}

std::vector<double> frame_samples(const EnvelopeFrame& frame, const std::vector<Scanline>& scanlines,
                                  const std::function<bool(double, double)>& inside) {
  if (frame.num_scanlines != static_cast<int>(scanlines.size()))
    throw std::invalid_argument("frame and scanlines disagree");
  std::vector<double> out;
  for (int l = 0; l < frame.num_scanlines; ++l) {
    const Scanline& s = scanlines[l];
    for (int k = 0; k < frame.num_samples; ++k) {
      const Vec3 p = s.point_at(k * s.sample_spacing);
      if (inside(p.x, p.z)) out.push_back(frame.at(l, k));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// report

std::string report_to_json(const MetricsReport& report) {
  json j = json::object();
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  if (report.tre) {
    json t;
    t["mean_mm"] = report.tre->mean;
    t["std_mm"] = report.tre->std;
    t["failures"] = report.tre->failures;
    t["groups"] = json::array();
    for (const TreGroup& g : report.tre->groups)
      t["groups"].push_back({{"group", g.group}, {"mean_mm", g.mean}, {"std_mm", g.std}, {"count", g.count},
                             {"failures", g.failures}});
    t["targets"] = json::array();
    for (const TreEntry& e : report.tre->entries)
      t["targets"].push_back({{"id", e.target_id},
                              {"group", e.group},
                              {"found", e.found},
                              {"expected_mm", e.expected},
                              {"detected_mm", e.found ? json(e.detected) : json(nullptr)},
                              {"error_mm", e.found ? json(e.error) : json(nullptr)}});
    j["tre"] = t;
  }
  if (!report.lesions.empty()) {
    j["lesions"] = json::array();
    for (const LesionReport& l : report.lesions)
      j["lesions"].push_back({{"name", l.name},
                              {"expected_db", std::isfinite(l.expected_db) ? json(l.expected_db) : json("anechoic")},
                              {"gcnr", l.result.gcnr},
                              {"cnr", l.result.cnr},
                              {"contrast_db", finite(l.result.contrast_db)},
                              {"pixels_lesion", l.result.n_in},
                              {"pixels_background", l.result.n_out}});
  }
  if (report.speckle)
    j["speckle"] = {{"snr", report.speckle->snr},
                    {"rayleigh_sse", report.speckle->rayleigh_sse},
                    {"fitted_scale", report.speckle->fitted_scale},
                    {"samples", report.speckle->count}};
  return j.dump(2);
}

}  // namespace echotrace
