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

#ifndef ECHOTRACE_METRICS_HPP
#define ECHOTRACE_METRICS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "echotrace/phantom.hpp"
#include "echotrace/postproc.hpp"

namespace echotrace {

// ---------------------------------------------------------------------------------------------
// target registration error

struct TreOptions {
  double gate = 2.0;           ///< mm, peak to expected position
  double step = 0.0;           ///< profile sampling step in mm; 0 = one pixel
  double margin = 5.0;         ///< profile extends this far beyond the outer targets
  double peak_fraction = 0.5;  ///< peaks must exceed this fraction of the profile maximum
};

struct TreEntry {
  int target_id = 0;
  std::string group;
  double expected = 0.0;  ///< position along the group's line, mm
  double detected = 0.0;
  double error = 0.0;     ///< |detected - expected|, mm
  bool found = false;
};

struct TreGroup {
  std::string group;
  double mean = 0.0;
  double std = 0.0;
  int count = 0;
  int failures = 0;
};

struct TreResult {
  std::vector<TreEntry> entries;
  std::vector<TreGroup> groups;
  double mean = 0.0;
  double std = 0.0;
  int failures = 0;
};

/// Bilinear sample of an image at a probe-frame point; nullopt outside the grid or fan mask.
std::optional<double> sample_image(const BModeImage& image, double x, double z);

/// Local maxima above fraction * max, refined by a 3-point parabola. Returns fractional indices.
std::vector<double> find_peaks(const std::vector<double>& profile, double fraction);

/**
 * Samples each wire group along its line (fitted through the group's expected positions), finds
 * peaks and pairs every expected target with the strongest peak inside the gate. Targets with no
 * peak are flagged and left out of the means.
 */
TreResult measure_tre(const BModeImage& image, const GroundTruth& truth, const TreOptions& options = {});

// ---------------------------------------------------------------------------------------------
// lesion contrast

struct ContrastResult {
  double gcnr = 0.0;
  double cnr = 0.0;
  double contrast_db = 0.0;
  double mean_in = 0.0;
  double mean_out = 0.0;
  size_t n_in = 0;
  size_t n_out = 0;
};

/// 1 - sum of min(h_in, h_out) over common histograms spanning the pooled range.
double gcnr(const std::vector<double>& inside, const std::vector<double>& outside, int bins = 256);

/// contrast = 20 log10(mean_in / mean_out); CNR = |mean_in - mean_out| / sqrt(var_in + var_out).
ContrastResult measure_contrast(const std::vector<double>& inside, const std::vector<double>& outside);

/// Samples of `image` where the masks are set. Masks must be disjoint with at least 100 pixels each.
ContrastResult measure_contrast(const ScanImage& image, const std::vector<uint8_t>& lesion_mask,
                                const std::vector<uint8_t>& background_mask);

/// Pixels of the fan whose centres satisfy inside(x, z).
std::vector<uint8_t> region_mask(const PixelGrid& grid, const std::vector<uint8_t>& fan_mask,
                                 const std::function<bool(double, double)>& inside);

/**
 * Lesion disk and its background: a concentric ring starting `gap` mm outside the lesion with the
 * same area as the lesion.
 */
std::pair<std::vector<uint8_t>, std::vector<uint8_t>> lesion_masks(const ScanImage& image, const LesionTruth& lesion,
                                                                   double gap = 2.0);

// ---------------------------------------------------------------------------------------------
// speckle

struct SpeckleStats {
  double snr = 0.0;
  double rayleigh_sse = 0.0;
  double fitted_scale = 0.0;
  size_t count = 0;
};

/**
 * SNR = mean / std; Rayleigh scale by maximum likelihood (sigma^2 = mean(x^2) / 2); SSE between the
 * density-normalized histogram over [0, max] and the fitted pdf at bin centres, in the samples' units.
 */
SpeckleStats speckle_stats(const std::vector<double>& samples, int bins = 100);

/// Envelope samples whose positions fall inside inside(x, z) (world x and z).
std::vector<double> frame_samples(const EnvelopeFrame& frame, const std::vector<Scanline>& scanlines,
                                  const std::function<bool(double, double)>& inside);

// ---------------------------------------------------------------------------------------------
// report

struct LesionReport {
  std::string name;
  double expected_db = 0.0;
  ContrastResult result;
};

struct MetricsReport {
  std::optional<TreResult> tre;
  std::vector<LesionReport> lesions;
  std::optional<SpeckleStats> speckle;
};

std::string report_to_json(const MetricsReport& report);

}  // namespace echotrace

#endif /* ECHOTRACE_METRICS_HPP */
