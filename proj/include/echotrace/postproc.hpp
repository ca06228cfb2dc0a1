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

#ifndef ECHOTRACE_POSTPROC_HPP
#define ECHOTRACE_POSTPROC_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "echotrace/rfsynth.hpp"
#include "echotrace/transducer.hpp"

namespace echotrace {

struct PostprocParams {
  double tgc_db_per_cm = 1.5;
  double dynamic_range_db = 75.0;
  double reject_db = 40.0;
  int width = 0;    ///< output pixels; 0 = fit the fan
  int height = 0;
  double pixel_spacing = 0.23;  ///< mm

  void validate() const;
};

/// Amplitude gain 10^(tgc * depth_cm / 20) per radial sample.
EnvelopeFrame apply_tgc(const EnvelopeFrame& env, double tgc_db_per_cm, const std::vector<Scanline>& scanlines);

/**
 * L = 20 log10(env / max env); output clamp((L + DR) / DR, 0, 1), with samples below
 * -(DR - reject) dB set to 0. An all-zero frame stays zero.
 */
EnvelopeFrame log_compress(const EnvelopeFrame& env, const PostprocParams& params);

/// Pixel grid in the probe frame: x along the lateral direction, z along the axis, apex at (0, 0).
struct PixelGrid {
  int width = 0;
  int height = 0;
  double pixel_spacing = 0.0;
  double origin_x = 0.0;  ///< mm, left edge of column 0
  double origin_z = 0.0;  ///< mm, top edge of row 0

  double x(int col) const { return origin_x + (col + 0.5) * pixel_spacing; }
  double z(int row) const { return origin_z + (row + 0.5) * pixel_spacing; }
  /// Continuous pixel coordinates (column, row) of a probe-frame point; pixel centres are integers.
  double col_of(double x_mm) const { return (x_mm - origin_x) / pixel_spacing - 0.5; }
  double row_of(double z_mm) const { return (z_mm - origin_z) / pixel_spacing - 0.5; }
};

/// Scan-converted floating-point image.
struct ScanImage {
  PixelGrid grid;
  std::vector<double> values;
  std::vector<uint8_t> mask;  ///< 1 inside the fan

  double at(int col, int row) const { return values[static_cast<size_t>(row) * grid.width + col]; }
  bool inside(int col, int row) const { return mask[static_cast<size_t>(row) * grid.width + col] != 0; }
};

struct BModeImage {
  PixelGrid grid;
  std::vector<uint8_t> pixels;
  std::vector<uint8_t> mask;

  uint8_t at(int col, int row) const { return pixels[static_cast<size_t>(row) * grid.width + col]; }
};

/// Pixel grid used for these scanlines: fitted to the fan when width/height are 0, otherwise checked.
PixelGrid image_grid(const std::vector<Scanline>& scanlines, const PostprocParams& params);

/**
 * Bilinear resampling between the two nearest scanlines (by steering angle for fans, lateral
 * offset for linear arrays) and the two nearest radial samples; pixels outside the fan are masked.
 */
ScanImage resample(const EnvelopeFrame& frame, const std::vector<Scanline>& scanlines, const PostprocParams& params,
                   unsigned threads = 0);

/// 8-bit image from a frame normalized to [0, 1].
BModeImage scan_convert(const EnvelopeFrame& frame, const std::vector<Scanline>& scanlines,
                        const PostprocParams& params, unsigned threads = 0);

/// TGC, log compression and scan conversion.
BModeImage postprocess(const EnvelopeFrame& env, const std::vector<Scanline>& scanlines, const PostprocParams& params,
                       unsigned threads = 0);

/// Binary portable graymap (P5, maxval 255).
void write_pgm(const BModeImage& image, const std::filesystem::path& path);
BModeImage read_pgm(const std::filesystem::path& path);

}  // namespace echotrace

#endif /* ECHOTRACE_POSTPROC_HPP */
