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

#ifndef ECHOTRACE_RFSYNTH_HPP
#define ECHOTRACE_RFSYNTH_HPP

#include <filesystem>
#include <vector>

#include "echotrace/pathtracer.hpp"
#include "echotrace/scatterfield.hpp"
#include "echotrace/transducer.hpp"

namespace echotrace {

/// Axial pulse: Gaussian envelope times cos (in-phase) and sin (quadrature) of the carrier.
struct PsfKernel {
  std::vector<double> in_phase;
  std::vector<double> quadrature;
  double sigma_r = 0.0;             ///< mm
  double center_frequency = 0.0;    ///< Hz
  double sampling_frequency = 0.0;  ///< Hz
  double sample_spacing = 0.0;      ///< mm

  int half_width() const { return static_cast<int>(in_phase.size() / 2); }
};

/// Pulse width giving a FWHM of two wavelengths: 2 lambda / 2.355, in mm.
double default_sigma_r(const TransducerConfig& cfg, double c_ref = 1540.0);

/**
 * Samples the pulse on the radial grid c_ref / (2 fs). The carrier phase at radial offset r is
 * 2 pi f (2 r / c_ref), the round-trip time. Taps cover +-3 sigma_r.
 */
PsfKernel make_kernel(const TransducerConfig& cfg, double sigma_r, double c_ref = 1540.0);

struct RfFrame {
  int num_scanlines = 0;
  int num_samples = 0;
  double sampling_frequency = 0.0;
  std::vector<double> in_phase;    ///< the RF signal
  std::vector<double> quadrature;  ///< same train convolved with the quadrature taps; may be empty

  RfFrame() = default;
  RfFrame(int lines, int samples, double fs, bool with_quadrature = true)
      : num_scanlines(lines),
        num_samples(samples),
        sampling_frequency(fs),
        in_phase(static_cast<size_t>(lines) * samples, 0.0),
        quadrature(with_quadrature ? static_cast<size_t>(lines) * samples : 0, 0.0) {}
};

struct EnvelopeFrame {
  int num_scanlines = 0;
  int num_samples = 0;
  std::vector<double> values;

  EnvelopeFrame() = default;
  EnvelopeFrame(int lines, int samples)
      : num_scanlines(lines), num_samples(samples), values(static_cast<size_t>(lines) * samples, 0.0) {}
  double& at(int line, int sample) { return values[static_cast<size_t>(line) * num_samples + sample]; }
  double at(int line, int sample) const { return values[static_cast<size_t>(line) * num_samples + sample]; }
  const double* row(int line) const { return values.data() + static_cast<size_t>(line) * num_samples; }
  double* row(int line) { return values.data() + static_cast<size_t>(line) * num_samples; }
};

struct SynthOptions {
  /// Scale applied to the tracer's boundary-echo channel before it joins the impulse train.
  double echo_gain = 100.0;
  unsigned threads = 0;
};

/**
 * Per-scanline impulse trains s[k] = I[k] * sum over scatterers projecting to bin k of w_q a_q,
 * plus echo_gain * echo[k].
 */
std::vector<double> impulse_trains(const IntensityMap& map, const std::vector<Scatterer>& scatterers,
                                   const BeamProfile& profile, const std::vector<Scanline>& scanlines,
                                   const SynthOptions& options = {});

/// Convolves one train with the in-phase and quadrature taps (same length output, centred kernel).
void convolve_line(const double* train, int n, const PsfKernel& kernel, double* in_phase, double* quadrature);

/// Impulse trains followed by one axial convolution per scanline.
RfFrame synthesize(const IntensityMap& map, const std::vector<Scatterer>& scatterers, const BeamProfile& profile,
                   const PsfKernel& kernel, const std::vector<Scanline>& scanlines, const SynthOptions& options = {});

/**
 * |in_phase + i quadrature|. Frames without a quadrature channel get one from a windowed FIR
 * Hilbert transformer.
 */
EnvelopeFrame envelope(const RfFrame& rf);

/// Quadrature of a real line by a Blackman-windowed Hilbert FIR with 2 * half_length + 1 taps.
std::vector<double> hilbert_quadrature(const std::vector<double>& x, int half_length = 128);

/// Raw RF dump: JSON header {num_scanlines, num_samples, fs, dtype, data} plus float32 in-phase payload.
void write_rf(const RfFrame& rf, const std::filesystem::path& header_path);
RfFrame read_rf(const std::filesystem::path& header_path);

}  // namespace echotrace

#endif /* ECHOTRACE_RFSYNTH_HPP */
