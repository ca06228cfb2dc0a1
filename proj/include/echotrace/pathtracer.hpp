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

#ifndef ECHOTRACE_PATHTRACER_HPP
#define ECHOTRACE_PATHTRACER_HPP

#include <cstdint>
#include <vector>

#include "echotrace/anatomy.hpp"
#include "echotrace/random.hpp"
#include "echotrace/transducer.hpp"

namespace echotrace {

/// Monte Carlo parameters.
struct SimParams {
  int rays_per_scanline = 1000;
  int max_collisions = 7;
  double beam_coherence_c0 = 0.1;   ///< C0, mm
  double cone_sigma = kPi / 4.0;    ///< spread of the polar angle about the continuation axis
  double cone_a = 0.0;              ///< polar angle truncation, radians
  double cone_b = kPi / 2.0;
  double cone_mean = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

/// State of one sampled path.
struct RayState {
  Vec3 position;
  Vec3 direction;
  double intensity = 1.0;     ///< accumulated attenuation along the path
  Label current_label = 0;
  int collisions = 0;
  double path_weight = 1.0;   ///< product of f cos(theta) / p(omega) over scatter events
};

/**
 * Per-scanline radial profiles produced by the tracer.
 *
 * `intensity` holds the interior transmitted intensity that gates the scatterers; `echo` holds
 * specular boundary echoes, which enter the RF line directly.
 */
struct IntensityMap {
  int num_scanlines = 0;
  int num_samples = 0;
  std::vector<double> intensity;
  std::vector<double> echo;
  std::vector<uint32_t> hits;

  IntensityMap() = default;
  IntensityMap(int scanlines, int samples)
      : num_scanlines(scanlines),
        num_samples(samples),
        intensity(static_cast<size_t>(scanlines) * samples, 0.0),
        echo(static_cast<size_t>(scanlines) * samples, 0.0),
        hits(static_cast<size_t>(scanlines) * samples, 0u) {}

  size_t index(int line, int sample) const { return static_cast<size_t>(line) * num_samples + sample; }
  double* intensity_row(int line) { return intensity.data() + index(line, 0); }
  const double* intensity_row(int line) const { return intensity.data() + index(line, 0); }
  double* echo_row(int line) { return echo.data() + index(line, 0); }
  const double* echo_row(int line) const { return echo.data() + index(line, 0); }
};

/// I0 * 10^(-alpha * l_cm * f_MHz / 10); distance in mm, frequency in Hz.
double attenuate(double intensity, double distance, double alpha, double frequency);

struct FresnelResult {
  double R = 0.0;
  double T = 1.0;
  double cos_theta2 = 1.0;
  bool total_internal = false;
};

/// Intensity reflection/transmission at an interface; the refraction angle uses the impedance ratio.
FresnelResult reflection_transmission(double z1, double z2, double cos_theta1);

/// Polar-angle distribution: normal(mean, sigma) truncated to [a, b].
class TruncatedNormal {
 public:
  TruncatedNormal(double mean, double sigma, double a, double b);
  double pdf(double x) const;
  double cdf(double x) const;
  /// Inverse CDF; u = 0 gives a, u = 1 gives b.
  double quantile(double u) const;
  double mean() const;
  double variance() const;
  double a() const { return a_; }
  double b() const { return b_; }

 private:
  double mu_, sigma_, a_, b_;
  double cdf_a_, cdf_b_, z_;
};

struct ConeSample {
  Vec3 direction;
  double pdf = 0.0;       ///< per steradian; infinite on the axis itself
  double polar = 0.0;     ///< phi, angle from the axis
  double azimuth = 0.0;   ///< theta, angle about the axis
};

/// Cone direction from explicit uniforms: u_azimuth -> theta = 2 pi u, u_polar -> phi by inverse CDF.
ConeSample cone_direction(const Vec3& axis, const SimParams& params, double u_polar, double u_azimuth);

/// Draws the azimuth then the polar angle from `rng`.
ConeSample sample_cone_direction(const Vec3& axis, const SimParams& params, RandomStream& rng);

struct Boundary {
  double z1 = 0.0;
  double z2 = 0.0;
  Vec3 normal;  ///< unit, oriented against the incident direction
};

struct ScatterOutcome {
  bool reflected = false;
  FresnelResult fresnel;
  double cos_theta1 = 1.0;
  ConeSample sample;
  Vec3 axis;  ///< mirror or refraction direction before cone sampling
};

/**
 * Stochastic reflect/refract at a boundary: reflect iff u < R, then sample a direction in the cone
 * about the mirror or refraction direction. path_weight is multiplied by f cos(theta1) / p(omega)
 * with f = R when reflecting and T otherwise.
 */
RayState scatter_event(const RayState& ray, const Boundary& boundary, const SimParams& params, RandomStream& rng,
                       ScatterOutcome* outcome = nullptr);

/// Specular echo: ((z2 - z1) / (z2 + z1))^2 I^tau cos(theta)^gamma, with cos clamped to 1e-4 when gamma < 0.
double boundary_echo(double intensity_at_p, double z1, double z2, double cos_theta, const TissueProperties& tissue);

/// Beam-coherence weight C0 / (C0 + d).
inline double beam_coherence(double c0, double d) {
  if (d <= 0.0) return 1.0;
  return c0 / (c0 + d);
}

/// Adds value * C0 / (C0 + d) to the nearest radial bin of the point's projection; d is the distance to the line.
void deposit(IntensityMap& map, const Scanline& scanline, const Vec3& point, double value, const SimParams& params);

/**
 * Path traces every scanline of a frame.
 *
 * Rays march at half the smallest voxel spacing (skipping empty tiles), locate label changes by
 * bisection, deposit echoes at interfaces with a different impedance and continue through
 * scatter_event until the collision budget is spent; afterwards they continue straight with the
 * transmitted fraction. The path up to the first scatter event is shared by all rays of a line.
 *
 * @param frequency centre frequency in Hz for attenuation.
 * @param threads worker count over scanlines (0 = hardware concurrency).
 */
IntensityMap trace_frame(const AnatomyVolume& anatomy, const std::vector<Scanline>& scanlines,
                         const SimParams& params, double frequency, unsigned threads = 0);

}  // namespace echotrace

#endif /* ECHOTRACE_PATHTRACER_HPP */
