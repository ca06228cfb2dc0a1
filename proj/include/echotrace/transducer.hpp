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

#ifndef ECHOTRACE_TRANSDUCER_HPP
#define ECHOTRACE_TRANSDUCER_HPP

#include <vector>

#include "echotrace/geometry.hpp"

namespace echotrace {

enum class ScanGeometry { Phased, Linear };

/// Virtual probe description.
struct TransducerConfig {
  double center_frequency = 3.6e6;    ///< Hz
  double sampling_frequency = 50e6;   ///< Hz
  double element_width = 0.3;         ///< mm
  double element_height = 13.0;       ///< mm
  double kerf = 0.025;                ///< mm
  int num_elements = 128;
  ScanGeometry geometry = ScanGeometry::Phased;
  double fan_angle = 75.0 * kPi / 180.0;  ///< radians, phased only

  void validate() const;
};

/// Probe placement. In the probe frame +z is the beam axis, +x lateral and +y elevation.
struct ProbePose {
  Vec3 position;
  Quaternion orientation;

  Vec3 axis() const { return orientation.rotate({0, 0, 1}); }
  Vec3 lateral() const { return orientation.rotate({1, 0, 0}); }
  Vec3 elevation() const { return orientation.rotate({0, 1, 0}); }

  void validate() const;

  /// Pose with the beam axis along `axis` and the lateral direction as close as possible to `lateral`.
  static ProbePose look_at(const Vec3& position, const Vec3& axis, const Vec3& lateral);
};

struct Scanline {
  int index = 0;
  Vec3 origin;
  Vec3 direction;
  Vec3 lateral;     ///< unit, perpendicular to direction, in the imaging plane
  Vec3 elevation;   ///< unit, normal to the imaging plane
  int num_samples = 0;
  double sample_spacing = 0.0;  ///< mm between radial samples
  double steering = 0.0;        ///< radians from the probe axis (phased)
  double offset = 0.0;          ///< lateral offset of the origin in mm (linear)

  double depth() const { return sample_spacing * num_samples; }
  Vec3 point_at(double r) const { return origin + r * direction; }
};

/// Radial sample spacing for a round trip at speed c_ref (m/s): c / (2 fs), in mm.
inline double radial_sample_spacing(double sampling_frequency, double c_ref) {
  return c_ref * 1e3 / (2.0 * sampling_frequency);
}

/**
 * Scanlines of one frame.
 *
 * Phased: num_elements lines from a common apex at the probe position, evenly spanning the fan.
 * Linear: parallel lines along the probe axis at a pitch of element_width + kerf.
 *
 * @param depth imaging depth in mm; num_samples = ceil(depth / sample_spacing).
 * @param c_ref background speed of sound in m/s.
 */
std::vector<Scanline> make_scanlines(const TransducerConfig& cfg, const ProbePose& pose, double depth,
                                     double c_ref = 1540.0);

}  // namespace echotrace

#endif /* ECHOTRACE_TRANSDUCER_HPP */
