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

#include "echotrace/transducer.hpp"

#include <stdexcept>

namespace echotrace {

void TransducerConfig::validate() const {
  if (!(center_frequency > 0.0)) throw std::invalid_argument("center frequency must be positive");
  if (!(sampling_frequency >= 4.0 * center_frequency))
    throw std::invalid_argument("sampling frequency must be at least 4x the center frequency");
  if (num_elements < 1) throw std::invalid_argument("num_elements must be at least 1");
  if (!(element_width > 0.0) || !(element_height > 0.0) || !(kerf >= 0.0))
    throw std::invalid_argument("element dimensions must be positive");
  if (geometry == ScanGeometry::Phased && !(fan_angle > 0.0 && fan_angle < kPi))
    throw std::invalid_argument("fan angle must lie in (0, pi)");
}

void ProbePose::validate() const {
  if (std::abs(orientation.norm() - 1.0) > 1e-6) throw std::invalid_argument("pose quaternion is not normalized");
}

ProbePose ProbePose::look_at(const Vec3& position, const Vec3& axis, const Vec3& lateral) {
  const Vec3 z = normalized(axis);
  Vec3 x = lateral - dot(lateral, z) * z;
  if (norm(x) < 1e-12) throw std::invalid_argument("lateral direction is parallel to the axis");
  x = normalized(x);
  const Vec3 y = cross(z, x);
  // rotation matrix with columns x, y, z to quaternion
  const double m00 = x.x, m11 = y.y, m22 = z.z;
  const double trace = m00 + m11 + m22;
  Quaternion q;
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(trace + 1.0);
    q = {0.25 * s, (y.z - z.y) / s, (z.x - x.z) / s, (x.y - y.x) / s};
  } else if (m00 > m11 && m00 > m22) {
    const double s = 2.0 * std::sqrt(1.0 + m00 - m11 - m22);
    q = {(y.z - z.y) / s, 0.25 * s, (y.x + x.y) / s, (z.x + x.z) / s};
  } else if (m11 > m22) {
    const double s = 2.0 * std::sqrt(1.0 + m11 - m00 - m22);
    q = {(z.x - x.z) / s, (y.x + x.y) / s, 0.25 * s, (z.y + y.z) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m22 - m00 - m11);
    q = {(x.y - y.x) / s, (z.x + x.z) / s, (z.y + y.z) / s, 0.25 * s};
  }
  const double n = q.norm();
  return {position, {q.w / n, q.x / n, q.y / n, q.z / n}};
}

std::vector<Scanline> make_scanlines(const TransducerConfig& cfg, const ProbePose& pose, double depth,
                                     double c_ref) {
  if (!(depth > 0.0)) throw std::invalid_argument("depth must be positive");
  if (!(c_ref > 0.0)) throw std::invalid_argument("reference sound speed must be positive");
  cfg.validate();
  pose.validate();

  const double spacing = radial_sample_spacing(cfg.sampling_frequency, c_ref);
  const int samples = static_cast<int>(std::ceil(depth / spacing - 1e-9));
  const Vec3 axis = pose.axis(), lat = pose.lateral(), elev = pose.elevation();
  const int n = cfg.num_elements;

  std::vector<Scanline> lines(static_cast<size_t>(n));
  for (int e = 0; e < n; ++e) {
    Scanline& s = lines[static_cast<size_t>(e)];
    s.index = e;
    s.num_samples = samples;
    s.sample_spacing = spacing;
    s.elevation = elev;
    if (cfg.geometry == ScanGeometry::Phased) {
      // exact zero on the middle line for odd counts
      const double t = n > 1 ? static_cast<double>(2 * e - (n - 1)) / (2.0 * (n - 1)) : 0.0;
      s.steering = t * cfg.fan_angle;
      const double c = std::cos(s.steering), sn = std::sin(s.steering);
      s.origin = pose.position;
      s.direction = c * axis + sn * lat;
      s.lateral = c * lat - sn * axis;
    } else {
      s.offset = (static_cast<double>(e) - 0.5 * (n - 1)) * (cfg.element_width + cfg.kerf);
      s.origin = pose.position + s.offset * lat;
      s.direction = axis;
      s.lateral = lat;
    }
  }
  return lines;
}

}  // namespace echotrace
