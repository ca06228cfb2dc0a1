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

#ifndef ECHOTRACE_SCATTERFIELD_HPP
#define ECHOTRACE_SCATTERFIELD_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "echotrace/anatomy.hpp"
#include "echotrace/transducer.hpp"

namespace echotrace {

struct Scatterer {
  Vec3 position;
  double amplitude = 0.0;
};

/// Gaussian lateral/elevational beam, depth independent.
struct AnalyticBeam {
  double sigma_l = 1.0;  ///< mm
  double sigma_e = 1.0;  ///< mm
};

/// Gain sampled on a (depth, lateral, elevation) grid; elevation index fastest.
struct TabulatedBeam {
  std::vector<double> radial_depths;
  std::vector<double> lateral_offsets;
  std::vector<double> elevational_offsets;
  std::vector<double> gains;

  size_t index(size_t d, size_t l, size_t e) const {
    return (d * lateral_offsets.size() + l) * elevational_offsets.size() + e;
  }
  /// Checks axes and payload size, then scales the gains to a peak of 1.
  void normalize();
  void validate() const;
  /// Trilinear interpolation, clamped to the edge values outside the grid.
  double sample(double depth, double delta_l, double delta_e) const;
};

class BeamProfile {
 public:
  BeamProfile() = default;
  BeamProfile(AnalyticBeam beam);
  BeamProfile(TabulatedBeam beam);

  bool analytic() const { return std::holds_alternative<AnalyticBeam>(beam_); }
  const AnalyticBeam& analytic_beam() const { return std::get<AnalyticBeam>(beam_); }
  const TabulatedBeam& table() const { return std::get<TabulatedBeam>(beam_); }

  /// Scatterers farther than this from a scanline are ignored: 3 sigma_L or the table's lateral extent.
  double lateral_cutoff() const;
  /// Half thickness of the populated slab in 2-D mode: 3 sigma_E or the table's elevational extent.
  double elevational_half_extent() const;

 private:
  std::variant<AnalyticBeam, TabulatedBeam> beam_{AnalyticBeam{}};
};

/// Lateral/elevational weight w_q; the analytic beam ignores depth.
double beam_weight(const BeamProfile& profile, double delta_l, double delta_e, double depth);

/**
 * Beam table file: JSON header with radial_depths_mm, lateral_offsets_mm, elevational_offsets_mm,
 * dtype "f32" and data (payload path relative to the header); payload is little-endian float32 in
 * depth, lateral, elevation order with elevation fastest.
 */
TabulatedBeam load_beam_table(const std::filesystem::path& header_path);
void save_beam_table(const TabulatedBeam& table, const std::filesystem::path& header_path);

/**
 * Gaussian beam around a focus: with s = sqrt(1 + ((d - focus) / depth_of_field)^2) the cross-section
 * widths are sigma * s and the on-axis gain is 1 / s. Peak 1.
 */
TabulatedBeam make_focused_beam_table(double sigma_l, double sigma_e, double focus, double depth_of_field,
                                      const std::vector<double>& depths, const std::vector<double>& laterals,
                                      const std::vector<double>& elevationals);

/// In-plane rectangle, extruded along its normal; used for 2-D B-mode slices.
struct ScatterSlab {
  Vec3 corner;       ///< world position of (u, v) = (0, 0) on the mid-plane
  Vec3 axis_u;       ///< unit
  Vec3 axis_v;       ///< unit, perpendicular to axis_u
  double extent_u = 0.0;
  double extent_v = 0.0;
  double thickness = 0.0;  ///< full slab thickness along axis_u x axis_v

  /// Optional sector restriction: cells whose centre lies outside the fan (plus margin) are skipped.
  bool sector = false;
  double apex_u = 0.0;
  double apex_v = 0.0;
  double sector_half_angle = 0.0;  ///< about +axis_v
  double sector_radius = 0.0;
  double sector_margin = 0.0;
};

/// Number of candidate cells per axis for the areal density; the product equals round(density * area)
/// whenever that count has a factorisation with near-square cells.
std::pair<int64_t, int64_t> slab_cell_counts(double extent_u, double extent_v, double density);

/**
 * Jittered-grid scatterers over an axis-aligned box (density per mm^3). One candidate per cell;
 * it is kept iff a uniform from the cell's counter stream is below mu1 of the tissue at its
 * position, with amplitude max(0, mu0 + sigma0 * N). Candidates outside the volume are dropped.
 */
std::vector<Scatterer> generate_scatterers(const AnatomyVolume& anatomy, const Box3& region, double density,
                                           uint64_t seed, unsigned threads = 0);

/// Same for a slab (density per mm^2 of slab area, uniform position across the thickness).
std::vector<Scatterer> generate_scatterers(const AnatomyVolume& anatomy, const ScatterSlab& region, double density,
                                           uint64_t seed, unsigned threads = 0);

struct Projection {
  int bin = 0;
  double radial = 0.0;   ///< mm along the scanline
  double delta_l = 0.0;  ///< mm
  double delta_e = 0.0;  ///< mm
};

/// Nearest radial bin and lateral/elevational offsets; none behind the probe, past the last bin or
/// beyond the lateral cutoff.
std::optional<Projection> project_to_scanline(const Vec3& point, const Scanline& scanline,
                                              double lateral_cutoff = INFINITY);
inline std::optional<Projection> project_to_scanline(const Scatterer& s, const Scanline& scanline,
                                                     double lateral_cutoff = INFINITY) {
  return project_to_scanline(s.position, scanline, lateral_cutoff);
}

/**
 * Finds, per scanline, the scatterers within the lateral cutoff without testing every pair.
 *
 * Fans with a common origin are indexed by in-plane radius shells sorted by angle, parallel
 * (linear array) lines by lateral coordinate; other layouts fall back to testing every scatterer.
 */
class ScatterIndex {
 public:
  ScatterIndex(const std::vector<Scatterer>& scatterers, const std::vector<Scanline>& scanlines,
               double lateral_cutoff);

  /// Calls fn(scatterer_index, projection) for each scatterer that projects onto scanline `line`.
  template <typename Fn>
  void for_each(size_t line, Fn&& fn) const;

  enum class Layout { Fan, Parallel, General };
  Layout layout() const { return layout_; }

 private:
  struct Entry {
    double key;
    uint32_t index;
  };

  const std::vector<Scatterer>& scatterers_;
  const std::vector<Scanline>& scanlines_;
  double cutoff_;
  Layout layout_ = Layout::General;
  Vec3 origin_, plane_a_, plane_l_, plane_e_;
  double shell_width_ = 1.0;
  std::vector<std::vector<Entry>> shells_;
  std::vector<double> line_keys_;
};

template <typename Fn>
void ScatterIndex::for_each(size_t line, Fn&& fn) const {
  const Scanline& s = scanlines_[line];
  auto visit = [&](uint32_t i) {
    if (auto p = project_to_scanline(scatterers_[i], s, cutoff_)) fn(static_cast<size_t>(i), *p);
  };
  if (layout_ == Layout::General) {
    for (size_t i = 0; i < scatterers_.size(); ++i) visit(static_cast<uint32_t>(i));
    return;
  }
  const double centre = line_keys_[line];
  for (size_t sh = 0; sh < shells_.size(); ++sh) {
    const auto& shell = shells_[sh];
    if (shell.empty()) continue;
    double half;
    if (layout_ == Layout::Fan) {
      const double rho_min = sh * shell_width_;
      half = rho_min > cutoff_ ? std::asin(cutoff_ / rho_min) : kPi;
    } else {
      half = cutoff_;
    }
    half += 1e-9;
    auto it = std::lower_bound(shell.begin(), shell.end(), centre - half,
                               [](const Entry& e, double v) { return e.key < v; });
    for (; it != shell.end() && it->key <= centre + half; ++it) visit(it->index);
  }
}

}  // namespace echotrace

#endif /* ECHOTRACE_SCATTERFIELD_HPP */
