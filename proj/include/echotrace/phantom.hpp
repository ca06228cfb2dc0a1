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

#ifndef ECHOTRACE_PHANTOM_HPP
#define ECHOTRACE_PHANTOM_HPP

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "echotrace/anatomy.hpp"
#include "echotrace/scatterfield.hpp"

namespace echotrace {

/*
 * Phantom frame: x lateral, y elevation, z depth. The probe sits at the origin looking down +z
 * with +x as its lateral direction, so image-plane coordinates are (x, z).
 */

/// Contrast value marking an anechoic lesion.
inline constexpr double kAnechoic = -std::numeric_limits<double>::infinity();

/// Thin wire running along the elevation axis.
struct WireTarget {
  std::string group;  ///< targets sharing a group are measured along one line
  double x = 0.0;
  double z = 0.0;
  double radius = 0.25;
};

/// Cylindrical lesion running along the elevation axis.
struct LesionTarget {
  std::string name;
  double x = 0.0;
  double z = 0.0;
  double radius = 4.0;
  double contrast_db = 0.0;  ///< kAnechoic for anechoic
};

enum class SphereKind { Anechoic, HighAttenuation, Reflective };

struct SphereTarget {
  std::string name;
  Vec3 center;
  double radius = 5.0;
  SphereKind kind = SphereKind::Anechoic;
};

/// Beam used when imaging the phantom: analytic Gaussian or a focused table.
struct PhantomBeam {
  bool focused = true;
  double sigma_l = 0.6;  ///< mm, at the focus for focused beams
  double sigma_e = 1.0;
  double focus = 50.0;           ///< mm
  double depth_of_field = 40.0;  ///< mm
};

struct PhantomSpec {
  std::string name = "phantom";
  Vec3 extent{172.0, 16.0, 140.0};  ///< mm along x, y, z
  double z_offset = 0.0;           ///< depth of the volume's near face
  TissueProperties background;
  TissueProperties wire_tissue;
  std::vector<WireTarget> wires;
  std::vector<LesionTarget> lesions;
  std::vector<SphereTarget> spheres;
  double imaging_depth = 140.0;    ///< mm
  double scatter_density = 200.0;  ///< per mm^2 of the imaging slab
  PhantomBeam beam;

  PhantomSpec();
  void validate() const;
};

struct WireTruth {
  int id = 0;
  std::string group;
  double x = 0.0;
  double z = 0.0;
};

struct LesionTruth {
  int id = 0;
  std::string name;
  double x = 0.0;
  double z = 0.0;
  double radius = 0.0;
  double contrast_db = 0.0;

  bool anechoic() const { return contrast_db == kAnechoic; }
  bool contains(double px, double pz) const { return (px - x) * (px - x) + (pz - z) * (pz - z) <= radius * radius; }
};

struct SphereTruth {
  int id = 0;
  std::string name;
  SphereKind kind = SphereKind::Anechoic;
  Vec3 center;
  double radius = 0.0;

  /// Radius of the cross-section with the imaging plane y = 0 (0 if the sphere misses it).
  double plane_radius() const;
};

/// Exact target positions in the image plane (not voxelized).
struct GroundTruth {
  std::string name;
  double imaging_depth = 0.0;
  std::vector<WireTruth> wires;
  std::vector<LesionTruth> lesions;
  std::vector<SphereTruth> spheres;

  std::vector<std::string> wire_groups() const;
};

struct PhantomScene {
  SegmentationVolume segmentation;
  TissueTable tissues;
  GroundTruth truth;
  std::vector<std::string> warnings;
};

/**
 * Anechoic (kAnechoic): mu0 = mu1 = 0. Otherwise mu0 scaled by 10^(contrast / 20), clamped to [0, 1].
 */
TissueProperties lesion_tissue(const TissueProperties& base, double contrast_db);

/// Tissue used for each sphere kind.
TissueProperties sphere_tissue(const TissueProperties& background, SphereKind kind);

/**
 * Voxelizes the spec on an isotropic grid. Label 0 is the background, 1 the wires, then one label
 * per lesion and per sphere in list order. Voxel centres fall on integer multiples of the spacing,
 * so targets on that lattice are voxelized symmetrically. Wires always include their nearest voxel.
 * Where shapes overlap the later one wins and a warning is recorded.
 */
PhantomScene build_phantom(const PhantomSpec& spec, double spacing = 0.5);

/// Beam profile described by the spec, tabulated over the imaging depth for focused beams.
BeamProfile phantom_beam_profile(const PhantomSpec& spec);

std::string sphere_kind_name(SphereKind kind);
SphereKind parse_sphere_kind(const std::string& name);

/// JSON text to spec. Errors name the offending field; syntax errors carry the line and column.
PhantomSpec parse_phantom_spec(const std::string& text);
PhantomSpec load_phantom_spec(const std::filesystem::path& path);
std::string phantom_spec_to_json(const PhantomSpec& spec);

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

/// Names of the shipped specs: speckle, wires_view1..3, lesions, shadow, enhancement.
std::vector<std::string> builtin_phantom_names();
PhantomSpec builtin_phantom(const std::string& name);

}  // namespace echotrace

#endif /* ECHOTRACE_PHANTOM_HPP */
