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

#include "echotrace/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "json_io.hpp"

namespace echotrace {

using detail::json;

namespace {

TissueProperties default_background() {
  TissueProperties t;
  t.name = "phantom_background";
  t.z = 1.54e6;
  t.alpha = 0.5;
  t.c = 1540.0;
  t.mu0 = 0.05;
  t.sigma0 = 0.01;
  t.mu1 = 1.0;
  return t;
}

TissueProperties default_wire() {
  TissueProperties t = default_background();
  t.name = "nylon_wire";
  t.mu0 = 1.0;
  t.sigma0 = 0.0;
  return t;
}

}  // namespace

PhantomSpec::PhantomSpec() : background(default_background()), wire_tissue(default_wire()) {}

void PhantomSpec::validate() const {
  if (!(extent.x > 0.0 && extent.y > 0.0 && extent.z > 0.0)) throw std::invalid_argument("phantom extent must be positive");
  if (!std::isfinite(z_offset)) throw std::invalid_argument("z_offset must be finite");
  if (!(imaging_depth > 0.0)) throw std::invalid_argument("imaging_depth must be positive");
  if (!(scatter_density > 0.0)) throw std::invalid_argument("scatter_density must be positive");
  if (!(beam.sigma_l > 0.0 && beam.sigma_e > 0.0)) throw std::invalid_argument("beam widths must be positive");
  if (beam.focused && !(beam.depth_of_field > 0.0)) throw std::invalid_argument("beam depth_of_field must be positive");
  background.validate();
  wire_tissue.validate();
  const double hx = extent.x / 2, hy = extent.y / 2;
  auto inside_xz = [&](double x, double z, double r) {
    return x - r >= -hx && x + r <= hx && z - r >= z_offset && z + r <= z_offset + extent.z;
  };
  for (const WireTarget& w : wires) {
    if (!(w.radius > 0.0)) throw std::invalid_argument("wire radius must be positive");
    if (!inside_xz(w.x, w.z, w.radius))
      throw std::invalid_argument("wire at (" + std::to_string(w.x) + ", " + std::to_string(w.z) + ") lies outside the extent");
  }
  for (const LesionTarget& l : lesions) {
    if (!(l.radius > 0.0)) throw std::invalid_argument("lesion radius must be positive");
    if (std::isnan(l.contrast_db) || l.contrast_db == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("lesion " + l.name + " has an invalid contrast");
    if (!inside_xz(l.x, l.z, l.radius)) throw std::invalid_argument("lesion " + l.name + " lies outside the extent");
  }
  for (const SphereTarget& s : spheres) {
    if (!(s.radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
    if (!inside_xz(s.center.x, s.center.z, s.radius) || std::abs(s.center.y) + s.radius > hy)
      throw std::invalid_argument("sphere " + s.name + " lies outside the extent");
  }
}

double SphereTruth::plane_radius() const {
  const double r2 = radius * radius - center.y * center.y;
  return r2 > 0.0 ? std::sqrt(r2) : 0.0;
}

std::vector<std::string> GroundTruth::wire_groups() const {
  std::vector<std::string> out;
  for (const WireTruth& w : wires)
    if (std::find(out.begin(), out.end(), w.group) == out.end()) out.push_back(w.group);
  return out;
}

TissueProperties lesion_tissue(const TissueProperties& base, double contrast_db) {
  TissueProperties t = base;
  if (contrast_db == kAnechoic) {
    t.mu0 = 0.0;
    t.mu1 = 0.0;
    return t;
  }
  t.mu0 = std::clamp(base.mu0 * std::pow(10.0, contrast_db / 20.0), 0.0, 1.0);
  return t;
}

TissueProperties sphere_tissue(const TissueProperties& background, SphereKind kind) {
  TissueProperties t = background;
  switch (kind) {
    case SphereKind::Anechoic:
      t.name = "anechoic_sphere";
      t.mu0 = 0.0;
      t.mu1 = 0.0;
      t.alpha = 0.0;
      break;
    case SphereKind::HighAttenuation:
      t.name = "attenuating_sphere";
      t.alpha = 20.0;
      t.z = 7.8e6;
      break;
    case SphereKind::Reflective:
      t.name = "reflective_sphere";
      t.z = 2.0 * background.z;
      break;
  }
  return t;
}

PhantomScene build_phantom(const PhantomSpec& spec, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("phantom spacing must be positive");
  spec.validate();
  PhantomScene scene;

  // Lattice aligned so that integer multiples of the spacing are voxel centres.
  GridGeometry g;
  const double lo_x = -spec.extent.x / 2, lo_y = -spec.extent.y / 2, lo_z = spec.z_offset;
  const auto first = [&](double lo) { return std::round(lo / spacing) - 0.5; };
  g.spacing = {spacing, spacing, spacing};
  g.origin = {first(lo_x) * spacing, first(lo_y) * spacing, first(lo_z) * spacing};
  const auto count = [&](double lo, double ext) {
    return static_cast<int64_t>(std::llround((lo + ext) / spacing - std::round(lo / spacing))) + 1;
  };
  g.dims = {count(lo_x, spec.extent.x), count(lo_y, spec.extent.y), count(lo_z, spec.extent.z)};
  scene.segmentation = SegmentationVolume::filled(g);
  SegmentationVolume& seg = scene.segmentation;

  scene.tissues[0] = spec.background;
  scene.truth.name = spec.name;
  scene.truth.imaging_depth = spec.imaging_depth;

  // Each voxel remembers which shape wrote it so overlaps can be reported.
  std::vector<int32_t> owner(g.voxel_count(), -1);
  std::set<std::pair<int, int>> clashes;
  std::vector<std::string> shape_names;
  auto paint = [&](int64_t i, int64_t j, int64_t k, Label label, int shape) {
    const size_t n = g.linear(i, j, k);
    if (owner[n] >= 0 && owner[n] != shape) clashes.insert({owner[n], shape});
    owner[n] = shape;
    seg.labels[n] = label;
  };
  auto index_range = [&](double lo, double hi, int axis) {
    const double o = axis == 0 ? g.origin.x : axis == 1 ? g.origin.y : g.origin.z;
    const int64_t a = std::max<int64_t>(0, static_cast<int64_t>(std::floor((lo - o) / spacing - 0.5)));
    const int64_t b = std::min<int64_t>(g.dims[axis] - 1, static_cast<int64_t>(std::ceil((hi - o) / spacing - 0.5)));
    return std::pair{a, b};
  };

  if (!spec.wires.empty()) scene.tissues[1] = spec.wire_tissue;
  for (size_t w = 0; w < spec.wires.size(); ++w) {
    const WireTarget& t = spec.wires[w];
    const int shape = static_cast<int>(shape_names.size());
    shape_names.push_back("wire " + std::to_string(w) + " (" + t.group + ")");
    const Index3 near = g.voxel_of({t.x, 0.0, t.z});
    const auto [i0, i1] = index_range(t.x - t.radius, t.x + t.radius, 0);
    const auto [k0, k1] = index_range(t.z - t.radius, t.z + t.radius, 2);
    for (int64_t j = 0; j < g.dims[1]; ++j) {
      for (int64_t k = k0; k <= k1; ++k)
        for (int64_t i = i0; i <= i1; ++i) {
          const Vec3 c = g.voxel_center(i, j, k);
          if (std::hypot(c.x - t.x, c.z - t.z) <= t.radius) paint(i, j, k, 1, shape);
        }
      if (g.inside(near[0], j, near[2])) paint(near[0], j, near[2], 1, shape);
    }
    scene.truth.wires.push_back({static_cast<int>(w), t.group, t.x, t.z});
  }

  Label next = 2;
  for (size_t n = 0; n < spec.lesions.size(); ++n) {
    const LesionTarget& t = spec.lesions[n];
    const Label label = next++;
    const int shape = static_cast<int>(shape_names.size());
    shape_names.push_back("lesion " + t.name);
    TissueProperties tissue = lesion_tissue(spec.background, t.contrast_db);
    tissue.name = t.name.empty() ? "lesion_" + std::to_string(n) : t.name;
    scene.tissues[label] = tissue;
    const auto [i0, i1] = index_range(t.x - t.radius, t.x + t.radius, 0);
    const auto [k0, k1] = index_range(t.z - t.radius, t.z + t.radius, 2);
    for (int64_t k = k0; k <= k1; ++k)
      for (int64_t i = i0; i <= i1; ++i) {
        const Vec3 c = g.voxel_center(i, 0, k);
        if (std::hypot(c.x - t.x, c.z - t.z) > t.radius) continue;
        for (int64_t j = 0; j < g.dims[1]; ++j) paint(i, j, k, label, shape);
      }
    scene.truth.lesions.push_back({static_cast<int>(n), t.name, t.x, t.z, t.radius, t.contrast_db});
  }

  for (size_t n = 0; n < spec.spheres.size(); ++n) {
    const SphereTarget& t = spec.spheres[n];
    const Label label = next++;
    const int shape = static_cast<int>(shape_names.size());
    shape_names.push_back("sphere " + t.name);
    TissueProperties tissue = sphere_tissue(spec.background, t.kind);
    if (!t.name.empty()) tissue.name = t.name;
    scene.tissues[label] = tissue;
    const auto [i0, i1] = index_range(t.center.x - t.radius, t.center.x + t.radius, 0);
    const auto [j0, j1] = index_range(t.center.y - t.radius, t.center.y + t.radius, 1);
    const auto [k0, k1] = index_range(t.center.z - t.radius, t.center.z + t.radius, 2);
    for (int64_t k = k0; k <= k1; ++k)
      for (int64_t j = j0; j <= j1; ++j)
        for (int64_t i = i0; i <= i1; ++i)
          if (norm(g.voxel_center(i, j, k) - t.center) <= t.radius) paint(i, j, k, label, shape);
    scene.truth.spheres.push_back({static_cast<int>(n), t.name, t.kind, t.center, t.radius});
  }

  for (const auto& [a, b] : clashes)
    scene.warnings.push_back(shape_names[b] + " overlaps " + shape_names[a] + "; the later shape wins");
  return scene;
}

BeamProfile phantom_beam_profile(const PhantomSpec& spec) {
  const PhantomBeam& b = spec.beam;
  if (!b.focused) return BeamProfile(AnalyticBeam{b.sigma_l, b.sigma_e});
  const double far = std::max(b.focus, spec.imaging_depth - b.focus);
  const double spread = std::sqrt(1.0 + (far / b.depth_of_field) * (far / b.depth_of_field));
  const double half_l = 3.2 * b.sigma_l * spread, half_e = 3.0 * b.sigma_e * spread;
  auto axis = [](double lo, double hi, double step) {
    const int n = static_cast<int>(std::ceil((hi - lo) / step)) + 1;
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
    return v;
  };
  return BeamProfile(make_focused_beam_table(b.sigma_l, b.sigma_e, b.focus, b.depth_of_field,
                                             axis(0.0, spec.imaging_depth, 2.0), axis(-half_l, half_l, b.sigma_l / 4),
                                             axis(-half_e, half_e, b.sigma_e / 4)));
}

std::string sphere_kind_name(SphereKind kind) {
  switch (kind) {
    case SphereKind::Anechoic: return "anechoic";
    case SphereKind::HighAttenuation: return "high_attenuation";
    case SphereKind::Reflective: return "reflective";
  }
  return "anechoic";
}

SphereKind parse_sphere_kind(const std::string& name) {
  if (name == "anechoic") return SphereKind::Anechoic;
  if (name == "high_attenuation") return SphereKind::HighAttenuation;
  if (name == "reflective") return SphereKind::Reflective;
  throw std::invalid_argument("unknown sphere kind '" + name + "'");
}

// ---------------------------------------------------------------------------------------------
// JSON

namespace {

// Field-path aware accessors.
template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw std::invalid_argument(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(where + "." + key + ": wrong type");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

Vec3 get_vec3(const json& j, const std::string& key, const std::string& where) {
  const auto v = get<std::vector<double>>(j, key, where);
  if (v.size() != 3) throw std::invalid_argument(where + "." + key + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

double contrast_from(const json& j, const std::string& where) {
  if (!j.contains("contrast_db")) throw std::invalid_argument(where + ": missing field 'contrast_db'");
  const json& c = j.at("contrast_db");
  if (c.is_string() && c.get<std::string>() == "anechoic") return kAnechoic;
  if (c.is_number()) return c.get<double>();
  throw std::invalid_argument(where + ".contrast_db: expected a number or \"anechoic\"");
}

json contrast_to(double c) { return c == kAnechoic ? json("anechoic") : json(c); }

json lesion_json(const std::string& name, double x, double z, double radius, double contrast) {
  return {{"name", name}, {"x", x}, {"z", z}, {"radius", radius}, {"contrast_db", contrast_to(contrast)}};
}

}  // namespace

PhantomSpec parse_phantom_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("phantom spec: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("phantom spec: expected a JSON object");
  PhantomSpec s;
  const std::string w = "phantom";
  s.name = get_or<std::string>(j, "name", s.name, w);
  if (j.contains("extent_mm")) s.extent = get_vec3(j, "extent_mm", w);
  s.z_offset = get_or(j, "z_offset_mm", s.z_offset, w);
  s.imaging_depth = get_or(j, "imaging_depth_mm", s.imaging_depth, w);
  s.scatter_density = get_or(j, "scatter_density_per_mm2", s.scatter_density, w);
  if (j.contains("background")) s.background = detail::tissue_from_json(j.at("background"), "background");
  if (j.contains("wire_tissue")) s.wire_tissue = detail::tissue_from_json(j.at("wire_tissue"), "wire_tissue");
  if (j.contains("beam")) {
    const json& b = j.at("beam");
    const std::string bw = w + ".beam";
    const std::string kind = get<std::string>(b, "kind", bw);
    if (kind != "focused" && kind != "analytic") throw std::invalid_argument(bw + ".kind: expected focused or analytic");
    s.beam.focused = kind == "focused";
    s.beam.sigma_l = get_or(b, "sigma_l_mm", s.beam.sigma_l, bw);
    s.beam.sigma_e = get_or(b, "sigma_e_mm", s.beam.sigma_e, bw);
    s.beam.focus = get_or(b, "focus_mm", s.beam.focus, bw);
    s.beam.depth_of_field = get_or(b, "depth_of_field_mm", s.beam.depth_of_field, bw);
  }
  const json empty = json::array();
  const json& wires = j.contains("wires") ? j.at("wires") : empty;
  for (size_t i = 0; i < wires.size(); ++i) {
    const std::string ww = w + ".wires[" + std::to_string(i) + "]";
    WireTarget t;
    t.group = get_or<std::string>(wires[i], "group", "default", ww);
    t.x = get<double>(wires[i], "x", ww);
    t.z = get<double>(wires[i], "z", ww);
    t.radius = get_or(wires[i], "radius", t.radius, ww);
    s.wires.push_back(t);
  }
  const json& lesions = j.contains("lesions") ? j.at("lesions") : empty;
  for (size_t i = 0; i < lesions.size(); ++i) {
    const std::string lw = w + ".lesions[" + std::to_string(i) + "]";
    LesionTarget t;
    t.name = get_or<std::string>(lesions[i], "name", "lesion_" + std::to_string(i), lw);
    t.x = get<double>(lesions[i], "x", lw);
    t.z = get<double>(lesions[i], "z", lw);
    t.radius = get<double>(lesions[i], "radius", lw);
    t.contrast_db = contrast_from(lesions[i], lw);
    s.lesions.push_back(t);
  }
  const json& spheres = j.contains("spheres") ? j.at("spheres") : empty;
  for (size_t i = 0; i < spheres.size(); ++i) {
    const std::string sw = w + ".spheres[" + std::to_string(i) + "]";
    SphereTarget t;
    t.name = get_or<std::string>(spheres[i], "name", "sphere_" + std::to_string(i), sw);
    t.center = get_vec3(spheres[i], "center", sw);
    t.radius = get<double>(spheres[i], "radius", sw);
    try {
      t.kind = parse_sphere_kind(get<std::string>(spheres[i], "kind", sw));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(sw + ".kind: " + e.what());
    }
    s.spheres.push_back(t);
  }
  s.validate();
  return s;
}

PhantomSpec load_phantom_spec(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  try {
    return parse_phantom_spec(text);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string phantom_spec_to_json(const PhantomSpec& s) {
  json j;
  j["name"] = s.name;
  j["extent_mm"] = {s.extent.x, s.extent.y, s.extent.z};
  j["z_offset_mm"] = s.z_offset;
  j["imaging_depth_mm"] = s.imaging_depth;
  j["scatter_density_per_mm2"] = s.scatter_density;
  j["background"] = detail::tissue_to_json(s.background);
  j["wire_tissue"] = detail::tissue_to_json(s.wire_tissue);
  j["beam"] = {{"kind", s.beam.focused ? "focused" : "analytic"},
               {"sigma_l_mm", s.beam.sigma_l},
               {"sigma_e_mm", s.beam.sigma_e},
               {"focus_mm", s.beam.focus},
               {"depth_of_field_mm", s.beam.depth_of_field}};
  j["wires"] = json::array();
  for (const WireTarget& t : s.wires) j["wires"].push_back({{"group", t.group}, {"x", t.x}, {"z", t.z}, {"radius", t.radius}});
  j["lesions"] = json::array();
  for (const LesionTarget& t : s.lesions) j["lesions"].push_back(lesion_json(t.name, t.x, t.z, t.radius, t.contrast_db));
  j["spheres"] = json::array();
  for (const SphereTarget& t : s.spheres)
    j["spheres"].push_back({{"name", t.name},
                            {"center", {t.center.x, t.center.y, t.center.z}},
                            {"radius", t.radius},
                            {"kind", sphere_kind_name(t.kind)}});
  return j.dump(2);
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  json j;
  j["name"] = truth.name;
  j["imaging_depth_mm"] = truth.imaging_depth;
  j["wires"] = json::array();
  for (const WireTruth& w : truth.wires) j["wires"].push_back({{"id", w.id}, {"group", w.group}, {"x", w.x}, {"z", w.z}});
  j["lesions"] = json::array();
  for (const LesionTruth& l : truth.lesions) {
    json e = lesion_json(l.name, l.x, l.z, l.radius, l.contrast_db);
    e["id"] = l.id;
    j["lesions"].push_back(e);
  }
  j["spheres"] = json::array();
  for (const SphereTruth& s : truth.spheres)
    j["spheres"].push_back({{"id", s.id},
                            {"name", s.name},
                            {"kind", sphere_kind_name(s.kind)},
                            {"center", {s.center.x, s.center.y, s.center.z}},
                            {"radius", s.radius}});
  detail::write_json_file(j, path);
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  const json j = detail::parse_json_file(path);
  const std::string w = path.string();
  GroundTruth t;
  t.name = get_or<std::string>(j, "name", "", w);
  t.imaging_depth = get_or(j, "imaging_depth_mm", 0.0, w);
  const json empty = json::array();
  for (const json& e : j.contains("wires") ? j.at("wires") : empty)
    t.wires.push_back({get<int>(e, "id", w), get<std::string>(e, "group", w), get<double>(e, "x", w), get<double>(e, "z", w)});
  for (const json& e : j.contains("lesions") ? j.at("lesions") : empty)
    t.lesions.push_back({get<int>(e, "id", w), get_or<std::string>(e, "name", "", w), get<double>(e, "x", w),
                         get<double>(e, "z", w), get<double>(e, "radius", w), contrast_from(e, w)});
  for (const json& e : j.contains("spheres") ? j.at("spheres") : empty)
    t.spheres.push_back({get<int>(e, "id", w), get_or<std::string>(e, "name", "", w),
                         parse_sphere_kind(get<std::string>(e, "kind", w)), get_vec3(e, "center", w),
                         get<double>(e, "radius", w)});
  return t;
}

// ---------------------------------------------------------------------------------------------
// built-in specs

std::vector<std::string> builtin_phantom_names() {
  return {"speckle", "wires_view1", "wires_view2", "wires_view3", "lesions", "shadow", "enhancement"};
}

namespace {

// Vertical column of 8 wires 10 mm apart plus near and far rows of 6 wires 10 mm apart.
PhantomSpec wire_view(const std::string& name, double column_x, double column_top, double near_z, double far_z) {
  PhantomSpec s;
  s.name = name;
  for (int i = 0; i < 8; ++i) s.wires.push_back({"vertical", column_x, column_top + 10.0 * i});
  for (int i = 0; i < 6; ++i) s.wires.push_back({"horizontal_near", -25.0 + 10.0 * i, near_z});
  for (int i = 0; i < 6; ++i) s.wires.push_back({"horizontal_far", -25.0 + 10.0 * i, far_z});
  return s;
}

}  // namespace

PhantomSpec builtin_phantom(const std::string& name) {
  if (name == "speckle") {
    PhantomSpec s;
    s.name = name;
    s.extent = {40.0, 8.0, 40.0};
    s.z_offset = 30.0;
    s.imaging_depth = 80.0;
    s.scatter_density = 600.0;
    s.background.name = "speckle_medium";
    s.background.alpha = 0.0;
    s.background.mu0 = 1.0;
    s.background.sigma0 = 0.0;
    s.background.mu1 = 1.0;
    s.beam.focused = false;
    s.beam.sigma_l = 1.0;
    s.beam.sigma_e = 1.0;
    return s;
  }
  if (name == "wires_view1") return wire_view(name, 0.0, 20.0, 45.0, 105.0);
  if (name == "wires_view2") return wire_view(name, 10.0, 30.0, 55.0, 115.0);
  if (name == "wires_view3") return wire_view(name, -10.0, 40.0, 65.0, 125.0);
  if (name == "lesions") {
    PhantomSpec s;
    s.name = name;
    s.imaging_depth = 120.0;
    s.extent = {152.0, 16.0, 120.0};
    s.lesions = {{"hyperechoic_6db", -15.0, 45.0, 4.0, 6.0},
                 {"hyperechoic_15db", 15.0, 45.0, 4.0, 15.0},
                 {"anechoic_1", -15.0, 75.0, 4.0, kAnechoic},
                 {"anechoic_2", 15.0, 75.0, 4.0, kAnechoic},
                 {"anechoic_3", 0.0, 95.0, 4.0, kAnechoic}};
    return s;
  }
  if (name == "shadow" || name == "enhancement") {
    PhantomSpec s;
    s.name = name;
    s.imaging_depth = 100.0;
    s.extent = {124.0, 36.0, 100.0};
    if (name == "shadow")
      s.spheres = {{"attenuating", {0.0, 0.0, 35.0}, 6.0, SphereKind::HighAttenuation}};
    else
      s.spheres = {{"anechoic", {0.0, 0.0, 35.0}, 15.0, SphereKind::Anechoic}};
    return s;
  }
  throw std::invalid_argument("unknown built-in phantom '" + name + "'");
}

}  // namespace echotrace
