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

#include "echotrace/scatterfield.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "echotrace/parallel.hpp"
#include "echotrace/random.hpp"

namespace echotrace {

namespace {

constexpr uint64_t kScatterStream = 0x5ca77e4f1e1dULL;

void check_axis(const std::vector<double>& axis, const char* name) {
  if (axis.empty()) throw std::invalid_argument(std::string("beam table axis ") + name + " is empty");
  for (size_t i = 0; i < axis.size(); ++i) {
    if (!std::isfinite(axis[i])) throw std::invalid_argument(std::string("beam table axis ") + name + " is not finite");
    if (i > 0 && !(axis[i] > axis[i - 1]))
      throw std::invalid_argument(std::string("beam table axis ") + name + " must be strictly increasing");
  }
}

// Cell and weight along one table axis, clamped.
void locate(const std::vector<double>& axis, double x, size_t& i, double& t) {
  if (axis.size() == 1 || x <= axis.front()) {
    i = 0;
    t = 0.0;
    return;
  }
  if (x >= axis.back()) {
    i = axis.size() - 2;
    t = 1.0;
    return;
  }
  const auto it = std::upper_bound(axis.begin(), axis.end(), x);
  i = static_cast<size_t>(it - axis.begin()) - 1;
  t = (x - axis[i]) / (axis[i + 1] - axis[i]);
}

const TissueProperties* tissue_lookup(const std::vector<const TissueProperties*>& table, Label l) {
  return l < table.size() ? table[l] : nullptr;
}

std::vector<const TissueProperties*> tissue_array(const AnatomyVolume& anatomy) {
  Label top = 0;
  for (const auto& [l, t] : anatomy.tissues) top = std::max(top, l);
  std::vector<const TissueProperties*> out(static_cast<size_t>(top) + 1, nullptr);
  for (const auto& [l, t] : anatomy.tissues) out[l] = &t;
  return out;
}

// One candidate: jitter already applied; returns false when rejected.
bool realize(const AnatomyVolume& anatomy, const std::vector<const TissueProperties*>& tissues, const Box3& bounds,
             const Vec3& p, RandomStream& rng, Scatterer& out) {
  const double keep = rng.uniform();
  const double n = rng.normal();
  if (!bounds.contains(p)) return false;
  const Label l = anatomy.label_grid.label_at(p);
  const TissueProperties* t = tissue_lookup(tissues, l);
  if (!t) throw std::invalid_argument("tissue table has no entry for label " + std::to_string(l));
  if (!(keep < t->mu1)) return false;
  out.position = p;
  out.amplitude = std::max(0.0, t->mu0 + t->sigma0 * n);
  return true;
}

}  // namespace

void TabulatedBeam::validate() const {
  check_axis(radial_depths, "radial_depths");
  check_axis(lateral_offsets, "lateral_offsets");
  check_axis(elevational_offsets, "elevational_offsets");
  if (gains.size() != radial_depths.size() * lateral_offsets.size() * elevational_offsets.size())
    throw std::invalid_argument("beam table payload size does not match its axes");
  for (double g : gains)
    if (!std::isfinite(g) || g < 0.0) throw std::invalid_argument("beam table gains must be finite and non-negative");
}

void TabulatedBeam::normalize() {
  validate();
  const double peak = *std::max_element(gains.begin(), gains.end());
  if (!(peak > 0.0)) throw std::invalid_argument("beam table is all zero");
  for (double& g : gains) g = std::min(1.0, g / peak);
}

double TabulatedBeam::sample(double depth, double delta_l, double delta_e) const {
  size_t id, il, ie;
  double td, tl, te;
  locate(radial_depths, depth, id, td);
  locate(lateral_offsets, delta_l, il, tl);
  locate(elevational_offsets, delta_e, ie, te);
  const size_t nd = radial_depths.size() > 1 ? 1 : 0;
  const size_t nl = lateral_offsets.size() > 1 ? 1 : 0;
  const size_t ne = elevational_offsets.size() > 1 ? 1 : 0;
  double acc = 0.0;
  for (size_t a = 0; a <= nd; ++a)
    for (size_t b = 0; b <= nl; ++b)
      for (size_t c = 0; c <= ne; ++c) {
        const double w = (a ? td : (nd ? 1.0 - td : 1.0)) * (b ? tl : (nl ? 1.0 - tl : 1.0)) *
                         (c ? te : (ne ? 1.0 - te : 1.0));
        if (w != 0.0) acc += w * gains[index(id + a, il + b, ie + c)];
      }
  return acc;
}

BeamProfile::BeamProfile(AnalyticBeam beam) : beam_(beam) {
  if (!(beam.sigma_l > 0.0) || !(beam.sigma_e > 0.0)) throw std::invalid_argument("beam sigmas must be positive");
}

BeamProfile::BeamProfile(TabulatedBeam beam) {
  beam.normalize();
  beam_ = std::move(beam);
}

double BeamProfile::lateral_cutoff() const {
  if (analytic()) return 3.0 * analytic_beam().sigma_l;
  const auto& l = table().lateral_offsets;
  return std::max(std::abs(l.front()), std::abs(l.back()));
}

double BeamProfile::elevational_half_extent() const {
  if (analytic()) return 3.0 * analytic_beam().sigma_e;
  const auto& e = table().elevational_offsets;
  return std::max(std::abs(e.front()), std::abs(e.back()));
}

double beam_weight(const BeamProfile& profile, double delta_l, double delta_e, double depth) {
  if (profile.analytic()) {
    const AnalyticBeam& b = profile.analytic_beam();
    const double x = delta_l / b.sigma_l, y = delta_e / b.sigma_e;
    return std::exp(-0.5 * (x * x + y * y));
  }
  return profile.table().sample(depth, delta_l, delta_e);
}

TabulatedBeam load_beam_table(const std::filesystem::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw std::runtime_error("cannot open beam table " + header_path.string());
  nlohmann::json h;
  try {
    in >> h;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("beam table header " + header_path.string() + ": " + e.what());
  }
  TabulatedBeam t;
  try {
    t.radial_depths = h.at("radial_depths_mm").get<std::vector<double>>();
    t.lateral_offsets = h.at("lateral_offsets_mm").get<std::vector<double>>();
    t.elevational_offsets = h.at("elevational_offsets_mm").get<std::vector<double>>();
    if (h.value("dtype", std::string("f32")) != "f32") throw std::runtime_error("beam table dtype must be f32");
    const auto payload = header_path.parent_path() / h.at("data").get<std::string>();
    const size_t n = t.radial_depths.size() * t.lateral_offsets.size() * t.elevational_offsets.size();
    std::ifstream raw(payload, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open beam table payload " + payload.string());
    std::vector<float> f(n);
    raw.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (raw.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
      throw std::runtime_error("beam table payload " + payload.string() + " is truncated");
    t.gains.assign(f.begin(), f.end());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("beam table header " + header_path.string() + ": " + e.what());
  }
  t.normalize();
  return t;
}

void save_beam_table(const TabulatedBeam& table, const std::filesystem::path& header_path) {
  table.validate();
  const std::string payload = header_path.stem().string() + ".raw";
  nlohmann::json h;
  h["radial_depths_mm"] = table.radial_depths;
  h["lateral_offsets_mm"] = table.lateral_offsets;
  h["elevational_offsets_mm"] = table.elevational_offsets;
  h["dtype"] = "f32";
  h["data"] = payload;
  std::ofstream out(header_path);
  out << h.dump(2) << "\n";
  std::vector<float> f(table.gains.begin(), table.gains.end());
  std::ofstream raw(header_path.parent_path() / payload, std::ios::binary);
  raw.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!out || !raw) throw std::runtime_error("failed writing beam table " + header_path.string());
}

TabulatedBeam make_focused_beam_table(double sigma_l, double sigma_e, double focus, double depth_of_field,
                                      const std::vector<double>& depths, const std::vector<double>& laterals,
                                      const std::vector<double>& elevationals) {
  if (!(sigma_l > 0.0) || !(sigma_e > 0.0) || !(depth_of_field > 0.0))
    throw std::invalid_argument("focused beam parameters must be positive");
  TabulatedBeam t;
  t.radial_depths = depths;
  t.lateral_offsets = laterals;
  t.elevational_offsets = elevationals;
  t.gains.resize(depths.size() * laterals.size() * elevationals.size());
  for (size_t d = 0; d < depths.size(); ++d) {
    const double u = (depths[d] - focus) / depth_of_field;
    const double spread = std::sqrt(1.0 + u * u);
    const double g = 1.0 / spread;
    for (size_t l = 0; l < laterals.size(); ++l)
      for (size_t e = 0; e < elevationals.size(); ++e) {
        const double x = laterals[l] / (sigma_l * spread), y = elevationals[e] / (sigma_e * spread);
        t.gains[t.index(d, l, e)] = g * std::exp(-0.5 * (x * x + y * y));
      }
  }
  t.normalize();
  return t;
}

std::pair<int64_t, int64_t> slab_cell_counts(double extent_u, double extent_v, double density) {
  if (!(extent_u > 0.0) || !(extent_v > 0.0) || !(density > 0.0))
    throw std::invalid_argument("slab extents and density must be positive");
  const double total = std::round(density * extent_u * extent_v);
  if (total < 1.0) return {1, 1};
  const auto n = static_cast<int64_t>(total);
  const double ideal = std::sqrt(total * extent_u / extent_v);
  int64_t best = 0;
  double best_err = INFINITY;
  const auto lo = std::max<int64_t>(1, static_cast<int64_t>(ideal / 1.25));
  const auto hi = std::min<int64_t>(n, static_cast<int64_t>(std::ceil(ideal * 1.25)));
  for (int64_t nu = lo; nu <= hi; ++nu) {
    if (n % nu) continue;
    const double err = std::abs(std::log(static_cast<double>(nu) / ideal));
    if (err < best_err) {
      best_err = err;
      best = nu;
    }
  }
  if (best == 0) {
    const auto nu = std::max<int64_t>(1, std::llround(ideal));
    return {nu, std::max<int64_t>(1, std::llround(total / static_cast<double>(nu)))};
  }
  return {best, n / best};
}

std::vector<Scatterer> generate_scatterers(const AnatomyVolume& anatomy, const Box3& region, double density,
                                           uint64_t seed, unsigned threads) {
  if (!(density > 0.0)) throw std::invalid_argument("scatterer density must be positive");
  const Vec3 ext = region.hi - region.lo;
  if (!(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0)) throw std::invalid_argument("scatter region is empty");
  const double per_axis = std::cbrt(density);
  const int64_t nx = std::max<int64_t>(1, std::llround(ext.x * per_axis));
  const int64_t ny = std::max<int64_t>(1, std::llround(ext.y * per_axis));
  const int64_t nz = std::max<int64_t>(1, std::llround(ext.z * per_axis));
  const Vec3 cell{ext.x / nx, ext.y / ny, ext.z / nz};
  const Box3 bounds = anatomy.label_grid.grid().bounds();
  const auto tissues = tissue_array(anatomy);
  const uint64_t key = combine_seed(seed, kScatterStream);

  std::vector<std::vector<Scatterer>> rows(static_cast<size_t>(ny * nz));
  parallel_for(rows.size(), threads, [&](size_t row, unsigned) {
    const int64_t j = static_cast<int64_t>(row) % ny, k = static_cast<int64_t>(row) / ny;
    auto& out = rows[row];
    for (int64_t i = 0; i < nx; ++i) {
      const uint64_t c = static_cast<uint64_t>(i + nx * (j + ny * k));
      RandomStream rng(key, static_cast<uint32_t>(c), static_cast<uint32_t>(c >> 32));
      const Vec3 p{region.lo.x + (i + rng.uniform()) * cell.x, region.lo.y + (j + rng.uniform()) * cell.y,
                   region.lo.z + (k + rng.uniform()) * cell.z};
      Scatterer s;
      if (realize(anatomy, tissues, bounds, p, rng, s)) out.push_back(s);
    }
  });
  std::vector<Scatterer> all;
  size_t total = 0;
  for (const auto& r : rows) total += r.size();
  all.reserve(total);
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  return all;
}

std::vector<Scatterer> generate_scatterers(const AnatomyVolume& anatomy, const ScatterSlab& region, double density,
                                           uint64_t seed, unsigned threads) {
  if (!(density > 0.0)) throw std::invalid_argument("scatterer density must be positive");
  if (!(region.thickness >= 0.0)) throw std::invalid_argument("slab thickness must be non-negative");
  if (std::abs(norm(region.axis_u) - 1.0) > 1e-9 || std::abs(norm(region.axis_v) - 1.0) > 1e-9 ||
      std::abs(dot(region.axis_u, region.axis_v)) > 1e-9)
    throw std::invalid_argument("slab axes must be orthonormal");
  const auto [nu, nv] = slab_cell_counts(region.extent_u, region.extent_v, density);
  const double du = region.extent_u / nu, dv = region.extent_v / nv;
  const Vec3 normal = cross(region.axis_u, region.axis_v);
  const Box3 bounds = anatomy.label_grid.grid().bounds();
  const auto tissues = tissue_array(anatomy);
  const uint64_t key = combine_seed(seed, kScatterStream);
  const double cos_limit = std::cos(std::min(kPi, region.sector_half_angle));

  auto in_sector = [&](double u, double v) {
    if (!region.sector) return true;
    const double x = u - region.apex_u, y = v - region.apex_v;
    const double rho = std::hypot(x, y);
    const double m = region.sector_margin;
    if (rho > region.sector_radius + m) return false;
    if (rho <= m) return true;
    // distance to the nearer sector edge ray when outside the angular range
    if (y >= rho * cos_limit) return true;
    const double phi = std::atan2(std::abs(x), y) - region.sector_half_angle;
    return rho * std::sin(std::min(phi, kPi / 2.0)) <= m;
  };

  std::vector<std::vector<Scatterer>> rows(static_cast<size_t>(nv));
  parallel_for(rows.size(), threads, [&](size_t row, unsigned) {
    const auto j = static_cast<int64_t>(row);
    auto& out = rows[row];
    for (int64_t i = 0; i < nu; ++i) {
      if (!in_sector((i + 0.5) * du, (j + 0.5) * dv)) continue;
      const uint64_t c = static_cast<uint64_t>(i + nu * j);
      RandomStream rng(key, static_cast<uint32_t>(c), static_cast<uint32_t>(c >> 32));
      const double u = (i + rng.uniform()) * du;
      const double v = (j + rng.uniform()) * dv;
      const double w = (rng.uniform() - 0.5) * region.thickness;
      const Vec3 p = region.corner + u * region.axis_u + v * region.axis_v + w * normal;
      Scatterer s;
      if (realize(anatomy, tissues, bounds, p, rng, s)) out.push_back(s);
    }
  });
  std::vector<Scatterer> all;
  size_t total = 0;
  for (const auto& r : rows) total += r.size();
  all.reserve(total);
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  return all;
}

std::optional<Projection> project_to_scanline(const Vec3& point, const Scanline& scanline, double lateral_cutoff) {
  const Vec3 rel = point - scanline.origin;
  const double r = dot(rel, scanline.direction);
  if (r < 0.0 || r > scanline.depth()) return std::nullopt;
  const double k = std::round(r / scanline.sample_spacing);
  if (k >= scanline.num_samples) return std::nullopt;
  Projection p;
  p.bin = static_cast<int>(k);
  p.radial = r;
  p.delta_l = dot(rel, scanline.lateral);
  p.delta_e = dot(rel, scanline.elevation);
  if (std::abs(p.delta_l) > lateral_cutoff) return std::nullopt;
  return p;
}

ScatterIndex::ScatterIndex(const std::vector<Scatterer>& scatterers, const std::vector<Scanline>& scanlines,
                           double lateral_cutoff)
    : scatterers_(scatterers), scanlines_(scanlines), cutoff_(lateral_cutoff) {
  if (scatterers.size() > UINT32_MAX) throw std::invalid_argument("too many scatterers");
  if (scanlines.empty() || !std::isfinite(lateral_cutoff)) return;
  const Scanline& first = scanlines.front();
  const Scanline& last = scanlines.back();
  auto same = [](const Vec3& a, const Vec3& b) { return norm(a - b) <= 1e-9; };
  bool common_origin = true, parallel = true, planar = true;
  for (const Scanline& s : scanlines) {
    common_origin = common_origin && same(s.origin, first.origin);
    parallel = parallel && same(s.direction, first.direction) && same(s.lateral, first.lateral);
    planar = planar && same(s.elevation, first.elevation) && std::abs(dot(s.direction, first.elevation)) <= 1e-9 &&
             std::abs(dot(s.lateral, first.elevation)) <= 1e-9;
  }
  if (!planar) return;
  origin_ = first.origin;
  plane_e_ = first.elevation;

  if (common_origin && scanlines.size() > 1) {
    layout_ = Layout::Fan;
    // reference frame in the imaging plane; angles measured from plane_a_ towards plane_l_
    const Vec3 mid = first.direction + last.direction;
    plane_a_ = norm(mid) > 1e-6 ? normalized(mid) : first.direction;
    plane_l_ = normalized(cross(plane_e_, plane_a_));
    line_keys_.reserve(scanlines.size());
    for (const Scanline& s : scanlines) line_keys_.push_back(std::atan2(dot(s.direction, plane_l_), dot(s.direction, plane_a_)));
    shell_width_ = std::max(0.25, cutoff_);
    for (size_t i = 0; i < scatterers.size(); ++i) {
      const Vec3 rel = scatterers[i].position - origin_;
      const double a = dot(rel, plane_a_), l = dot(rel, plane_l_);
      const double rho = std::hypot(a, l);
      const auto sh = static_cast<size_t>(rho / shell_width_);
      if (sh >= shells_.size()) shells_.resize(sh + 1);
      shells_[sh].push_back({std::atan2(l, a), static_cast<uint32_t>(i)});
    }
  } else if (parallel) {
    layout_ = Layout::Parallel;
    plane_l_ = first.lateral;
    line_keys_.reserve(scanlines.size());
    for (const Scanline& s : scanlines) line_keys_.push_back(dot(s.origin - origin_, plane_l_));
    shells_.resize(1);
    shells_[0].reserve(scatterers.size());
    for (size_t i = 0; i < scatterers.size(); ++i)
      shells_[0].push_back({dot(scatterers[i].position - origin_, plane_l_), static_cast<uint32_t>(i)});
  } else {
    return;
  }
  for (auto& shell : shells_)
    std::sort(shell.begin(), shell.end(),
              [](const Entry& a, const Entry& b) { return a.key < b.key || (a.key == b.key && a.index < b.index); });
}

}  // namespace echotrace
