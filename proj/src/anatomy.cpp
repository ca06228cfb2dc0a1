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

#include "echotrace/anatomy.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "echotrace/parallel.hpp"
#include "json_io.hpp"

namespace echotrace {

static_assert(std::endian::native == std::endian::little, "payloads are little-endian");

namespace {

using nlohmann::json;
using detail::parse_json_file;
using detail::read_file;

constexpr float kAbsent = std::numeric_limits<float>::quiet_NaN();

Vec3 vec3_from(const json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw std::invalid_argument(std::string(key) + " must have 3 entries");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

// Work array over a box of voxel indices.
struct Box {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};  // exclusive
  int64_t nx() const { return hi[0] - lo[0]; }
  int64_t ny() const { return hi[1] - lo[1]; }
  int64_t nz() const { return hi[2] - lo[2]; }
  size_t size() const { return static_cast<size_t>(nx() * ny() * nz()); }
  size_t at(int64_t i, int64_t j, int64_t k) const {
    return static_cast<size_t>((i - lo[0]) + nx() * ((j - lo[1]) + ny() * (k - lo[2])));
  }
  bool contains(int64_t i, int64_t j, int64_t k) const {
    return i >= lo[0] && j >= lo[1] && k >= lo[2] && i < hi[0] && j < hi[1] && k < hi[2];
  }
};

// Godunov upwind update for |grad u| = 1 with per-axis spacing.
double godunov(std::array<double, 3> a, std::array<double, 3> h) {
  // sort by neighbour value
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2 - p; ++q)
      if (a[q] > a[q + 1]) {
        std::swap(a[q], a[q + 1]);
        std::swap(h[q], h[q + 1]);
      }
  if (!std::isfinite(a[0])) return INFINITY;
  double u = a[0] + h[0];
  for (int n = 2; n <= 3; ++n) {
    if (n - 1 >= 3 || !(u > a[n - 1])) break;
    double s1 = 0.0, sa = 0.0, saa = 0.0;
    for (int m = 0; m < n; ++m) {
      const double w = 1.0 / (h[m] * h[m]);
      s1 += w;
      sa += a[m] * w;
      saa += a[m] * a[m] * w;
    }
    const double disc = sa * sa - s1 * (saa - 1.0);
    if (disc < 0.0) break;
    u = (sa + std::sqrt(disc)) / s1;
  }
  return u;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated scene file");
  return v;
}

json tissue_table_json(const TissueTable& table) {
  json j = json::object();
  for (const auto& [label, t] : table) j[std::to_string(label)] = detail::tissue_to_json(t);
  return j;
}

TissueTable tissue_table_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("tissue table must be a JSON object");
  TissueTable table;
  for (const auto& [key, v] : j.items()) {
    size_t used = 0;
    unsigned long label = 0;
    try {
      label = std::stoul(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size() || label > std::numeric_limits<Label>::max())
      throw std::invalid_argument("tissue table: bad label key '" + key + "'");
    table[static_cast<Label>(label)] = detail::tissue_from_json(v, key);
  }
  return table;
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// tissues

void TissueProperties::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!(z > 0.0)) throw std::invalid_argument("impedance must be positive");
  if (!(alpha >= 0.0)) throw std::invalid_argument("attenuation must be non-negative");
  if (!(c > 0.0)) throw std::invalid_argument("sound speed must be positive");
  if (!unit(mu0) || !unit(sigma0) || !unit(mu1))
    throw std::invalid_argument("mu0, sigma0 and mu1 must lie in [0, 1]");
  if (!(tau >= 0.0 && tau <= 3.0)) throw std::invalid_argument("tau must lie in [0, 3]");
  if (!(gamma >= -2.0 && gamma <= 2.0)) throw std::invalid_argument("gamma must lie in [-2, 2]");
}

TissueTable load_tissue_table(const std::filesystem::path& path) {
  return tissue_table_from_json(parse_json_file(path));
}

void save_tissue_table(const TissueTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << tissue_table_json(table).dump(2) << "\n";
}

// ---------------------------------------------------------------------------------------------
// segmentation

void GridGeometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw std::invalid_argument("dims must be positive");
    if (!(spacing[a] > 0.0)) throw std::invalid_argument("spacing must be positive");
  }
}

SegmentationVolume SegmentationVolume::filled(const GridGeometry& grid, Label value) {
  grid.validate();
  SegmentationVolume seg;
  seg.grid = grid;
  seg.labels.assign(grid.voxel_count(), value);
  return seg;
}

SegmentationVolume load_segmentation(const std::filesystem::path& header_path) {
  const json h = parse_json_file(header_path);
  SegmentationVolume seg;
  const auto& d = h.at("dims");
  if (!d.is_array() || d.size() != 3) throw std::invalid_argument("dims must have 3 entries");
  for (int a = 0; a < 3; ++a) seg.grid.dims[a] = d[a].get<int64_t>();
  seg.grid.spacing = vec3_from(h, "spacing_mm");
  seg.grid.origin = h.contains("origin_mm") ? vec3_from(h, "origin_mm") : Vec3{};
  seg.grid.validate();

  const std::string dtype = h.at("dtype").get<std::string>();
  size_t bytes_per = 0;
  if (dtype == "u8") bytes_per = 1;
  else if (dtype == "u16") bytes_per = 2;
  else throw std::invalid_argument("unknown dtype '" + dtype + "'");

  std::filesystem::path data = h.at("data").get<std::string>();
  if (data.is_relative()) data = header_path.parent_path() / data;
  const std::string payload = read_file(data);
  const size_t n = seg.grid.voxel_count();
  if (payload.size() != n * bytes_per) {
    throw std::runtime_error("payload size mismatch: expected " + std::to_string(n * bytes_per) +
                             " bytes, found " + std::to_string(payload.size()));
  }
  seg.labels.resize(n);
  if (bytes_per == 1) {
    for (size_t i = 0; i < n; ++i) seg.labels[i] = static_cast<uint8_t>(payload[i]);
  } else {
    std::memcpy(seg.labels.data(), payload.data(), n * 2);
  }
  return seg;
}

void save_segmentation(const SegmentationVolume& seg, const std::filesystem::path& header_path,
                       const std::string& dtype) {
  if (dtype != "u8" && dtype != "u16") throw std::invalid_argument("unknown dtype '" + dtype + "'");
  std::filesystem::path raw = header_path;
  raw.replace_extension(".raw");
  json h = {{"dims", seg.grid.dims},
            {"spacing_mm", {seg.grid.spacing.x, seg.grid.spacing.y, seg.grid.spacing.z}},
            {"origin_mm", {seg.grid.origin.x, seg.grid.origin.y, seg.grid.origin.z}},
            {"dtype", dtype},
            {"data", raw.filename().string()}};
  {
    std::ofstream out(header_path);
    if (!out) throw std::runtime_error("cannot write " + header_path.string());
    out << h.dump(2) << "\n";
  }
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + raw.string());
  if (dtype == "u8") {
    std::vector<uint8_t> bytes(seg.labels.size());
    for (size_t i = 0; i < bytes.size(); ++i) {
      if (seg.labels[i] > 255) throw std::invalid_argument("label exceeds u8 range");
      bytes[i] = static_cast<uint8_t>(seg.labels[i]);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    out.write(reinterpret_cast<const char*>(seg.labels.data()),
              static_cast<std::streamsize>(seg.labels.size() * sizeof(Label)));
  }
}

// ---------------------------------------------------------------------------------------------
// sparse label grid

SparseLabelGrid::SparseLabelGrid(const GridGeometry& grid, int tile_size)
    : grid_(grid), tile_size_(tile_size) {
  if (tile_size < 2) throw std::invalid_argument("tile_size must be at least 2");
  grid.validate();
  for (int a = 0; a < 3; ++a) tiles_dims_[a] = (grid.dims[a] + tile_size - 1) / tile_size;
  tile_index_.assign(static_cast<size_t>(tiles_dims_[0] * tiles_dims_[1] * tiles_dims_[2]), -1);
}

int32_t SparseLabelGrid::ensure_tile(int64_t i, int64_t j, int64_t k) {
  const size_t slot = tile_linear(i / tile_size_, j / tile_size_, k / tile_size_);
  int32_t t = tile_index_[slot];
  if (t >= 0) return t;
  t = static_cast<int32_t>(tile_origins_.size());
  tile_index_[slot] = t;
  tile_origins_.push_back({i - i % tile_size_, j - j % tile_size_, k - k % tile_size_});
  blocks_.resize(blocks_.size() + tile_volume(), 0);
  return t;
}

void SparseLabelGrid::set(int64_t i, int64_t j, int64_t k, Label value) {
  if (!grid_.inside(i, j, k)) throw std::out_of_range("voxel outside grid");
  if (value == 0 && !tile_occupied(i, j, k)) return;
  const int32_t t = ensure_tile(i, j, k);
  blocks_[static_cast<size_t>(t) * tile_volume() + in_tile(i, j, k)] = value;
}

Box3 SparseLabelGrid::tile_box(int64_t i, int64_t j, int64_t k) const {
  const int64_t ts = tile_size_;
  const Vec3 lo{grid_.origin.x + static_cast<double>(floor_div(i, ts) * ts) * grid_.spacing.x,
                grid_.origin.y + static_cast<double>(floor_div(j, ts) * ts) * grid_.spacing.y,
                grid_.origin.z + static_cast<double>(floor_div(k, ts) * ts) * grid_.spacing.z};
  return {lo, lo + static_cast<double>(ts) * grid_.spacing};
}

std::vector<Label> SparseLabelGrid::labels_present() const {
  std::set<Label> found;
  for (Label v : blocks_)
    if (v != 0) found.insert(v);
  return {found.begin(), found.end()};
}

SparseLabelGrid build_sparse_grid(const SegmentationVolume& seg, int tile_size) {
  SparseLabelGrid grid(seg.grid, tile_size);
  const auto& d = seg.grid.dims;
  for (int64_t k = 0; k < d[2]; ++k)
    for (int64_t j = 0; j < d[1]; ++j)
      for (int64_t i = 0; i < d[0]; ++i) {
        const Label v = seg.at(i, j, k);
        if (v != 0) grid.set(i, j, k, v);
      }
  return grid;
}

// ---------------------------------------------------------------------------------------------
// narrow-band SDF

NarrowBandSdf::NarrowBandSdf(const GridGeometry& grid, Label label, int band_halfwidth, int tile_size)
    : grid_(grid), label_(label), band_halfwidth_(band_halfwidth), tile_size_(tile_size) {
  if (tile_size < 2) throw std::invalid_argument("tile_size must be at least 2");
  if (band_halfwidth < 1) throw std::invalid_argument("band_halfwidth must be at least 1");
  grid.validate();
  for (int a = 0; a < 3; ++a) tiles_dims_[a] = (grid.dims[a] + tile_size - 1) / tile_size;
  tile_index_.assign(static_cast<size_t>(tiles_dims_[0] * tiles_dims_[1] * tiles_dims_[2]), -1);
}

float NarrowBandSdf::raw(int64_t i, int64_t j, int64_t k) const {
  if (!grid_.inside(i, j, k)) return kAbsent;
  const int64_t ts = tile_size_;
  const int32_t t = tile_index_[static_cast<size_t>(i / ts + tiles_dims_[0] * (j / ts + tiles_dims_[1] * (k / ts)))];
  if (t < 0) return kAbsent;
  return values_[static_cast<size_t>(t) * tile_volume() +
                 static_cast<size_t>(i % ts + ts * (j % ts + ts * (k % ts)))];
}

void NarrowBandSdf::set(int64_t i, int64_t j, int64_t k, double value) {
  if (!grid_.inside(i, j, k)) throw std::out_of_range("voxel outside grid");
  const int64_t ts = tile_size_;
  const size_t slot = static_cast<size_t>(i / ts + tiles_dims_[0] * (j / ts + tiles_dims_[1] * (k / ts)));
  int32_t t = tile_index_[slot];
  if (t < 0) {
    t = static_cast<int32_t>(tile_origins_.size());
    tile_index_[slot] = t;
    tile_origins_.push_back({i - i % ts, j - j % ts, k - k % ts});
    values_.resize(values_.size() + tile_volume(), kAbsent);
  }
  float& cell = values_[static_cast<size_t>(t) * tile_volume() + static_cast<size_t>(i % ts + ts * (j % ts + ts * (k % ts)))];
  if (std::isnan(cell)) ++stored_;
  cell = static_cast<float>(value);
}

std::optional<double> NarrowBandSdf::sample(const Vec3& p) const {
  const double gx = (p.x - grid_.origin.x) / grid_.spacing.x - 0.5;
  const double gy = (p.y - grid_.origin.y) / grid_.spacing.y - 0.5;
  const double gz = (p.z - grid_.origin.z) / grid_.spacing.z - 0.5;
  const double fx0 = std::floor(gx), fy0 = std::floor(gy), fz0 = std::floor(gz);
  const auto i0 = static_cast<int64_t>(fx0), j0 = static_cast<int64_t>(fy0), k0 = static_cast<int64_t>(fz0);
  const double fx = gx - fx0, fy = gy - fy0, fz = gz - fz0;
  double c[2][2][2];
  for (int dk = 0; dk < 2; ++dk)
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) {
        const float v = raw(i0 + di, j0 + dj, k0 + dk);
        if (std::isnan(v)) return std::nullopt;
        c[dk][dj][di] = v;
      }
  const double x00 = c[0][0][0] + fx * (c[0][0][1] - c[0][0][0]);
  const double x10 = c[0][1][0] + fx * (c[0][1][1] - c[0][1][0]);
  const double x01 = c[1][0][0] + fx * (c[1][0][1] - c[1][0][0]);
  const double x11 = c[1][1][0] + fx * (c[1][1][1] - c[1][1][0]);
  const double y0 = x00 + fy * (x10 - x00);
  const double y1 = x01 + fy * (x11 - x01);
  return y0 + fz * (y1 - y0);
}

NarrowBandSdf build_sdf(const SegmentationVolume& seg, Label label, int band_halfwidth) {
  const GridGeometry& g = seg.grid;
  const auto& d = g.dims;

  // bounding box of the label
  Index3 lo{d[0], d[1], d[2]}, hi{-1, -1, -1};
  for (int64_t k = 0; k < d[2]; ++k)
    for (int64_t j = 0; j < d[1]; ++j)
      for (int64_t i = 0; i < d[0]; ++i)
        if (seg.at(i, j, k) == label) {
          lo = {std::min(lo[0], i), std::min(lo[1], j), std::min(lo[2], k)};
          hi = {std::max(hi[0], i), std::max(hi[1], j), std::max(hi[2], k)};
        }
  if (hi[0] < 0) throw std::invalid_argument("label " + std::to_string(label) + " does not occur in the volume");

  const double limit = band_halfwidth * g.max_spacing();
  // widest index reach of the band along any axis, plus the seeding stencil
  int64_t pad = 2;
  for (int a = 0; a < 3; ++a) pad = std::max<int64_t>(pad, static_cast<int64_t>(std::ceil(limit / g.spacing[a])) + 2);
  Box box;
  for (int a = 0; a < 3; ++a) {
    box.lo[a] = std::max<int64_t>(0, lo[a] - pad);
    box.hi[a] = std::min<int64_t>(d[a], hi[a] + pad + 1);
  }

  auto member = [&](int64_t i, int64_t j, int64_t k) { return g.inside(i, j, k) && seg.at(i, j, k) == label; };

  std::vector<double> u(box.size(), INFINITY);
  const Vec3& s = g.spacing;

  // exact distances to nearby boundary faces; voxel a and a + e_axis straddle each face
  for (int64_t k = box.lo[2] - 1; k < box.hi[2]; ++k)
    for (int64_t j = box.lo[1] - 1; j < box.hi[1]; ++j)
      for (int64_t i = box.lo[0] - 1; i < box.hi[0]; ++i) {
        const Index3 a{i, j, k};
        const bool m = member(i, j, k);
        for (int axis = 0; axis < 3; ++axis) {
          Index3 n = a;
          n[axis] += 1;
          if (m == member(n[0], n[1], n[2])) continue;
          const double plane = g.origin[axis] + static_cast<double>(n[axis]) * s[axis];
          const int e1 = (axis + 1) % 3, e2 = (axis + 2) % 3;
          const double lo1 = g.origin[e1] + static_cast<double>(a[e1]) * s[e1];
          const double lo2 = g.origin[e2] + static_cast<double>(a[e2]) * s[e2];
          Index3 vlo{i - 2, j - 2, k - 2}, vhi{i + 2, j + 2, k + 2};
          vhi[axis] += 1;
          for (int64_t vk = vlo[2]; vk <= vhi[2]; ++vk)
            for (int64_t vj = vlo[1]; vj <= vhi[1]; ++vj)
              for (int64_t vi = vlo[0]; vi <= vhi[0]; ++vi) {
                if (!box.contains(vi, vj, vk)) continue;
                const Vec3 c = g.voxel_center(vi, vj, vk);
                const double da = c[axis] - plane;
                const double d1 = std::max({lo1 - c[e1], 0.0, c[e1] - (lo1 + s[e1])});
                const double d2 = std::max({lo2 - c[e2], 0.0, c[e2] - (lo2 + s[e2])});
                double& cell = u[box.at(vi, vj, vk)];
                cell = std::min(cell, std::sqrt(da * da + d1 * d1 + d2 * d2));
              }
        }
      }

  // Staircase face distances are first-order accurate at best and give terraced normals. The
  // seeds on either side of a face take the distance to the 0.5 level of a Gaussian-smoothed
  // membership field instead, capped by the face distance; the sign always follows membership.
  const int radius = 3;
  const double sigma_vox = 1.0;
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int t = -radius; t <= radius; ++t) ksum += kernel[t + radius] = std::exp(-0.5 * t * t / (sigma_vox * sigma_vox));
  for (double& w : kernel) w /= ksum;
  Box ext = box;
  for (int a = 0; a < 3; ++a) {
    ext.lo[a] -= radius + 1;
    ext.hi[a] += radius + 1;
  }
  std::vector<double> phi(ext.size()), tmp(ext.size());
  for (int64_t k = ext.lo[2]; k < ext.hi[2]; ++k)
    for (int64_t j = ext.lo[1]; j < ext.hi[1]; ++j)
      for (int64_t i = ext.lo[0]; i < ext.hi[0]; ++i) phi[ext.at(i, j, k)] = member(i, j, k) ? 1.0 : 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int64_t k = ext.lo[2]; k < ext.hi[2]; ++k)
      for (int64_t j = ext.lo[1]; j < ext.hi[1]; ++j)
        for (int64_t i = ext.lo[0]; i < ext.hi[0]; ++i) {
          double acc = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            Index3 q{i, j, k};
            q[axis] = std::clamp<int64_t>(q[axis] + t, ext.lo[axis], ext.hi[axis] - 1);
            acc += kernel[t + radius] * phi[ext.at(q[0], q[1], q[2])];
          }
          tmp[ext.at(i, j, k)] = acc;
        }
    phi.swap(tmp);
  }
  auto phi_at = [&](int64_t i, int64_t j, int64_t k) { return phi[ext.at(i, j, k)] - 0.5; };
  std::vector<double> seeded(box.size(), INFINITY);
  for (int64_t k = box.lo[2]; k < box.hi[2]; ++k)
    for (int64_t j = box.lo[1]; j < box.hi[1]; ++j)
      for (int64_t i = box.lo[0]; i < box.hi[0]; ++i) {
        const bool m = member(i, j, k);
        if (m == member(i + 1, j, k) && m == member(i - 1, j, k) && m == member(i, j + 1, k) &&
            m == member(i, j - 1, k) && m == member(i, j, k + 1) && m == member(i, j, k - 1))
          continue;
        const double f = phi_at(i, j, k);
        const Vec3 grad{(phi_at(i + 1, j, k) - phi_at(i - 1, j, k)) / (2 * s.x),
                        (phi_at(i, j + 1, k) - phi_at(i, j - 1, k)) / (2 * s.y),
                        (phi_at(i, j, k + 1) - phi_at(i, j, k - 1)) / (2 * s.z)};
        const double gn = norm(grad);
        double est = 0.0;
        if ((f > 0.0) == m && gn > 1e-12) est = std::abs(f) / gn;
        const size_t at = box.at(i, j, k);
        seeded[at] = std::max(1e-3 * g.min_spacing(), std::min(est, u[at] + 0.5 * g.min_spacing()));
      }
  u.swap(seeded);

  // fast sweeping over the work box
  const std::array<double, 3> h{s.x, s.y, s.z};
  auto at = [&](int64_t i, int64_t j, int64_t k) -> double {
    return box.contains(i, j, k) ? u[box.at(i, j, k)] : INFINITY;
  };
  const double cap = limit + 2.0 * g.max_spacing();
  for (int iter = 0; iter < 4; ++iter) {
    bool changed = false;
    for (int dir = 0; dir < 8; ++dir) {
      const int64_t sx = (dir & 1) ? -1 : 1, sy = (dir & 2) ? -1 : 1, sz = (dir & 4) ? -1 : 1;
      for (int64_t kk = 0; kk < box.nz(); ++kk) {
        const int64_t k = sz > 0 ? box.lo[2] + kk : box.hi[2] - 1 - kk;
        for (int64_t jj = 0; jj < box.ny(); ++jj) {
          const int64_t j = sy > 0 ? box.lo[1] + jj : box.hi[1] - 1 - jj;
          for (int64_t ii = 0; ii < box.nx(); ++ii) {
            const int64_t i = sx > 0 ? box.lo[0] + ii : box.hi[0] - 1 - ii;
            const std::array<double, 3> a{std::min(at(i - 1, j, k), at(i + 1, j, k)),
                                          std::min(at(i, j - 1, k), at(i, j + 1, k)),
                                          std::min(at(i, j, k - 1), at(i, j, k + 1))};
            double cand = godunov(a, h);
            if (cand > cap) continue;
            double& cell = u[box.at(i, j, k)];
            if (cand < cell - 1e-12) {
              cell = cand;
              changed = true;
            }
          }
        }
      }
    }
    if (!changed) break;
  }

  NarrowBandSdf sdf(g, label, band_halfwidth);
  for (int64_t k = box.lo[2]; k < box.hi[2]; ++k)
    for (int64_t j = box.lo[1]; j < box.hi[1]; ++j)
      for (int64_t i = box.lo[0]; i < box.hi[0]; ++i) {
        const double v = u[box.at(i, j, k)];
        if (v <= limit) sdf.set(i, j, k, member(i, j, k) ? -v : v);
      }
  return sdf;
}

std::optional<Vec3> surface_normal(const NarrowBandSdf& sdf, const Vec3& point) {
  const Vec3& h = sdf.grid().spacing;
  Vec3 grad;
  for (int a = 0; a < 3; ++a) {
    Vec3 step;
    step[a] = h[a];
    const auto fp = sdf.sample(point + step);
    const auto fm = sdf.sample(point - step);
    if (!fp || !fm) return std::nullopt;
    grad[a] = (*fp - *fm) / (2.0 * h[a]);
  }
  const double n = norm(grad);
  if (!(n > 1e-9)) return std::nullopt;
  return grad / n;
}

// ---------------------------------------------------------------------------------------------
// scene

const TissueProperties& AnatomyVolume::tissue(Label label) const {
  const auto it = tissues.find(label);
  if (it == tissues.end()) throw std::out_of_range("no tissue entry for label " + std::to_string(label));
  return it->second;
}

void AnatomyVolume::validate() const {
  if (!tissues.count(0)) throw std::invalid_argument("tissue table has no entry for background label 0");
  for (Label l : label_grid.labels_present()) {
    if (!tissues.count(l)) throw std::invalid_argument("tissue table has no entry for label " + std::to_string(l));
    if (!sdfs.count(l)) throw std::invalid_argument("no signed distance field for label " + std::to_string(l));
  }
}

AnatomyVolume build_anatomy(const SegmentationVolume& seg, const TissueTable& tissues, int tile_size,
                            int band_halfwidth, unsigned threads) {
  AnatomyVolume scene;
  scene.tissues = tissues;
  scene.label_grid = build_sparse_grid(seg, tile_size);
  const std::vector<Label> present = scene.label_grid.labels_present();
  if (!tissues.count(0)) throw std::invalid_argument("tissue table has no entry for background label 0");
  for (Label l : present)
    if (!tissues.count(l)) throw std::invalid_argument("tissue table has no entry for label " + std::to_string(l));

  std::vector<NarrowBandSdf> built(present.size());
  parallel_for(present.size(), threads, [&](size_t n, unsigned) { built[n] = build_sdf(seg, present[n], band_halfwidth); });
  for (size_t n = 0; n < present.size(); ++n) scene.sdfs.emplace(present[n], std::move(built[n]));
  return scene;
}

namespace {
constexpr char kMagic[4] = {'S', 'V', 'D', 'B'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_scene(const AnatomyVolume& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const GridGeometry& g = scene.label_grid.grid();
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  for (int a = 0; a < 3; ++a) write_pod(out, g.dims[a]);
  for (int a = 0; a < 3; ++a) write_pod(out, g.spacing[a]);
  for (int a = 0; a < 3; ++a) write_pod(out, g.origin[a]);
  write_pod(out, static_cast<int32_t>(scene.label_grid.tile_size()));

  const auto& lt = scene.label_grid.tile_origins();
  write_pod(out, static_cast<uint64_t>(lt.size()));
  for (size_t t = 0; t < lt.size(); ++t) {
    for (int a = 0; a < 3; ++a) write_pod(out, lt[t][a]);
    out.write(reinterpret_cast<const char*>(scene.label_grid.tile_data(t)),
              static_cast<std::streamsize>(scene.label_grid.tile_volume() * sizeof(Label)));
  }

  write_pod(out, static_cast<uint32_t>(scene.sdfs.size()));
  for (const auto& [label, sdf] : scene.sdfs) {
    write_pod(out, label);
    write_pod(out, static_cast<int32_t>(sdf.band_halfwidth()));
    write_pod(out, static_cast<int32_t>(sdf.tile_size()));
    const auto& st = sdf.tile_origins();
    write_pod(out, static_cast<uint64_t>(st.size()));
    for (size_t t = 0; t < st.size(); ++t) {
      for (int a = 0; a < 3; ++a) write_pod(out, st[t][a]);
      out.write(reinterpret_cast<const char*>(sdf.tile_data(t)),
                static_cast<std::streamsize>(sdf.tile_volume() * sizeof(float)));
    }
  }

  const std::string tissues = tissue_table_json(scene.tissues).dump();
  write_pod(out, static_cast<uint64_t>(tissues.size()));
  out.write(tissues.data(), static_cast<std::streamsize>(tissues.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

AnatomyVolume load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error(path.string() + ": not an SVDB scene");
  const auto version = read_pod<uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("unsupported scene version " + std::to_string(version));

  GridGeometry g;
  for (int a = 0; a < 3; ++a) g.dims[a] = read_pod<int64_t>(in);
  for (int a = 0; a < 3; ++a) g.spacing[a] = read_pod<double>(in);
  for (int a = 0; a < 3; ++a) g.origin[a] = read_pod<double>(in);
  const auto tile_size = read_pod<int32_t>(in);

  AnatomyVolume scene;
  scene.label_grid = SparseLabelGrid(g, tile_size);
  const auto label_tiles = read_pod<uint64_t>(in);
  std::vector<Label> block(scene.label_grid.tile_volume());
  for (uint64_t t = 0; t < label_tiles; ++t) {
    Index3 o;
    for (int a = 0; a < 3; ++a) o[a] = read_pod<int64_t>(in);
    in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(Label)));
    if (!in) throw std::runtime_error("truncated scene file");
    for (size_t n = 0; n < block.size(); ++n) {
      const int64_t i = o[0] + static_cast<int64_t>(n % tile_size);
      const int64_t j = o[1] + static_cast<int64_t>((n / tile_size) % tile_size);
      const int64_t k = o[2] + static_cast<int64_t>(n / (static_cast<size_t>(tile_size) * tile_size));
      if (block[n] != 0 && g.inside(i, j, k)) scene.label_grid.set(i, j, k, block[n]);
    }
  }

  const auto sdf_count = read_pod<uint32_t>(in);
  for (uint32_t s = 0; s < sdf_count; ++s) {
    const auto label = read_pod<Label>(in);
    const auto band = read_pod<int32_t>(in);
    const auto ts = read_pod<int32_t>(in);
    NarrowBandSdf sdf(g, label, band, ts);
    const auto tiles = read_pod<uint64_t>(in);
    std::vector<float> values(sdf.tile_volume());
    for (uint64_t t = 0; t < tiles; ++t) {
      Index3 o;
      for (int a = 0; a < 3; ++a) o[a] = read_pod<int64_t>(in);
      in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
      if (!in) throw std::runtime_error("truncated scene file");
      for (size_t n = 0; n < values.size(); ++n) {
        if (std::isnan(values[n])) continue;
        const int64_t i = o[0] + static_cast<int64_t>(n % ts);
        const int64_t j = o[1] + static_cast<int64_t>((n / ts) % ts);
        const int64_t k = o[2] + static_cast<int64_t>(n / (static_cast<size_t>(ts) * ts));
        sdf.set(i, j, k, values[n]);
      }
    }
    scene.sdfs.emplace(label, std::move(sdf));
  }

  const auto len = read_pod<uint64_t>(in);
  std::string tissues(len, '\0');
  in.read(tissues.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated scene file");
  scene.tissues = tissue_table_from_json(json::parse(tissues));
  scene.validate();
  return scene;
}

}  // namespace echotrace
