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

#ifndef ECHOTRACE_ANATOMY_HPP
#define ECHOTRACE_ANATOMY_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "echotrace/geometry.hpp"

namespace echotrace {

using Label = uint16_t;

/// Acoustic and scattering properties of one tissue class.
struct TissueProperties {
  std::string name;
  double z = 1.5e6;      ///< acoustic impedance, kg m^-2 s^-1
  double alpha = 0.0;    ///< attenuation, dB cm^-1 MHz^-1
  double c = 1540.0;     ///< speed of sound, m/s
  double mu0 = 0.0;      ///< mean scatterer amplitude
  double sigma0 = 0.0;   ///< scatterer amplitude spread
  double mu1 = 0.0;      ///< probability that a scatterer is generated
  double tau = 1.0;      ///< intensity exponent of the boundary echo
  double gamma = 0.0;    ///< incidence-angle exponent of the boundary echo

  /// Throws std::invalid_argument when a property is out of range.
  void validate() const;
};

using TissueTable = std::map<Label, TissueProperties>;

TissueTable load_tissue_table(const std::filesystem::path& path);
void save_tissue_table(const TissueTable& table, const std::filesystem::path& path);

/// Regular grid geometry. Voxel (i,j,k) covers [origin + i*spacing, origin + (i+1)*spacing).
struct GridGeometry {
  std::array<int64_t, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  bool inside(int64_t i, int64_t j, int64_t k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
  size_t linear(int64_t i, int64_t j, int64_t k) const {
    return static_cast<size_t>(i + dims[0] * (j + dims[1] * k));
  }
  size_t voxel_count() const { return static_cast<size_t>(dims[0] * dims[1] * dims[2]); }
  Vec3 voxel_center(int64_t i, int64_t j, int64_t k) const {
    return {origin.x + (static_cast<double>(i) + 0.5) * spacing.x,
            origin.y + (static_cast<double>(j) + 0.5) * spacing.y,
            origin.z + (static_cast<double>(k) + 0.5) * spacing.z};
  }
  /// Voxel containing p; points on a shared face go to the higher index.
  Index3 voxel_of(const Vec3& p) const {
    return {static_cast<int64_t>(std::floor((p.x - origin.x) / spacing.x)),
            static_cast<int64_t>(std::floor((p.y - origin.y) / spacing.y)),
            static_cast<int64_t>(std::floor((p.z - origin.z) / spacing.z))};
  }
  Box3 bounds() const {
    return {origin, origin + Vec3{dims[0] * spacing.x, dims[1] * spacing.y, dims[2] * spacing.z}};
  }
  double max_spacing() const { return std::max({spacing.x, spacing.y, spacing.z}); }
  double min_spacing() const { return std::min({spacing.x, spacing.y, spacing.z}); }
  void validate() const;
};

/// Dense labelled input volume, x-fastest.
struct SegmentationVolume {
  GridGeometry grid;
  std::vector<Label> labels;

  Label at(int64_t i, int64_t j, int64_t k) const { return labels[grid.linear(i, j, k)]; }
  Label& at(int64_t i, int64_t j, int64_t k) { return labels[grid.linear(i, j, k)]; }

  static SegmentationVolume filled(const GridGeometry& grid, Label value = 0);
};

/**
 * Loads a segmentation from a JSON header and its raw little-endian payload.
 *
 * Header keys: dims, spacing_mm, origin_mm, dtype ("u8" or "u16") and data (payload path,
 * relative to the header).
 */
SegmentationVolume load_segmentation(const std::filesystem::path& header_path);

/// Writes header and payload; dtype is "u8" or "u16".
void save_segmentation(const SegmentationVolume& seg, const std::filesystem::path& header_path,
                       const std::string& dtype = "u16");

/// Label volume stored as fixed-size cubic tiles; all-background tiles are not stored.
class SparseLabelGrid {
 public:
  SparseLabelGrid() = default;
  SparseLabelGrid(const GridGeometry& grid, int tile_size);

  const GridGeometry& grid() const { return grid_; }
  int tile_size() const { return tile_size_; }
  size_t tile_count() const { return tile_origins_.size(); }
  /// Number of tile slots covering the volume, stored or not.
  size_t dense_tile_count() const { return tile_index_.size(); }

  Label label_at_index(int64_t i, int64_t j, int64_t k) const {
    if (!grid_.inside(i, j, k)) return 0;
    const int32_t t = tile_index_[tile_linear(i / tile_size_, j / tile_size_, k / tile_size_)];
    if (t < 0) return 0;
    return blocks_[static_cast<size_t>(t) * tile_volume() + in_tile(i, j, k)];
  }

  /// Label of the voxel containing p, 0 outside the volume.
  Label label_at(const Vec3& p) const {
    const Index3 v = grid_.voxel_of(p);
    return label_at_index(v[0], v[1], v[2]);
  }

  /// True when the tile holding voxel (i,j,k) is stored.
  bool tile_occupied(int64_t i, int64_t j, int64_t k) const {
    if (!grid_.inside(i, j, k)) return false;
    return tile_index_[tile_linear(i / tile_size_, j / tile_size_, k / tile_size_)] >= 0;
  }

  /// World-space box of the tile slot holding voxel (i,j,k).
  Box3 tile_box(int64_t i, int64_t j, int64_t k) const;

  void set(int64_t i, int64_t j, int64_t k, Label value);

  /// Stored tile origins (voxel index of the tile corner), in storage order.
  const std::vector<Index3>& tile_origins() const { return tile_origins_; }
  const Label* tile_data(size_t t) const { return blocks_.data() + t * tile_volume(); }
  size_t tile_volume() const {
    return static_cast<size_t>(tile_size_) * tile_size_ * tile_size_;
  }

  /// Distinct non-zero labels present.
  std::vector<Label> labels_present() const;

 private:
  size_t tile_linear(int64_t ti, int64_t tj, int64_t tk) const {
    return static_cast<size_t>(ti + tiles_dims_[0] * (tj + tiles_dims_[1] * tk));
  }
  size_t in_tile(int64_t i, int64_t j, int64_t k) const {
    return static_cast<size_t>(i % tile_size_ + tile_size_ * (j % tile_size_ + tile_size_ * (k % tile_size_)));
  }
  int32_t ensure_tile(int64_t i, int64_t j, int64_t k);

  GridGeometry grid_;
  int tile_size_ = 8;
  std::array<int64_t, 3> tiles_dims_{0, 0, 0};
  std::vector<int32_t> tile_index_;
  std::vector<Index3> tile_origins_;
  std::vector<Label> blocks_;
};

SparseLabelGrid build_sparse_grid(const SegmentationVolume& seg, int tile_size = 8);

/// Signed distance (mm, negative inside) to one label's boundary, stored in a narrow band.
class NarrowBandSdf {
 public:
  NarrowBandSdf() = default;
  NarrowBandSdf(const GridGeometry& grid, Label label, int band_halfwidth, int tile_size = 8);

  Label label() const { return label_; }
  int band_halfwidth() const { return band_halfwidth_; }
  const GridGeometry& grid() const { return grid_; }
  int tile_size() const { return tile_size_; }
  size_t stored_count() const { return stored_; }
  size_t tile_count() const { return tile_origins_.size(); }

  std::optional<double> value_at_index(int64_t i, int64_t j, int64_t k) const {
    const float v = raw(i, j, k);
    if (std::isnan(v)) return std::nullopt;
    return v;
  }

  /// Trilinear interpolation between voxel centres; empty unless all 8 corners are stored.
  std::optional<double> sample(const Vec3& p) const;

  void set(int64_t i, int64_t j, int64_t k, double value);

  /// Calls fn(i, j, k, value) for each stored voxel.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const size_t tv = tile_volume();
    for (size_t t = 0; t < tile_origins_.size(); ++t) {
      const Index3& o = tile_origins_[t];
      for (size_t n = 0; n < tv; ++n) {
        const float v = values_[t * tv + n];
        if (std::isnan(v)) continue;
        const int64_t i = o[0] + static_cast<int64_t>(n % tile_size_);
        const int64_t j = o[1] + static_cast<int64_t>((n / tile_size_) % tile_size_);
        const int64_t k = o[2] + static_cast<int64_t>(n / (static_cast<size_t>(tile_size_) * tile_size_));
        fn(i, j, k, static_cast<double>(v));
      }
    }
  }

  const std::vector<Index3>& tile_origins() const { return tile_origins_; }
  const float* tile_data(size_t t) const { return values_.data() + t * tile_volume(); }
  size_t tile_volume() const {
    return static_cast<size_t>(tile_size_) * tile_size_ * tile_size_;
  }

 private:
  float raw(int64_t i, int64_t j, int64_t k) const;

  GridGeometry grid_;
  Label label_ = 0;
  int band_halfwidth_ = 3;
  int tile_size_ = 8;
  std::array<int64_t, 3> tiles_dims_{0, 0, 0};
  std::vector<int32_t> tile_index_;
  std::vector<Index3> tile_origins_;
  std::vector<float> values_;
  size_t stored_ = 0;
};

/**
 * Narrow-band signed distance to the boundary of `label`.
 *
 * Boundary voxels are seeded with exact distances to the voxel faces separating the label from
 * everything else; a fast-sweeping eikonal solve extends them over the band.
 *
 * @param band_halfwidth in voxels; values with |d| > band_halfwidth * max spacing are dropped.
 */
NarrowBandSdf build_sdf(const SegmentationVolume& seg, Label label, int band_halfwidth = 3);

/// Unit outward normal from central differences of the interpolated SDF (step = one voxel).
std::optional<Vec3> surface_normal(const NarrowBandSdf& sdf, const Vec3& point);

/// Ray-traceable scene.
struct AnatomyVolume {
  SparseLabelGrid label_grid;
  std::map<Label, NarrowBandSdf> sdfs;
  TissueTable tissues;

  const TissueProperties& tissue(Label label) const;
  /// Throws std::invalid_argument naming the first label without an SDF or tissue entry.
  void validate() const;
};

/**
 * Builds the sparse label grid and one SDF per label present.
 *
 * @param threads worker count for the per-label SDF builds (0 = hardware concurrency).
 */
AnatomyVolume build_anatomy(const SegmentationVolume& seg, const TissueTable& tissues,
                            int tile_size = 8, int band_halfwidth = 3, unsigned threads = 0);

/// Binary scene container ("SVDB" magic, version, grid, SDF bands, tissue table).
void save_scene(const AnatomyVolume& scene, const std::filesystem::path& path);
AnatomyVolume load_scene(const std::filesystem::path& path);

}  // namespace echotrace

#endif /* ECHOTRACE_ANATOMY_HPP */
