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

#include "echotrace/pathtracer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "echotrace/parallel.hpp"

namespace echotrace {

void SimParams::validate() const {
  if (rays_per_scanline < 1) throw std::invalid_argument("rays_per_scanline must be at least 1");
  if (max_collisions < 0) throw std::invalid_argument("max_collisions must be non-negative");
  if (!(beam_coherence_c0 >= 0.0 && beam_coherence_c0 <= 1.0))
    throw std::invalid_argument("beam coherence C0 must lie in [0, 1]");
  if (!(cone_sigma > 0.0)) throw std::invalid_argument("cone sigma must be positive");
  if (!(cone_a >= 0.0 && cone_a < cone_b && cone_b <= kPi))
    throw std::invalid_argument("cone bounds must satisfy 0 <= a < b <= pi");
}

double attenuate(double intensity, double distance, double alpha, double frequency) {
  if (distance <= 0.0 || alpha == 0.0) return intensity;
  // l[cm] * f[MHz] = distance / 10 * frequency / 1e6
  return intensity * std::pow(10.0, -alpha * distance * frequency * 1e-8);
}

FresnelResult reflection_transmission(double z1, double z2, double cos_theta1) {
  if (!(z1 > 0.0) || !(z2 > 0.0)) throw std::invalid_argument("impedances must be positive");
  const double c1 = std::clamp(cos_theta1, 0.0, 1.0);
  const double ratio = z1 / z2;
  const double radicand = 1.0 - ratio * ratio * (1.0 - c1 * c1);
  FresnelResult out;
  if (z1 == z2) {
    out.cos_theta2 = c1;
    return out;
  }
  if (radicand < 0.0) {
    out.R = 1.0;
    out.T = 0.0;
    out.cos_theta2 = 0.0;
    out.total_internal = true;
    return out;
  }
  out.cos_theta2 = std::sqrt(radicand);
  const double num = z2 * out.cos_theta2 - z1 * c1;
  const double den = z2 * out.cos_theta2 + z1 * c1;
  out.R = den > 0.0 ? (num / den) * (num / den) : 1.0;
  out.T = 1.0 - out.R;
  return out;
}

TruncatedNormal::TruncatedNormal(double mean, double sigma, double a, double b)
    : mu_(mean), sigma_(sigma), a_(a), b_(b) {
  if (!(sigma > 0.0) || !(a < b)) throw std::invalid_argument("invalid truncated normal");
  const boost::math::normal_distribution<double> n;
  cdf_a_ = boost::math::cdf(n, (a - mean) / sigma);
  cdf_b_ = boost::math::cdf(n, (b - mean) / sigma);
  z_ = cdf_b_ - cdf_a_;
  if (!(z_ > 0.0)) throw std::invalid_argument("truncation interval has no mass");
}

double TruncatedNormal::pdf(double x) const {
  if (x < a_ || x > b_) return 0.0;
  const double s = (x - mu_) / sigma_;
  return std::exp(-0.5 * s * s) / (std::sqrt(2.0 * kPi) * sigma_ * z_);
}

double TruncatedNormal::cdf(double x) const {
  if (x <= a_) return 0.0;
  if (x >= b_) return 1.0;
  const boost::math::normal_distribution<double> n;
  return (boost::math::cdf(n, (x - mu_) / sigma_) - cdf_a_) / z_;
}

double TruncatedNormal::quantile(double u) const {
  if (u <= 0.0) return a_;
  if (u >= 1.0) return b_;
  const boost::math::normal_distribution<double> n;
  const double p = cdf_a_ + u * z_;
  if (p <= 0.0) return a_;
  if (p >= 1.0) return b_;
  return std::clamp(mu_ + sigma_ * boost::math::quantile(n, p), a_, b_);
}

double TruncatedNormal::mean() const {
  const double al = (a_ - mu_) / sigma_, be = (b_ - mu_) / sigma_;
  const double phi_a = std::exp(-0.5 * al * al) / std::sqrt(2.0 * kPi);
  const double phi_b = std::exp(-0.5 * be * be) / std::sqrt(2.0 * kPi);
  return mu_ + sigma_ * (phi_a - phi_b) / z_;
}

double TruncatedNormal::variance() const {
  const double al = (a_ - mu_) / sigma_, be = (b_ - mu_) / sigma_;
  const double phi_a = std::exp(-0.5 * al * al) / std::sqrt(2.0 * kPi);
  const double phi_b = std::exp(-0.5 * be * be) / std::sqrt(2.0 * kPi);
  const double t1 = (al * phi_a - be * phi_b) / z_;
  const double t2 = (phi_a - phi_b) / z_;
  return sigma_ * sigma_ * (1.0 + t1 - t2 * t2);
}

namespace {

// Duff et al., "Building an orthonormal basis, revisited", JCGT 2017.
void orthonormal_basis(const Vec3& n, Vec3& b1, Vec3& b2) {
  const double sign = std::copysign(1.0, n.z);
  const double a = -1.0 / (sign + n.z);
  const double b = n.x * n.y * a;
  b1 = {1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x};
  b2 = {b, sign + n.y * n.y * a, -n.y};
}

}  // namespace

ConeSample cone_direction(const Vec3& axis, const SimParams& params, double u_polar, double u_azimuth) {
  const double len = norm(axis);
  if (!(len > 0.0) || !std::isfinite(len)) throw std::invalid_argument("degenerate cone axis");
  const Vec3 n = axis / len;
  const TruncatedNormal psi(params.cone_mean, params.cone_sigma, params.cone_a, params.cone_b);
  ConeSample s;
  s.azimuth = 2.0 * kPi * u_azimuth;
  s.polar = psi.quantile(u_polar);
  Vec3 b1, b2;
  orthonormal_basis(n, b1, b2);
  const double sp = std::sin(s.polar);
  s.direction = std::cos(s.polar) * n + sp * (std::cos(s.azimuth) * b1 + std::sin(s.azimuth) * b2);
  s.direction = normalized(s.direction);
  s.pdf = sp > 0.0 ? psi.pdf(s.polar) / (2.0 * kPi * sp) : std::numeric_limits<double>::infinity();
  return s;
}

ConeSample sample_cone_direction(const Vec3& axis, const SimParams& params, RandomStream& rng) {
  const double u_azimuth = rng.uniform();
  const double u_polar = rng.uniform();
  return cone_direction(axis, params, u_polar, u_azimuth);
}

RayState scatter_event(const RayState& ray, const Boundary& boundary, const SimParams& params, RandomStream& rng,
                       ScatterOutcome* outcome) {
  const Vec3& v = ray.direction;
  const Vec3& n = boundary.normal;
  const double c1 = std::clamp(-dot(n, v), 0.0, 1.0);
  const FresnelResult fr = reflection_transmission(boundary.z1, boundary.z2, c1);
  const double u = rng.uniform();
  const bool reflect = u < fr.R;

  Vec3 axis;
  if (reflect) {
    axis = v + 2.0 * c1 * n;
  } else {
    const double eta = boundary.z1 / boundary.z2;
    axis = eta * v + (eta * c1 - fr.cos_theta2) * n;
  }
  axis = normalized(axis);
  const ConeSample s = sample_cone_direction(axis, params, rng);

  RayState out = ray;
  out.direction = s.direction;
  out.collisions = ray.collisions + 1;
  const double f = reflect ? fr.R : fr.T;
  out.path_weight = std::isinf(s.pdf) ? 0.0 : ray.path_weight * f * c1 / s.pdf;
  if (outcome) {
    outcome->reflected = reflect;
    outcome->fresnel = fr;
    outcome->cos_theta1 = c1;
    outcome->sample = s;
    outcome->axis = axis;
  }
  return out;
}

double boundary_echo(double intensity_at_p, double z1, double z2, double cos_theta, const TissueProperties& tissue) {
  const double r0 = (z2 - z1) / (z2 + z1);
  if (r0 == 0.0 || intensity_at_p <= 0.0) return 0.0;
  double c = std::clamp(cos_theta, 0.0, 1.0);
  if (tissue.gamma < 0.0) c = std::max(c, 1e-4);
  return r0 * r0 * std::pow(intensity_at_p, tissue.tau) * std::pow(c, tissue.gamma);
}

void deposit(IntensityMap& map, const Scanline& scanline, const Vec3& point, double value, const SimParams& params) {
  if (scanline.index < 0 || scanline.index >= map.num_scanlines) throw std::out_of_range("scanline outside map");
  const Vec3 rel = point - scanline.origin;
  const double r = dot(rel, scanline.direction);
  const double k = std::round(r / scanline.sample_spacing);
  if (k < 0.0 || k >= static_cast<double>(map.num_samples)) return;
  const double d = norm(rel - r * scanline.direction);
  const size_t at = map.index(scanline.index, static_cast<int>(k));
  map.intensity[at] += value * beam_coherence(params.beam_coherence_c0, d);
  map.hits[at] += 1;
}

namespace {

struct Medium {
  double z = 0.0;
  double kappa = 0.0;  // natural-log attenuation rate per mm
  const TissueProperties* tissue = nullptr;
};

class ScanlineTracer {
 public:
  ScanlineTracer(const AnatomyVolume& anatomy, const SimParams& params, double frequency,
                 const std::vector<Medium>& media)
      : anatomy_(anatomy), grid_(anatomy.label_grid), params_(params), media_(media) {
    const GridGeometry& g = grid_.grid();
    step_ = 0.5 * g.min_spacing();
    volume_ = g.bounds();
    diagonal_ = norm(volume_.hi - volume_.lo);
    (void)frequency;
  }

  void trace(const Scanline& line, double* intensity, double* echo, uint32_t* hits) {
    line_ = &line;
    out_i_ = intensity;
    out_e_ = echo;
    out_h_ = hits;
    dr_ = line.sample_spacing;
    ns_ = line.num_samples;
    r_min_ = -0.5 * dr_;
    r_max_ = (ns_ - 0.5) * dr_;
    max_path_ = 2.0 * line.depth() + 2.0 * diagonal_;

    RayState ray;
    ray.position = line.origin;
    ray.direction = line.direction;
    ray.current_label = grid_.label_at(line.origin);
    propagate(ray, 1.0, 0, true, true);
  }

 private:
  const Medium& medium(Label l) const { return media_[l]; }

  double radial(const Vec3& p) const { return dot(p - line_->origin, line_->direction); }

  // Deposits I(P) over the radial bins crossed by a straight piece; returns the attenuation at its end.
  double deposit_piece(const Vec3& p, const Vec3& dir, double len, double kappa, double atten, double weight,
                       double share, bool include_start) {
    const Vec3& s = line_->direction;
    const double ra = radial(p);
    const double c = dot(dir, s);
    const double rb = ra + len * c;
    const double scale = share * weight;
    if (scale > 0.0 && atten > 0.0) {
      int64_t k0 = 0, k1 = -1, step = 1;
      if (c > 1e-12) {
        k0 = static_cast<int64_t>(include_start ? std::ceil(ra / dr_) : std::floor(ra / dr_) + 1);
        k1 = static_cast<int64_t>(std::ceil(rb / dr_)) - 1;
        k0 = std::max<int64_t>(k0, 0);
        k1 = std::min<int64_t>(k1, ns_ - 1);
      } else if (c < -1e-12) {
        step = -1;
        k0 = static_cast<int64_t>(include_start ? std::floor(ra / dr_) : std::ceil(ra / dr_) - 1);
        k1 = static_cast<int64_t>(std::floor(rb / dr_)) + 1;
        k0 = std::min<int64_t>(k0, ns_ - 1);
        k1 = std::max<int64_t>(k1, 0);
      }
      if ((step > 0 && k0 <= k1) || (step < 0 && k0 >= k1)) {
        const Vec3 u0 = p - line_->origin - ra * s;
        const Vec3 v = dir - c * s;
        const double c0 = params_.beam_coherence_c0;
        const double dt = dr_ / std::abs(c);
        double t = (static_cast<double>(k0) * dr_ - ra) / c;
        double a = atten * std::exp(-kappa * t);
        const double decay = std::exp(-kappa * dt);
        for (int64_t k = k0;; k += step) {
          const double d = norm(u0 + t * v);
          const double w = d > 0.0 ? c0 / (c0 + d) : 1.0;
          out_i_[k] += scale * a * w;
          out_h_[k] += 1;
          if (k == k1) break;
          t += dt;
          a *= decay;
        }
      }
    }
    return atten * std::exp(-kappa * len);
  }

  void deposit_echo(const Vec3& p, double value) {
    const double r = radial(p);
    const double k = std::round(r / dr_);
    if (k < 0.0 || k >= ns_) return;
    const double d = norm(p - line_->origin - r * line_->direction);
    out_e_[static_cast<size_t>(k)] += value * beam_coherence(params_.beam_coherence_c0, d);
  }

  // Length left before the projection leaves the scanline range; infinite when moving laterally.
  double range_left(const Vec3& p, const Vec3& dir) const {
    const double r = radial(p);
    const double c = dot(dir, line_->direction);
    if (c > 1e-12) return (r_max_ - r) / c;
    if (c < -1e-12) return (r - r_min_) / -c;
    return (r >= r_min_ && r <= r_max_) ? std::numeric_limits<double>::infinity() : -1.0;
  }

  Vec3 boundary_normal(Label l1, Label l2, const Vec3& p_mid, const Vec3& p_lo, const Vec3& p_hi,
                       const Vec3& dir) const {
    const Label object = l2 != 0 ? l2 : l1;
    std::optional<Vec3> n;
    const auto it = anatomy_.sdfs.find(object);
    if (it != anatomy_.sdfs.end()) n = surface_normal(it->second, p_mid);
    if (!n) {
      const GridGeometry& g = grid_.grid();
      const Index3 a = g.voxel_of(p_lo), b = g.voxel_of(p_hi);
      int axis = -1;
      for (int ax = 0; ax < 3; ++ax)
        if (a[ax] != b[ax] && (axis < 0 || std::abs(dir[ax]) > std::abs(dir[axis]))) axis = ax;
      Vec3 face;
      if (axis < 0) {
        face = dir;
      } else {
        face[axis] = 1.0;
      }
      n = face;
    }
    Vec3 out = *n;
    if (dot(out, dir) > 0.0) out = -out;
    return out;
  }

  void propagate(RayState ray, double share, uint32_t ray_index, bool shared_primary, bool first_piece) {
    double travelled = 0.0;
    bool include_start = first_piece;
    while (true) {
      if (ray.intensity * ray.path_weight <= 1e-300) return;
      const Vec3 p = ray.position;
      const Vec3 dir = ray.direction;
      const double left = range_left(p, dir);
      if (left < 0.0 || travelled >= max_path_) return;
      const double budget = std::min(left, max_path_ - travelled);
      const Medium& med = medium(ray.current_label);

      double len = step_;
      if (!volume_.contains(p)) {
        double tn, tf;
        if (!intersect_box(volume_, p, dir, tn, tf) || tn >= budget) {
          // no boundary ahead: finish the line in the background medium
          deposit_piece(p, dir, budget, med.kappa, ray.intensity, ray.path_weight, share, include_start);
          return;
        }
        len = std::max(tn, 0.0) + 1e-9;
      } else if (ray.current_label == 0) {
        const Index3 v = grid_.grid().voxel_of(p);
        if (!grid_.tile_occupied(v[0], v[1], v[2])) {
          double tn, tf;
          const Box3 tile = grid_.tile_box(v[0], v[1], v[2]);
          if (intersect_box(tile, p, dir, tn, tf)) len = std::max(tf, step_ * 1e-3) + 1e-9;
        }
      }
      if (len > budget) {
        len = budget;
      }

      const Vec3 q = p + len * dir;
      const Label lq = grid_.label_at(q);
      if (lq == ray.current_label) {
        ray.intensity = deposit_piece(p, dir, len, med.kappa, ray.intensity, ray.path_weight, share, include_start);
        include_start = false;
        ray.position = q;
        travelled += len;
        if (len >= budget) return;
        continue;
      }

      // locate the label change
      double lo = 0.0, hi = len;
      while (hi - lo > step_ / 64.0) {
        const double mid = 0.5 * (lo + hi);
        if (grid_.label_at(p + mid * dir) == ray.current_label) lo = mid;
        else hi = mid;
      }
      const double tc = 0.5 * (lo + hi);
      const Label l1 = ray.current_label;
      const Vec3 p_hi = p + hi * dir;
      const Label l2 = grid_.label_at(p_hi);
      ray.intensity = deposit_piece(p, dir, tc, med.kappa, ray.intensity, ray.path_weight, share, include_start);
      include_start = false;
      travelled += hi;
      const Medium& m2 = medium(l2);
      if (med.z == m2.z) {
        ray.position = p_hi;
        ray.current_label = l2;
        continue;
      }

      const Vec3 p_lo = p + lo * dir;
      const Vec3 pc = p + tc * dir;
      const Vec3 n = boundary_normal(l1, l2, pc, p_lo, p_hi, dir);
      const double cos1 = std::clamp(-dot(n, dir), 0.0, 1.0);
      const TissueProperties& object = *medium(l2 != 0 ? l2 : l1).tissue;
      const double echo = boundary_echo(ray.intensity * ray.path_weight, med.z, m2.z, cos1, object);
      deposit_echo(pc, share * echo * ray.intensity);

      const Boundary boundary{med.z, m2.z, n};
      if (ray.collisions < params_.max_collisions) {
        ray.position = pc;
        if (shared_primary) {
          const int n_rays = params_.rays_per_scanline;
          const double child_share = share / n_rays;
          for (int r = 0; r < n_rays; ++r) {
            RandomStream rng(params_.seed, static_cast<uint32_t>(line_->index), static_cast<uint32_t>(r),
                             static_cast<uint32_t>(ray.collisions));
            ScatterOutcome out;
            RayState child = scatter_event(ray, boundary, params_, rng, &out);
            place_after_event(child, out.reflected ? p_lo : p_hi);
            propagate(child, child_share, static_cast<uint32_t>(r), false, false);
          }
          return;
        }
        RandomStream rng(params_.seed, static_cast<uint32_t>(line_->index), ray_index,
                         static_cast<uint32_t>(ray.collisions));
        ScatterOutcome out;
        ray = scatter_event(ray, boundary, params_, rng, &out);
        place_after_event(ray, out.reflected ? p_lo : p_hi);
        continue;
      }

      // collision budget spent: continue straight with the transmitted fraction
      const FresnelResult fr = reflection_transmission(med.z, m2.z, cos1);
      if (fr.T <= 0.0) return;
      ray.path_weight *= fr.T;
      ray.position = p_hi;
      ray.current_label = l2;
    }
  }

  void place_after_event(RayState& ray, const Vec3& anchor) const {
    ray.position = anchor + 1e-3 * step_ * ray.direction;
    ray.current_label = grid_.label_at(ray.position);
  }

  const AnatomyVolume& anatomy_;
  const SparseLabelGrid& grid_;
  const SimParams& params_;
  const std::vector<Medium>& media_;
  double step_ = 0.0;
  Box3 volume_;
  double diagonal_ = 0.0;

  const Scanline* line_ = nullptr;
  double* out_i_ = nullptr;
  double* out_e_ = nullptr;
  uint32_t* out_h_ = nullptr;
  double dr_ = 0.0;
  int64_t ns_ = 0;
  double r_min_ = 0.0, r_max_ = 0.0, max_path_ = 0.0;
};

}  // namespace

IntensityMap trace_frame(const AnatomyVolume& anatomy, const std::vector<Scanline>& scanlines,
                         const SimParams& params, double frequency, unsigned threads) {
  params.validate();
  anatomy.validate();
  if (!(frequency > 0.0)) throw std::invalid_argument("frequency must be positive");
  if (scanlines.empty()) return {};
  const int ns = scanlines.front().num_samples;
  for (size_t i = 0; i < scanlines.size(); ++i) {
    if (scanlines[i].num_samples != ns) throw std::invalid_argument("scanlines differ in sample count");
    if (scanlines[i].index != static_cast<int>(i)) throw std::invalid_argument("scanline indices must be 0..n-1");
  }

  std::vector<Medium> media(static_cast<size_t>(std::numeric_limits<Label>::max()) + 1);
  for (const auto& [label, t] : anatomy.tissues) {
    media[label].z = t.z;
    media[label].kappa = t.alpha * frequency * 1e-8 * std::log(10.0);
    media[label].tissue = &t;
  }

  IntensityMap map(static_cast<int>(scanlines.size()), ns);
  parallel_for(scanlines.size(), threads, [&](size_t i, unsigned) {
    ScanlineTracer tracer(anatomy, params, frequency, media);
    const int line = static_cast<int>(i);
    tracer.trace(scanlines[i], map.intensity_row(line), map.echo_row(line), map.hits.data() + map.index(line, 0));
  });
  return map;
}

}  // namespace echotrace
