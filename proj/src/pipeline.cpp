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

#include "echotrace/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <ostream>
#include <stdexcept>

#include "echotrace/parallel.hpp"
#include "echotrace/random.hpp"
#include "json_io.hpp"

namespace echotrace {

using detail::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

void FrameParams::validate() const {
  transducer.validate();
  sim.validate();
  post.validate();
  if (!(imaging_depth > 0.0)) throw std::invalid_argument("imaging depth must be positive");
  if (!(scatter_density > 0.0)) throw std::invalid_argument("scatter density must be positive");
  if (!(c_ref > 0.0)) throw std::invalid_argument("reference sound speed must be positive");
  if (!(sigma_r >= 0.0)) throw std::invalid_argument("sigma_r must be non-negative");
  if (!(echo_gain >= 0.0)) throw std::invalid_argument("echo gain must be non-negative");
}

FrameParams phantom_frame_params(const PhantomSpec& spec) {
  FrameParams p;
  p.sim.rays_per_scanline = 1000;
  p.sim.max_collisions = 7;
  p.sim.beam_coherence_c0 = 0.1;
  p.post.dynamic_range_db = 75.0;
  p.post.tgc_db_per_cm = 1.5;
  p.post.reject_db = 40.0;
  p.post.pixel_spacing = 0.23;
  p.imaging_depth = spec.imaging_depth;
  p.scatter_density = spec.scatter_density;
  p.c_ref = spec.background.c;
  p.echo_gain = 1.0;
  return p;
}

ScatterSlab imaging_slab(const std::vector<Scanline>& scanlines, const TransducerConfig& cfg, const ProbePose& pose,
                         const BeamProfile& beam) {
  if (scanlines.empty()) throw std::invalid_argument("no scanlines");
  const double depth = scanlines.front().depth();
  const double margin = beam.lateral_cutoff();
  ScatterSlab s;
  s.axis_u = pose.lateral();
  s.axis_v = pose.axis();
  s.thickness = 2.0 * beam.elevational_half_extent();
  s.extent_v = depth + margin;
  if (cfg.geometry == ScanGeometry::Phased) {
    double half = 0.0;
    for (const Scanline& l : scanlines) half = std::max(half, std::abs(l.steering));
    const double x_half = depth * std::sin(std::min(half, kPi / 2)) + margin;
    s.extent_u = 2.0 * x_half;
    s.corner = pose.position - x_half * s.axis_u;
    s.sector = true;
    s.apex_u = x_half;
    s.apex_v = 0.0;
    s.sector_half_angle = half;
    s.sector_radius = depth;
    s.sector_margin = margin;
  } else {
    const double lo = scanlines.front().offset - margin, hi = scanlines.back().offset + margin;
    s.extent_u = hi - lo;
    s.corner = pose.position + lo * s.axis_u;
  }
  return s;
}

FrameResult simulate_frame(const AnatomyVolume& anatomy, const ProbePose& pose, const BeamProfile& beam,
                           const FrameParams& params, uint64_t seed, unsigned threads) {
  params.validate();
  const auto start = Clock::now();
  FrameResult out;
  out.scanlines = make_scanlines(params.transducer, pose, params.imaging_depth, params.c_ref);

  SimParams sim = params.sim;
  sim.seed = combine_seed(seed, 1);
  auto t = Clock::now();
  out.map = trace_frame(anatomy, out.scanlines, sim, params.transducer.center_frequency, threads);
  out.timings.trace_ms = ms_since(t);

  t = Clock::now();
  const ScatterSlab slab = imaging_slab(out.scanlines, params.transducer, pose, beam);
  const std::vector<Scatterer> scatterers =
      generate_scatterers(anatomy, slab, params.scatter_density, combine_seed(seed, 2), threads);
  out.scatterer_count = scatterers.size();
  out.timings.scatter_ms = ms_since(t);

  t = Clock::now();
  const double sigma_r = params.sigma_r > 0.0 ? params.sigma_r : default_sigma_r(params.transducer, params.c_ref);
  const PsfKernel kernel = make_kernel(params.transducer, sigma_r, params.c_ref);
  SynthOptions so;
  so.echo_gain = params.echo_gain;
  so.threads = threads;
  out.rf = synthesize(out.map, scatterers, beam, kernel, out.scanlines, so);
  out.envelope = envelope(out.rf);
  out.timings.synth_ms = ms_since(t);

  t = Clock::now();
  const EnvelopeFrame tgc = apply_tgc(out.envelope, params.post.tgc_db_per_cm, out.scanlines);
  out.scan = resample(tgc, out.scanlines, params.post, threads);
  out.image = scan_convert(log_compress(tgc, params.post), out.scanlines, params.post, threads);
  out.timings.post_ms = ms_since(t);
  out.timings.total_ms = ms_since(start);
  return out;
}

// ---------------------------------------------------------------------------------------------
// JSON conversion

namespace {

template <typename T>
T field(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(where + "." + key + ": wrong type");
  }
}

template <typename T>
std::vector<T> list_field(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return {fallback};
  const json& v = j.at(key);
  try {
    if (v.is_array()) {
      auto out = v.get<std::vector<T>>();
      if (out.empty()) throw std::invalid_argument(where + "." + key + ": empty list");
      return out;
    }
    return {v.get<T>()};
  } catch (const json::exception&) {
    throw std::invalid_argument(where + "." + key + ": wrong type");
  }
}

Vec3 vec3_field(const json& j, const std::string& key, Vec3 fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto v = field<std::vector<double>>(j, key, {}, where);
  if (v.size() != 3) throw std::invalid_argument(where + "." + key + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

json vec3_json(const Vec3& v) { return {v.x, v.y, v.z}; }

TransducerConfig transducer_from(const json& j) {
  const std::string w = "transducer";
  TransducerConfig c;
  c.center_frequency = field(j, "center_frequency_hz", c.center_frequency, w);
  c.sampling_frequency = field(j, "sampling_frequency_hz", c.sampling_frequency, w);
  c.element_width = field(j, "element_width_mm", c.element_width, w);
  c.element_height = field(j, "element_height_mm", c.element_height, w);
  c.kerf = field(j, "kerf_mm", c.kerf, w);
  c.num_elements = field(j, "num_elements", c.num_elements, w);
  const std::string g = field<std::string>(j, "geometry", "phased", w);
  if (g == "phased")
    c.geometry = ScanGeometry::Phased;
  else if (g == "linear")
    c.geometry = ScanGeometry::Linear;
  else
    throw std::invalid_argument("transducer.geometry: expected phased or linear");
  c.fan_angle = field(j, "fan_angle_deg", c.fan_angle * 180.0 / kPi, w) * kPi / 180.0;
  return c;
}

json transducer_json(const TransducerConfig& c) {
  return {{"center_frequency_hz", c.center_frequency},
          {"sampling_frequency_hz", c.sampling_frequency},
          {"element_width_mm", c.element_width},
          {"element_height_mm", c.element_height},
          {"kerf_mm", c.kerf},
          {"num_elements", c.num_elements},
          {"geometry", c.geometry == ScanGeometry::Phased ? "phased" : "linear"},
          {"fan_angle_deg", c.fan_angle * 180.0 / kPi}};
}

json pose_json(const ProbePose& p) {
  return {{"position", vec3_json(p.position)}, {"axis", vec3_json(p.axis())}, {"lateral", vec3_json(p.lateral())}};
}

ProbePose pose_from(const json& j, const std::string& where) {
  const Vec3 position = vec3_field(j, "position", {}, where);
  const Vec3 axis = vec3_field(j, "axis", {0, 0, 1}, where);
  const Vec3 lateral = vec3_field(j, "lateral", {1, 0, 0}, where);
  if (!(norm(axis) > 0.0)) throw std::invalid_argument(where + ".axis: zero vector");
  if (!(norm(cross(axis, lateral)) > 1e-9 * norm(axis) * norm(lateral)))
    throw std::invalid_argument(where + ".lateral: must not be parallel to the axis");
  return ProbePose::look_at(position, axis, lateral);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

bool is_builtin(const std::string& name) {
  for (const std::string& n : builtin_phantom_names())
    if (n == name) return true;
  return false;
}

}  // namespace

ProbePose parse_pose(const std::string& text) {
  try {
    return pose_from(json::parse(text), "pose");
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("pose: ") + e.what());
  }
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("run config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("run config: expected a JSON object");
  const std::string w = "config";
  RunConfig c;
  c.scene = resolve(base_dir, field<std::string>(j, "scene", "", w));
  c.phantom = field<std::string>(j, "phantom", "", w);
  if (!c.phantom.empty() && !is_builtin(c.phantom)) c.phantom = resolve(base_dir, c.phantom).string();
  c.phantom_spacing = field(j, "phantom_spacing_mm", c.phantom_spacing, w);
  c.tissues = resolve(base_dir, field<std::string>(j, "tissues", "", w));

  if (!c.phantom.empty()) c.base = phantom_frame_params(resolve_phantom(c.phantom));
  FrameParams& b = c.base;
  if (j.contains("beam")) {
    const json& beam = j.at("beam");
    const std::string bw = w + ".beam";
    const std::string kind = field<std::string>(beam, "kind", "", bw);
    if (kind == "analytic")
      c.analytic_beam = AnalyticBeam{field(beam, "sigma_l_mm", 1.0, bw), field(beam, "sigma_e_mm", 1.0, bw)};
    else if (kind == "table")
      c.beam_table = resolve(base_dir, field<std::string>(beam, "path", "", bw));
    else
      throw std::invalid_argument(bw + ".kind: expected analytic or table");
  }
  if (j.contains("transducer")) b.transducer = transducer_from(j.at("transducer"));

  const json none = json::object();
  const json& sim = j.contains("simulation") ? j.at("simulation") : none;
  const std::string sw = w + ".simulation";
  c.sweep.rays_per_scanline = list_field(sim, "rays_per_scanline", b.sim.rays_per_scanline, sw);
  c.sweep.max_collisions = list_field(sim, "max_collisions", b.sim.max_collisions, sw);
  c.sweep.beam_coherence_c0 = list_field(sim, "beam_coherence_c0", b.sim.beam_coherence_c0, sw);
  b.sim.cone_sigma = field(sim, "cone_sigma", b.sim.cone_sigma, sw);
  b.sim.cone_a = field(sim, "cone_a", b.sim.cone_a, sw);
  b.sim.cone_b = field(sim, "cone_b", b.sim.cone_b, sw);
  b.sim.cone_mean = field(sim, "cone_mean", b.sim.cone_mean, sw);

  const json& post = j.contains("postproc") ? j.at("postproc") : none;
  const std::string pw = w + ".postproc";
  b.post.tgc_db_per_cm = field(post, "tgc_db_per_cm", b.post.tgc_db_per_cm, pw);
  b.post.pixel_spacing = field(post, "pixel_spacing_mm", b.post.pixel_spacing, pw);
  c.sweep.dynamic_range_db = list_field(post, "dynamic_range_db", b.post.dynamic_range_db, pw);
  c.sweep.reject_db = list_field(post, "reject_db", b.post.reject_db, pw);
  if (post.contains("output_pixels")) {
    const auto px = field<std::vector<int>>(post, "output_pixels", {}, pw);
    if (px.size() != 2) throw std::invalid_argument(pw + ".output_pixels: expected [width, height]");
    b.post.width = px[0];
    b.post.height = px[1];
  }

  b.imaging_depth = field(j, "imaging_depth_mm", b.imaging_depth, w);
  b.scatter_density = field(j, "scatter_density_per_mm2", b.scatter_density, w);
  b.c_ref = field(j, "c_ref_m_s", b.c_ref, w);
  b.sigma_r = field(j, "sigma_r_mm", b.sigma_r, w);
  b.echo_gain = field(j, "echo_gain", b.echo_gain, w);

  if (j.contains("poses")) {
    const json& poses = j.at("poses");
    if (!poses.is_array()) throw std::invalid_argument(w + ".poses: expected a list");
    for (size_t i = 0; i < poses.size(); ++i) {
      const std::string pw2 = w + ".poses[" + std::to_string(i) + "]";
      c.poses.push_back({pose_from(poses[i], pw2), field<std::string>(poses[i], "tag", "", pw2)});
    }
  } else if (!c.phantom.empty()) {
    c.poses.push_back({ProbePose{}, c.phantom.find('/') == std::string::npos ? c.phantom : "phantom"});
  }
  c.output_dir = resolve(base_dir, field<std::string>(j, "output_dir", "out", w));
  const int jobs = field(j, "jobs", 1, w);
  if (jobs < 0) throw std::invalid_argument(w + ".jobs: must be non-negative");
  c.jobs = static_cast<unsigned>(jobs);
  c.seed = field<uint64_t>(j, "seed", 0, w);
  c.write_envelope = field(j, "write_envelope", false, w);
  c.write_rf = field(j, "write_rf", false, w);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  const std::string text = detail::read_file(path);
  try {
    return parse_run_config(text, path.parent_path());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void RunConfig::validate() const {
  if (scene.empty() == phantom.empty()) throw std::invalid_argument("run config needs exactly one of scene or phantom");
  if (!scene.empty() && !fs::exists(scene)) throw std::invalid_argument("scene file not found: " + scene.string());
  if (!phantom.empty() && !is_builtin(phantom) && !fs::exists(phantom))
    throw std::invalid_argument("phantom spec not found: " + phantom);
  if (!tissues.empty() && !fs::exists(tissues)) throw std::invalid_argument("tissue table not found: " + tissues.string());
  if (!beam_table.empty() && !fs::exists(beam_table))
    throw std::invalid_argument("beam table not found: " + beam_table.string());
  if (poses.empty()) throw std::invalid_argument("run config has no poses");
  if (!(phantom_spacing > 0.0)) throw std::invalid_argument("phantom spacing must be positive");
  for (const Variation& v : enumerate_variations(*this)) {
    FrameParams p = base;
    p.sim.rays_per_scanline = v.rays_per_scanline;
    p.sim.max_collisions = v.max_collisions;
    p.sim.beam_coherence_c0 = v.beam_coherence_c0;
    p.post.dynamic_range_db = v.dynamic_range_db;
    p.post.reject_db = v.reject_db;
    p.validate();
  }
}

std::vector<Variation> enumerate_variations(const RunConfig& c) {
  const SweepAxes& s = c.sweep;
  auto or_base = [](const auto& list, auto base) { return list.empty() ? std::vector{base} : list; };
  const auto rays = or_base(s.rays_per_scanline, c.base.sim.rays_per_scanline);
  const auto coll = or_base(s.max_collisions, c.base.sim.max_collisions);
  const auto c0 = or_base(s.beam_coherence_c0, c.base.sim.beam_coherence_c0);
  const auto dr = or_base(s.dynamic_range_db, c.base.post.dynamic_range_db);
  const auto rej = or_base(s.reject_db, c.base.post.reject_db);
  std::vector<Variation> out;
  for (int a : rays)
    for (int b : coll)
      for (double d : c0)
        for (double e : dr)
          for (double f : rej) out.push_back({a, b, d, e, f});
  return out;
}

uint64_t image_seed(uint64_t run_seed, uint64_t pose_index, uint64_t variation_index) {
  return combine_seed(run_seed, pose_index, variation_index);
}

std::string hash_text(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

FrameParams frame_params(const RunConfig& c, const Variation& v) {
  FrameParams p = c.base;
  p.sim.rays_per_scanline = v.rays_per_scanline;
  p.sim.max_collisions = v.max_collisions;
  p.sim.beam_coherence_c0 = v.beam_coherence_c0;
  p.post.dynamic_range_db = v.dynamic_range_db;
  p.post.reject_db = v.reject_db;
  return p;
}

json beam_description(const RunConfig& c) {
  if (c.analytic_beam) return {{"kind", "analytic"}, {"sigma_l_mm", c.analytic_beam->sigma_l}, {"sigma_e_mm", c.analytic_beam->sigma_e}};
  if (!c.beam_table.empty()) return {{"kind", "table"}, {"path", c.beam_table.filename().string()}};
  if (!c.phantom.empty()) return {{"kind", "phantom"}};
  return {{"kind", "analytic"}, {"sigma_l_mm", 1.0}, {"sigma_e_mm", 1.0}};
}

json image_params(const RunConfig& c, const PoseEntry& pose, const Variation& v, uint64_t seed) {
  const FrameParams p = frame_params(c, v);
  json j;
  j["scene"] = c.phantom.empty() ? fs::path(c.scene).filename().string() : fs::path(c.phantom).filename().string();
  j["phantom_spacing_mm"] = c.phantom.empty() ? json(nullptr) : json(c.phantom_spacing);
  j["beam"] = beam_description(c);
  j["transducer"] = transducer_json(p.transducer);
  j["simulation"] = {{"rays_per_scanline", p.sim.rays_per_scanline},
                     {"max_collisions", p.sim.max_collisions},
                     {"beam_coherence_c0", p.sim.beam_coherence_c0},
                     {"cone_sigma", p.sim.cone_sigma},
                     {"cone_a", p.sim.cone_a},
                     {"cone_b", p.sim.cone_b},
                     {"cone_mean", p.sim.cone_mean}};
  j["postproc"] = {{"tgc_db_per_cm", p.post.tgc_db_per_cm},
                   {"dynamic_range_db", p.post.dynamic_range_db},
                   {"reject_db", p.post.reject_db},
                   {"pixel_spacing_mm", p.post.pixel_spacing},
                   {"output_pixels", {p.post.width, p.post.height}}};
  j["imaging_depth_mm"] = p.imaging_depth;
  j["scatter_density_per_mm2"] = p.scatter_density;
  j["c_ref_m_s"] = p.c_ref;
  j["sigma_r_mm"] = p.sigma_r;
  j["echo_gain"] = p.echo_gain;
  j["pose"] = pose_json(pose.pose);
  j["seed"] = seed;
  return j;
}

json grid_json(const PixelGrid& g) {
  return {{"width", g.width},
          {"height", g.height},
          {"pixel_spacing_mm", g.pixel_spacing},
          {"origin_x_mm", g.origin_x},
          {"origin_z_mm", g.origin_z}};
}

PixelGrid grid_from(const json& j, const std::string& where) {
  PixelGrid g;
  g.width = field(j, "width", 0, where);
  g.height = field(j, "height", 0, where);
  g.pixel_spacing = field(j, "pixel_spacing_mm", 0.0, where);
  g.origin_x = field(j, "origin_x_mm", 0.0, where);
  g.origin_z = field(j, "origin_z_mm", 0.0, where);
  if (g.width < 1 || g.height < 1 || !(g.pixel_spacing > 0.0)) throw std::invalid_argument(where + ": bad pixel grid");
  return g;
}

}  // namespace

std::string image_params_json(const RunConfig& config, const PoseEntry& pose, const Variation& variation,
                              uint64_t seed) {
  return image_params(config, pose, variation, seed).dump();
}

void write_scan_image(const ScanImage& image, const fs::path& header_path) {
  const std::string stem = header_path.stem().string();
  json h = grid_json(image.grid);
  h["dtype"] = "f32";
  h["data"] = stem + ".f32";
  h["mask"] = stem + ".mask.u8";
  detail::write_json_file(h, header_path);
  const std::vector<float> v(image.values.begin(), image.values.end());
  std::ofstream raw(header_path.parent_path() / (stem + ".f32"), std::ios::binary);
  raw.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  std::ofstream mask(header_path.parent_path() / (stem + ".mask.u8"), std::ios::binary);
  mask.write(reinterpret_cast<const char*>(image.mask.data()), static_cast<std::streamsize>(image.mask.size()));
  if (!raw || !mask) throw std::runtime_error("failed writing " + header_path.string());
}

ScanImage read_scan_image(const fs::path& header_path) {
  const json h = detail::parse_json_file(header_path);
  ScanImage img;
  img.grid = grid_from(h, header_path.string());
  const size_t n = static_cast<size_t>(img.grid.width) * img.grid.height;
  std::vector<float> v(n);
  std::ifstream raw(header_path.parent_path() / field<std::string>(h, "data", "", header_path.string()), std::ios::binary);
  raw.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (raw.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
    throw std::runtime_error(header_path.string() + ": payload is truncated");
  img.values.assign(v.begin(), v.end());
  img.mask.assign(n, 1);
  const std::string mask = field<std::string>(h, "mask", "", header_path.string());
  if (!mask.empty()) {
    std::ifstream m(header_path.parent_path() / mask, std::ios::binary);
    m.read(reinterpret_cast<char*>(img.mask.data()), static_cast<std::streamsize>(n));
    if (m.gcount() != static_cast<std::streamsize>(n)) throw std::runtime_error(header_path.string() + ": mask is truncated");
  }
  return img;
}

PixelGrid read_sidecar_grid(const fs::path& sidecar_path) {
  const json j = detail::parse_json_file(sidecar_path);
  if (!j.contains("grid")) throw std::invalid_argument(sidecar_path.string() + ": missing field 'grid'");
  return grid_from(j.at("grid"), sidecar_path.string() + ".grid");
}

PhantomSpec resolve_phantom(const std::string& name_or_path) {
  if (is_builtin(name_or_path)) return builtin_phantom(name_or_path);
  if (!fs::exists(name_or_path))
    throw std::invalid_argument("'" + name_or_path + "' is neither a built-in phantom nor a spec file");
  return load_phantom_spec(name_or_path);
}

PhantomScene write_phantom(const PhantomSpec& spec, const fs::path& out_dir, double spacing, unsigned threads) {
  fs::create_directories(out_dir);
  PhantomScene scene = build_phantom(spec, spacing);
  const AnatomyVolume anatomy = build_anatomy(scene.segmentation, scene.tissues, 8, 3, threads);
  save_scene(anatomy, out_dir / "scene.svdb");
  save_segmentation(scene.segmentation, out_dir / "segmentation.json", "u8");
  save_tissue_table(scene.tissues, out_dir / "tissues.json");
  std::ofstream(out_dir / "spec.json") << phantom_spec_to_json(spec) << "\n";
  save_ground_truth(scene.truth, out_dir / "truth.json");
  return scene;
}

RunSummary run_simulation(const RunConfig& config, std::ostream* log) {
  config.validate();
  RunSummary summary;
  std::mutex log_mutex;
  auto say = [&](const std::string& line) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    *log << line << "\n";
  };
  const unsigned jobs = resolve_threads(config.jobs);
  fs::create_directories(config.output_dir);

  AnatomyVolume anatomy;
  std::optional<BeamProfile> beam;
  if (!config.phantom.empty()) {
    const PhantomSpec spec = resolve_phantom(config.phantom);
    PhantomScene scene = build_phantom(spec, config.phantom_spacing);
    for (const std::string& w : scene.warnings) summary.warnings.push_back(w);
    anatomy = build_anatomy(scene.segmentation, scene.tissues, 8, 3, jobs);
    save_ground_truth(scene.truth, config.output_dir / "truth.json");
    beam = phantom_beam_profile(spec);
  } else {
    anatomy = load_scene(config.scene);
  }
  if (!config.tissues.empty()) anatomy.tissues = load_tissue_table(config.tissues);
  anatomy.validate();
  if (config.analytic_beam)
    beam = BeamProfile(*config.analytic_beam);
  else if (!config.beam_table.empty())
    beam = BeamProfile(load_beam_table(config.beam_table));
  else if (!beam)
    beam = BeamProfile(AnalyticBeam{1.0, 1.0});

  const Box3 bounds = anatomy.label_grid.grid().bounds();
  for (size_t p = 0; p < config.poses.size(); ++p)
    if (!bounds.contains(config.poses[p].pose.position))
      summary.warnings.push_back("pose " + std::to_string(p) + " lies outside the volume");
  for (const std::string& w : summary.warnings) say("warning: " + w);

  const std::vector<Variation> variations = enumerate_variations(config);
  const size_t total = config.poses.size() * variations.size();
  summary.records.resize(total);
  std::vector<FrameTimings> timings(total);
  const unsigned workers = static_cast<unsigned>(std::min<size_t>(jobs, total));
  const unsigned per_image = std::max(1u, jobs / std::max(1u, workers));

  parallel_for(total, workers, [&](size_t n, unsigned) {
    const auto start = Clock::now();
    const size_t p = n / variations.size(), v = n % variations.size();
    const PoseEntry& pose = config.poses[p];
    const uint64_t seed = image_seed(config.seed, p, v);
    const FrameResult frame = simulate_frame(anatomy, pose.pose, *beam, frame_params(config, variations[v]), seed, per_image);

    char stem[64];
    std::snprintf(stem, sizeof stem, "img_p%03zu_v%03zu", p, v);
    ManifestRecord& r = summary.records[n];
    r.image = std::string(stem) + ".pgm";
    r.sidecar = std::string(stem) + ".json";
    r.pose_index = static_cast<int>(p);
    r.variation_index = static_cast<int>(v);
    r.tag = pose.tag;
    r.seed = seed;
    const json params = image_params(config, pose, variations[v], seed);
    r.params_hash = hash_text(params.dump());

    write_pgm(frame.image, config.output_dir / r.image);
    json side;
    side["image"] = r.image;
    side["tag"] = pose.tag;
    side["seed"] = seed;
    side["params"] = params;
    side["params_hash"] = r.params_hash;
    side["grid"] = grid_json(frame.image.grid);
    side["geometry"] = config.base.transducer.geometry == ScanGeometry::Phased ? "phased" : "linear";
    side["scatterers"] = frame.scatterer_count;
    detail::write_json_file(side, config.output_dir / r.sidecar);
    if (config.write_envelope) write_scan_image(frame.scan, config.output_dir / (std::string(stem) + ".env.json"));
    if (config.write_rf) write_rf(frame.rf, config.output_dir / (std::string(stem) + ".rf.json"));
    timings[n] = frame.timings;
    r.wall_ms = ms_since(start);
    say(r.image + "  " + std::to_string(static_cast<long long>(std::llround(r.wall_ms))) + " ms");
  });

  json manifest;
  manifest["run_seed"] = config.seed;
  manifest["images"] = json::array();
  json times = json::array();
  for (size_t n = 0; n < total; ++n) {
    const ManifestRecord& r = summary.records[n];
    manifest["images"].push_back({{"image", r.image},
                                  {"sidecar", r.sidecar},
                                  {"pose_index", r.pose_index},
                                  {"variation_index", r.variation_index},
                                  {"tag", r.tag},
                                  {"seed", r.seed},
                                  {"params_hash", r.params_hash},
                                  {"pose", pose_json(config.poses[r.pose_index].pose)}});
    times.push_back({{"image", r.image},
                     {"wall_ms", r.wall_ms},
                     {"trace_ms", timings[n].trace_ms},
                     {"scatter_ms", timings[n].scatter_ms},
                     {"synth_ms", timings[n].synth_ms},
                     {"post_ms", timings[n].post_ms}});
  }
  detail::write_json_file(manifest, config.output_dir / "manifest.json");
  detail::write_json_file(json{{"images", times}}, config.output_dir / "timings.json");
  return summary;
}

}  // namespace echotrace
