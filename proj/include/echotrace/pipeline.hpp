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

#ifndef ECHOTRACE_PIPELINE_HPP
#define ECHOTRACE_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "echotrace/anatomy.hpp"
#include "echotrace/pathtracer.hpp"
#include "echotrace/phantom.hpp"
#include "echotrace/postproc.hpp"
#include "echotrace/rfsynth.hpp"
#include "echotrace/scatterfield.hpp"
#include "echotrace/transducer.hpp"

namespace echotrace {

/// Everything needed to simulate one image apart from the scene, pose, beam and seed.
struct FrameParams {
  TransducerConfig transducer;
  SimParams sim;
  PostprocParams post;
  double imaging_depth = 140.0;    ///< mm
  double scatter_density = 200.0;  ///< per mm^2 of the imaging slab
  double c_ref = 1540.0;           ///< m/s
  double sigma_r = 0.0;            ///< mm; 0 = two-wavelength FWHM pulse
  double echo_gain = 100.0;

  void validate() const;
};

/// Phantom settings: 1000 rays, 7 collisions, C0 0.1, DR 75, TGC 1.5, reject 40, 0.23 mm pixels, echo gain 1.
FrameParams phantom_frame_params(const PhantomSpec& spec);

struct FrameTimings {
  double trace_ms = 0.0;
  double scatter_ms = 0.0;
  double synth_ms = 0.0;
  double post_ms = 0.0;
  double total_ms = 0.0;
};

struct FrameResult {
  std::vector<Scanline> scanlines;
  IntensityMap map;
  size_t scatterer_count = 0;
  RfFrame rf;
  EnvelopeFrame envelope;  ///< detected, before TGC
  ScanImage scan;          ///< TGC-corrected envelope on the output grid
  BModeImage image;
  FrameTimings timings;
};

/// Slab in the imaging plane covering the scan area plus the beam's lateral reach.
ScatterSlab imaging_slab(const std::vector<Scanline>& scanlines, const TransducerConfig& cfg, const ProbePose& pose,
                         const BeamProfile& beam);

/// Trace, scatter, synthesize, detect and post-process one frame. Streams derive from `seed`.
FrameResult simulate_frame(const AnatomyVolume& anatomy, const ProbePose& pose, const BeamProfile& beam,
                           const FrameParams& params, uint64_t seed, unsigned threads = 0);

// ---------------------------------------------------------------------------------------------
// batch runs

struct PoseEntry {
  ProbePose pose;
  std::string tag;
};

/// Parameter lists swept as a Cartesian product; a single entry fixes the value.
struct SweepAxes {
  std::vector<int> rays_per_scanline;
  std::vector<int> max_collisions;
  std::vector<double> beam_coherence_c0;
  std::vector<double> dynamic_range_db;
  std::vector<double> reject_db;
};

struct Variation {
  int rays_per_scanline = 0;
  int max_collisions = 0;
  double beam_coherence_c0 = 0.0;
  double dynamic_range_db = 0.0;
  double reject_db = 0.0;
};

struct RunConfig {
  std::filesystem::path scene;     ///< scene file from `preprocess`
  std::string phantom;             ///< or a built-in phantom name / phantom spec path
  double phantom_spacing = 0.5;    ///< mm
  std::filesystem::path tissues;   ///< optional tissue table replacing the scene's
  std::filesystem::path beam_table;
  std::optional<AnalyticBeam> analytic_beam;
  FrameParams base;
  SweepAxes sweep;
  std::vector<PoseEntry> poses;
  std::filesystem::path output_dir = "out";
  unsigned jobs = 1;
  uint64_t seed = 0;
  bool write_envelope = false;
  bool write_rf = false;

  /// Throws naming the first missing file or invalid field.
  void validate() const;
};

/// Parses a run config; relative paths resolve against the config's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Cartesian product of the sweep axes, last axis fastest (rays, collisions, C0, DR, reject).
std::vector<Variation> enumerate_variations(const RunConfig& config);

/// Per-image seed from the run seed, pose index and variation index.
uint64_t image_seed(uint64_t run_seed, uint64_t pose_index, uint64_t variation_index);

/// 16 hex digits of FNV-1a over the text.
std::string hash_text(const std::string& text);

struct ManifestRecord {
  std::string image;
  std::string sidecar;
  int pose_index = 0;
  int variation_index = 0;
  std::string tag;
  uint64_t seed = 0;
  std::string params_hash;
  double wall_ms = 0.0;
};

struct RunSummary {
  std::vector<ManifestRecord> records;
  std::vector<std::string> warnings;
};

/**
 * Simulates every pose x variation and writes, under output_dir: one PGM plus JSON sidecar per
 * image, manifest.json (deterministic) and timings.json (wall clock per image). A phantom run also
 * writes truth.json.
 */
RunSummary run_simulation(const RunConfig& config, std::ostream* log = nullptr);

/// Canonical JSON of the parameters that determine one image (the text hashed into params_hash).
std::string image_params_json(const RunConfig& config, const PoseEntry& pose, const Variation& variation,
                              uint64_t seed);

/// Pose JSON: {"position": [..], "axis": [..], "lateral": [..]}.
ProbePose parse_pose(const std::string& text);

/// Scan-converted envelope dump: JSON header with grid geometry plus float32 values and mask.
void write_scan_image(const ScanImage& image, const std::filesystem::path& header_path);
ScanImage read_scan_image(const std::filesystem::path& header_path);

/// Pixel grid stored in an image sidecar.
PixelGrid read_sidecar_grid(const std::filesystem::path& sidecar_path);

/// The phantom spec named by `name_or_path`: a built-in name or a JSON file.
PhantomSpec resolve_phantom(const std::string& name_or_path);

/// Writes scene.svdb, segmentation (json + raw), tissues.json, spec.json and truth.json to out_dir.
PhantomScene write_phantom(const PhantomSpec& spec, const std::filesystem::path& out_dir, double spacing = 0.5,
                           unsigned threads = 0);

}  // namespace echotrace

#endif /* ECHOTRACE_PIPELINE_HPP */
