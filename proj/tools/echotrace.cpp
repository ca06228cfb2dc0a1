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

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "echotrace/metrics.hpp"
#include "echotrace/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace echotrace;
using nlohmann::json;

namespace {

int cmd_preprocess(const fs::path& seg, const fs::path& tissues, const fs::path& out, unsigned jobs) {
  const SegmentationVolume volume = load_segmentation(seg);
  const TissueTable table = load_tissue_table(tissues);
  const AnatomyVolume scene = build_anatomy(volume, table, 8, 3, jobs);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_scene(scene, out);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_simulate(const fs::path& config_path, const std::optional<fs::path>& out, std::optional<unsigned> jobs,
                 std::optional<uint64_t> seed) {
  RunConfig config = load_run_config(config_path);
  if (out) config.output_dir = *out;
  if (jobs) config.jobs = *jobs;
  if (seed) config.seed = *seed;
  const RunSummary summary = run_simulation(config, &std::cerr);
  std::cout << summary.records.size() << " images written to " << config.output_dir.string() << "\n";
  return 0;
}

int cmd_phantom(const std::string& spec, const fs::path& out, double spacing, unsigned jobs) {
  const PhantomSpec phantom = resolve_phantom(spec);
  const PhantomScene scene = write_phantom(phantom, out, spacing, jobs);
  for (const std::string& w : scene.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote phantom '" << phantom.name << "' to " << out.string() << "\n";
  return 0;
}

struct Roi {
  double x0, x1, z0, z1;
};

Roi parse_roi(const std::string& text) {
  Roi r{};
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  if (!(in >> r.x0 >> c1 >> r.x1 >> c2 >> r.z0 >> c3 >> r.z1) || c1 != ',' || c2 != ',' || c3 != ',')
    throw std::invalid_argument("--roi expects x0,x1,z0,z1 in mm");
  return r;
}

BModeImage load_image(const fs::path& pgm) {
  fs::path sidecar = pgm;
  sidecar.replace_extension(".json");
  BModeImage img = read_pgm(pgm);
  const PixelGrid grid = read_sidecar_grid(sidecar);
  if (grid.width != img.grid.width || grid.height != img.grid.height)
    throw std::invalid_argument(pgm.string() + ": size does not match its sidecar");
  img.grid = grid;
  return img;
}

int cmd_metrics(const std::vector<fs::path>& images, const std::vector<fs::path>& envelopes,
                const std::optional<fs::path>& truth_path, const std::optional<std::string>& roi_text,
                const std::optional<fs::path>& out) {
  std::optional<GroundTruth> truth;
  if (truth_path) {
    if (!fs::exists(*truth_path)) throw std::invalid_argument("truth file not found: " + truth_path->string());
    truth = load_ground_truth(*truth_path);
  }
  std::optional<Roi> roi;
  if (roi_text) roi = parse_roi(*roi_text);
  if (images.empty() && envelopes.empty()) throw std::invalid_argument("nothing to measure: pass --image or --envelope");

  std::vector<MetricsReport> reports;
  for (const fs::path& p : images) {
    MetricsReport r;
    if (!truth) throw std::invalid_argument("--image needs --truth");
    if (truth->wires.empty()) throw std::invalid_argument("truth has no wires to register");
    r.tre = measure_tre(load_image(p), *truth);
    reports.push_back(std::move(r));
  }
  for (const fs::path& p : envelopes) {
    MetricsReport r;
    const ScanImage scan = read_scan_image(p);
    if (truth)
      for (const LesionTruth& l : truth->lesions) {
        const auto [in, bg] = lesion_masks(scan, l);
        r.lesions.push_back({l.name, l.contrast_db, measure_contrast(scan, in, bg)});
      }
    if (roi) {
      std::vector<double> samples;
      for (int row = 0; row < scan.grid.height; ++row)
        for (int col = 0; col < scan.grid.width; ++col) {
          const size_t i = static_cast<size_t>(row) * scan.grid.width + col;
          const double x = scan.grid.x(col), z = scan.grid.z(row);
          if (scan.mask[i] && x >= roi->x0 && x <= roi->x1 && z >= roi->z0 && z <= roi->z1) samples.push_back(scan.values[i]);
        }
      r.speckle = speckle_stats(samples);
    }
    reports.push_back(std::move(r));
  }

  std::string text;
  if (reports.size() == 1) {
    text = report_to_json(reports.front());
  } else {
    json j;
    j["runs"] = json::array();
    std::vector<double> snr;
    for (const MetricsReport& r : reports) {
      j["runs"].push_back(json::parse(report_to_json(r)));
      if (r.speckle) snr.push_back(r.speckle->snr);
    }
    if (snr.size() > 1) {
      double m = 0.0, v = 0.0;
      for (double s : snr) m += s;
      m /= static_cast<double>(snr.size());
      for (double s : snr) v += (s - m) * (s - m);
      j["speckle_summary"] = {{"snr_mean", m}, {"snr_std", std::sqrt(v / static_cast<double>(snr.size() - 1))},
                              {"runs", snr.size()}};
    }
    text = j.dump(2);
  }
  if (out) {
    std::ofstream f(*out);
    f << text << "\n";
    if (!f) throw std::runtime_error("cannot write " + out->string());
  } else {
    std::cout << text << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"echotrace: ray-traced ultrasound B-mode simulation"};
  app.require_subcommand(1);

  unsigned jobs = 0;
  auto* pre = app.add_subcommand("preprocess", "Build a scene file from a segmentation and tissue table");
  fs::path seg, tissues, pre_out;
  pre->add_option("segmentation", seg, "Segmentation header (JSON)")->required()->check(CLI::ExistingFile);
  pre->add_option("tissues", tissues, "Tissue table (JSON)")->required()->check(CLI::ExistingFile);
  pre->add_option("-o,--out", pre_out, "Output scene file")->required();
  pre->add_option("-j,--jobs", jobs, "Worker threads (0 = all cores)");

  auto* sim = app.add_subcommand("simulate", "Simulate every pose and parameter variation of a run config");
  fs::path config;
  std::optional<fs::path> sim_out;
  std::optional<unsigned> sim_jobs;
  std::optional<uint64_t> sim_seed;
  sim->add_option("-c,--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("-o,--out", sim_out, "Override the output directory");
  sim->add_option("-j,--jobs", sim_jobs, "Override the parallelism (0 = all cores)");
  sim->add_option("-s,--seed", sim_seed, "Override the run seed");

  auto* ph = app.add_subcommand("phantom", "Write a phantom scene and its ground truth");
  std::string spec;
  fs::path ph_out;
  double spacing = 0.5;
  ph->add_option("spec", spec, "Built-in phantom name or spec file")->required();
  ph->add_option("-o,--out", ph_out, "Output directory")->required();
  ph->add_option("--spacing", spacing, "Voxel spacing in mm")->check(CLI::PositiveNumber);
  ph->add_option("-j,--jobs", jobs, "Worker threads (0 = all cores)");
  ph->add_flag_callback("--list", [] {
    for (const std::string& n : builtin_phantom_names()) std::cout << n << "\n";
    std::exit(0);
  }, "List the built-in phantoms");

  auto* met = app.add_subcommand("metrics", "Measure TRE, lesion contrast and speckle statistics");
  std::vector<fs::path> images, envelopes;
  std::optional<fs::path> truth, met_out;
  std::optional<std::string> roi;
  met->add_option("-i,--image", images, "B-mode PGM with a JSON sidecar of the same stem")->check(CLI::ExistingFile);
  met->add_option("-e,--envelope", envelopes, "Envelope dump header (*.env.json)")->check(CLI::ExistingFile);
  met->add_option("-t,--truth", truth, "Ground-truth JSON from a phantom run");
  met->add_option("--roi", roi, "Speckle region x0,x1,z0,z1 in mm");
  met->add_option("-o,--out", met_out, "Report path (default: stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*pre) return cmd_preprocess(seg, tissues, pre_out, jobs);
    if (*sim) return cmd_simulate(config, sim_out, sim_jobs, sim_seed);
    if (*ph) return cmd_phantom(spec, ph_out, spacing, jobs);
    if (*met) return cmd_metrics(images, envelopes, truth, roi, met_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
