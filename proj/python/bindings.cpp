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


#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "echotrace/metrics.hpp"
#include "echotrace/pathtracer.hpp"
#include "echotrace/pipeline.hpp"

namespace py = pybind11;
using namespace echotrace;

namespace {

template <typename T>
py::array_t<T> as_array(const std::vector<T>& v, int height, int width) {
  py::array_t<T> out({height, width});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

py::dict simulate_phantom(const std::string& phantom, int rays, uint64_t seed, unsigned threads, double spacing) {
  const PhantomSpec spec = resolve_phantom(phantom);
  FrameResult f;
  GroundTruth truth;
  {
    py::gil_scoped_release release;
    const PhantomScene scene = build_phantom(spec, spacing);
    const AnatomyVolume anatomy = build_anatomy(scene.segmentation, scene.tissues, 8, 3, threads);
    FrameParams params = phantom_frame_params(spec);
    if (rays > 0) params.sim.rays_per_scanline = rays;
    f = simulate_frame(anatomy, ProbePose{}, phantom_beam_profile(spec), params, seed, threads);
    truth = scene.truth;
  }
  const PixelGrid& g = f.image.grid;
  py::dict d;
  d["image"] = as_array(f.image.pixels, g.height, g.width);
  d["mask"] = as_array(f.image.mask, g.height, g.width);
  d["envelope"] = as_array(f.scan.values, g.height, g.width);
  d["pixel_spacing"] = g.pixel_spacing;
  d["origin"] = py::make_tuple(g.origin_x, g.origin_z);
  d["scatterers"] = f.scatterer_count;
  d["total_ms"] = f.timings.total_ms;
  py::list lesions;
  for (const LesionTruth& l : truth.lesions) {
    const auto [in, ring] = lesion_masks(f.scan, l);
    const ContrastResult r = measure_contrast(f.scan, in, ring);
    lesions.append(py::dict(py::arg("name") = l.name, py::arg("gcnr") = r.gcnr, py::arg("cnr") = r.cnr,
                            py::arg("contrast_db") = r.contrast_db));
  }
  d["lesions"] = lesions;
  if (!truth.wires.empty()) {
    const TreResult t = measure_tre(f.image, truth);
    d["tre_mean"] = t.mean;
    d["tre_failures"] = t.failures;
  }
  return d;
}

py::list run(const std::filesystem::path& config_path, std::optional<std::filesystem::path> out,
             std::optional<unsigned> jobs, std::optional<uint64_t> seed) {
  RunConfig config = load_run_config(config_path);
  if (out) config.output_dir = *out;
  if (jobs) config.jobs = *jobs;
  if (seed) config.seed = *seed;
  RunSummary summary;
  {
    py::gil_scoped_release release;
    summary = run_simulation(config);
  }
  py::list records;
  for (const ManifestRecord& r : summary.records)
    records.append(py::dict(py::arg("image") = r.image, py::arg("sidecar") = r.sidecar, py::arg("pose") = r.pose_index,
                            py::arg("variation") = r.variation_index, py::arg("tag") = r.tag, py::arg("seed") = r.seed,
                            py::arg("params_hash") = r.params_hash));
  return records;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ray-traced ultrasound B-mode simulation";

  m.def("builtin_phantoms", &builtin_phantom_names, "Names of the built-in phantoms.");
  m.def("phantom_spec_json", [](const std::string& name) { return phantom_spec_to_json(resolve_phantom(name)); },
        py::arg("phantom"), "Phantom spec as JSON, from a built-in name or a spec file.");
  m.def("write_phantom",
        [](const std::string& phantom, const std::filesystem::path& out, double spacing) {
          const PhantomScene scene = write_phantom(resolve_phantom(phantom), out, spacing, 0);
          return scene.warnings;
        },
        py::arg("phantom"), py::arg("out"), py::arg("spacing") = 0.5,
        "Write scene.svdb, segmentation, tissues, spec and truth files; returns any warnings.");
  m.def("simulate_phantom", &simulate_phantom, py::arg("phantom"), py::arg("rays") = 0, py::arg("seed") = 0,
        py::arg("threads") = 0, py::arg("spacing") = 0.5,
        "Simulate one frame of a phantom with its default settings. rays = 0 keeps the default.");
  m.def("run", &run, py::arg("config"), py::arg("out") = py::none(), py::arg("jobs") = py::none(),
        py::arg("seed") = py::none(), "Run a simulation config; returns the manifest records.");

  m.def("gcnr", [](py::array_t<double> a, py::array_t<double> b, int bins) { return gcnr(to_vector(a), to_vector(b), bins); },
        py::arg("inside"), py::arg("outside"), py::arg("bins") = 256);
  m.def("contrast", [](py::array_t<double> a, py::array_t<double> b) {
          const ContrastResult r = measure_contrast(to_vector(a), to_vector(b));
          return py::dict(py::arg("gcnr") = r.gcnr, py::arg("cnr") = r.cnr, py::arg("contrast_db") = r.contrast_db);
        },
        py::arg("inside"), py::arg("outside"));
  m.def("speckle_stats", [](py::array_t<double> s, int bins) {
          const SpeckleStats st = speckle_stats(to_vector(s), bins);
          return py::dict(py::arg("snr") = st.snr, py::arg("rayleigh_sse") = st.rayleigh_sse,
                          py::arg("fitted_scale") = st.fitted_scale, py::arg("count") = st.count);
        },
        py::arg("samples"), py::arg("bins") = 100);
  m.def("reflection_transmission", [](double z1, double z2, double cos_theta) {
          const FresnelResult f = reflection_transmission(z1, z2, cos_theta);
          return py::make_tuple(f.R, f.T);
        },
        py::arg("z1"), py::arg("z2"), py::arg("cos_theta") = 1.0, "Intensity (R, T) at an interface.");
  m.def("hash_text", &hash_text);
}
