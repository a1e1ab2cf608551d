#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "textsplat/diff/checkpoint.hpp"
#include "textsplat/pipeline/pipeline.hpp"

namespace py = pybind11;
using namespace textsplat;
using Tf = diff::Tensor<float>;

namespace {

py::array_t<float> to_numpy(const Tf& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> a(shape);
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

Tf from_numpy(const py::dict& d, const char* key, std::size_t cols) {
  if (!d.contains(key)) throw py::key_error(std::string("missing Gaussian attribute '") + key + "'");
  auto a = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(d[key]);
  if (!a || a.ndim() != 2 || static_cast<std::size_t>(a.shape(1)) != cols) {
    throw py::value_error(std::string("'") + key + "' must be an [M," + std::to_string(cols) + "] array");
  }
  const auto m = static_cast<std::size_t>(a.shape(0));
  return Tf::from({m, cols}, std::vector<float>(a.data(), a.data() + m * cols));
}

py::dict gaussians_to_dict(const pipeline::Gaussians& g) {
  py::dict d;
  d["centers"] = to_numpy(g.centers);
  d["scaling_raw"] = to_numpy(g.scaling_raw);
  d["rotation"] = to_numpy(g.rotation);
  d["opacity"] = to_numpy(g.opacity);
  d["opacity_raw"] = to_numpy(g.opacity_raw);
  d["sh_dc"] = to_numpy(g.sh_dc);
  return d;
}

pipeline::Gaussians gaussians_from_dict(const py::dict& d) {
  pipeline::Gaussians g;
  g.centers = from_numpy(d, "centers", 3);
  g.scaling_raw = from_numpy(d, "scaling_raw", 3);
  g.rotation = from_numpy(d, "rotation", 4);
  g.sh_dc = from_numpy(d, "sh_dc", 3);
  if (d.contains("opacity_raw")) {
    g.opacity_raw = from_numpy(d, "opacity_raw", 1);
    g.opacity = diff::range_sigmoid(g.opacity_raw, 0.0f, 1.0f);
  } else {
    g.opacity = from_numpy(d, "opacity", 1);
    std::vector<float> raw(g.opacity.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = std::log(g.opacity[i] / (1 - g.opacity[i]));
    g.opacity_raw = Tf::from({raw.size(), 1}, std::move(raw));
  }
  const std::size_t m = g.centers.dim(0);
  for (const auto* t : {&g.scaling_raw, &g.rotation, &g.opacity, &g.sh_dc})
    if (t->dim(0) != m) throw py::value_error("Gaussian attributes disagree on the number of rows");
  return g;
}

py::array_t<float> image_to_numpy(const splat::RenderedImage<float>& img) {
  return to_numpy(img.pixels);
}

pipeline::RunConfig config_or_default(const std::optional<pipeline::RunConfig>& c) {
  return c ? *c : pipeline::RunConfig{};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Text-conditioned 3D Gaussian generation: inference, rendering, training and export.";

  py::register_exception<pipeline::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<diff::CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);

  py::class_<pipeline::RunConfig>(m, "Config", "Flat key/value run configuration.")
      .def(py::init<>())
      .def_static("from_file", [](const std::filesystem::path& p) { return pipeline::load_config(p); }, py::arg("path"))
      .def_static("parse", [](const std::string& text) { return pipeline::parse_config(text); }, py::arg("text"))
      .def_static("keys", [] {
        std::vector<std::string> out;
        for (const auto& k : pipeline::config_keys()) out.push_back(k.name);
        return out;
      })
      .def("__getitem__", [](const pipeline::RunConfig& c, const std::string& k) { return pipeline::get_value(c, k); })
      .def("__setitem__", [](pipeline::RunConfig& c, const std::string& k, const py::object& v) {
        pipeline::set_value(c, k, py::isinstance<py::str>(v) ? v.cast<std::string>() : py::str(v).cast<std::string>());
      })
      .def("copy", [](const pipeline::RunConfig& c) { return c; })
      .def("to_string", &pipeline::serialize_config)
      .def("__repr__", [](const pipeline::RunConfig& c) { return "<textsplat.Config seed=" + pipeline::get_value(c, "seed") + ">"; });

  py::class_<pipeline::Generator>(m, "Generator")
      .def(py::init([](const std::optional<pipeline::RunConfig>& cfg, const std::optional<std::filesystem::path>& ckpt) {
             const auto c = config_or_default(cfg);
             return ckpt ? std::make_unique<pipeline::Generator>(c, *ckpt) : std::make_unique<pipeline::Generator>(c);
           }),
           py::arg("config") = py::none(), py::arg("checkpoint") = py::none())
      .def("generate",
           [](const pipeline::Generator& g, const std::string& prompt) {
             pipeline::GenerateResult r;
             {
               py::gil_scoped_release nogil;
               r = g.generate(prompt);
             }
             auto d = gaussians_to_dict(r.parts.gaussians);
             d["latency_ms"] = r.latency_ms;
             return d;
           },
           py::arg("prompt"), "Gaussians for a prompt as a dict of float32 arrays, plus latency_ms.")
      .def("interpolate",
           [](const pipeline::Generator& g, const std::string& a, const std::string& b, std::size_t steps) {
             py::list out;
             for (const auto& s : g.interpolate(a, b, steps)) out.append(gaussians_to_dict(s));
             return out;
           },
           py::arg("a"), py::arg("b"), py::arg("steps") = 5)
      .def("save", [](pipeline::Generator& g, const std::filesystem::path& p) { diff::save_checkpoint(g.model().store(), p); },
           py::arg("path"))
      .def_property_readonly("num_parameters", [](const pipeline::Generator& g) {
        std::size_t n = 0;
        for (const auto& [name, e] : g.model().store().entries()) n += e.tensor.size();
        return n;
      });

  m.def("export_ply", [](const py::dict& g, const std::filesystem::path& p) { pipeline::export_ply(gaussians_from_dict(g), p); },
        py::arg("gaussians"), py::arg("path"));
  m.def("import_ply", [](const std::filesystem::path& p) { return gaussians_to_dict(pipeline::import_ply(p)); },
        py::arg("path"));

  m.def("render",
        [](const py::dict& gd, double azimuth, double elevation, double radius, std::size_t width, std::size_t height,
           double fov_y, std::array<double, 3> background) {
          const auto g = gaussians_from_dict(gd);
          const auto cam = splat::orbit_camera(azimuth, elevation, radius, fov_y, width, height);
          diff::NoGradGuard ng;
          return image_to_numpy(splat::render(g, cam, background));
        },
        py::arg("gaussians"), py::arg("azimuth") = 0.0, py::arg("elevation") = 20.0, py::arg("radius") = 2.2,
        py::arg("width") = 64, py::arg("height") = 64, py::arg("fov_y") = 49.1,
        py::arg("background") = std::array<double, 3>{0, 0, 0}, "Render one view; returns an [H,W,3] float32 image.");

  m.def("render_turntable",
        [](const py::dict& gd, std::size_t frames, const std::optional<pipeline::RunConfig>& cfg,
           const std::optional<std::filesystem::path>& out_dir) {
          const auto r = pipeline::render_turntable(gaussians_from_dict(gd), frames, config_or_default(cfg),
                                                    out_dir.value_or(std::filesystem::path{}));
          py::list imgs;
          for (const auto& f : r.frames) imgs.append(image_to_numpy(f));
          py::dict d;
          d["azimuths"] = r.azimuths;
          d["frames"] = imgs;
          d["seconds"] = r.seconds;
          d["fps"] = r.fps;
          return d;
        },
        py::arg("gaussians"), py::arg("frames") = 8, py::arg("config") = py::none(), py::arg("out_dir") = py::none());

  m.def("train",
        [](const pipeline::RunConfig& cfg, const std::optional<std::filesystem::path>& resume) {
          std::vector<train::StepMetrics> trace;
          {
            py::gil_scoped_release nogil;
            trace = pipeline::run_training(cfg, resume.value_or(std::filesystem::path{}));
          }
          py::list out;
          for (const auto& s : trace) {
            py::dict d;
            d["iter"] = s.iter;
            d["loss"] = s.loss;
            d["mse"] = s.mse;
            d["grad_norm"] = s.grad_norm;
            d["seconds"] = s.seconds;
            out.append(d);
          }
          return out;
        },
        py::arg("config"), py::arg("resume") = py::none(),
        "Train with procedural mock guidance; writes the checkpoint named in the config.");

  m.def("check",
        [](const std::optional<pipeline::RunConfig>& cfg) {
          py::list out;
          for (const auto& r : pipeline::run_checks(config_or_default(cfg))) out.append(py::make_tuple(r.name, r.passed, r.detail));
          return out;
        },
        py::arg("config") = py::none(), "Invariant suite; list of (name, passed, detail).");

  m.def("embed",
        [](const std::string& prompt, const std::optional<pipeline::RunConfig>& cfg) {
          const auto c = config_or_default(cfg);
          const auto e = text::embed(prompt, c.model.embed_len, c.model.embed_dim, c.model.embed_seed);
          return to_numpy(e.to_tensor<float>());
        },
        py::arg("prompt"), py::arg("config") = py::none());
}
