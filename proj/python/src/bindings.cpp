#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <sstream>

#include "lff/cli.hpp"
#include "lff/data.hpp"
#include "lff/error.hpp"
#include "lff/image_io.hpp"
#include "lff/metrics.hpp"
#include "lff/networks.hpp"
#include "lff/parallel.hpp"
#include "lff/solvers.hpp"

namespace py = pybind11;
using namespace lff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (views_v, views_u, H, W) array from a light field.
Array lf_to_array(const LightField& lf) {
    Array a({static_cast<py::ssize_t>(lf.views_v()), static_cast<py::ssize_t>(lf.views_u()),
             static_cast<py::ssize_t>(lf.height()), static_cast<py::ssize_t>(lf.width())});
    std::copy(lf.data().begin(), lf.data().end(), a.mutable_data());
    return a;
}

LightField array_to_lf(const Array& a) {
    if (a.ndim() != 4) throw ValidationError("light field arrays have shape (views_v, views_u, height, width)");
    LightField lf(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), static_cast<int>(a.shape(2)),
                  static_cast<int>(a.shape(3)));
    std::copy(a.data(), a.data() + a.size(), lf.data().begin());
    return lf;
}

// (layers, H, W) array from a layer stack.
Array stack_to_array(const LayerStack& s) {
    Array a({static_cast<py::ssize_t>(s.layers()), static_cast<py::ssize_t>(s.height()),
             static_cast<py::ssize_t>(s.width())});
    std::copy(s.data().begin(), s.data().end(), a.mutable_data());
    return a;
}

LayerStack array_to_stack(const Array& a, Modulation mode) {
    if (a.ndim() != 3) throw ValidationError("layer arrays have shape (layers, height, width)");
    LayerStack s(static_cast<std::size_t>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)), mode);
    std::copy(a.data(), a.data() + a.size(), s.data().begin());
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Layer synthesis for compressive multi-layer light field displays";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

    py::enum_<Modulation>(m, "Modulation")
        .value("additive", Modulation::additive)
        .value("multiplicative", Modulation::multiplicative);

    py::class_<DisplayGeometry>(m, "DisplayGeometry")
        .def(py::init<>())
        .def_readwrite("layer_depths", &DisplayGeometry::layer_depths)
        .def_readwrite("pixel_pitch", &DisplayGeometry::pixel_pitch)
        .def_readwrite("span_u_deg", &DisplayGeometry::span_u_deg)
        .def_readwrite("span_v_deg", &DisplayGeometry::span_v_deg)
        .def_readwrite("views_u", &DisplayGeometry::views_u)
        .def_readwrite("views_v", &DisplayGeometry::views_v)
        .def_readwrite("mode", &DisplayGeometry::mode)
        .def("validate", &DisplayGeometry::validate)
        .def("tangent_u", &DisplayGeometry::tangent_u)
        .def("tangent_v", &DisplayGeometry::tangent_v);

    py::class_<SolveConfig>(m, "SolveConfig")
        .def(py::init<>())
        .def_readwrite("iterations", &SolveConfig::iterations)
        .def_readwrite("relaxation", &SolveConfig::relaxation)
        .def_readwrite("init", &SolveConfig::init)
        .def_readwrite("epsilon_floor", &SolveConfig::epsilon_floor)
        .def_readwrite("trace_every", &SolveConfig::trace_every)
        .def_readwrite("crop", &SolveConfig::crop);

    m.def("crop_border", &crop_border, py::arg("geometry"));

    m.def(
        "reconstruct",
        [](const Array& layers, const DisplayGeometry& g) {
            return lf_to_array(reconstruct(array_to_stack(layers, g.mode), g));
        },
        py::arg("layers"), py::arg("geometry"), "Simulated light field (views_v, views_u, H, W) of a layer stack.");

    m.def(
        "solve",
        [](const Array& target, const DisplayGeometry& g, const SolveConfig& c) {
            const SolveResult r = solve(array_to_lf(target), g, c);
            py::list trace;
            for (const TraceRecord& t : r.trace.records) {
                trace.append(py::dict(py::arg("iter") = t.iteration, py::arg("loss") = t.loss,
                                      py::arg("psnr_db") = t.psnr_db, py::arg("ms") = t.ms));
            }
            return py::make_tuple(stack_to_array(r.stack), trace);
        },
        py::arg("target"), py::arg("geometry"), py::arg("config") = SolveConfig{},
        "Iterative layer synthesis; returns (layers, trace).");

    m.def(
        "evaluate_psnr",
        [](const Array& recon, const Array& target, int border) {
            return evaluate_psnr(array_to_lf(recon), array_to_lf(target), border);
        },
        py::arg("recon"), py::arg("target"), py::arg("crop_border") = 0);

    m.def(
        "layer_uniformity",
        [](const Array& layers) {
            const Uniformity u = layer_uniformity(array_to_stack(layers, Modulation::additive));
            return py::make_tuple(u.layer_means, u.cv);
        },
        py::arg("layers"), "Returns (per-layer means, coefficient of variation).");

    m.def(
        "render_scene",
        [](std::uint64_t seed, const DisplayGeometry& g, int height, int width, int planes) {
            SceneParams p;
            p.height = height;
            p.width = width;
            p.planes = planes;
            return lf_to_array(render_target_lf(gen_scene(seed, p), g));
        },
        py::arg("seed"), py::arg("geometry"), py::arg("height") = 96, py::arg("width") = 96, py::arg("planes") = 3,
        "Target light field of a procedural scene.");

    m.def(
        "read_lightfield", [](const std::filesystem::path& dir) { return lf_to_array(read_lightfield(dir).lf); },
        py::arg("dir"));
    m.def(
        "read_layers", [](const std::filesystem::path& dir) { return stack_to_array(read_layers(dir)); },
        py::arg("dir"));

    m.def(
        "infer",
        [](const std::filesystem::path& ckpt, const Array& lf, bool clamp) {
            const Checkpoint c = load_checkpoint(ckpt);
            return stack_to_array(forward_infer(c.network, array_to_lf(lf), clamp));
        },
        py::arg("checkpoint"), py::arg("lf"), py::arg("clamp") = true, "Layers predicted by a saved network.");

    m.def(
        "network_parameter_count",
        [](const std::string& arch, int in_channels, int out_channels, int base_channels) {
            NetworkSpec s;
            s.arch = parse_architecture(arch);
            s.in_channels = in_channels;
            s.out_channels = out_channels;
            s.base_channels = base_channels;
            return param_count(s);
        },
        py::arg("arch"), py::arg("in_channels") = 25, py::arg("out_channels") = 3, py::arg("base_channels") = 64);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"lf-factor"};
            for (const std::string& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line interface in-process; returns (exit code, stdout, stderr).");

    m.def("set_num_threads", &set_num_threads, py::arg("threads"));
}
