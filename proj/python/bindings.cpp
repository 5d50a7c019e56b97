#include "lhcalib/errors.hpp"
#include "lhcalib/io.hpp"
#include "lhcalib/pipeline.hpp"
#include "lhcalib/signal.hpp"
#include "lhcalib/simulator.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace lhcalib;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
std::string dump(const io::json& j) { return j.dump(); }

}  // namespace

PYBIND11_MODULE(_lhcalib, m) {
  m.doc() = "slave base station calibration core";

  auto base = py::register_exception<Error>(m, "LhcalibError", PyExc_ValueError);
  py::register_exception<StageError>(m, "StageError", base.ptr());

  py::class_<Pose6DoF>(m, "Pose6DoF")
      .def(py::init<>())
      .def(py::init<double, double, double, double, double, double>(), py::arg("x"), py::arg("y"), py::arg("z"),
           py::arg("alpha"), py::arg("beta"), py::arg("gamma"))
      .def_readwrite("x", &Pose6DoF::x)
      .def_readwrite("y", &Pose6DoF::y)
      .def_readwrite("z", &Pose6DoF::z)
      .def_readwrite("alpha", &Pose6DoF::alpha)
      .def_readwrite("beta", &Pose6DoF::beta)
      .def_readwrite("gamma", &Pose6DoF::gamma)
      .def("apply", [](const Pose6DoF& p, std::array<double, 3> v) {
        const Vec3 q = p.apply({v[0], v[1], v[2]});
        return std::array<double, 3>{q.x(), q.y(), q.z()};
      })
      .def("as_tuple", [](const Pose6DoF& p) { return py::make_tuple(p.x, p.y, p.z, p.alpha, p.beta, p.gamma); })
      .def("__repr__", [](const Pose6DoF& p) {
        return "Pose6DoF(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.z) + ", " +
               std::to_string(p.alpha) + ", " + std::to_string(p.beta) + ", " + std::to_string(p.gamma) + ")";
      });
  m.def("compose", &compose, py::arg("outer"), py::arg("inner"));
  m.def("inverse", &inverse);
  m.def("position_error", &position_error);
  m.def("rotation_error", &rotation_error);

  m.def("delta_t_to_angle", &delta_t_to_angle, py::arg("dt_seconds"));
  m.def("angle_to_delta_t", &angle_to_delta_t, py::arg("angle_rad"));

  py::class_<PulseStream>(m, "PulseStream")
      .def(py::init<>())
      .def_readwrite("tick_hz", &PulseStream::tick_hz)
      .def_property(
          "events",
          [](const PulseStream& s) {
            std::vector<std::tuple<int, std::int64_t, std::int64_t>> out;
            out.reserve(s.events.size());
            for (const auto& e : s.events) out.emplace_back(e.diode_id, e.t_start, e.t_end);
            return out;
          },
          [](PulseStream& s, const std::vector<std::tuple<int, std::int64_t, std::int64_t>>& ev) {
            s.events.clear();
            for (const auto& [d, a, b] : ev) s.events.push_back({d, a, b});
          })
      .def("__len__", [](const PulseStream& s) { return s.events.size(); });
  m.def("load_pulses", &io::load_pulses);
  m.def("save_pulses", &io::save_pulses);

  m.def(
      "_simulate",
      [](const std::string& scenario_json, std::uint64_t seed) {
        const Scenario sc = io::scenario_from_json(io::json::parse(scenario_json));
        SimulationOutput out;
        {
          py::gil_scoped_release nogil;
          out = simulate_capture(sc, seed);
        }
        return py::make_tuple(out.master, out.slave, dump(io::truth_to_json(out.truth)));
      },
      py::arg("scenario_json"), py::arg("seed"));

  m.def(
      "_calibrate",
      [](const PulseStream& master, const PulseStream& slave, const std::string& strategy, bool allow_degenerate_path,
         bool deterministic) {
        CalibrationConfig cfg;
        cfg.strategy = parse_strategy(strategy);
        cfg.allow_degenerate_path = allow_degenerate_path;
        CalibrationResult r;
        {
          py::gil_scoped_release nogil;
          r = calibrate(master, slave, cfg);
        }
        return py::make_tuple(r.slave_pose, dump(io::result_to_json(r, deterministic)));
      },
      py::arg("master"), py::arg("slave"), py::arg("strategy") = "full", py::arg("allow_degenerate_path") = false,
      py::arg("deterministic") = false);

  m.def("evaluate", [](const std::vector<Pose6DoF>& estimates, const Pose6DoF& truth) {
    const PoseErrorStats s = evaluate(estimates, truth);
    return py::make_tuple(s.mae, s.sd);
  });
}
