#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "icelab/error.hpp"
#include "icelab/experiment.hpp"
#include "icelab/heightfield.hpp"
#include "icelab/lattice.hpp"
#include "icelab/loops.hpp"
#include "icelab/martingale.hpp"
#include "icelab/sampler.hpp"
#include "icelab/stats.hpp"

namespace py = pybind11;
using namespace icelab;

namespace {

using Pt = std::pair<int, int>;
using PyDomain = std::shared_ptr<EvenDomain>;

DomainPtr cd(const PyDomain& d) { return d; }
PyDomain md(const DomainPtr& d) { return std::const_pointer_cast<EvenDomain>(d); }

Vertex vx(Pt p) { return {p.first, p.second}; }
Pt pt(Vertex v) { return {v.x, v.y}; }

std::vector<Pt> pts(const std::vector<Vertex>& vs) {
  std::vector<Pt> out;
  out.reserve(vs.size());
  for (Vertex v : vs) out.push_back(pt(v));
  return out;
}

std::string rational_str(const Rational& r) {
  std::ostringstream os;
  os << numerator(r) << "/" << denominator(r);
  return os.str();
}

// JSON crosses the boundary as text so no Python JSON binding is needed.
Json config_from(const py::dict& d) {
  auto dumps = py::module_::import("json").attr("dumps");
  return Json::parse(dumps(d).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(icelab, m) {
  m.doc() = "Square-ice height functions: sampling, level loops, martingale profiles and experiment runs";

  auto base = py::register_exception<Error>(m, "IcelabError", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<InadmissibleBoundary>(m, "InadmissibleBoundary", base.ptr());
  py::register_exception<NotCoalesced>(m, "NotCoalesced", base.ptr());
  py::register_exception<TooLarge>(m, "TooLarge", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<EvenDomain, PyDomain>(m, "EvenDomain")
      .def_property_readonly("center", [](const EvenDomain& d) { return pt(d.center()); })
      .def_property_readonly("radius", &EvenDomain::radius)
      .def_property_readonly("cells", [](const EvenDomain& d) { return pts(d.cells()); })
      .def_property_readonly("boundary", [](const EvenDomain& d) { return pts(d.boundary()); })
      .def_property_readonly("interior_size", &EvenDomain::interior_size)
      .def("__len__", &EvenDomain::size)
      .def("__contains__", [](const EvenDomain& d, Pt p) { return d.contains(vx(p)); })
      .def("index_of", [](const EvenDomain& d, Pt p) { return d.index_of(vx(p)); });

  m.def("build_even_domain", [](Pt center, int radius) { return md(build_even_domain(vx(center), radius)); },
        py::arg("center"), py::arg("radius"));

  py::class_<HeightField>(m, "HeightField")
      .def(py::init([](const PyDomain& d, std::vector<Height> values) { return HeightField(cd(d), std::move(values)); }))
      .def_property_readonly("domain", [](const HeightField& f) { return md(f.domain_ptr()); })
      .def_property_readonly("values",
                             [](const HeightField& f) { return std::vector<Height>(f.values().begin(), f.values().end()); })
      .def("at", [](const HeightField& f, Pt p) { return f.at(vx(p)); })
      .def("is_valid", [](const HeightField& f) { return is_valid(f); })
      .def("__eq__", [](const HeightField& a, const HeightField& b) { return a == b; })
      .def("__len__", &HeightField::size);

  py::class_<BoundaryCondition>(m, "BoundaryCondition")
      .def_static("zero", [](const PyDomain& d) { return BoundaryCondition::zero(*d); })
      .def_static("constant", [](const PyDomain& d, Height v) { return BoundaryCondition::constant(*d, v); })
      .def_static("from_field", &BoundaryCondition::from_field)
      .def_property_readonly("support", [](const BoundaryCondition& b) { return pts(b.support); })
      .def_readonly("kappa", &BoundaryCondition::kappa);

  m.def("extremal_field", [](const PyDomain& d, const BoundaryCondition& bc, bool maximal) {
    return extremal_field(cd(d), bc, maximal ? Extremum::max : Extremum::min);
  }, py::arg("domain"), py::arg("bc"), py::arg("maximal") = true);

  m.def("enumerate_uniform", [](const PyDomain& d, const BoundaryCondition& bc, std::uint64_t cap) {
    return enumerate_uniform(cd(d), bc, cap);
  }, py::arg("domain"), py::arg("bc"),
        py::arg("cap") = std::uint64_t{1} << 20);
  m.def("count_extensions", [](const PyDomain& d, const BoundaryCondition& bc) {
    return for_each_extension(cd(d), bc, [](const HeightField&) {});
  });
  m.def("cftp_sample", [](const PyDomain& d, const BoundaryCondition& bc, std::uint64_t seed) {
    auto r = cftp_sample(cd(d), bc, seed);
    return py::make_tuple(std::move(r.field), r.sweeps);
  }, py::arg("domain"), py::arg("bc"), py::arg("seed"));

  py::class_<LaneEnsemble>(m, "LaneEnsemble")
      .def(py::init([](const PyDomain& d, const BoundaryCondition& bc, std::uint64_t seed) {
             return std::make_unique<LaneEnsemble>(cd(d), bc, seed);
           }), py::arg("domain"), py::arg("bc"),
           py::arg("seed"))
      .def_readonly_static("lanes", &LaneEnsemble::kLanes)
      .def("sweeps", &LaneEnsemble::sweeps, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("sweep_count", &LaneEnsemble::sweep_count)
      .def("lane_field", &LaneEnsemble::lane_field);

  py::class_<Calibration>(m, "Calibration")
      .def_readonly("iat_sweeps", &Calibration::iat_sweeps)
      .def_readonly("burn_in_sweeps", &Calibration::burn_in_sweeps)
      .def_readonly("thinning_sweeps", &Calibration::thinning_sweeps)
      .def_readonly("pilot_sweeps", &Calibration::pilot_sweeps);
  m.def("calibrate_mixing", [](const PyDomain& d, const BoundaryCondition& bc, std::uint64_t seed) {
    return calibrate_mixing(cd(d), bc, seed);
  }, py::call_guard<py::gil_scoped_release>());

  m.def("to_six_vertex", [](const HeightField& f) {
    const auto a = to_six_vertex(f);
    return py::make_tuple(a.up, a.right, pts(a.ice_rule_violations()));
  });
  m.def("round_trip_six_vertex", [](const HeightField& f) {
    const Vertex anchor = f.domain().boundary().front();
    return from_six_vertex(to_six_vertex(f), anchor, f.at(anchor)) == f;
  });

  py::class_<LevelLoop>(m, "LevelLoop")
      .def_property_readonly("circuit", [](const LevelLoop& l) { return pts(l.circuit); })
      .def_readonly("height", &LevelLoop::height);
  py::class_<LoopFamily>(m, "LoopFamily")
      .def_property_readonly("target", [](const LoopFamily& f) { return pt(f.target); })
      .def_readonly("loops", &LoopFamily::loops)
      .def("heights", &LoopFamily::heights)
      .def("__len__", &LoopFamily::size);
  m.def("extract_loop_family", [](const HeightField& f, Pt target) { return extract_loop_family(f, vx(target)); });

  py::class_<MartingaleProfile>(m, "MartingaleProfile")
      .def_property_readonly("target", [](const MartingaleProfile& p) { return pt(p.target); })
      .def_readonly("N", &MartingaleProfile::N)
      .def_readonly("target_height", &MartingaleProfile::target_height)
      .def_readonly("circuit_heights", &MartingaleProfile::circuit_heights)
      .def_readonly("deltas", &MartingaleProfile::deltas)
      .def_readonly("residual", &MartingaleProfile::residual)
      .def_readonly("truncated", &MartingaleProfile::truncated)
      .def_readonly("flags", &MartingaleProfile::flags);
  m.def("profile", [](const HeightField& f, Pt target, int N) { return profile(f, vx(target), N); },
        py::arg("field"), py::arg("target"), py::arg("N"));

  m.def("ballot", [](std::vector<int> support, std::vector<std::int64_t> weights, int n) {
    const auto b = ballot_dp(StepDistribution(std::move(support), std::move(weights)), n);
    py::dict d;
    d["value"] = b.value();
    d["exact"] = b.exact ? py::object(py::str(rational_str(b.rational))) : py::object(py::none());
    d["error_bound"] = b.error_bound;
    return d;
  }, py::arg("support"), py::arg("weights"), py::arg("n"));

  m.def("normal_distance", [](std::vector<std::int64_t> xs, std::uint64_t seed) {
    const auto nd = normal_distance(xs, seed);
    py::dict d;
    d["tv"] = nd.tv;
    d["ks_dithered"] = nd.ks_dithered;
    d["sigma"] = nd.sigma;
    return d;
  }, py::arg("samples"), py::arg("dither_seed") = 0);

  m.def("crossing_geq", [](const HeightField& f, int rho_n, int n, Height k) {
    return crossing_geq(f, rectangle_region(rho_n, n), k);
  });
  m.def("crossing_eq_cross", [](const HeightField& f, int rho_n, int n, Height k) {
    return crossing_eq_cross(f, rectangle_region(rho_n, n), k);
  });
  m.def("annulus_loop_event", &annulus_loop_event);

  m.def("experiments", [] {
    std::vector<std::string> out;
    for (auto k : all_experiments()) out.push_back(to_string(k));
    return out;
  });
  m.def("run_experiment", [](const py::dict& config) {
    const auto cfg = ExperimentConfig::from_json(config_from(config));
    ExperimentResult r;
    {
      py::gil_scoped_release release;
      r = run_experiment(cfg);
    }
    return py::make_tuple(r.records, r.summary, r.exit_code);
  }, py::arg("config"));
  m.def("replay", [](const std::filesystem::path& records, const std::string& analysis,
                     const std::filesystem::path& summary) {
    const auto r = replay(records, analysis, summary);
    return py::make_tuple(r.summary, r.exit_code);
  }, py::arg("records"), py::arg("analysis") = "", py::arg("summary"));
}
