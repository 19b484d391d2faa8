#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "stmp/bridge.hpp"
#include "stmp/channel.hpp"
#include "stmp/config_file.hpp"
#include "stmp/denoiser.hpp"
#include "stmp/errors.hpp"
#include "stmp/harness.hpp"
#include "stmp/pilot.hpp"
#include "stmp/quadrature.hpp"

namespace py = pybind11;
using namespace stmp;

namespace {

using CArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;
using RArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

CTensor3 to_tensor(const CArray& a) {
  if (a.ndim() != 3) throw DimensionMismatch("expected a 3-d complex array (B, N, M)");
  CTensor3 t(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

template <class T>
py::array_t<T> to_array(const Tensor3<T>& t) {
  py::array_t<T> a({t.dim0(), t.dim1(), t.dim2()});
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

std::vector<cplx> to_vec(const CArray& a) { return {a.data(), a.data() + a.size()}; }

py::array_t<cplx> vec_array(const std::vector<cplx>& v) {
  py::array_t<cplx> a(v.size());
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::vector<MixtureComponent> components(const std::vector<std::tuple<double, cplx, double>>& c) {
  std::vector<MixtureComponent> out;
  for (const auto& [w, mu, var] : c) out.push_back({w, mu, var});
  return out;
}

std::shared_ptr<const ScoreModel> score_model(const std::string& backend, double sigma2,
                                              const std::vector<std::tuple<double, cplx, double>>& gm,
                                              const std::string& addr) {
  if (backend == "gaussian") return gaussian_score(sigma2);
  if (backend == "gm") return gm_score(gm.empty() ? std::vector<MixtureComponent>{{1.0, cplx{}, sigma2}} : components(gm));
  if (backend == "bridge") return std::make_shared<bridge::BridgeScore>(bridge::connect(addr));
  throw InvalidConfig("backend", "expected gaussian, gm or bridge");
}

py::dict trial_dict(const TrialResult& r) {
  py::dict d;
  d["ok"] = r.ok;
  d["nmse"] = r.has_nmse ? py::cast(r.nmse) : py::none();
  d["nmse_db_first"] = r.has_nmse ? py::cast(r.nmse_db_first) : py::none();
  d["missed"] = r.missed;
  d["false_alarms"] = r.false_alarms;
  d["pe"] = r.pe;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  d["active"] = r.active;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "grant-free access: turbo message passing with score-based channel denoisers";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidConfig>(m, "InvalidConfig", base.ptr());
  py::register_exception<BridgeError>(m, "BridgeError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
  py::register_exception<Diverged>(m, "Diverged", base.ptr());

  m.def("check_config", [](const std::string& text) {
    auto s = parse_settings_text(text);
    validate(s);
    return format_settings(s);
  }, py::arg("text"), "Parse and validate config text; returns the canonical form.");

  py::class_<PilotOperator>(m, "PilotOperator")
      .def_static("build", [](std::uint32_t k, std::uint32_t n, std::uint32_t t, double power, std::uint64_t seed) {
        SystemConfig c;
        c.k = k;
        c.n = n;
        c.t = t;
        c.power = power;
        Rng rng(seed);
        return PilotOperator::build(c, rng);
      }, py::arg("k"), py::arg("n"), py::arg("t"), py::arg("power") = 1.0, py::arg("seed") = 1)
      .def_static("from_rows", &PilotOperator::from_rows, py::arg("k"), py::arg("n"), py::arg("t"),
                  py::arg("power"), py::arg("rows"))
      .def_property_readonly("k", &PilotOperator::k)
      .def_property_readonly("n", &PilotOperator::n)
      .def_property_readonly("t", &PilotOperator::t)
      .def_property_readonly("power", &PilotOperator::power)
      .def_property_readonly("rows", &PilotOperator::rows)
      .def("apply", [](const PilotOperator& op, const CArray& x) { return vec_array(op.apply(to_vec(x))); })
      .def("adjoint", [](const PilotOperator& op, const CArray& y) { return vec_array(op.adjoint(to_vec(y))); })
      .def("dense", [](const PilotOperator& op) {
        const Eigen::MatrixXcd q = op.dense();
        py::array_t<cplx> a({q.rows(), q.cols()});
        auto r = a.mutable_unchecked<2>();
        for (Eigen::Index i = 0; i < q.rows(); ++i)
          for (Eigen::Index j = 0; j < q.cols(); ++j) r(i, j) = q(i, j);
        return a;
      })
      .def("__eq__", [](const PilotOperator& a, const PilotOperator& b) { return a == b; });

  m.def("write_pilot_file", &write_pilot_file, py::arg("path"), py::arg("pilot"));
  m.def("read_pilot_file", &read_pilot_file, py::arg("path"));
  m.def("write_channel_dump", [](const std::filesystem::path& p, const CArray& h) { write_channel_dump(p, to_tensor(h)); },
        py::arg("path"), py::arg("channels"));
  m.def("read_channel_dump", [](const std::filesystem::path& p) { return to_array(read_channel_dump(p)); },
        py::arg("path"));

  m.def("score", [](const CArray& h, double tau, const std::string& backend, double sigma2,
                    const std::vector<std::tuple<double, cplx, double>>& gm, const std::string& addr) {
    const auto model = score_model(backend, sigma2, gm, addr);
    CTensor3 s1;
    RTensor3 s2;
    model->evaluate(to_tensor(h), tau, &s1, &s2);
    return py::make_tuple(to_array(s1), to_array(s2));
  }, py::arg("h"), py::arg("tau"), py::arg("backend") = "gaussian", py::arg("sigma2") = 1.0,
     py::arg("gm") = std::vector<std::tuple<double, cplx, double>>{}, py::arg("addr") = "",
     "First- and second-order scores of the noise-perturbed prior.");

  m.def("denoise", [](const CArray& h, const std::vector<double>& tau, const std::string& backend, double sigma2,
                      const std::vector<std::tuple<double, cplx, double>>& gm, const std::string& addr, bool normalize) {
    ScoreDenoiser d(score_model(backend, sigma2, gm, addr), {normalize, 1e-12});
    const auto out = d.denoise(to_tensor(h), tau);
    return py::make_tuple(to_array(out.h_post), out.tau_post);
  }, py::arg("h"), py::arg("tau"), py::arg("backend") = "gaussian", py::arg("sigma2") = 1.0,
     py::arg("gm") = std::vector<std::tuple<double, cplx, double>>{}, py::arg("addr") = "",
     py::arg("normalize") = false);

  m.def("brute_force_mmse", [](const std::vector<std::tuple<double, cplx, double>>& gm, const CArray& obs, double tau) {
    const auto v = to_vec(obs);
    const auto r = brute_force_mmse(PriorSpec{components(gm)}, v, tau);
    return py::make_tuple(vec_array(r.mean), r.var);
  }, py::arg("prior"), py::arg("obs"), py::arg("tau"));

  m.def("run_trial", [](const std::string& config, std::uint32_t trial) {
    ExperimentSpec spec;
    spec.base = parse_settings_text(config);
    const auto d = make_denoiser(spec.base);
    TrialOutput out;
    {
      py::gil_scoped_release release;
      out = run_trial(spec, 0, trial, *d);
    }
    auto dict = trial_dict(out.result);
    std::ostringstream os;
    out.trace.write_csv(os);
    dict["trace_csv"] = os.str();
    return dict;
  }, py::arg("config"), py::arg("trial") = 0);

  m.def("simulate", [](const std::string& config, const std::string& axis, const std::vector<double>& values,
                       std::optional<std::uint32_t> trials, unsigned workers) {
    ExperimentSpec spec;
    spec.base = parse_settings_text(config);
    if (trials) spec.base.trials = *trials;
    spec.axis = parse_sweep_axis(axis);
    spec.values = values;
    spec.workers = workers;
    std::ostringstream os;
    {
      py::gil_scoped_release release;
      write_results_csv(os, run_experiment(spec));
    }
    return os.str();
  }, py::arg("config"), py::arg("axis") = "none", py::arg("values") = std::vector<double>{},
     py::arg("trials") = std::nullopt, py::arg("workers") = 1, "Runs a sweep; returns the results CSV text.");

  auto br = m.def_submodule("bridge", "score bridge wire format");
  br.attr("VERSION") = bridge::kVersion;
  br.def("encode_request", [](int op, double tau, const CArray& h) {
    bridge::Request req;
    req.op = static_cast<bridge::Op>(op);
    req.tau = tau;
    req.h = to_tensor(h);
    const auto bytes = bridge::encode_request(req);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }, py::arg("op"), py::arg("tau"), py::arg("h"));
  br.def("encode_response", [](int op, int status, std::optional<CArray> s1, std::optional<RArray> s2) {
    bridge::Response resp;
    resp.op = static_cast<bridge::Op>(op);
    resp.status = static_cast<bridge::Status>(status);
    if (s1) resp.score1 = to_tensor(*s1);
    if (s2) {
      if (s2->ndim() != 3) throw DimensionMismatch("expected a 3-d real array");
      resp.score2 = RTensor3(s2->shape(0), s2->shape(1), s2->shape(2));
      std::copy(s2->data(), s2->data() + s2->size(), resp.score2.data().begin());
    }
    const auto bytes = bridge::encode_response(resp);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }, py::arg("op"), py::arg("status") = 0, py::arg("score1") = std::nullopt, py::arg("score2") = std::nullopt);
  br.def("call", [](const std::string& addr, int op, double tau, const CArray& h) {
    bridge::BridgeScore remote(bridge::connect(addr));
    bridge::Request req;
    req.op = static_cast<bridge::Op>(op);
    req.tau = tau;
    req.h = to_tensor(h);
    const auto resp = remote.call(req);
    return py::make_tuple(static_cast<int>(resp.status),
                          bridge::wants_first(req.op) ? py::object(to_array(resp.score1)) : py::none(),
                          bridge::wants_second(req.op) ? py::object(to_array(resp.score2)) : py::none());
  }, py::arg("addr"), py::arg("op"), py::arg("tau"), py::arg("h"),
     "One raw request/response round trip; returns (status, score1, score2).");
}
