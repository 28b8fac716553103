#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "realsteer/cli.hpp"
#include "realsteer/detector.hpp"
#include "realsteer/linalg.hpp"
#include "realsteer/spatial.hpp"
#include "realsteer/spca.hpp"
#include "realsteer/steering.hpp"

namespace py = pybind11;
using namespace realsteer;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const Tensor& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

SteeringSchedule schedule(double lambda, std::size_t start, std::size_t end, std::size_t steps) {
  return SteeringSchedule{lambda, start, end, steps};
}

}  // namespace

PYBIND11_MODULE(_realsteer, m) {
  m.doc() = "Latent realness steering core";
  py::register_exception<Error>(m, "RealsteerError", PyExc_ValueError);

  m.def("hsic_linear", [](const FloatArray& z, const std::vector<int>& labels) {
    return hsic_linear(to_tensor(z), LabelMatrix(labels));
  }, py::arg("z"), py::arg("labels"));

  m.def("compute_direction", [](const FloatArray& z, const std::vector<int>& labels,
                                const std::vector<std::size_t>& latent_shape, std::size_t k, std::size_t t) {
    const SteeringDirection d = compute_direction(TimestepLatents{t, to_tensor(z), latent_shape}, LabelMatrix(labels), k);
    py::dict out;
    out["t"] = d.t;
    out["delta"] = to_array(d.delta);
    out["eigenvalues"] = d.eigenvalues;
    out["raw_norm"] = d.raw_norm;
    return out;
  }, py::arg("z"), py::arg("labels"), py::arg("latent_shape"), py::arg("k") = 2, py::arg("t") = 0);

  m.def("topk_eigh", [](const DenseMatrix& a, Eigen::Index k) {
    const auto pairs = topk_eigh(a, k);
    DenseVector values(static_cast<Eigen::Index>(pairs.size()));
    DenseMatrix vectors(a.rows(), static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      values(static_cast<Eigen::Index>(i)) = pairs[i].value;
      vectors.col(static_cast<Eigen::Index>(i)) = pairs[i].vector;
    }
    return py::make_tuple(values, vectors);
  }, py::arg("a"), py::arg("k"), "Top-k eigenpairs of a symmetric matrix as (values, column vectors).");

  m.def("calibrate_threshold", [](const std::vector<int>& y, const std::vector<double>& p) {
    return calibrate_threshold(y, p);
  }, py::arg("y_true"), py::arg("y_pred"));

  m.def("interpolate_spatial", [](const FloatArray& field, std::size_t h, std::size_t w, const std::string& mode) {
    return to_array(interpolate_spatial(to_tensor(field), h, w, parse_interp_mode(mode)));
  }, py::arg("field"), py::arg("out_h"), py::arg("out_w"), py::arg("mode") = "bilinear");

  m.def("dft2d_centered_logmag", [](const FloatArray& plane) {
    return to_array(dft2d_centered_logmag(to_tensor(plane)));
  }, py::arg("plane"));

  m.def("lambda_at", [](double lambda, std::size_t start, std::size_t end, std::size_t steps, std::size_t t) {
    return lambda_at(schedule(lambda, start, end, steps), t);
  }, py::arg("lam"), py::arg("start"), py::arg("end"), py::arg("steps"), py::arg("t"));

  m.def("apply_step", [](const FloatArray& z, const FloatArray& v, double lambda, const FloatArray& delta) {
    return to_array(apply_step(to_tensor(z), to_tensor(v), lambda, to_tensor(delta)));
  }, py::arg("z_prev"), py::arg("v"), py::arg("lambda_t"), py::arg("delta"));

  m.def("run_toy_experiment", [](std::uint64_t seed, std::size_t prompts, std::size_t budget, std::size_t tp,
                                 std::size_t fn, double target_fnr) {
    ToyExperimentConfig cfg;
    cfg.seed = seed;
    cfg.prompts = prompts;
    cfg.budget = budget;
    cfg.tp = tp;
    cfg.fn = fn;
    cfg.target_fnr = target_fnr;
    std::string dumped;
    {
      py::gil_scoped_release release;
      dumped = run_toy_experiment(cfg).dump();
    }
    return dumped;
  }, py::arg("seed") = 0, py::arg("prompts") = 200, py::arg("budget") = 10, py::arg("tp") = 500,
     py::arg("fn") = 500, py::arg("target_fnr") = 0.15, "Runs the toy pipeline and returns the RunRecord as JSON text.");
}
