#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "commands.hpp"
#include "guq/autoencoder.hpp"
#include "guq/checkpoint.hpp"
#include "guq/error.hpp"
#include "guq/estimator.hpp"
#include "guq/gustgen.hpp"
#include "guq/probhead.hpp"
#include "guq/sensitivity.hpp"
#include "guq/uq.hpp"

namespace py = pybind11;
using namespace guq;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() == 1) {
    return Matrix(1, static_cast<std::size_t>(a.shape(0)),
                  std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw ShapeError("expected a 1-D or 2-D array");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), out.mutable_data());
  return out;
}

template <class C>
Array to_array_1d(const C& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

prob::LatentDistribution distribution(const Array& mean, const Array& cov) {
  return {to_vector(mean), to_matrix(cov), prob::UncertaintyKind::aleatoric};
}

py::dict distribution_dict(const prob::LatentDistribution& d) {
  py::dict out;
  out["mean"] = to_array_1d(d.mean);
  out["covariance"] = to_array(d.covariance);
  return out;
}

py::tuple gramian_tuple(const sens::GramianResult& g) {
  return py::make_tuple(to_array(g.gramian), to_array_1d(g.eigenvalues), to_array(g.eigenvectors));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gust-encounter state estimation with uncertainty";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DataMismatchError>(m, "DataMismatchError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("nll_loss",
        [](const Array& y, const Array& mean, const Array& lower) {
          return prob::nll_loss(to_vector(y), to_vector(mean), to_matrix(lower));
        },
        py::arg("y"), py::arg("mean"), py::arg("lower"));
  m.def("assemble_cholesky",
        [](const Array& raw, std::size_t l) {
          return to_array(prob::assemble_cholesky(to_vector(raw), l).lower);
        },
        py::arg("raw"), py::arg("l"));
  m.def("chi2_quantile", &uq::chi2_quantile, py::arg("dof"), py::arg("level"));
  m.def("confidence_ellipse",
        [](const Array& mean, const Array& cov, std::array<std::size_t, 2> plane, double level) {
          const auto e = uq::confidence_ellipse(distribution(mean, cov), plane, level);
          py::dict out;
          out["center"] = e.center;
          out["semi_axes"] = e.semi_axes;
          out["angle"] = e.angle;
          return out;
        },
        py::arg("mean"), py::arg("cov"), py::arg("plane") = std::array<std::size_t, 2>{0, 1},
        py::arg("level") = 0.95);
  m.def("ellipsoid_contains",
        [](const Array& mean, const Array& cov, const Array& y, double level) {
          return uq::ellipsoid_contains(distribution(mean, cov), to_vector(y), level);
        },
        py::arg("mean"), py::arg("cov"), py::arg("y"), py::arg("level") = 0.95);
  m.def("select_rank",
        [](const Array& eigenvalues, double gamma) {
          return sens::select_rank(to_vector(eigenvalues), gamma);
        },
        py::arg("eigenvalues"), py::arg("gamma"));
  m.def("linear_gramian",
        [](const Array& a, const Array& base, double variance, std::size_t samples,
           std::uint64_t seed) {
          const Matrix at = transpose(to_matrix(a));
          const std::vector<double> x = to_vector(base);
          Rng rng(seed);
          return gramian_tuple(sens::measurement_gramian(
              [&at](ad::Var v) { return ad::matmul(v, v.tape->constant(at)); }, x,
              sens::white_noise(x.size(), x.size(), variance), samples, rng));
        },
        py::arg("a"), py::arg("base"), py::arg("variance") = 0.0, py::arg("samples") = 10,
        py::arg("seed") = 0);
  m.def("taylor_vortex_velocity", &gust::taylor_vortex_velocity, py::arg("r"), py::arg("radius"),
        py::arg("u_max"));
  m.def("run",
        [](const std::string& subcommand, const std::string& config, std::uint64_t seed) {
          std::ostringstream log;
          const int code = cli::run_subcommand(subcommand, config, seed, log);
          return py::make_tuple(code, log.str());
        },
        py::arg("subcommand"), py::arg("config"), py::arg("seed") = 0,
        "Runs one pipeline step; returns (exit code, log text).");

  py::class_<gust::Dataset>(m, "Dataset")
      .def_static("load", [](const std::string& path) { return gust::load_dataset(path); })
      .def_property_readonly("grid", [](const gust::Dataset& d) {
        return py::make_tuple(d.grid.nx, d.grid.ny);
      })
      .def_property_readonly("train", [](const gust::Dataset& d) { return d.train; })
      .def_property_readonly("validation", [](const gust::Dataset& d) { return d.validation; })
      .def_property_readonly("case_ids", [](const gust::Dataset& d) {
        std::vector<int> ids;
        for (const auto& s : d.snapshots) ids.push_back(s.case_id);
        return ids;
      })
      .def_property_readonly("inputs", [](const gust::Dataset& d) {
        Matrix x(d.snapshots.size(), gust::kStackedSize);
        for (std::size_t i = 0; i < d.snapshots.size(); ++i)
          std::copy(d.snapshots[i].p_stacked.begin(), d.snapshots[i].p_stacked.end(), x.row(i).begin());
        return to_array(x);
      })
      .def_property_readonly("lifts", [](const gust::Dataset& d) {
        std::vector<double> v;
        for (const auto& s : d.snapshots) v.push_back(s.lift);
        return to_array_1d(v);
      })
      .def_property_readonly("vorticity", [](const gust::Dataset& d) {
        Matrix x(d.snapshots.size(), d.grid.size());
        for (std::size_t i = 0; i < d.snapshots.size(); ++i)
          std::copy(d.snapshots[i].vorticity.begin(), d.snapshots[i].vorticity.end(), x.row(i).begin());
        return to_array(x);
      })
      .def("__len__", [](const gust::Dataset& d) { return d.snapshots.size(); });

  py::class_<SensorEstimator>(m, "Estimator")
      .def_static("load", [](const std::string& path) {
        return SensorEstimator::from_checkpoint(load_checkpoint(path));
      })
      .def_property_readonly("probabilistic", [](const SensorEstimator& e) {
        return e.kind() == EstimatorKind::probabilistic;
      })
      .def_property_readonly("input_dim", &SensorEstimator::input_dim)
      .def("predict_mean", [](const SensorEstimator& e, const Array& x) {
        return to_array(e.predict_mean(to_matrix(x), nn::Mode::deterministic, nullptr));
      })
      .def("jacobian", [](const SensorEstimator& e, const Array& x) {
        return to_array(ad::jacobian([&e](ad::Var v) { return e.mean_on_tape(v); }, to_matrix(x)));
      })
      .def(
          "gramian",
          [](const SensorEstimator& e, const Array& x, double variance, std::size_t samples,
             std::uint64_t seed) {
            Rng rng(seed);
            const std::vector<double> base = to_vector(x);
            return gramian_tuple(sens::measurement_gramian(
                [&e](ad::Var v) { return e.mean_on_tape(v); }, base,
                sens::white_noise(base.size(), gust::kSensorCount, variance), samples, rng));
          },
          py::arg("x"), py::arg("variance") = 2.5e-5, py::arg("samples") = 100,
          py::arg("seed") = 0)
      .def(
          "mc_predict",
          [](const SensorEstimator& e, const Array& x, std::size_t passes, std::uint64_t seed) {
            Rng rng(seed);
            const auto ens = uq::mc_predict(e, to_vector(x), passes, rng);
            py::dict out;
            out["aleatoric"] = distribution_dict(uq::aleatoric_distribution(ens));
            out["epistemic"] = distribution_dict(uq::epistemic_distribution(ens));
            return out;
          },
          py::arg("x"), py::arg("passes") = 100, py::arg("seed") = 0);

  py::class_<ae::Autoencoder>(m, "Autoencoder")
      .def_static("load", [](const std::string& path) {
        return ae::Autoencoder::from_checkpoint(load_checkpoint(path));
      })
      .def_property_readonly("grid", [](const ae::Autoencoder& a) {
        return py::make_tuple(a.grid_nx(), a.grid_ny());
      })
      .def("encode", [](const ae::Autoencoder& a, const Array& fields, const Array& lifts) {
        return to_array(a.encode(to_matrix(fields), to_vector(lifts)));
      })
      .def("decode", [](const ae::Autoencoder& a, const Array& latents) {
        Matrix f;
        std::vector<double> l;
        a.decode(to_matrix(latents), f, l);
        return py::make_tuple(to_array(f), to_array_1d(l));
      })
      .def(
          "reconstruct_stats",
          [](const ae::Autoencoder& a, const Array& mean, const Array& cov, std::size_t samples,
             std::uint64_t seed) {
            Rng rng(seed);
            const auto s = uq::reconstruct_stats(distribution(mean, cov), a, samples, rng);
            py::dict out;
            out["mean"] = to_array_1d(s.mean);
            out["variance"] = to_array_1d(s.variance);
            out["lift_mean"] = s.lift_mean;
            out["lift_variance"] = s.lift_variance;
            return out;
          },
          py::arg("mean"), py::arg("cov"), py::arg("samples") = 100, py::arg("seed") = 0);
}
