#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "mfstop/cli.hpp"
#include "mfstop/discount.hpp"
#include "mfstop/nagent.hpp"
#include "mfstop/rd_example.hpp"
#include "mfstop/solver.hpp"

#define MFSTOP_STR_(x) #x
#define MFSTOP_STR(x) MFSTOP_STR_(x)

namespace py = pybind11;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mean-field stopping with entropy regularization: core numerics and the CLI";

    m.def("thresholds", [](double k, double beta) {
        const auto t = mfstop::thresholds(mfstop::RdParams{k, beta});
        return py::make_tuple(t.a, t.b, t.mixed);
    }, py::arg("K") = 1.8, py::arg("beta") = 0.5,
       "Closed-form thresholds (a, b, mixed) of the R&D example.");

    m.def("gibbs_policy", &mfstop::gibbs_policy, py::arg("lam"), py::arg("reward"),
          py::arg("continuation"));

    m.def("shannon_entropy", &mfstop::shannon_entropy, py::arg("phi"));

    m.def("exact_empirical_rate", &mfstop::exact_empirical_rate, py::arg("p"), py::arg("n"),
          "E|p_hat - p| for p_hat ~ Binomial(n, p) / n.");

    m.def("solve_regularized_ode", [](double lam, double k, double beta, double step) {
        const auto s = mfstop::solve_regularized_ode(mfstop::RdParams{k, beta}, lam, step);
        py::dict d;
        d["mu"] = s.mu;
        d["v"] = s.v;
        d["phi"] = s.phi;
        d["v0"] = s.v0;
        d["slope0"] = s.slope0;
        return d;
    }, py::arg("lam"), py::arg("K") = 1.8, py::arg("beta") = 0.5, py::arg("step") = 5e-4);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = mfstop::run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"), "Runs one subcommand; returns (exit_code, stdout, stderr).");

#ifdef VERSION_INFO
    m.attr("__version__") = MFSTOP_STR(VERSION_INFO);
#else
    m.attr("__version__") = "dev";
#endif
}
