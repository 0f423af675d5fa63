#include <optional>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dumlab/experiment.hpp"
#include "dumlab/flows.hpp"
#include "dumlab/gp.hpp"
#include "dumlab/metrics.hpp"
#include "dumlab/natpn.hpp"
#include "dumlab/tensor.hpp"

namespace py = pybind11;
using namespace dumlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    py::buffer_info info = a.request();
    Shape shape(info.shape.begin(), info.shape.end());
    const double* p = static_cast<const double*>(info.ptr);
    return Tensor(std::move(shape), std::vector<double>(p, p + info.size));
}

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data().begin(), t.data().end(), static_cast<double*>(out.request().ptr));
    return out;
}

BudgetConfig budget_from(const std::string& mode, double constant) {
    BudgetConfig b;
    if (mode == "dim_normalized") b.mode = BudgetMode::DimNormalized;
    else if (mode == "constant") b.mode = BudgetMode::Constant;
    else throw py::value_error("unknown budget mode: " + mode);
    b.constant_value = constant;
    return b;
}

RunOptions options_from(const std::vector<uint64_t>& seeds, bool force, const std::string& out) {
    RunOptions opts;
    opts.seeds = seeds;
    opts.force = force;
    opts.out = out;
    return opts;
}

}  // namespace

PYBIND11_MODULE(_dumlab, m) {
    m.doc() = "deterministic uncertainty lab core operations";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    // --- numerics ---------------------------------------------------------
    m.def(
        "logsumexp",
        [](const Array& a, std::optional<int> axis) -> py::object {
            Tensor t = to_tensor(a);
            if (!axis) return py::float_(logsumexp(t).item());
            return to_array(logsumexp(t, *axis));
        },
        py::arg("a"), py::arg("axis") = py::none(),
        "stable log(sum(exp(a))), overall or along an axis");

    // --- metrics ----------------------------------------------------------
    m.def("accuracy", &eval::accuracy, py::arg("pred"), py::arg("truth"));
    m.def(
        "brier",
        [](const Array& probs, const std::vector<size_t>& truth) {
            return eval::brier(to_tensor(probs), truth);
        },
        py::arg("probs"), py::arg("truth"), "multiclass Brier score (unscaled)");
    m.def("auroc", &eval::auroc, py::arg("id_uncertainty"), py::arg("ood_uncertainty"),
          "probability that an OOD point outranks an ID point in uncertainty");

    // --- evidential head pieces ------------------------------------------
    m.def(
        "evidence",
        [](const Array& flow_log_prob, size_t latent_dim, const std::string& budget,
           double constant) {
            return to_array(
                evidence(to_tensor(flow_log_prob), budget_from(budget, constant), latent_dim));
        },
        py::arg("flow_log_prob"), py::arg("latent_dim"), py::arg("budget") = "dim_normalized",
        py::arg("constant") = 1.0, "per-point evidence n_i from flow log-densities");
    m.def(
        "bayesian_update",
        [](const Array& chi, const Array& n, double n_prior, std::vector<double> chi_prior) {
            PriorConfig prior;
            prior.n_prior = n_prior;
            prior.chi_prior = std::move(chi_prior);
            Tensor chi_t = to_tensor(chi);
            prior.resolve(chi_t.cols());
            EvidentialPosterior post = bayesian_update(chi_t, to_tensor(n), prior);
            return py::dict(py::arg("alpha") = to_array(post.alpha),
                            py::arg("n_post") = to_array(post.n_post),
                            py::arg("chi_post") = to_array(post.chi_post));
        },
        py::arg("chi"), py::arg("n"), py::arg("n_prior") = 0.0,
        py::arg("chi_prior") = std::vector<double>{},
        "posterior Dirichlet parameters from per-point (chi, n) and the prior");
    m.def(
        "dirichlet_entropy",
        [](const Array& alpha) { return to_array(dirichlet_entropy(to_tensor(alpha))); },
        py::arg("alpha"));

    // --- density and kernels ---------------------------------------------
    m.def(
        "radial_flow_log_prob",
        [](const Array& z, size_t num_layers, uint64_t seed) {
            Tensor t = to_tensor(z);
            RadialFlowStack flow(t.cols(), num_layers, seed);
            return to_array(flow.log_prob(t));
        },
        py::arg("z"), py::arg("num_layers") = 8, py::arg("seed") = 0,
        "log-density of a freshly initialized radial flow stack at z");
    m.def(
        "kernel_eval",
        [](const std::string& family, const Array& A, const Array& B, double lengthscale,
           double outputscale, double rq_alpha) {
            KernelConfig cfg;
            cfg.family = kernel_from_name(family);
            cfg.lengthscale = lengthscale;
            cfg.outputscale = outputscale;
            cfg.rq_alpha = rq_alpha;
            cfg.validate();
            return to_array(kernel_eval(cfg, to_tensor(A), to_tensor(B)));
        },
        py::arg("family"), py::arg("a"), py::arg("b"), py::arg("lengthscale") = 1.0,
        py::arg("outputscale") = 1.0, py::arg("rq_alpha") = 1.0,
        "Gram matrix k(a_i, b_j) for one of: rbf, rq, matern12, matern32, matern52");

    // --- experiment pipeline ---------------------------------------------
    m.def(
        "validate_config",
        [](const std::string& text) {
            return ExperimentConfig::from_json(nlohmann::json::parse(text)).to_json().dump(2);
        },
        py::arg("json_text"),
        "parse an experiment config and return its canonical serialized form");
    m.def(
        "run_experiment",
        [](const std::string& path, const std::vector<uint64_t>& seeds, bool force,
           const std::string& out) { return run_experiment(path, options_from(seeds, force, out)); },
        py::arg("config_path"), py::arg("seeds") = std::vector<uint64_t>{},
        py::arg("force") = false, py::arg("out") = "",
        "train and evaluate every seed of a config; returns the CLI exit code");
    m.def(
        "run_sweep",
        [](const std::string& path, const std::string& axis, const std::vector<std::string>& values,
           const std::vector<uint64_t>& seeds, bool force, const std::string& out) {
            return run_sweep(path, axis, values, options_from(seeds, force, out));
        },
        py::arg("config_path"), py::arg("axis"), py::arg("values"),
        py::arg("seeds") = std::vector<uint64_t>{}, py::arg("force") = false, py::arg("out") = "");
    m.def("emit_recipes", &emit_recipes, py::arg("out_dir"));
    m.def("recipe_names", &recipe_names);
}
