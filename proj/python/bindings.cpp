#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dcmsearch/cli.hpp"
#include "dcmsearch/dataset.hpp"
#include "dcmsearch/mnl_estimator.hpp"
#include "dcmsearch/reward.hpp"
#include "dcmsearch/search.hpp"
#include "dcmsearch/serialization.hpp"
#include "dcmsearch/synthetic.hpp"
#include "dcmsearch/transform.hpp"

namespace py = pybind11;
using namespace dcmsearch;

namespace {

const TrueCase& lookup(const std::string& id) {
    static std::vector<TrueCase> cases = case_catalogue();
    for (const auto& c : cases) {
        if (c.id == id) return c;
    }
    throw py::value_error("unknown case '" + id + "'");
}

// JSON crosses the boundary as text; the Python side decodes it.
std::string estimate_json(const std::string& data_path, const std::string& spec_json) {
    const auto ds = load_wide_csv(data_path);
    const auto spec = spec_from_json(json::parse(spec_json), &ds);
    const auto design = build_design(spec, ds);
    return outcome_to_json(estimate(design, ds)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of dcmsearch";

    m.def("run_cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "dcmsearch");
        py::gil_scoped_release release;
        return run_cli(args);
    }, py::arg("args"));

    m.def("apply_transform", [](const std::string& kind, double x, double lambda) {
        return apply_transform(transformation_from_string(kind), x, lambda);
    }, py::arg("kind"), py::arg("x"), py::arg("lam") = 1.0);

    m.def("space_size", [](const std::string& id) {
        const auto s = space_size(lookup(id).space);
        return py::make_tuple(s.count, s.saturated);
    }, py::arg("case_id"));

    m.def("truth_json", [](const std::string& id, std::size_t n, std::uint64_t seed) {
        return truth_to_json(generate(lookup(id), n, seed).truth).dump();
    }, py::arg("case_id"), py::arg("n"), py::arg("seed"));

    m.def("null_log_likelihood", [](const std::string& data_path) {
        return null_log_likelihood(load_wide_csv(data_path));
    }, py::arg("data_path"));

    m.def("estimate_json", &estimate_json, py::arg("data_path"), py::arg("spec_json"));

    m.def("credit_assign", &credit_assign, py::arg("reward"), py::arg("length"), py::arg("gamma") = 0.99);

    m.def("pareto_front", [](const std::vector<std::tuple<std::size_t, double, std::string>>& pts, bool minimise) {
        std::vector<ParetoPoint> in;
        for (const auto& [k, obj, key] : pts) in.push_back({k, obj, key});
        std::vector<std::tuple<std::size_t, double, std::string>> out;
        for (const auto& p : pareto_front(in, minimise)) out.emplace_back(p.n_params, p.objective, p.key);
        return out;
    }, py::arg("points"), py::arg("minimise") = true);

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);
}
