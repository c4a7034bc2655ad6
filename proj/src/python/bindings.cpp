#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "clusterdr/cli.hpp"
#include "clusterdr/error.hpp"

namespace py = pybind11;
using namespace clusterdr;

namespace {

py::dict to_dict(const WeightDiagnostics& w) {
    py::dict d;
    d["count"] = w.count;
    d["min"] = w.min;
    d["max"] = w.max;
    d["effective_sample_size"] = w.effective_sample_size;
    return d;
}

py::dict to_dict(const IntervalEstimate& iv) {
    py::dict d;
    d["point"] = iv.point;
    d["se"] = iv.se;
    d["lower"] = iv.lower;
    d["upper"] = iv.upper;
    d["level"] = iv.level;
    d["method"] = std::string(interval_method_key(iv.method));
    if (iv.method == IntervalMethod::ClusterBootstrap) {
        d["replicates"] = iv.replicates;
        d["failed_replicates"] = iv.failed_replicates;
    }
    return d;
}

// Python-side JSON round trip keeps one parser for configs.
nlohmann::json from_py(const py::object& obj) {
    const py::object dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const nlohmann::ordered_json& doc) {
    return py::module_::import("json").attr("loads")(doc.dump());
}

ClusterRecord record_from(const py::dict& d) {
    ClusterRecord rec;
    rec.cluster_id = d["cluster_id"].cast<std::string>();
    rec.participates = d["s"].cast<int>() == 1;
    if (d.contains("arm") && !d["arm"].is_none()) rec.arm = d["arm"].cast<std::string>();
    rec.x = d.contains("x") ? d["x"].cast<Eigen::VectorXd>() : Eigen::VectorXd(0);
    rec.w = d["w"].cast<Eigen::MatrixXd>();
    if (d.contains("y") && !d["y"].is_none()) rec.y = d["y"].cast<Eigen::VectorXd>();
    return rec;
}

std::vector<std::string> all_ids(const StudyDataset& ds) {
    std::vector<std::string> ids;
    for (const auto& c : ds.clusters()) ids.push_back(c.cluster_id);
    return ids;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Doubly robust estimators for extending cluster randomized trials";
    m.attr("__version__") = CLUSTERDR_VERSION;

    py::exception<Error>(m, "ClusterdrError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            // Instance carries the error code as `.code`.
            const py::object type = py::module_::import("clusterdr._core").attr("ClusterdrError");
            py::object inst = type(std::string(e.what()));
            inst.attr("code") = std::string(code_name(e.code()));
            PyErr_SetObject(type.ptr(), inst.ptr());
        }
    });

    py::class_<StudyDataset>(m, "Dataset")
        .def_property_readonly("arms", &StudyDataset::arms)
        .def_property_readonly("q", &StudyDataset::q)
        .def_property_readonly("p", &StudyDataset::p)
        .def_property_readonly("cluster_ids", &all_ids)
        .def_property_readonly("warnings", &StudyDataset::warnings)
        .def("__len__", &StudyDataset::size)
        .def("summary", [](const StudyDataset& ds) {
            return to_py(summary_to_json(dataset_summary(ds), ds.warnings()));
        })
        .def("cluster", [](const StudyDataset& ds, std::size_t j) {
            if (j >= ds.size()) throw py::index_error();
            const ClusterRecord& c = ds.cluster(j);
            py::dict d;
            d["cluster_id"] = c.cluster_id;
            d["s"] = c.participates ? 1 : 0;
            d["arm"] = c.arm;
            d["x"] = c.x;
            d["w"] = c.w;
            d["y"] = c.y;
            return d;
        });

    m.def("make_dataset",
          [](const std::vector<py::dict>& clusters, const std::vector<std::string>& required_arms) {
              std::vector<ClusterRecord> records;
              for (const py::dict& d : clusters) records.push_back(record_from(d));
              return validate_dataset(std::move(records), required_arms);
          },
          py::arg("clusters"), py::arg("required_arms") = std::vector<std::string>{},
          "Validated dataset from dicts with cluster_id, s, arm, x, w and y.");
    m.def("load_csv",
          [](const std::filesystem::path& c, const std::filesystem::path& i,
             const std::vector<std::string>& required) { return load_csv(c, i, required); },
          py::arg("clusters"), py::arg("individuals"),
          py::arg("required_arms") = std::vector<std::string>{});
    m.def("generate_dataset",
          [](const py::object& dgp, std::uint64_t replication) {
              return generate_dataset(parse_dgp_config(from_py(dgp)), replication);
          },
          py::arg("dgp"), py::arg("replication") = 0);

    py::class_<NuisanceEstimates>(m, "NuisanceEstimates")
        .def_readonly("arms", &NuisanceEstimates::arms)
        .def_readonly("p_hat", &NuisanceEstimates::p_hat)
        .def_readonly("e_hat", &NuisanceEstimates::e_hat)
        .def_readonly("g_hat", &NuisanceEstimates::g_hat)
        .def_readonly("clipped_participation", &NuisanceEstimates::clipped_participation)
        .def_readonly("clipped_treatment", &NuisanceEstimates::clipped_treatment)
        .def_property_readonly("cluster_ids", [](const NuisanceEstimates& ne) { return *ne.cluster_ids; })
        .def("__len__", &NuisanceEstimates::size);

    m.def("make_nuisance_estimates", &make_nuisance_estimates, py::arg("cluster_ids"), py::arg("arms"),
          py::arg("arm_of"), py::arg("p_hat"), py::arg("e_hat"), py::arg("g_hat"), py::arg("ybar"));
    m.def("fit_nuisance_estimates",
          [](const StudyDataset& ds, const py::object& nuisance, int folds, std::uint64_t seed) {
              const NuisanceConfig cfg =
                  resolve_nuisance_config(parse_nuisance_config(from_py(nuisance)), ds.p());
              if (folds >= 2) return crossfit_nuisance_estimates(ds, cfg, folds, seed);
              return compute_nuisance_estimates(ds, fit_nuisance(ds, cfg));
          },
          py::arg("dataset"), py::arg("nuisance") = py::dict(), py::arg("folds") = 0,
          py::arg("seed") = 1);

    py::class_<PointEstimate>(m, "PointEstimate")
        .def_property_readonly("estimator",
                               [](const PointEstimate& e) { return std::string(estimator_key(e.estimator)); })
        .def_readonly("arm", &PointEstimate::arm)
        .def_readonly("reference_arm", &PointEstimate::reference_arm)
        .def_readonly("value", &PointEstimate::value)
        .def_readonly("influence", &PointEstimate::influence)
        .def_property_readonly("cluster_ids", [](const PointEstimate& e) { return *e.cluster_ids; })
        .def_property_readonly("weights",
                               [](const PointEstimate& e) -> py::object {
                                   if (!e.weights) return py::none();
                                   return to_dict(*e.weights);
                               })
        .def_readonly("metadata", &PointEstimate::metadata)
        .def_readonly("warnings", &PointEstimate::warnings)
        .def("__repr__", [](const PointEstimate& e) {
            return "<PointEstimate " + std::string(estimator_key(e.estimator)) + " arm=" + e.arm +
                   " value=" + std::to_string(e.value) + ">";
        });

    m.def("aipw", &aipw_psi, py::arg("nuisance"), py::arg("arm"));
    m.def("ipw", &ipw_psi, py::arg("nuisance"), py::arg("arm"), py::arg("normalized") = false);
    m.def("gformula", &gformula_psi, py::arg("nuisance"), py::arg("arm"));
    m.def("transport", &transport_phi, py::arg("nuisance"), py::arg("arm"));
    m.def("trial_only",
          [](const StudyDataset& ds, const std::string& arm, bool cluster_weighted) {
              return trial_only_estimate(ds, arm,
                                         cluster_weighted ? TrialPooling::Cluster : TrialPooling::Individual);
          },
          py::arg("dataset"), py::arg("arm"), py::arg("cluster_weighted") = false);
    m.def("contrast", &contrast, py::arg("estimate"), py::arg("reference"));

    m.def("influence_curve_interval",
          [](const PointEstimate& e, double level) { return to_dict(influence_curve_interval(e, level)); },
          py::arg("estimate"), py::arg("level") = 0.95);
    m.def("cluster_robust_trial_interval",
          [](const StudyDataset& ds, const std::string& arm, double level) {
              return to_dict(cluster_robust_trial_interval(ds, arm, level));
          },
          py::arg("dataset"), py::arg("arm"), py::arg("level") = 0.95);
    m.def("normal_quantile", &normal_quantile, py::arg("p"));

    m.def("oracle_truth",
          [](const py::object& dgp, std::int64_t draws, int threads) {
              const DgpConfig cfg = parse_dgp_config(from_py(dgp));
              OracleTruth t;
              {
                  py::gil_scoped_release release;
                  t = oracle_truth(cfg, draws, threads);
              }
              py::dict d;
              d["draws"] = t.draws;
              d["nonrandomized_draws"] = t.nonrandomized_draws;
              py::dict arms;
              for (std::size_t k = 0; k < t.arms.size(); ++k) {
                  py::dict a;
                  a["psi"] = t.psi[k];
                  a["psi_se"] = t.psi_se[k];
                  a["phi"] = t.phi[k];
                  a["phi_se"] = t.phi_se[k];
                  arms[py::str(t.arms[k])] = a;
              }
              d["arms"] = arms;
              return d;
          },
          py::arg("dgp"), py::arg("draws") = 1000000, py::arg("threads") = 1);

    m.def("estimate",
          [](const py::object& config, const std::filesystem::path& base_dir) {
              const RunConfig cfg = parse_run_config(from_py(config), base_dir);
              EstimateReport report;
              {
                  py::gil_scoped_release release;
                  report = run_estimation(cfg);
              }
              return to_py(report_to_json(report));
          },
          py::arg("config"), py::arg("base_dir") = std::filesystem::path{},
          "Runs the estimate command on a config dict and returns the JSON report.");
    m.def("simulate",
          [](const py::object& config) {
              const RunConfig cfg = parse_run_config(from_py(config));
              SimulationReport report;
              {
                  py::gil_scoped_release release;
                  report = run_simulation(cfg);
              }
              return to_py(report_to_json(report));
          },
          py::arg("config"), "Runs the simulate command on a config dict and returns the JSON report.");
}
