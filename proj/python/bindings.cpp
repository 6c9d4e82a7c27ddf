// Python bindings for the core library.

#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "unmask/alignment.hpp"
#include "unmask/attacks.hpp"
#include "unmask/datagen.hpp"
#include "unmask/evalharness.hpp"
#include "unmask/experiment.hpp"
#include "unmask/feature_matrix.hpp"
#include "unmask/tinynet.hpp"

namespace py = pybind11;
using namespace unmask;

namespace {

FeatureSet names_to_set(const ClassFeatureMatrix& m, const std::vector<std::string>& names) {
  return FeatureSet::from_names(m.vocabulary(), names);
}

std::vector<ScoredSample> scored(const std::vector<double>& distances, const std::vector<bool>& adversarial) {
  if (distances.size() != adversarial.size()) throw std::invalid_argument("distances and labels differ in length");
  std::vector<ScoredSample> s(distances.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = {distances[i], adversarial[i]};
  return s;
}

}  // namespace

PYBIND11_MODULE(_unmask, mod) {
  mod.doc() = "Feature-alignment detection and defense against adversarial images";

  py::register_exception<Error>(mod, "UnmaskError", PyExc_RuntimeError);

  py::class_<ClassFeatureMatrix>(mod, "ClassFeatureMatrix")
      .def_property_readonly("classes", &ClassFeatureMatrix::classes)
      .def_property_readonly("features",
                             [](const ClassFeatureMatrix& m) { return m.vocabulary().identifiers(); })
      .def("row", [](const ClassFeatureMatrix& m, const std::string& c) { return m.row(c).names(m.vocabulary()); })
      .def_property_readonly("class_set_names", [](const ClassFeatureMatrix& m) {
        std::vector<std::string> names;
        for (const auto& [n, _] : m.class_sets()) names.push_back(n);
        return names;
      });

  py::class_<ClassSet>(mod, "ClassSet")
      .def_readonly("name", &ClassSet::name)
      .def_readonly("classes", &ClassSet::classes)
      .def_readonly("parts", &ClassSet::parts)
      .def_readonly("shared", &ClassSet::shared)
      .def_readonly("overlap", &ClassSet::overlap);

  mod.def("bundled_matrix",
          [] { return expand_subfeatures(load_matrix(bundled_data_path("unmask_matrix.json"))); },
          "The shipped class-feature matrix with compound features expanded.");
  mod.def("load_matrix", [](const std::filesystem::path& p) { return expand_subfeatures(load_matrix(p)); },
          py::arg("path"));
  mod.def("class_set", &named_class_set, py::arg("matrix"), py::arg("name"));

  mod.def("jaccard",
          [](const ClassFeatureMatrix& m, const std::vector<std::string>& a, const std::vector<std::string>& b) {
            return jaccard(names_to_set(m, a), names_to_set(m, b));
          },
          py::arg("matrix"), py::arg("a"), py::arg("b"));
  mod.def("detect",
          [](const ClassFeatureMatrix& m, const std::vector<std::string>& extracted, const std::string& predicted,
             double threshold) {
            const Detection d = detect(names_to_set(m, extracted), m.row(predicted), threshold);
            return py::make_tuple(d.adversarial(), d.distance);
          },
          py::arg("matrix"), py::arg("extracted"), py::arg("predicted_class"), py::arg("threshold") = 0.5,
          "Returns (adversarial, distance).");
  mod.def("rectify",
          [](const ClassFeatureMatrix& m, const ClassSet& cs, const std::vector<std::string>& extracted) {
            return rectify(names_to_set(m, extracted), m, cs);
          },
          py::arg("matrix"), py::arg("class_set"), py::arg("extracted"));

  mod.def("roc",
          [](const std::vector<double>& d, const std::vector<bool>& adv) {
            const RocCurve c = roc(scored(d, adv));
            std::vector<std::tuple<double, double, double>> pts;
            for (const auto& p : c.points) pts.emplace_back(p.threshold, p.fpr, p.tpr);
            return py::make_tuple(c.auc, pts);
          },
          py::arg("distances"), py::arg("adversarial"), "Returns (auc, [(threshold, fpr, tpr), ...]).");
  mod.def("wilcoxon_auc", [](const std::vector<double>& d, const std::vector<bool>& adv) {
    return wilcoxon_auc(scored(d, adv));
  }, py::arg("distances"), py::arg("adversarial"));

  py::class_<TinyNet>(mod, "TinyNet")
      .def_property_readonly("labels", [](const TinyNet& n) { return n.architecture().labels; })
      .def("forward", [](const TinyNet& n, const Eigen::MatrixXd& x) { return forward(n, x); }, py::arg("inputs"),
           "Probabilities for a (pixels x n) input matrix.")
      .def("predict", [](const TinyNet& n, const Eigen::MatrixXd& x) { return predict(n, x); }, py::arg("inputs"));
  mod.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  mod.def("generate",
          [](const ClassFeatureMatrix& m, const ClassSet& cs, std::size_t per_class, double drop_p,
             std::uint64_t seed) {
            const Dataset d =
                generate_dataset(m, cs, feature_layout(m, cs, seed), per_class, drop_p, seed, {1.0, 0.0, 0.0}).train;
            std::vector<std::string> labels;
            for (const auto& s : d.samples) labels.push_back(s.label);
            return py::make_tuple(Eigen::MatrixXd(image_matrix(d).transpose()), labels);
          },
          py::arg("matrix"), py::arg("class_set"), py::arg("per_class"), py::arg("drop_p") = 0.2, py::arg("seed") = 0,
          "Synthetic images as an (n x pixels) array plus their labels.");

  mod.def("pgd_linf",
          [](const TinyNet& net, const Eigen::MatrixXd& x, const std::vector<int>& labels, double eps_255,
             int steps) {
            AttackConfig c;
            c.epsilon_255 = eps_255;
            c.steps = steps;
            c.step_255 = 2.5 * eps_255 / steps;
            return Eigen::MatrixXd(attack_columns(net, x.transpose(), labels, c).transpose());
          },
          py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("epsilon_255"), py::arg("steps") = 20,
          "PGD under the Linf norm on (n x pixels) images.");

  mod.def("run_cli",
          [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int status = run_cli(args, out, err);
            return py::make_tuple(status, out.str(), err.str());
          },
          py::arg("args"), "Runs a CLI subcommand in-process; returns (status, stdout, stderr).");
}
