#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "deepdtf/cli.hpp"
#include "deepdtf/error.hpp"
#include "deepdtf/interpret.hpp"
#include "deepdtf/omics.hpp"
#include "deepdtf/smiles.hpp"
#include "deepdtf/train.hpp"

namespace py = pybind11;
using namespace deepdtf;

namespace {

std::vector<omics::FeatureGroup> to_groups(const std::vector<std::vector<std::size_t>>& columns) {
  std::vector<omics::FeatureGroup> groups;
  for (std::size_t i = 0; i < columns.size(); ++i) groups.push_back({"g" + std::to_string(i), columns[i]});
  return groups;
}

// The estimators call back into Python, so they stay on the calling thread.
interpret::ValueFn wrap(const py::function& f) {
  return [f](std::span<const double> x) { return f(std::vector<double>(x.begin(), x.end())).cast<double>(); };
}

py::dict attribution_dict(const interpret::Attribution& a) {
  py::dict d;
  d["phi0"] = a.phi0;
  d["phi"] = a.phi;
  d["fx"] = a.fx;
  d["estimator"] = a.estimator;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of deepdtf";
  m.attr("__version__") = cli::kVersion;

  static py::exception<Error> base(m, "DeepDTFError");
  static py::exception<ParseError> parse(m, "ParseError", base.ptr());
  static py::exception<UndefinedMetricError> undefined(m, "UndefinedMetricError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      py::set_error(parse, e.what());
    } catch (const UndefinedMetricError& e) {
      py::set_error(undefined, e.what());
    } catch (const Error& e) {
      py::set_error(base, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def(
      "parse_smiles_json",
      [](const std::string& smiles, const std::string& drug_id) {
        return chem::graph_to_json(chem::parse_smiles(smiles, drug_id)).dump();
      },
      py::arg("smiles"), py::arg("drug_id") = "");
  m.def("molecular_weight", [](const std::string& smiles) { return chem::molecular_weight(chem::parse_smiles(smiles)); });

  using Vec = std::vector<double>;
  using Labels = std::vector<int>;
  m.def("rmse", [](const Vec& y_hat, const Vec& y) { return train::rmse(y_hat, y); });
  m.def("r2", [](const Vec& y_hat, const Vec& y) { return train::r2(y_hat, y); });
  m.def("pcc", [](const Vec& y_hat, const Vec& y) { return train::pcc(y_hat, y); });
  m.def("auc", [](const Vec& p_hat, const Labels& t) { return train::auc(p_hat, t); });
  m.def(
      "accuracy", [](const Vec& p, const Labels& t, double thr) { return train::accuracy(p, t, thr); },
      py::arg("p_hat"), py::arg("t"), py::arg("threshold") = 0.5);

  m.def("binarize_response", &omics::binarize_response);
  m.def("asw_integrate", [](const Vec& prot, const Vec& dprot) { return omics::asw_integrate(prot, dprot); });

  m.def(
      "enrichment_score",
      [](const Vec& scores, const std::vector<bool>& in_set, double p) {
        std::vector<std::uint8_t> mask(in_set.begin(), in_set.end());
        return interpret::enrichment_score(scores, mask, p);
      },
      py::arg("scores"), py::arg("in_set"), py::arg("p") = 1.0);
  m.def(
      "gsea_preranked_json",
      [](const std::vector<std::pair<std::string, double>>& ranking,
         const std::vector<std::pair<std::string, std::vector<std::string>>>& sets, double weight,
         std::size_t permutations, std::size_t min_size, std::uint64_t seed) {
        interpret::GeneRanking r;
        for (const auto& [gene, score] : ranking) r.push_back({gene, score});
        std::vector<interpret::GeneSet> gs;
        for (const auto& [name, genes] : sets) gs.push_back({name, "", genes});
        interpret::GseaOptions opt;
        opt.weight_exponent = weight;
        opt.n_permutations = permutations;
        opt.min_size = min_size;
        opt.seed = seed;
        return interpret::gsea_preranked(r, gs, opt).to_json().dump();
      },
      py::arg("ranking"), py::arg("sets"), py::arg("weight") = 1.0, py::arg("permutations") = 1000,
      py::arg("min_size") = 5, py::arg("seed") = 0);

  m.def(
      "exact_shapley",
      [](const py::function& f, const Vec& sample, const std::vector<Vec>& background,
         const std::vector<std::vector<std::size_t>>& groups) {
        return attribution_dict(interpret::exact_shapley(wrap(f), sample, background, to_groups(groups)));
      },
      py::arg("f"), py::arg("sample"), py::arg("background"), py::arg("groups"));
  m.def(
      "sampled_shapley",
      [](const py::function& f, const Vec& sample, const std::vector<Vec>& background,
         const std::vector<std::vector<std::size_t>>& groups, std::size_t permutations, std::uint64_t seed) {
        return attribution_dict(
            interpret::sampled_shapley(wrap(f), sample, background, to_groups(groups), permutations, seed));
      },
      py::arg("f"), py::arg("sample"), py::arg("background"), py::arg("groups"), py::arg("permutations") = 200,
      py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
