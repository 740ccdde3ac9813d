#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "r2n/config.hpp"
#include "r2n/error.hpp"
#include "r2n/eval.hpp"
#include "r2n/kg.hpp"
#include "r2n/pipeline.hpp"
#include "r2n/rules.hpp"

namespace py = pybind11;
using namespace r2n;

namespace {

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kEmptyDataset: return "empty_dataset";
    case ErrorKind::kMissingDomain: return "missing_domain";
    case ErrorKind::kUndefinedStatistic: return "undefined_statistic";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kMissingArtifact: return "missing_artifact";
    case ErrorKind::kLocked: return "locked";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
  }
  return "unknown";
}

py::object optional_value(const std::optional<double>& v) {
  return v ? py::object(py::float_(*v)) : py::object(py::none());
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["mrr"] = m.mrr;
  d["hits1"] = m.hits1;
  d["hits3"] = m.hits3;
  d["hits10"] = m.hits10;
  d["n_queries"] = m.n_queries;
  return d;
}

void run_command(const std::string& command, const std::string& out,
                 const std::map<std::string, std::string>& config, bool force) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : config) cfg.set(k, v);
  Experiment exp(out, cfg, force);
  static const std::map<std::string, void (*)(Experiment&)> commands{
      {"ingest", cmd_ingest},       {"stats", cmd_stats},       {"split", cmd_split},
      {"mine", cmd_mine},           {"ground", cmd_ground},     {"pretrain", cmd_pretrain},
      {"finetune", cmd_finetune},   {"evaluate", cmd_evaluate}, {"ablate", cmd_ablate},
      {"run-all", cmd_run_all},
  };
  if (command == "select") {
    cmd_select(exp, nullptr);
    return;
  }
  const auto it = commands.find(command);
  if (it == commands.end()) throw Error(ErrorKind::kInvalidArgument, "unknown command '" + command + "'");
  it->second(exp);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Rule mining, grounding and relational reasoning over knowledge graphs";

  static py::exception<Error> error(m, "R2NError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      inst.attr("kind") = kind_name(e.kind());
      inst.attr("exit_code") = exit_code(e.kind());
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  py::class_<KnowledgeGraph>(m, "KnowledgeGraph")
      .def_static(
          "load",
          [](const std::string& triples, std::optional<std::string> domains) {
            std::optional<std::filesystem::path> d;
            if (domains) d = *domains;
            return load_graph(triples, d);
          },
          py::arg("triples"), py::arg("domains") = py::none())
      .def_property_readonly("num_entities", &KnowledgeGraph::num_entities)
      .def_property_readonly("num_relations", &KnowledgeGraph::num_relations)
      .def_property_readonly("duplicates_dropped", &KnowledgeGraph::duplicates_dropped)
      .def("__len__", &KnowledgeGraph::size)
      .def("entities", [](const KnowledgeGraph& kg) { return kg.entities().names(); })
      .def("relations", [](const KnowledgeGraph& kg) { return kg.relations().names(); })
      .def("triples",
           [](const KnowledgeGraph& kg) {
             std::vector<std::tuple<std::string, std::string, std::string>> out;
             for (const auto& t : kg.triples()) {
               out.emplace_back(kg.entities().name(t.head), kg.relations().name(t.relation),
                                kg.entities().name(t.tail));
             }
             return out;
           })
      .def("contains", [](const KnowledgeGraph& kg, const std::string& h, const std::string& r,
                          const std::string& t) {
        const auto hi = kg.entities().find(h), ri = kg.relations().find(r), ti = kg.entities().find(t);
        return hi && ri && ti && kg.contains(*hi, *ri, *ti);
      });

  m.def(
      "stats",
      [](const KnowledgeGraph& kg) {
        py::list rows;
        for (const auto& row : compute_stats(kg).rows) {
          py::dict d;
          d["relation"] = kg.relations().name(row.relation);
          d["domain_block"] = row.block;
          d["freq_overall"] = row.freq_overall;
          d["freq_in_block"] = row.freq_in_block;
          d["reflexive"] = optional_value(row.properties.reflexive);
          d["symmetric"] = optional_value(row.properties.symmetric);
          d["transitive"] = optional_value(row.properties.transitive);
          rows.append(d);
        }
        return rows;
      },
      py::arg("kg"), "Per-relation frequency and reflexive/symmetric/transitive percentages; None is NA.");

  m.def(
      "mine",
      [](const KnowledgeGraph& kg, int max_body_atoms, std::uint64_t min_support, double min_head_coverage) {
        MinedRuleSet rules;
        {
          py::gil_scoped_release release;
          rules = mine(kg, MinerConfig{max_body_atoms, min_support, min_head_coverage});
        }
        py::list out;
        for (const auto& r : rules) {
          py::dict d;
          d["rule"] = rule_text(r.rule, kg.relations());
          d["support"] = r.stats.support;
          d["head_coverage"] = r.stats.head_coverage;
          d["std_confidence"] = r.stats.std_confidence;
          d["pca_confidence"] = r.stats.pca_confidence;
          out.append(d);
        }
        return out;
      },
      py::arg("kg"), py::arg("max_body_atoms") = 2, py::arg("min_support") = 10,
      py::arg("min_head_coverage") = 0.01);

  m.def(
      "metrics_from_ranks",
      [](const std::vector<double>& ranks) { return metrics_dict(metrics_from_ranks(ranks)); },
      py::arg("ranks"));

  m.def(
      "run",
      [](const std::string& command, const std::string& out, const std::map<std::string, std::string>& config,
         bool force) {
        py::gil_scoped_release release;
        run_command(command, out, config, force);
      },
      py::arg("command"), py::arg("out"), py::arg("config") = std::map<std::string, std::string>{},
      py::arg("force") = false,
      "Run one pipeline command (as the r2n CLI would) against an experiment directory.");

  m.def("exit_code", [](const std::string& kind) {
    for (int k = 0; k <= static_cast<int>(ErrorKind::kFormat); ++k) {
      if (kind == kind_name(static_cast<ErrorKind>(k))) return exit_code(static_cast<ErrorKind>(k));
    }
    throw Error(ErrorKind::kInvalidArgument, "unknown error kind '" + kind + "'");
  });
}
