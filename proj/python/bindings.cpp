#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "forgebench/cli.hpp"
#include "forgebench/error.hpp"
#include "forgebench/jpeg_dct.hpp"
#include "forgebench/llm.hpp"
#include "forgebench/metrics.hpp"
#include "forgebench/report.hpp"
#include "forgebench/util.hpp"

namespace py = pybind11;
using namespace forgebench;

namespace {

std::vector<ScoredSample> to_samples(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw py::value_error("scores and labels differ in length");
  std::vector<ScoredSample> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw py::value_error("labels must be 0 (pristine) or 1 (forged)");
    out.push_back({std::to_string(i), scores[i], labels[i] == 1 ? Label::Forged : Label::Pristine});
  }
  return out;
}

py::dict confusion_dict(const Confusion& c) {
  py::dict d;
  d["tp"] = c.tp;
  d["fp"] = c.fp;
  d["tn"] = c.tn;
  d["fn"] = c.fn;
  d["accuracy"] = c.accuracy;
  d["precision"] = c.precision;
  d["recall"] = c.recall;
  d["f1"] = c.f1;
  return d;
}

py::dict run_dict(const EvalRun& run) {
  py::dict d;
  d["run_id"] = run.run_id;
  d["model_id"] = run.model_id;
  d["config"] = run.config;
  d["created_at"] = run.created_at;
  d["predictions"] = run.metrics.predictions;
  d["scored"] = run.metrics.scored;
  d["unparseable"] = run.metrics.unparseable;
  d["refusal"] = run.metrics.refusal;
  d["auc"] = run.metrics.auc;
  d["threshold"] = run.metrics.threshold;
  d["confusion"] = confusion_dict(run.metrics.confusion);
  return d;
}

}  // namespace

PYBIND11_MODULE(forgebench, m) {
  m.doc() = "Document forgery benchmark: JPEG coefficient features, metrics, LLM reply parsing and reports.";

  // Module-lifetime reference; the translator raises instances carrying the error code name.
  static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("sha256_hex", [](py::bytes data) { return sha256_hex(std::string_view(data)); }, py::arg("data"));

  m.def(
      "roc_curve",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        const auto curve = roc_curve(to_samples(scores, labels));
        std::vector<std::pair<double, double>> points;
        for (const auto& p : curve.points) points.emplace_back(p.fpr, p.tpr);
        return py::make_tuple(points, curve.thresholds);
      },
      py::arg("scores"), py::arg("labels"),
      "Returns (points, thresholds); points are (fpr, tpr) from (0, 0) to (1, 1).");
  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return auc_trapezoid(roc_curve(to_samples(scores, labels)));
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "auc_pairwise",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return auc_pairwise(to_samples(scores, labels));
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "confusion",
      [](const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
        return confusion_dict(confusion_at_threshold(to_samples(scores, labels), threshold));
      },
      py::arg("scores"), py::arg("labels"), py::arg("threshold") = kDefaultThreshold);
  m.def(
      "calibration_histogram",
      [](const std::vector<double>& scores, const std::vector<int>& labels, double bin_width) {
        const auto h = calibration_histogram(to_samples(scores, labels), bin_width);
        py::dict d;
        d["bin_width"] = h.bin_width;
        d["pristine"] = h.pristine;
        d["forged"] = h.forged;
        return d;
      },
      py::arg("scores"), py::arg("labels"), py::arg("bin_width") = kDefaultBinWidth);

  m.def(
      "decode_jpeg_dct",
      [](py::bytes data) {
        const std::string_view view(data);
        const auto plane = decode_jpeg_dct(
            std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(view.data()), view.size()));
        py::dict d;
        d["width"] = plane.width;
        d["height"] = plane.height;
        d["blocks_wide"] = plane.blocks_wide;
        d["blocks_high"] = plane.blocks_high;
        d["quant_table"] = std::vector<int>(plane.quant_table.begin(), plane.quant_table.end());
        std::vector<std::vector<int>> blocks;
        blocks.reserve(plane.blocks.size());
        for (const auto& b : plane.blocks) blocks.emplace_back(b.begin(), b.end());
        d["blocks"] = std::move(blocks);
        return d;
      },
      py::arg("data"),
      "Quantized luminance coefficients; each block lists 64 values in natural (row-major) order.");

  m.def("default_prompt", [] { return default_prompt_template().text; });
  m.def(
      "parse_confidence",
      [](const std::string& reply) {
        const auto v = parse_confidence(reply);
        py::dict d;
        d["confidence"] = v.confidence;
        d["evidence"] = v.evidence;
        d["remaining_uncertainties"] = v.remaining_uncertainties;
        d["parse_path"] = std::string(parse_path_name(v.parse_path));
        return d;
      },
      py::arg("reply"));

  m.def(
      "load_runs",
      [](const std::filesystem::path& dir) {
        py::list out;
        for (const auto& run : load_runs(dir)) out.append(run_dict(run));
        return out;
      },
      py::arg("runs_dir"));
  m.def(
      "summary_table", [](const std::filesystem::path& dir) { return summary_table(load_runs(dir)); },
      py::arg("runs_dir"));
  m.def(
      "ablation_table", [](const std::filesystem::path& dir) { return ablation_table(load_runs(dir)); },
      py::arg("runs_dir"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one CLI invocation in-process; returns (exit_code, stdout, stderr).");
}
