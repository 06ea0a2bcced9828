#include "forgebench/report.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "forgebench/error.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Quotes a CSV field when it holds a delimiter or quote.
std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_auc(const std::optional<double>& auc) { return auc ? fmt::format("{:.2f}", *auc) : "n/a"; }

bool is_classifier(const EvalRun& run) {
  auto it = run.config.find("family");
  return it != run.config.end() && it->second == "classifier";
}

nlohmann::json config_json(const std::map<std::string, std::string>& config) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : config) out[k] = v;
  return out;
}

}  // namespace

bool operator==(const RunMetrics& a, const RunMetrics& b) { return metrics_to_json(a) == metrics_to_json(b); }

std::vector<ScoredSample> scored_samples(const std::vector<Prediction>& predictions) {
  std::vector<ScoredSample> out;
  for (const auto& p : predictions) {
    if (p.score) out.push_back({p.document_id, *p.score, p.truth});
  }
  return out;
}

RunMetrics compute_run_metrics(const std::vector<Prediction>& predictions, double threshold) {
  RunMetrics m;
  const auto counts = count_omissions(predictions);
  m.predictions = predictions.size();
  m.scored = counts.scored;
  m.unparseable = counts.unparseable;
  m.refusal = counts.refusal;
  m.threshold = threshold;
  const auto samples = scored_samples(predictions);
  validate_scores(samples);
  m.confusion = confusion_at_threshold(samples, threshold);
  const bool both = std::any_of(samples.begin(), samples.end(), [](auto& s) { return s.truth == Label::Forged; }) &&
                    std::any_of(samples.begin(), samples.end(), [](auto& s) { return s.truth == Label::Pristine; });
  if (both) m.auc = auc_trapezoid(roc_curve(samples));
  return m;
}

nlohmann::json metrics_to_json(const RunMetrics& m) {
  return {
      {"predictions", m.predictions},
      {"scored", m.scored},
      {"unparseable", m.unparseable},
      {"refusal", m.refusal},
      {"auc", m.auc ? nlohmann::json(*m.auc) : nlohmann::json(nullptr)},
      {"threshold", m.threshold},
      {"tp", m.confusion.tp},
      {"fp", m.confusion.fp},
      {"tn", m.confusion.tn},
      {"fn", m.confusion.fn},
      {"accuracy", m.confusion.accuracy},
      {"precision", m.confusion.precision},
      {"recall", m.confusion.recall},
      {"f1", m.confusion.f1},
  };
}

std::string compute_run_id(const EvalRun& run) {
  nlohmann::json material{{"model_id", run.model_id}, {"config", config_json(run.config)}};
  auto& preds = material["predictions"] = nlohmann::json::array();
  for (const auto& p : run.predictions) preds.push_back(prediction_to_json(p));
  return sha256_hex(std::string_view(material.dump()));
}

namespace {

void check_predictions(const std::vector<Prediction>& predictions) {
  std::set<std::string> ids;
  for (const auto& p : predictions) {
    if (!ids.insert(p.document_id).second) throw Error(ErrorCode::CorruptRunFile, "duplicate document " + p.document_id);
    if (p.prompt_version != predictions.front().prompt_version) {
      throw Error(ErrorCode::CorruptRunFile, "predictions carry different prompt versions");
    }
  }
}

}  // namespace

EvalRun make_run(std::string model_id, std::map<std::string, std::string> config, std::vector<Prediction> predictions,
                 double threshold, std::string created_at) {
  check_predictions(predictions);
  EvalRun run;
  run.model_id = std::move(model_id);
  run.config = std::move(config);
  run.predictions = std::move(predictions);
  run.metrics = compute_run_metrics(run.predictions, threshold);
  run.created_at = std::move(created_at);
  run.run_id = compute_run_id(run);
  return run;
}

std::string serialize_run(const EvalRun& run) {
  std::string out;
  out += nlohmann::json{{"kind", "run"},
                        {"run_id", run.run_id},
                        {"model_id", run.model_id},
                        {"created_at", run.created_at},
                        {"config", config_json(run.config)}}
             .dump();
  out += '\n';
  for (const auto& p : run.predictions) {
    out += nlohmann::json{{"kind", "prediction"}, {"prediction", prediction_to_json(p)}}.dump();
    out += '\n';
  }
  out += nlohmann::json{{"kind", "metrics"}, {"metrics", metrics_to_json(run.metrics)}}.dump();
  out += '\n';
  return out;
}

EvalRun parse_run(std::string_view text) {
  EvalRun run;
  std::optional<nlohmann::json> stored_metrics;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t stop = text.find('\n', start);
    if (stop == std::string_view::npos) stop = text.size();
    ++line_no;
    const std::string_view line = text.substr(start, stop - start);
    start = stop + 1;
    if (trim(line).empty()) continue;
    auto fail = [&](const std::string& what) {
      return Error(ErrorCode::CorruptRunFile, fmt::format("line {}: {}", line_no, what));
    };
    const auto entry = nlohmann::json::parse(line, nullptr, false);
    if (!entry.is_object() || !entry.contains("kind") || !entry["kind"].is_string()) throw fail("not a run record");
    const auto kind = entry["kind"].get<std::string>();
    try {
      if (kind == "run") {
        if (have_header) throw fail("second header");
        have_header = true;
        run.run_id = entry.at("run_id").get<std::string>();
        run.model_id = entry.at("model_id").get<std::string>();
        run.created_at = entry.at("created_at").get<std::string>();
        for (const auto& [k, v] : entry.at("config").items()) run.config[k] = v.get<std::string>();
      } else if (kind == "prediction") {
        if (!have_header || stored_metrics) throw fail("prediction outside the run body");
        run.predictions.push_back(prediction_from_json(entry.at("prediction")));
      } else if (kind == "metrics") {
        if (!have_header || stored_metrics) throw fail("unexpected metrics record");
        stored_metrics = entry.at("metrics");
      } else {
        throw fail("unknown kind " + kind);
      }
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::CorruptRunFile || std::string_view(e.what()).find("line ") == std::string_view::npos) {
        throw fail(e.what());
      }
      throw;
    }
  }
  if (!have_header) throw Error(ErrorCode::CorruptRunFile, "missing run header");
  if (!stored_metrics) throw Error(ErrorCode::CorruptRunFile, "missing metrics record");
  check_predictions(run.predictions);
  const std::string stored_id = run.run_id;
  if (compute_run_id(run) != stored_id) throw Error(ErrorCode::CorruptRunFile, "run_id does not match contents");
  const double threshold = stored_metrics->value("threshold", kDefaultThreshold);
  run.metrics = compute_run_metrics(run.predictions, threshold);
  if (metrics_to_json(run.metrics) != *stored_metrics) {
    throw Error(ErrorCode::MetricMismatch, "stored metrics differ from recomputation for run " + stored_id);
  }
  return run;
}

std::filesystem::path run_file_name(const EvalRun& run) {
  return file_slug(run.model_id) + "-" + run.run_id.substr(0, 12) + ".run";
}

std::filesystem::path write_run(const EvalRun& run, const std::filesystem::path& dir) {
  const auto path = dir / run_file_name(run);
  write_file_atomic(path, serialize_run(run));
  return path;
}

EvalRun read_run(const std::filesystem::path& path) {
  try {
    return parse_run(read_file_text(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.filename().string() + ": " + e.what());
  }
}

std::vector<EvalRun> load_runs(const std::filesystem::path& dir) {
  std::vector<EvalRun> runs;
  if (!std::filesystem::is_directory(dir)) return runs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".run") runs.push_back(read_run(entry.path()));
  }
  std::sort(runs.begin(), runs.end(), [](const EvalRun& a, const EvalRun& b) {
    return std::tie(a.model_id, a.run_id) < std::tie(b.model_id, b.run_id);
  });
  return runs;
}

std::string summary_table(const std::vector<EvalRun>& runs) {
  std::vector<const EvalRun*> ordered;
  for (const auto& r : runs) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(), [](const EvalRun* a, const EvalRun* b) {
    return std::make_tuple(is_classifier(*a), a->model_id) < std::make_tuple(is_classifier(*b), b->model_id);
  });
  std::string out = "model,auc,n,scored,unparseable,refusal\n";
  for (const auto* r : ordered) {
    const auto& m = r->metrics;
    out += fmt::format("{},{},{},{},{},{}\n", csv_field(r->model_id), format_auc(m.auc), m.predictions, m.scored,
                       m.unparseable, m.refusal);
  }
  out += "Baseline (random),0.50,,,,\n";
  return out;
}

std::string ablation_table(const std::vector<EvalRun>& runs) {
  struct Pair {
    const EvalRun* off = nullptr;
    const EvalRun* on = nullptr;
  };
  std::map<std::string, Pair> groups;
  for (const auto& r : runs) {
    auto group = r.config.find("ablation_group");
    auto tokens = r.config.find("reasoning_tokens");
    if (group == r.config.end() || group->second.empty() || tokens == r.config.end()) continue;
    auto& pair = groups[group->second];
    (tokens->second == "0" ? pair.off : pair.on) = &r;
  }
  std::string rows;
  for (const auto& [group, pair] : groups) {
    if (!pair.off || !pair.on) continue;
    rows += fmt::format("{},{},{}\n", csv_field(group), format_auc(pair.off->metrics.auc), format_auc(pair.on->metrics.auc));
  }
  if (rows.empty()) return {};
  return "model,without_thinking,with_thinking\n" + rows;
}

std::string accuracy_table(const std::vector<EvalRun>& runs) {
  std::vector<double> thresholds;
  for (int i = 0; i <= 20; ++i) thresholds.push_back(i / 20.0);
  std::string out = "model,threshold,accuracy,correct,scored\n";
  for (const auto& r : runs) {
    const auto samples = scored_samples(r.predictions);
    if (samples.empty()) continue;
    for (double t : thresholds) {
      const auto c = confusion_at_threshold(samples, t);
      out += fmt::format("{},{:.2f},{:.4f},{},{}\n", csv_field(r.model_id), t, c.accuracy, c.tp + c.tn, c.total());
    }
  }
  return out;
}

std::string roc_csv(const std::vector<NamedCurve>& curves) {
  std::string out = "model,threshold,fpr,tpr\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.curve.points.size(); ++i) {
      out += fmt::format("{},{},{},{}\n", csv_field(c.model_id), c.curve.thresholds[i], c.curve.points[i].fpr,
                         c.curve.points[i].tpr);
    }
  }
  return out;
}

std::string roc_svg(std::vector<NamedCurve> curves) {
  std::sort(curves.begin(), curves.end(), [](const auto& a, const auto& b) { return a.model_id < b.model_id; });
  constexpr double left = 60, top = 20, side = 400;
  auto px = [&](double fpr) { return left + fpr * side; };
  auto py = [&](double tpr) { return top + (1.0 - tpr) * side; };

  std::string out =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n"
      "<rect x=\"0\" y=\"0\" width=\"480\" height=\"480\" fill=\"white\"/>\n"
      "<rect x=\"60\" y=\"20\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"black\"/>\n"
      "<line class=\"baseline\" x1=\"60\" y1=\"420\" x2=\"460\" y2=\"20\" stroke=\"#999999\" stroke-dasharray=\"4 4\"/>\n"
      "<text x=\"260\" y=\"455\" text-anchor=\"middle\" font-size=\"12\">False positive rate</text>\n"
      "<text x=\"20\" y=\"220\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 20 220)\">True positive rate</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* colour = kPalette[i % std::size(kPalette)];
    out += fmt::format("<!-- model={} auc={} points={} -->\n", xml_escape(c.model_id), c.auc, c.curve.points.size());
    std::string d;
    for (std::size_t k = 0; k < c.curve.points.size(); ++k) {
      d += fmt::format("{}{:.2f},{:.2f}", k == 0 ? "M" : " L", px(c.curve.points[k].fpr), py(c.curve.points[k].tpr));
    }
    out += fmt::format("<path class=\"roc\" data-model=\"{}\" d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       xml_escape(c.model_id), d, colour);
    // Legend stacks upward from the lower-right corner of the plot.
    const double ly = top + side - 16.0 * static_cast<double>(curves.size() - i);
    out += fmt::format("<rect x=\"300\" y=\"{:.0f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", ly, colour);
    out += fmt::format("<text x=\"316\" y=\"{:.0f}\" font-size=\"11\">{} (AUC {:.2f})</text>\n", ly + 9,
                       xml_escape(c.model_id), c.auc);
  }
  out += "</svg>\n";
  return out;
}

std::string calibration_csv(const CalibrationHistogram& h) {
  std::string out = "bin_lower,bin_upper,pristine,forged\n";
  for (std::size_t b = 0; b < h.bins(); ++b) {
    out += fmt::format("{:.4f},{:.4f},{},{}\n", static_cast<double>(b) * h.bin_width,
                       static_cast<double>(b + 1) * h.bin_width, h.pristine[b], h.forged[b]);
  }
  return out;
}

std::string calibration_svg(const std::string& model_id, const CalibrationHistogram& h) {
  constexpr double left = 50, top = 30, width = 560, height = 240;
  std::size_t peak = 1;
  for (std::size_t b = 0; b < h.bins(); ++b) peak = std::max({peak, h.pristine[b], h.forged[b]});
  const double slot = width / static_cast<double>(std::max<std::size_t>(h.bins(), 1));
  const double bar = slot * 0.4;

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"320\" viewBox=\"0 0 640 320\">\n"
      "<rect x=\"0\" y=\"0\" width=\"640\" height=\"320\" fill=\"white\"/>\n"
      "<text x=\"320\" y=\"18\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n"
      "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
      xml_escape(model_id), left, top + height, left + width, top + height);
  for (std::size_t b = 0; b < h.bins(); ++b) {
    const std::pair<const char*, std::size_t> series[] = {{"pristine", h.pristine[b]}, {"forged", h.forged[b]}};
    for (std::size_t s = 0; s < 2; ++s) {
      const double bh = height * static_cast<double>(series[s].second) / static_cast<double>(peak);
      const double x = left + slot * static_cast<double>(b) + slot * 0.1 + bar * static_cast<double>(s);
      out += fmt::format(
          "<rect class=\"bar\" data-bin=\"{}\" data-truth=\"{}\" data-count=\"{}\" x=\"{:.2f}\" y=\"{:.2f}\" "
          "width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
          b, series[s].first, series[s].second, x, top + height - bh, bar, bh, s == 0 ? kPalette[0] : kPalette[3]);
    }
  }
  out += fmt::format("<text x=\"{}\" y=\"300\" font-size=\"11\">0</text>\n", left);
  out += fmt::format("<text x=\"{}\" y=\"300\" font-size=\"11\" text-anchor=\"end\">1</text>\n", left + width);
  out += "</svg>\n";
  return out;
}

ReportFiles write_reports(const std::vector<EvalRun>& runs, const std::filesystem::path& dir) {
  ReportFiles files;
  auto emit = [&](const std::string& name, const std::string& contents) {
    write_file_atomic(dir / name, contents);
    files.written.push_back(dir / name);
  };
  emit("auc_table.csv", summary_table(runs));
  if (auto ablation = ablation_table(runs); !ablation.empty()) emit("ablation_table.csv", ablation);
  emit("accuracy.csv", accuracy_table(runs));

  std::vector<NamedCurve> curves;
  for (const auto& r : runs) {
    if (!r.metrics.auc) continue;
    curves.push_back({r.model_id, roc_curve(scored_samples(r.predictions)), *r.metrics.auc});
  }
  std::sort(curves.begin(), curves.end(), [](const auto& a, const auto& b) { return a.model_id < b.model_id; });
  emit("roc.csv", roc_csv(curves));
  emit("roc.svg", roc_svg(curves));

  for (const auto& r : runs) {
    const auto samples = scored_samples(r.predictions);
    if (samples.empty()) continue;
    const auto hist = calibration_histogram(samples);
    const std::string stem = "calibration_" + file_slug(r.model_id);
    emit(stem + ".csv", calibration_csv(hist));
    emit(stem + ".svg", calibration_svg(r.model_id, hist));
  }
  return files;
}

}  // namespace forgebench
