#include "forgebench/cli.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "forgebench/dataset.hpp"
#include "forgebench/llm_client.hpp"
#include "forgebench/pipeline.hpp"
#include "forgebench/report.hpp"
#include "forgebench/synth.hpp"
#include "forgebench/util.hpp"

namespace forgebench {

namespace fs = std::filesystem;

std::map<std::string, std::string> CliConfig::describe() const {
  std::string split_list;
  for (const auto& s : splits) split_list += (split_list.empty() ? "" : ";") + s.string();
  return {
      {"subcommand", subcommand},
      {"root", root.string()},
      {"splits", split_list},
      {"out", out.string()},
      {"provider_config", provider_config.string()},
      {"mock_transcript", mock_transcript.string()},
      {"seed", std::to_string(seed)},
      {"clamp_t", std::to_string(clamp_t)},
      {"pql", pql ? "true" : "false"},
      {"threshold", fmt::format("{}", threshold)},
      {"dry_run", dry_run ? "true" : "false"},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"learning_rate", fmt::format("{}", learning_rate)},
      {"weight_forged", fmt::format("{}", weight_forged)},
      {"model_name", model_name},
      {"folds", std::to_string(folds)},
      {"eval_split", eval_split},
      {"synth_pristine", std::to_string(synth_pristine)},
      {"synth_forged", std::to_string(synth_forged)},
  };
}

void validate(const CliConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (c.clamp_t < 1) fail("--clamp-t must be >= 1");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) fail("--threshold must lie in [0, 1]");
  if (c.epochs < 1 || c.batch_size < 1) fail("--epochs and --batch-size must be positive");
  if (!(c.learning_rate > 0.0)) fail("--learning-rate must be positive");
  if (c.weight_forged < 0.0) fail("--weight-forged must be >= 0");
  if (c.folds < 2) fail("--folds must be >= 2");
  if (c.eval_split != "train" && c.eval_split != "test" && c.eval_split != "all") fail("--eval-split must be train, test or all");
  if ((c.subcommand == "synth" || c.subcommand == "ingest") && c.root.empty()) fail(c.subcommand + " needs --root");
  if (c.subcommand == "synth" && (c.synth_pristine < 1 || c.synth_forged < 1)) fail("synth needs at least one image per class");
  if (c.subcommand == "eval-llm" && c.provider_config.empty()) fail("eval-llm needs --provider-config");
  if (c.subcommand != "ingest" && !c.splits.empty()) fail("--split only applies to ingest");
  if (c.subcommand != "eval-llm" && !c.mock_transcript.empty()) fail("--mock-transcript only applies to eval-llm");
}

WorkPaths work_paths(const fs::path& out) {
  return {out / "manifest.jsonl", out / "skipped.txt", out / "features", out / "models",
          out / "runs",           out / "reports",     out / "cache"};
}

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Transport: return 4;
  }
  return 3;
}

namespace {

void require(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::MissingUpstreamArtifact, fmt::format("{} not found at {}", what, path.string()));
  }
}

std::vector<DocumentRecord> load_manifest(const CliConfig& c) {
  const auto paths = work_paths(c.out);
  require(paths.manifest, "manifest (run ingest first)");
  return read_manifest(paths.manifest);
}

std::string cnn_model_name(const CliConfig& c, bool pql) {
  if (!c.model_name.empty()) return c.model_name;
  return pql ? "CNN (OH-JPEG+PQL)" : "CNN (OH-JPEG)";
}

// Run records keep only settings that affect the scores, so runs do not
// change with the working directory.
std::map<std::string, std::string> run_settings(const CliConfig& c, std::initializer_list<const char*> keys) {
  const auto all = c.describe();
  std::map<std::string, std::string> out;
  for (const char* k : keys) out[k] = all.at(k);
  return out;
}

std::string svm_model_name(const CliConfig& c) { return c.model_name.empty() ? "SVM" : c.model_name; }

// One run per model in the runs directory: older runs of the same model are
// replaced, and an identical run keeps its original file.
fs::path replace_run(const EvalRun& run, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path target = dir / run_file_name(run);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".run" || entry.path() == target) continue;
    const auto text = read_file_text(entry.path());
    const auto header = nlohmann::json::parse(text.substr(0, text.find('\n')), nullptr, false);
    if (header.is_object() && header.value("model_id", "") == run.model_id) fs::remove(entry.path());
  }
  if (fs::exists(target)) return target;
  return write_run(run, dir);
}

std::string floats_base64(std::span<const float> values) {
  return base64_encode({reinterpret_cast<const std::uint8_t*>(values.data()), values.size() * sizeof(float)});
}

std::string serialize_svm(const SvmExperiment& e) {
  const auto& m = e.model;
  nlohmann::json j{
      {"format", "forgebench-svm-1"},
      {"kernel", m.kernel.kind == KernelKind::Linear ? "linear" : "rbf"},
      {"gamma", m.kernel.gamma},
      {"c", m.c},
      {"weight_positive", m.weight_positive},
      {"weight_negative", m.weight_negative},
      {"bias", m.bias},
      {"dimension", m.dimension},
      {"float_encoding", "base64 little-endian float32"},
  };
  std::vector<float> mean(e.standardizer.mean.begin(), e.standardizer.mean.end());
  std::vector<float> sd(e.standardizer.std.begin(), e.standardizer.std.end());
  j["standardizer"] = {{"mean", floats_base64(mean)}, {"std", floats_base64(sd)}};
  auto& support = j["support"] = nlohmann::json::array();
  for (const auto& sv : m.support) support.push_back({{"y", sv.y}, {"alpha", sv.alpha}, {"x", floats_base64(sv.x)}});
  auto& cells = j["grid"] = nlohmann::json::array();
  for (const auto& cell : e.search.cells) {
    cells.push_back({{"kernel", cell.cell.kernel == KernelKind::Linear ? "linear" : "rbf"},
                     {"gamma", cell.cell.gamma},
                     {"c", cell.cell.c},
                     {"minority_weight", cell.cell.minority_weight},
                     {"fold_f1", cell.fold_f1},
                     {"mean_f1", cell.mean_f1}});
  }
  return j.dump(1) + "\n";
}

}  // namespace

std::vector<std::string> planned_artifacts(const CliConfig& c) {
  const auto p = work_paths(c.out);
  const auto& s = c.subcommand;
  if (s == "synth") {
    return {(c.root / "images" / "<id>.jpg").string(), (c.root / "labels.txt").string(),
            (c.root / "splits" / "train.txt").string(), (c.root / "splits" / "test.txt").string()};
  }
  if (s == "ingest") return {p.manifest.string(), p.skip_log.string()};
  if (s == "features") return {(p.features / "<id>.ohjf").string(), (p.features / "features.json").string()};
  if (s == "train-svm") return {(p.models / "svm.json").string(), (p.runs / "<model>-<run_id>.run").string()};
  if (s == "train-cnn") {
    return {(p.models / "cnn.fbcn").string(), (p.models / "cnn_epochs.csv").string(),
            (p.runs / "<model>-<run_id>.run").string()};
  }
  if (s == "eval-llm") {
    return {(p.cache / "responses" / "<key>.txt").string(), (p.cache / "predictions.jsonl").string(),
            (p.runs / "<model>-<run_id>.run").string()};
  }
  if (s == "report") {
    return {(p.reports / "auc_table.csv").string(), (p.reports / "ablation_table.csv").string(),
            (p.reports / "accuracy.csv").string(), (p.reports / "roc.csv").string(),
            (p.reports / "roc.svg").string(), (p.reports / "calibration_<model>.csv").string(),
            (p.reports / "calibration_<model>.svg").string()};
  }
  return {};
}

std::vector<fs::path> cmd_synth(const CliConfig& c) {
  SynthOptions options;
  options.pristine = c.synth_pristine;
  options.forged = c.synth_forged;
  options.seed = c.seed;
  const auto docs = generate_corpus(options);
  write_corpus(c.root, docs);
  std::vector<fs::path> written;
  for (const auto& d : docs) written.push_back(c.root / "images" / (d.id + ".jpg"));
  written.push_back(c.root / "labels.txt");
  written.push_back(c.root / "splits" / "train.txt");
  written.push_back(c.root / "splits" / "test.txt");
  return written;
}

std::vector<fs::path> cmd_ingest(const CliConfig& c) {
  const fs::path root = fs::absolute(c.root);
  std::vector<fs::path> splits = c.splits;
  if (splits.empty()) {
    for (const char* name : {"train.txt", "test.txt"}) {
      if (fs::exists(root / "splits" / name)) splits.push_back(root / "splits" / name);
    }
    if (splits.empty()) throw Error(ErrorCode::MissingSplitFile, "no split files under " + (root / "splits").string());
  }
  std::vector<DocumentRecord> records;
  std::string skip_log;
  for (const auto& split : splits) {
    auto scan = scan_dataset(root, split);
    records.insert(records.end(), scan.records.begin(), scan.records.end());
    for (const auto& s : scan.skipped) skip_log += fmt::format("{}\t{}\t{}\n", split.filename().string(), s.name, s.reason);
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].id == records[i - 1].id) throw Error(ErrorCode::DuplicateId, records[i].id + " is listed in two splits");
  }
  const auto p = work_paths(c.out);
  write_manifest(p.manifest, records);
  write_file_atomic(p.skip_log, skip_log);
  return {p.manifest, p.skip_log};
}

std::vector<fs::path> cmd_features(const CliConfig& c) {
  const auto records = load_manifest(c);
  const auto p = work_paths(c.out);
  FeatureOptions options{c.clamp_t, c.pql, kDefaultPristinePatches, c.seed};
  std::vector<fs::path> written;
  nlohmann::json log{{"clamp_t", c.clamp_t}, {"pql", c.pql}, {"seed", c.seed}};
  auto& fallbacks = log["fallbacks"] = nlohmann::json::object();
  for (const auto& r : records) {
    const auto path = feature_cache_path(p.features, r.id);
    const auto features = sampled_features(r, options);
    if (features.reencoded) fallbacks[r.id] = features.fallback_reason;
    const std::string bytes = serialize_feature_cache(features.cache);
    if (!fs::exists(path) || read_file_text(path) != bytes) write_file_atomic(path, bytes);
    written.push_back(path);
  }
  write_file_atomic(p.features / "features.json", log.dump(1) + "\n");
  written.push_back(p.features / "features.json");
  return written;
}

std::vector<fs::path> cmd_train_svm(const CliConfig& c) {
  const auto records = load_manifest(c);
  const auto p = work_paths(c.out);
  const auto train = records_in_split(records, Split::Train);
  const auto test = records_in_split(records, Split::Test);
  if (train.empty() || test.empty()) throw Error(ErrorCode::MissingUpstreamArtifact, "manifest needs train and test records");
  const auto experiment = run_svm_experiment(train, test, default_grid(), c.folds, c.seed);
  write_file_atomic(p.models / "svm.json", serialize_svm(experiment));

  auto config = run_settings(c, {"seed", "threshold", "folds"});
  config["family"] = "classifier";
  config["best_kernel"] = experiment.search.best.kernel == KernelKind::Linear ? "linear" : "rbf";
  config["best_c"] = fmt::format("{}", experiment.search.best.c);
  config["best_gamma"] = fmt::format("{}", experiment.model.kernel.gamma);
  config["best_minority_weight"] = fmt::format("{}", experiment.search.best.minority_weight);
  const auto name = svm_model_name(c);
  const auto run = make_run(name, config, direct_predictions(name, experiment.test_scores), c.threshold, "");
  return {p.models / "svm.json", replace_run(run, p.runs)};
}

std::vector<fs::path> cmd_train_cnn(const CliConfig& c) {
  const auto records = load_manifest(c);
  const auto p = work_paths(c.out);
  std::vector<PatchSample> train;
  std::vector<PatchSample> test;
  std::optional<FeatureOptions> options;
  for (const auto& r : records) {
    const auto path = feature_cache_path(p.features, r.id);
    require(path, "feature cache for " + r.id + " (run features first)");
    auto cache = read_feature_cache(path);
    if (!options) options = FeatureOptions{cache.clamp_t, cache.pql, kDefaultPristinePatches, c.seed};
    if (cache.clamp_t != options->clamp_t || cache.pql != options->pql) {
      throw Error(ErrorCode::CorruptFeatureCache, "feature caches were built with different options");
    }
    auto samples = patch_samples(r.id, cache);
    auto& target = r.split == Split::Train ? train : test;
    target.insert(target.end(), std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.end()));
  }
  if (!options || train.empty()) throw Error(ErrorCode::MissingUpstreamArtifact, "no training patches");

  TrainConfig tc;
  tc.seed = c.seed;
  tc.epochs = c.epochs;
  tc.batch_size = c.batch_size;
  tc.adam.learning_rate = c.learning_rate;
  tc.threshold = c.threshold;
  tc.weight_forged = c.weight_forged;
  if (tc.weight_forged == 0.0) {
    const auto forged = std::count_if(train.begin(), train.end(), [](auto& s) { return s.label == PatchLabel::Forged; });
    const auto pristine = static_cast<std::ptrdiff_t>(train.size()) - forged;
    tc.weight_forged = forged > 0 ? static_cast<double>(pristine) / static_cast<double>(forged) : 1.0;
  }
  const auto result = train_eval_loop(default_arch(options->clamp_t), train, test, tc);
  result.model.save(p.models / "cnn.fbcn");

  std::string epochs = "epoch,train_loss,patch_precision,patch_recall,patch_f1,patch_auc\n";
  for (const auto& e : result.epochs) {
    epochs += fmt::format("{},{:.6f},{:.4f},{:.4f},{:.4f},{}\n", e.epoch, e.train_loss, e.patch_precision,
                          e.patch_recall, e.patch_f1, std::isnan(e.patch_auc) ? "n/a" : fmt::format("{:.4f}", e.patch_auc));
  }
  write_file_atomic(p.models / "cnn_epochs.csv", epochs);

  std::map<std::string, std::string> config;
  for (const auto& [k, v] : tc.describe()) config["train_" + k] = v;
  config["family"] = "classifier";
  config["clamp_t"] = std::to_string(options->clamp_t);
  config["pql"] = options->pql ? "true" : "false";
  config["aggregation"] = "or";
  const auto scores = score_images(result.model, records_in_split(records, Split::Test), *options);
  const auto name = cnn_model_name(c, options->pql);
  const auto run = make_run(name, config, direct_predictions(name, scores), c.threshold, "");
  return {p.models / "cnn.fbcn", p.models / "cnn_epochs.csv", replace_run(run, p.runs)};
}

std::vector<fs::path> cmd_eval_llm(const CliConfig& c) {
  const auto records = load_manifest(c);
  const auto p = work_paths(c.out);
  if (!fs::exists(c.provider_config)) throw Error(ErrorCode::ConfigError, "no provider config at " + c.provider_config.string());
  ProviderConfig provider = parse_provider_config(read_file_text(c.provider_config));

  std::vector<DocumentRecord> selected =
      c.eval_split == "all" ? records : records_in_split(records, c.eval_split == "train" ? Split::Train : Split::Test);
  if (selected.empty()) throw Error(ErrorCode::MissingUpstreamArtifact, "no records in split " + c.eval_split);

  std::unique_ptr<MockProvider> mock;
  if (!c.mock_transcript.empty()) {
    mock = std::make_unique<MockProvider>(load_mock_transcript(c.mock_transcript), provider.schema);
    provider.endpoint = mock->endpoint();
    provider.auth_env.clear();
  }
  const PromptTemplate prompt = default_prompt_template();
  ResponseCache cache(default_cache_dir(p.cache));
  ProviderClient client(provider, std::make_shared<SystemClock>(), c.seed);
  auto predictions = evaluate_documents(client, selected, prompt, cache);

  auto config = provider.describe();
  config["family"] = "llm";
  config["prompt_version"] = prompt.version();
  config["eval_split"] = c.eval_split;
  if (!c.mock_transcript.empty()) {
    config["endpoint"] = "mock";
    config["mock_transcript_sha256"] = sha256_hex(read_file_bytes(c.mock_transcript));
  }
  const auto run = make_run(provider.name, config, std::move(predictions), c.threshold, "");
  return {replace_run(run, p.runs)};
}

std::vector<fs::path> cmd_report(const CliConfig& c) {
  const auto p = work_paths(c.out);
  const auto runs = load_runs(p.runs);
  if (runs.empty()) throw Error(ErrorCode::MissingUpstreamArtifact, "no runs under " + p.runs.string());
  return write_reports(runs, p.reports).written;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CliConfig c;
  CLI::App app{"Document forgery detection benchmark", "forgebench"};
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", c.out, "Working directory for stage artifacts")->capture_default_str();
    sub->add_option("--seed", c.seed, "Seed for every stochastic step")->capture_default_str();
    sub->add_option("--threshold", c.threshold, "Decision threshold on P(forgery)")->capture_default_str();
    sub->add_flag("--dry-run", c.dry_run, "Print the work plan and exit");
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic tampered-receipt dataset");
  synth->add_option("--root", c.root, "Dataset root to create")->required();
  synth->add_option("--pristine", c.synth_pristine, "Pristine image count")->capture_default_str();
  synth->add_option("--forged", c.synth_forged, "Forged image count")->capture_default_str();
  common(synth);

  auto* ingest = app.add_subcommand("ingest", "Scan a dataset into a manifest");
  ingest->add_option("--root", c.root, "Dataset root")->required();
  ingest->add_option("--split", c.splits, "Split file(s); default <root>/splits/{train,test}.txt");
  common(ingest);

  auto* features = app.add_subcommand("features", "Build OH-JPEG feature caches");
  features->add_option("--clamp-t", c.clamp_t, "Coefficient clamp T")->capture_default_str();
  features->add_option("--pql", c.pql, "Apply the quantization-table weighting")->capture_default_str();
  common(features);

  auto* svm = app.add_subcommand("train-svm", "Grid-search and train the pixel SVM");
  svm->add_option("--folds", c.folds, "Cross-validation folds")->capture_default_str();
  svm->add_option("--model-name", c.model_name, "Run model id");
  common(svm);

  auto* cnn = app.add_subcommand("train-cnn", "Train the DCT-feature CNN");
  cnn->add_option("--epochs", c.epochs)->capture_default_str();
  cnn->add_option("--batch-size", c.batch_size)->capture_default_str();
  cnn->add_option("--learning-rate", c.learning_rate)->capture_default_str();
  cnn->add_option("--weight-forged", c.weight_forged, "Forged class weight; 0 balances by patch counts")
      ->capture_default_str();
  cnn->add_option("--model-name", c.model_name, "Run model id");
  common(cnn);

  auto* llm = app.add_subcommand("eval-llm", "Score documents with a vision LLM");
  llm->add_option("--provider-config", c.provider_config, "Provider key=value file")->required();
  llm->add_option("--mock-transcript", c.mock_transcript, "Serve replies from a local scripted mock");
  llm->add_option("--eval-split", c.eval_split, "train, test or all")->capture_default_str();
  common(llm);

  auto* report = app.add_subcommand("report", "Regenerate tables and plots from runs");
  common(report);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "forgebench: " << e.what() << "\n";
    return 2;
  }
  for (auto* sub : app.get_subcommands()) c.subcommand = sub->get_name();

  try {
    validate(c);
    if (c.dry_run) {
      out << "plan for " << c.subcommand << "\n";
      for (const auto& [k, v] : c.describe()) out << "  " << k << " = " << v << "\n";
      for (const auto& a : planned_artifacts(c)) out << "  writes " << a << "\n";
      return 0;
    }
    std::vector<fs::path> written;
    if (c.subcommand == "synth") written = cmd_synth(c);
    else if (c.subcommand == "ingest") written = cmd_ingest(c);
    else if (c.subcommand == "features") written = cmd_features(c);
    else if (c.subcommand == "train-svm") written = cmd_train_svm(c);
    else if (c.subcommand == "train-cnn") written = cmd_train_cnn(c);
    else if (c.subcommand == "eval-llm") written = cmd_eval_llm(c);
    else if (c.subcommand == "report") written = cmd_report(c);
    for (const auto& w : written) out << w.string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "forgebench " << c.subcommand << ": " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "forgebench " << c.subcommand << ": " << e.what() << "\n";
    return 3;
  }
}

}  // namespace forgebench
