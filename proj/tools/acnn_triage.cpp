// Copyright 2026 The ACNN Triage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// Command-line front end: data generation, embedding pre-training, training,
// evaluation and the explanation tools. Every run leaves a manifest in the
// output directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "acnn/corpus.hpp"
#include "acnn/embedding.hpp"
#include "acnn/error.hpp"
#include "acnn/explain.hpp"
#include "acnn/hash.hpp"
#include "acnn/metrics.hpp"
#include "acnn/model.hpp"
#include "acnn/run_config.hpp"
#include "acnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace acnn {
namespace {

constexpr char kToolName[] = "acnn_triage";
constexpr char kToolVersion[] = "0.1.0";
constexpr char kOutputDirEnv[] = "ACNN_OUTPUT_DIR";

std::string FileDigest(const std::string& path) {
  const std::string bytes = ReadFileBytes(path);
  Fnv1a h;
  h.Update(std::string_view(bytes));
  return HexDigest(h.Digest());
}

// Shared state of one invocation.
struct Session {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  RunConfig config;
  std::string subcommand;
  json parameters = json::object();
  json inputs = json::array();
  json outputs = json::array();

  void Resolve() {
    if (!config_path.empty()) config = LoadRunConfig(config_path);
    if (seed) config.seed = *seed;
    if (out_dir.empty()) {
      const char* env = std::getenv(kOutputDirEnv);
      out_dir = env != nullptr && *env != '\0' ? env : "acnn-out";
    }
  }

  std::string Path(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

  std::string Input(const std::string& path) {
    inputs.push_back({{"path", path}, {"fnv1a", FileDigest(path)}});
    return path;
  }

  void Output(const std::string& path) {
    outputs.push_back({{"path", path}, {"fnv1a", FileDigest(path)}});
  }

  void WriteText(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    Require(out.good(), ErrorCode::kIo, "cannot write " + path);
    out << text;
    out.close();
    Require(out.good(), ErrorCode::kIo, "write failed for " + path);
    Output(path);
  }

  void WriteJson(const std::string& path, const json& j) { WriteText(path, j.dump(2) + "\n"); }

  void Begin(const std::string& name) {
    subcommand = name;
    config.Validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    Require(!ec, ErrorCode::kIo, "cannot create output directory " + out_dir);
  }

  void WriteManifest() {
    json m;
    m["tool"] = kToolName;
    m["version"] = kToolVersion;
    m["subcommand"] = subcommand;
    m["parameters"] = parameters;
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    const std::string path = Path("manifest-" + subcommand + ".json");
    std::ofstream out(path, std::ios::binary);
    Require(out.good(), ErrorCode::kIo, "cannot write " + path);
    out << m.dump(2) << "\n";
  }
};

struct DataOptions {
  std::string corpus;
  std::string Resolve(const Session& s) const { return corpus.empty() ? s.Path("corpus.jsonl") : corpus; }
};

struct LoadedModel {
  ModelFile file;
  Vocabulary vocab;
};

LoadedModel LoadModelFor(Session& s, const std::string& path) {
  LoadedModel m{LoadModel(s.Input(path)), {}};
  m.vocab = VocabularyFromTokens(m.file.vocabulary);
  return m;
}

std::string DefaultModelPath(const Session& s, const std::string& given) {
  return given.empty() ? s.Path("model-acnn.bin") : given;
}

std::string ModelStem(const std::string& path) { return fs::path(path).stem().string(); }

const Corpus& PickSplit(const PreparedData& data, const std::string& name) {
  if (name == "train") return data.split.train;
  if (name == "validation") return data.split.validation;
  if (name == "test") return data.split.test;
  Fail(ErrorCode::kConfig, "unknown split '" + name + "'");
}

void WarnOnCorpusMismatch(const ModelFile& model, const Corpus& corpus) {
  if (model.corpus_hash != corpus.ContentHash())
    std::cerr << "warning: model was trained on a different corpus\n";
}

// ---------------------------------------------------------------------------

struct GenDataOptions {
  std::optional<std::size_t> size;
  std::string mode;
  std::optional<double> label_noise;
  std::optional<double> p_noise;
};

void RunGenData(Session& s, const GenDataOptions& o) {
  if (o.size) s.config.corpus_size = *o.size;
  if (!o.mode.empty()) s.config.generator.mode = ParseMode(o.mode);
  if (o.label_noise) s.config.generator.label_noise = *o.label_noise;
  if (o.p_noise) s.config.generator.p_noise = *o.p_noise;
  s.Begin("gen-data");
  const Corpus corpus =
      GenerateCorpus(s.config.generator, s.config.corpus_size, s.config.Seeds().data);
  const std::string path = s.Path("corpus.jsonl");
  WriteCorpusJsonl(corpus, path);
  s.Output(path);
  const auto counts = corpus.ClassCounts();
  std::cout << "wrote " << corpus.size() << " cases to " << path << " (";
  for (std::size_t c = 0; c < kNumClasses; ++c)
    std::cout << (c ? ", " : "") << ClassName(kAllClasses[c]) << " " << counts[c];
  std::cout << ")\n";
}

struct PretrainOptions {
  DataOptions data;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> dim;
};

void RunPretrain(Session& s, const PretrainOptions& o) {
  if (o.iterations) s.config.skipgram.iterations = *o.iterations;
  if (o.dim) s.config.model.embedding_dim = *o.dim;
  s.Begin("pretrain-embeddings");
  const Corpus corpus = ReadCorpusJsonl(s.Input(o.data.Resolve(s)));
  const PreparedData data = Prepare(corpus, s.config);
  const EmbeddingTable table = TrainSkipgram(data.split.train, data.vocab, ResolveSkipgram(s.config));
  const std::string path = s.Path("embedding.bin");
  SaveEmbedding(table, path, s.config.Seeds().embedding, corpus.ContentHash());
  s.Output(path);
  std::cout << "wrote " << table.vocab_size() << " x " << table.dim() << " embedding to " << path
            << "\n";
}

struct TrainOptions {
  DataOptions data;
  std::string arch = "acnn";
  std::string embedding;
  std::string model;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
  std::optional<double> dropout;
};

void ApplyTrainOverrides(Session& s, const TrainOptions& o) {
  if (o.epochs) s.config.hyper.epochs = *o.epochs;
  if (o.learning_rate) s.config.hyper.learning_rate = *o.learning_rate;
  if (o.batch_size) s.config.hyper.batch_size = *o.batch_size;
  if (o.dropout) s.config.model.dropout = *o.dropout;
}

ModelParams InitialParams(Session& s, const ModelConfig& config, const std::string& embedding) {
  ModelParams params = InitParams(config, s.config.Seeds().init);
  if (!embedding.empty()) SetEmbedding(params, LoadEmbedding(s.Input(embedding)));
  return params;
}

void RunTrain(Session& s, const TrainOptions& o) {
  ApplyTrainOverrides(s, o);
  const Architecture arch = ParseArchitecture(o.arch);
  s.parameters["arch"] = ArchitectureName(arch);
  s.Begin("train");
  const Corpus corpus = ReadCorpusJsonl(s.Input(o.data.Resolve(s)));
  const PreparedData data = Prepare(corpus, s.config);
  const ModelConfig config = ResolveModel(s.config, data.vocab, arch);
  const auto train = EncodeAll(data.split.train, data.vocab, config.max_len);
  const auto validation = EncodeAll(data.split.validation, data.vocab, config.max_len);
  TrainResult r = Train(InitialParams(s, config, o.embedding), train, validation,
                        ResolveHyper(s.config), [](std::size_t epoch, const TrainHistory& h) {
                          std::cout << "epoch " << epoch + 1 << "  train loss "
                                    << h.train_loss.back() << "  validation loss "
                                    << h.validation_loss.back() << "  validation macro-F1 "
                                    << h.validation_macro_f1.back() << "\n";
                        });
  const std::string path =
      o.model.empty() ? s.Path("model-" + std::string(ArchitectureName(arch)) + ".bin") : o.model;
  SaveModel({r.params, s.config.Seeds().init, corpus.ContentHash(), data.vocab.tokens()}, path);
  s.Output(path);
  s.WriteJson(s.Path("history-" + ModelStem(path) + ".json"), HistoryToJson(r.history));
  std::cout << "wrote " << path << " (" << r.params.ParameterCount() << " parameters)\n";
}

struct EvaluateOptions {
  DataOptions data;
  std::string model;
  std::string split = "test";
  std::optional<double> threshold;
};

void RunEvaluate(Session& s, const EvaluateOptions& o) {
  s.parameters["split"] = o.split;
  if (o.threshold) {
    RequireThreshold(*o.threshold);
    s.parameters["confidence_threshold"] = *o.threshold;
  }
  s.Begin("evaluate");
  const std::string model_path = DefaultModelPath(s, o.model);
  const LoadedModel model = LoadModelFor(s, model_path);
  const Corpus corpus = ReadCorpusJsonl(s.Input(o.data.Resolve(s)));
  WarnOnCorpusMismatch(model.file, corpus);
  const PreparedData data = Prepare(corpus, s.config);
  const auto cases =
      EncodeAll(PickSplit(data, o.split), model.vocab, model.file.params.config.max_len);
  const auto predictions = Predict(model.file.params, cases);
  const Metrics metrics = MetricsFromPredictions(predictions, cases);
  json report;
  report["split"] = o.split;
  report["metrics"] = MetricsToJson(metrics);
  std::vector<std::pair<std::string, Metrics>> rows = {
      {std::string(ArchitectureName(model.file.params.config.architecture)), metrics}};
  if (o.threshold) {
    const FilterResult f = ConfidenceFilter(predictions, cases, *o.threshold);
    report["confidence_threshold"] = *o.threshold;
    report["discard_fraction"] = f.discard_fraction;
    report["filtered"] = MetricsToJson(f.metrics);
    rows.emplace_back(rows[0].first + " >= " + std::to_string(*o.threshold).substr(0, 4), f.metrics);
  }
  std::cout << RenderMetricsTable(rows, o.threshold.has_value());
  if (o.threshold)
    std::cout << "discarded " << report["discard_fraction"].get<double>() * 100.0 << "% of "
              << cases.size() << " cases\n";
  s.WriteJson(s.Path("metrics-" + ModelStem(model_path) + ".json"), report);
}

void RunGridSearch(Session& s, const TrainOptions& o) {
  ApplyTrainOverrides(s, o);
  const Architecture arch = ParseArchitecture(o.arch);
  s.parameters["arch"] = ArchitectureName(arch);
  s.Begin("grid-search");
  const Corpus corpus = ReadCorpusJsonl(s.Input(o.data.Resolve(s)));
  const PreparedData data = Prepare(corpus, s.config);
  const ModelConfig config = ResolveModel(s.config, data.vocab, arch);
  const auto train = EncodeAll(data.split.train, data.vocab, config.max_len);
  const auto validation = EncodeAll(data.split.validation, data.vocab, config.max_len);
  const GridResult g = GridSearch(InitialParams(s, config, o.embedding), train, validation,
                                  ResolveHyper(s.config), s.config.grid);
  for (std::size_t i = 0; i < g.points.size(); ++i) {
    const GridPoint& p = g.points[i];
    std::cout << (i == g.best ? "* " : "  ") << "lr " << p.hyper.learning_rate << "  batch "
              << p.hyper.batch_size << "  decay " << p.hyper.weight_decay << "  dropout "
              << p.dropout << "  validation macro-F1 " << p.validation_macro_f1 << "\n";
  }
  s.WriteJson(s.Path("grid-" + std::string(ArchitectureName(arch)) + ".json"), GridToJson(g));
}

struct ScoreOptions {
  DataOptions data;
  std::string model;
  std::string cls = "UrgentCare";
  std::size_t gram = 1;
  std::string split = "train";
  std::size_t top = 10;
};

std::vector<SymptomScore> Scores(const LoadedModel& model, const Corpus& corpus,
                                 TriageClass cls, std::size_t gram) {
  const auto cases = EncodeAll(corpus, model.vocab, model.file.params.config.max_len);
  return ScoreFeatures(model.file.params, cases, model.vocab, cls, gram);
}

void RunScoreSymptoms(Session& s, const ScoreOptions& o) {
  const TriageClass cls = ParseClass(o.cls);
  Require(o.gram == 1 || o.gram == 2, ErrorCode::kConfig, "--gram must be 1 or 2");
  s.parameters = {{"class", ClassName(cls)}, {"gram", o.gram}, {"split", o.split}};
  s.Begin("score-symptoms");
  const LoadedModel model = LoadModelFor(s, DefaultModelPath(s, o.model));
  const Corpus corpus = ReadCorpusJsonl(s.Input(o.data.Resolve(s)));
  const PreparedData data = Prepare(corpus, s.config);
  const auto scores = Scores(model, PickSplit(data, o.split), cls, o.gram);
  std::cout << RenderScoreTable(scores, o.top);
  s.WriteJson(s.Path("scores-" + std::string(ClassName(cls)) + "-" + std::to_string(o.gram) +
                     "gram.json"),
              ScoresToJson(scores));
}

void RunPairs(Session& s, const ScoreOptions& o) {
  const TriageClass cls = ParseClass(o.cls);
  s.parameters = {{"class", ClassName(cls)}, {"split", o.split}};
  s.Begin("pairs");
  const LoadedModel model = LoadModelFor(s, DefaultModelPath(s, o.model));
  const Corpus corpus = ReadCorpusJsonl(s.Input(o.data.Resolve(s)));
  const PreparedData data = Prepare(corpus, s.config);
  const Corpus& part = PickSplit(data, o.split);
  const auto pairs = PairSynergies(Scores(model, part, cls, 1), Scores(model, part, cls, 2), cls);
  std::cout << RenderPairTable(std::span<const PairSynergy>(pairs).first(std::min(o.top, pairs.size())));
  s.WriteJson(s.Path("pairs-" + std::string(ClassName(cls)) + ".json"), PairsToJson(pairs));
}

struct DropOptions {
  DataOptions data;
  std::string model;
  std::string cls = "UrgentCare";
  std::size_t drops = 1;
};

void RunDropExperiment(Session& s, const DropOptions& o) {
  const TriageClass cls = ParseClass(o.cls);
  Require(o.drops == 1 || o.drops == 2, ErrorCode::kConfig, "--drops must be 1 or 2");
  s.parameters = {{"class", ClassName(cls)}, {"drops", o.drops}};
  s.Begin("drop-experiment");
  const LoadedModel model = LoadModelFor(s, DefaultModelPath(s, o.model));
  const Corpus corpus = ReadCorpusJsonl(s.Input(o.data.Resolve(s)));
  WarnOnCorpusMismatch(model.file, corpus);
  const PreparedData data = Prepare(corpus, s.config);
  DropInputs inputs;
  inputs.attention = RankingFromScores(Scores(model, data.split.train, cls, 1));
  inputs.frequency = ClassFrequencies(data.split.train, cls);
  inputs.seed = s.config.Seeds().drop;
  const auto rows = DropExperiment(model.file.params, data.split.test, model.vocab, inputs, o.drops);
  std::vector<std::pair<std::string, Metrics>> table;
  json report = json::array();
  for (const DropRow& r : rows) {
    table.emplace_back(r.label, r.metrics);
    report.push_back({{"row", r.label}, {"metrics", MetricsToJson(r.metrics)}});
  }
  std::cout << RenderMetricsTable(table);
  s.WriteJson(s.Path("drop-" + std::to_string(o.drops) + ".json"), report);
}

struct ExplainOptions {
  DataOptions data;
  std::string model;
  std::vector<std::size_t> cases;
  std::string split = "test";
  std::string format = "html";
};

void RunExplain(Session& s, const ExplainOptions& o) {
  const HeatmapFormat format = ParseHeatmapFormat(o.format);
  s.parameters = {{"cases", o.cases}, {"split", o.split}, {"format", o.format}};
  s.Begin("explain");
  const LoadedModel model = LoadModelFor(s, DefaultModelPath(s, o.model));
  const Corpus corpus = ReadCorpusJsonl(s.Input(o.data.Resolve(s)));
  const PreparedData data = Prepare(corpus, s.config);
  const Corpus& part = PickSplit(data, o.split);
  std::vector<std::size_t> ids = o.cases;
  if (ids.empty()) ids = {0};
  std::vector<std::string> lines;
  for (std::size_t id : ids) {
    Require(id < part.size(), ErrorCode::kIndex,
            "case " + std::to_string(id) + " outside the " + o.split + " split of " +
                std::to_string(part.size()) + " cases");
    const EncodedCase doc = Encode(part.records[id], model.vocab, model.file.params.config.max_len);
    const Prediction p = Forward(model.file.params, doc);
    std::ostringstream caption;
    caption << "case " << id << ": label " << ClassName(doc.label) << ", predicted "
            << ClassName(p.predicted) << " (" << p.confidence << ")";
    const std::string line = RenderCaseHeatmap(doc, model.vocab, p.attention, format);
    if (format == HeatmapFormat::kHtml) {
      lines.push_back("<h3>" + HtmlEscape(caption.str()) + "</h3>");
      lines.push_back(line);
    } else {
      std::cout << caption.str() << "\n" << line << "\n";
    }
  }
  if (format == HeatmapFormat::kHtml) {
    const std::string path = s.Path("heatmap.html");
    s.WriteText(path, HtmlDocument(lines));
    std::cout << "wrote " << path << "\n";
  }
}

void AddDataOption(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--corpus", d.corpus, "Corpus JSON-lines file (default: <out>/corpus.jsonl)");
}

void AddModelOption(CLI::App* cmd, std::string& model) {
  cmd->add_option("--model", model, "Model file (default: <out>/model-acnn.bin)");
}

int Main(int argc, char** argv) {
  CLI::App app{"Attention CNN triage classifier with warning-symptom explanations", kToolName};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Session session;
  std::uint64_t seed = 0;
  app.add_option("--config", session.config_path, "JSON run configuration");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Root seed");
  app.add_option("--out", session.out_dir,
                 std::string("Output directory (default: $") + kOutputDirEnv + " or acnn-out)");

  GenDataOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen_cmd->add_option("--size", gen.size, "Number of cases");
  gen_cmd->add_option("--mode", gen.mode, "symptoms or fulltext");
  gen_cmd->add_option("--label-noise", gen.label_noise, "Label flip probability");
  gen_cmd->add_option("--p-noise", gen.p_noise, "Cross-stratum token probability");

  PretrainOptions pre;
  CLI::App* pre_cmd = app.add_subcommand("pretrain-embeddings", "Train skip-gram embeddings");
  AddDataOption(pre_cmd, pre.data);
  pre_cmd->add_option("--iterations", pre.iterations, "Passes over the training split");
  pre_cmd->add_option("--dim", pre.dim, "Vector size");

  TrainOptions train;
  auto add_train_options = [](CLI::App* cmd, TrainOptions& t) {
    AddDataOption(cmd, t.data);
    cmd->add_option("--arch", t.arch, "acnn or kimcnn");
    cmd->add_option("--embedding", t.embedding, "Pre-trained embedding file");
    cmd->add_option("--epochs", t.epochs, "Training epochs");
    cmd->add_option("--lr", t.learning_rate, "Learning rate");
    cmd->add_option("--batch-size", t.batch_size, "Minibatch size");
    cmd->add_option("--dropout", t.dropout, "Drop probability for hidden layers");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "Train a classifier");
  add_train_options(train_cmd, train);
  train_cmd->add_option("--model", train.model, "Output model file");

  EvaluateOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Per-class precision, recall and F1");
  AddDataOption(eval_cmd, eval.data);
  AddModelOption(eval_cmd, eval.model);
  eval_cmd->add_option("--split", eval.split, "train, validation or test");
  eval_cmd->add_option("--confidence-threshold", eval.threshold,
                       "Also report metrics on cases at or above this confidence");

  TrainOptions grid;
  CLI::App* grid_cmd = app.add_subcommand("grid-search", "Sweep the configured hyperparameter grid");
  add_train_options(grid_cmd, grid);

  ScoreOptions score;
  auto add_score_options = [](CLI::App* cmd, ScoreOptions& o) {
    AddDataOption(cmd, o.data);
    AddModelOption(cmd, o.model);
    cmd->add_option("--class", o.cls, "UrgentCare, GeneralPractice or Telecare");
    cmd->add_option("--split", o.split, "Cases to score (default: train)");
    cmd->add_option("--top", o.top, "Rows to print");
  };
  CLI::App* score_cmd = app.add_subcommand("score-symptoms", "Attention scores of n-grams");
  add_score_options(score_cmd, score);
  score_cmd->add_option("--gram", score.gram, "1 or 2");

  ScoreOptions pairs;
  CLI::App* pairs_cmd = app.add_subcommand("pairs", "Token pairs outscoring their members");
  add_score_options(pairs_cmd, pairs);

  DropOptions drop;
  CLI::App* drop_cmd = app.add_subcommand("drop-experiment", "Re-evaluate with tokens removed");
  AddDataOption(drop_cmd, drop.data);
  AddModelOption(drop_cmd, drop.model);
  drop_cmd->add_option("--class", drop.cls, "Class whose rankings drive the drops");
  drop_cmd->add_option("--drops", drop.drops, "1 or 2");

  ExplainOptions explain;
  CLI::App* explain_cmd = app.add_subcommand("explain", "Attention heatmaps for selected cases");
  AddDataOption(explain_cmd, explain.data);
  AddModelOption(explain_cmd, explain.model);
  explain_cmd->add_option("--cases", explain.cases, "Case indices within the split")->delimiter(',');
  explain_cmd->add_option("--split", explain.split, "train, validation or test");
  explain_cmd->add_option("--format", explain.format, "html or ansi");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (seed_opt->count() > 0) session.seed = seed;
    session.Resolve();
    if (*gen_cmd) RunGenData(session, gen);
    else if (*pre_cmd) RunPretrain(session, pre);
    else if (*train_cmd) RunTrain(session, train);
    else if (*eval_cmd) RunEvaluate(session, eval);
    else if (*grid_cmd) RunGridSearch(session, grid);
    else if (*score_cmd) RunScoreSymptoms(session, score);
    else if (*pairs_cmd) RunPairs(session, pairs);
    else if (*drop_cmd) RunDropExperiment(session, drop);
    else if (*explain_cmd) RunExplain(session, explain);
    session.WriteManifest();
  } catch (const Error& e) {
    std::cerr << kToolName << ": " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << kToolName << ": malformed JSON: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << kToolName << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace acnn

int main(int argc, char** argv) { return acnn::Main(argc, argv); }
