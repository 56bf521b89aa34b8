#include "wsindex/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <set>
#include <unordered_map>

#include "wsindex/digest.hpp"
#include "wsindex/eutils.hpp"
#include "wsindex/parallel.hpp"
#include "wsindex/rng.hpp"
#include "wsindex/thesaurus.hpp"
#include "wsindex/weaklabel.hpp"

namespace wsindex {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------- config

namespace {

std::string aggregation_name(Aggregation a) { return a == Aggregation::Max ? "max" : "per_label_union"; }

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "max") return Aggregation::Max;
  if (s == "per_label_union" || s == "union") return Aggregation::PerLabelUnion;
  throw ValidationError("aggregation", "unknown aggregation '" + s + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
std::vector<T> one_or_many(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<T>>();
  return {j.get<T>()};
}

std::string format_c(double c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", c);
  return buf;
}

}  // namespace

void PipelineConfig::validate() const {
  const auto must_exist = [](const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw ValidationError("missing-file", std::string(what) + " not found: " + p.string());
  };
  must_exist(descriptor, "descriptor");
  if (corpus.kind == CorpusSourceConfig::Kind::File) must_exist(corpus.path, "corpus");
  if (corpus.kind == CorpusSourceConfig::Kind::Fetch &&
      (corpus.batch_size == 0 || corpus.batch_size > 500 || corpus.page_size == 0 ||
       corpus.page_size > 10000)) {
    throw ValidationError("fetch-params", "batch_size must be in [1, 500] and page_size in [1, 10000]");
  }
  if (occurrences.kind == OccurrenceSourceConfig::Kind::Import) must_exist(occurrences.path, "occurrence file");
  if (occurrences.auxiliary) must_exist(*occurrences.auxiliary, "auxiliary concepts");
  if (golden) must_exist(*golden, "golden annotations");
  if (second_annotation) {
    must_exist(*second_annotation, "second annotation");
    if (!golden) throw ValidationError("second-annotation", "a second annotation needs golden annotations");
  }
  if (selector.methods.empty() || selector.k.empty() || selector.exclude_ct_concepts.empty()) {
    throw ValidationError("empty-grid", "selector grid needs methods, k values and exclusion flags");
  }
  for (auto k : selector.k) {
    if (k == 0) throw ValidationError("selector-k", "k must be positive");
  }
  if (classifiers.types.empty() || classifiers.C.empty() || classifiers.penalties.empty()) {
    throw ValidationError("empty-grid", "classifier grid needs types, penalties and C values");
  }
  for (double c : classifiers.C) {
    if (!(c > 0)) throw ValidationError("C-positive", "every C must be positive");
  }
  if (training_sets.empty()) throw ValidationError("empty-grid", "no training sets");
  for (const auto& s : training_sets) {
    if (s != "ws" && s != "ws_und") throw ValidationError("training-set", "unknown training set '" + s + "'");
    if (s == "ws_und" && !undersample_target) {
      throw ValidationError("training-set", "ws_und requires an undersample target");
    }
  }
  if (cv_k == 1) throw ValidationError("fold-count", "cv_k must be 0 (off) or at least 2");
  if (relabel && !golden) throw ValidationError("relabel", "relabeling picks the best model and needs golden annotations");
  TrainConfig probe;
  probe.tree = classifiers.tree;
  probe.optimizer = classifiers.optimizer;
  probe.validate();
}

json pipeline_config_to_json(const PipelineConfig& c, bool with_location) {
  json j;
  j["descriptor"] = c.descriptor.string();
  json corpus;
  if (c.corpus.kind == CorpusSourceConfig::Kind::File) {
    corpus = {{"source", "file"}, {"path", c.corpus.path.string()}};
  } else {
    corpus = {{"source", "fetch"},         {"term", c.corpus.term},
              {"page_size", c.corpus.page_size}, {"batch_size", c.corpus.batch_size},
              {"max_articles", c.corpus.max_articles}};
  }
  j["corpus"] = corpus;
  if (c.occurrences.kind == OccurrenceSourceConfig::Kind::Dictionary) {
    j["occurrences"] = {{"source", "dictionary"},
                        {"granularity", to_string(c.occurrences.granularity)},
                        {"auxiliary", c.occurrences.auxiliary ? json(c.occurrences.auxiliary->string())
                                                              : json(nullptr)}};
  } else {
    j["occurrences"] = {{"source", "import"}, {"path", c.occurrences.path.string()}};
  }
  j["golden"] = c.golden ? json(c.golden->string()) : json(nullptr);
  j["second_annotation"] = c.second_annotation ? json(c.second_annotation->string()) : json(nullptr);
  j["split"] = {{"ma1_n", c.ma1_n}, {"ma2_n", c.ma2_n}, {"seed", c.split_seed}};
  j["undersample"] = c.undersample_target ? json{{"target", *c.undersample_target}} : json(nullptr);
  j["training_sets"] = c.training_sets;
  j["features"] = {{"min_token_df", c.min_token_df}};
  json methods = json::array();
  for (auto m : c.selector.methods) methods.push_back(to_string(m));
  j["selector"] = {{"methods", methods},
                   {"k", c.selector.k},
                   {"exclude_ct_concepts", c.selector.exclude_ct_concepts},
                   {"aggregation", aggregation_name(c.selector.aggregation)}};
  json types = json::array(), penalties = json::array();
  for (auto t : c.classifiers.types) types.push_back(to_string(t));
  for (auto p : c.classifiers.penalties) penalties.push_back(linear::to_string(p));
  TrainConfig echo;
  echo.tree = c.classifiers.tree;
  echo.optimizer = c.classifiers.optimizer;
  const auto echo_json = train_config_to_json(echo);
  j["classifiers"] = {{"types", types},
                      {"penalties", penalties},
                      {"C", c.classifiers.C},
                      {"tree", echo_json["tree"]},
                      {"optimizer", echo_json["optimizer"]}};
  j["cv_k"] = c.cv_k;
  json baselines = json::array();
  for (auto b : c.baselines) baselines.push_back(to_string(b));
  j["baselines"] = baselines;
  j["relabel"] = c.relabel;
  j["seed"] = c.seed;
  if (with_location) {
    j["workers"] = c.workers;
    j["output_dir"] = c.output_dir.string();
  }
  return j;
}

std::string PipelineConfig::digest() const {
  // File locations are replaced by content digests so that moving the
  // inputs or the output directory does not change results.
  auto j = pipeline_config_to_json(*this, false);
  const auto content = [](const fs::path& p) { return fs::exists(p) ? sha256_file(p) : std::string("missing"); };
  j["descriptor"] = content(descriptor);
  if (corpus.kind == CorpusSourceConfig::Kind::File) j["corpus"]["path"] = content(corpus.path);
  if (occurrences.kind == OccurrenceSourceConfig::Kind::Import) j["occurrences"]["path"] = content(occurrences.path);
  if (occurrences.auxiliary) j["occurrences"]["auxiliary"] = content(*occurrences.auxiliary);
  if (golden) j["golden"] = content(*golden);
  if (second_annotation) j["second_annotation"] = content(*second_annotation);
  return sha256_hex(j.dump());
}

PipelineConfig parse_pipeline_config(std::string_view json_text, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    const auto j = nlohmann::json::parse(json_text);
    c.descriptor = resolve(base_dir, j.at("descriptor").get<std::string>());

    const auto& corpus = j.at("corpus");
    const auto source = corpus.value("source", std::string("file"));
    if (source == "file") {
      c.corpus.kind = CorpusSourceConfig::Kind::File;
      c.corpus.path = resolve(base_dir, corpus.at("path").get<std::string>());
    } else if (source == "fetch") {
      c.corpus.kind = CorpusSourceConfig::Kind::Fetch;
      c.corpus.term = corpus.value("term", std::string{});
      c.corpus.page_size = corpus.value("page_size", c.corpus.page_size);
      c.corpus.batch_size = corpus.value("batch_size", c.corpus.batch_size);
      c.corpus.max_articles = corpus.value("max_articles", c.corpus.max_articles);
    } else {
      throw ValidationError("corpus-source", "corpus source must be 'file' or 'fetch'");
    }

    if (j.contains("occurrences")) {
      const auto& occ = j["occurrences"];
      const auto osrc = occ.value("source", std::string("dictionary"));
      if (osrc == "dictionary") {
        c.occurrences.kind = OccurrenceSourceConfig::Kind::Dictionary;
        const auto g = occ.value("granularity", std::string("terms"));
        if (g == "terms") c.occurrences.granularity = Granularity::TermLevel;
        else if (g == "tokens") c.occurrences.granularity = Granularity::TokenLevel;
        else throw ValidationError("granularity", "granularity must be 'terms' or 'tokens'");
        if (occ.contains("auxiliary") && !occ["auxiliary"].is_null()) {
          c.occurrences.auxiliary = resolve(base_dir, occ["auxiliary"].get<std::string>());
        }
      } else if (osrc == "import") {
        c.occurrences.kind = OccurrenceSourceConfig::Kind::Import;
        c.occurrences.path = resolve(base_dir, occ.at("path").get<std::string>());
      } else {
        throw ValidationError("occurrence-source", "occurrence source must be 'dictionary' or 'import'");
      }
    }
    if (j.contains("golden") && !j["golden"].is_null()) c.golden = resolve(base_dir, j["golden"].get<std::string>());
    if (j.contains("second_annotation") && !j["second_annotation"].is_null()) {
      c.second_annotation = resolve(base_dir, j["second_annotation"].get<std::string>());
    }

    const auto& split = j.at("split");
    c.ma1_n = split.at("ma1_n").get<std::size_t>();
    c.ma2_n = split.at("ma2_n").get<std::size_t>();
    if (!split.contains("seed")) throw ValidationError("seed-required", "split.seed is mandatory");
    c.split_seed = split["seed"].get<std::uint64_t>();
    if (j.contains("undersample") && !j["undersample"].is_null()) {
      c.undersample_target = j["undersample"].at("target").get<std::size_t>();
    }
    if (j.contains("training_sets")) c.training_sets = one_or_many<std::string>(j["training_sets"]);
    if (j.contains("features")) c.min_token_df = j["features"].value("min_token_df", c.min_token_df);

    if (j.contains("selector")) {
      const auto& s = j["selector"];
      if (s.contains("methods")) {
        c.selector.methods.clear();
        for (const auto& m : one_or_many<std::string>(s["methods"])) {
          c.selector.methods.push_back(selection_method_from_string(m));
        }
      }
      if (s.contains("k")) c.selector.k = one_or_many<std::size_t>(s["k"]);
      if (s.contains("exclude_ct_concepts")) c.selector.exclude_ct_concepts = one_or_many<bool>(s["exclude_ct_concepts"]);
      if (s.contains("aggregation")) c.selector.aggregation = aggregation_from_string(s["aggregation"].get<std::string>());
    }
    if (j.contains("classifiers")) {
      const auto& g = j["classifiers"];
      if (g.contains("types")) {
        c.classifiers.types.clear();
        for (const auto& t : one_or_many<std::string>(g["types"])) c.classifiers.types.push_back(classifier_from_string(t));
      }
      if (g.contains("penalties")) {
        c.classifiers.penalties.clear();
        for (const auto& p : one_or_many<std::string>(g["penalties"])) c.classifiers.penalties.push_back(penalty_from_string(p));
      }
      if (g.contains("C")) c.classifiers.C = one_or_many<double>(g["C"]);
      nlohmann::json tc = nlohmann::json::object();
      if (g.contains("tree")) tc["tree"] = g["tree"];
      if (g.contains("optimizer")) tc["optimizer"] = g["optimizer"];
      const auto parsed = train_config_from_json(tc);
      c.classifiers.tree = parsed.tree;
      c.classifiers.optimizer = parsed.optimizer;
    }
    c.cv_k = j.value("cv_k", std::size_t{0});
    if (j.contains("baselines")) {
      for (const auto& b : one_or_many<std::string>(j["baselines"])) c.baselines.push_back(baseline_kind_from_string(b));
    }
    c.relabel = j.value("relabel", false);
    if (!j.contains("seed")) throw ValidationError("seed-required", "seed is mandatory");
    c.seed = j["seed"].get<std::uint64_t>();
    c.workers = std::max<std::size_t>(1, j.value("workers", std::size_t{1}));
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("pipeline config: ") + e.what(), e.byte, ParseError::Unit::Byte);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema", std::string("pipeline config: ") + e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return parse_pipeline_config(read_file(path), path.parent_path());
}

// ------------------------------------------------------------- manifest

const StageRecord* RunManifest::stage(std::string_view name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["tool"] = "wsindex";
  j["tool_version"] = m.tool_version;
  j["status"] = m.ok ? "ok" : "failed";
  if (!m.ok) {
    j["failed_stage"] = m.failed_stage;
    j["error"] = m.error;
  }
  j["config_digest"] = m.config_digest;
  j["config"] = m.config;
  j["input_digests"] = m.input_digests;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  json stages = json::array();
  for (const auto& s : m.stages) {
    json js{{"name", s.name}, {"status", s.status}, {"outputs", s.outputs}};
    if (!s.detail.empty()) js["detail"] = s.detail;
    stages.push_back(std::move(js));
  }
  j["stages"] = std::move(stages);
  j["warnings"] = m.warnings;
  j["files"] = m.files;
  return j.dump(2) + "\n";
}

// ------------------------------------------------------ building blocks

const std::vector<std::string>& training_rows(const SplitBundle& split, const std::string& set) {
  if (set == "ws") return split.ws;
  if (set == "ws_und") {
    if (!split.ws_und) throw ValidationError("training-set", "the split has no ws_und set");
    return *split.ws_und;
  }
  throw ValidationError("training-set", "unknown training set '" + set + "'");
}

FeaturePlan plan_features(const FeatureBundle& raw, const std::vector<std::string>& train_pmids,
                          const LabelMatrix& labels, const std::vector<std::string>& targets,
                          const SelectorConfig& selector, const Descriptor& d) {
  const FeatureMatrix train_raw = select_feature_rows(raw.matrix, train_pmids);
  const auto idf = fit_idf(train_raw);
  const FeatureMatrix weighted = apply_tfidf(train_raw, idf);
  const auto scores = score_features(weighted, labels.select_rows(train_pmids), targets, selector.method);
  FeaturePlan plan;
  plan.ranking = select_top_k(scores, *raw.matrix.space, selector, d);
  std::vector<std::uint32_t> ids;
  for (const auto& r : plan.ranking) ids.push_back(r.id);
  plan.reduced = reduce_space(*raw.matrix.space, idf, ids);
  return plan;
}

FeatureMatrix weighted_rows(const FeatureBundle& raw, const std::vector<std::string>& pmids,
                            const ReducedSpace& reduced) {
  return apply_tfidf(project(select_feature_rows(raw.matrix, pmids), reduced), reduced.idf);
}

LabelMatrix widen_prediction(const LabelMatrix& pred, const std::vector<std::string>& targets) {
  LabelMatrix out(pred.pmids(), targets, LabelMatrix::Kind::Predicted);
  for (std::size_t c = 0; c < targets.size(); ++c) {
    const auto src = pred.column(targets[c]);
    if (!src) continue;
    for (std::size_t r = 0; r < pred.rows(); ++r) out.set(r, c, pred.at(r, *src));
  }
  return out;
}

CvResult cross_validate(const FeatureBundle& raw, const LabelMatrix& weak,
                        const std::vector<std::string>& targets,
                        const std::vector<std::string>& pmids, const SelectorConfig& selector,
                        const TrainConfig& train_cfg, std::size_t k, std::uint64_t seed,
                        const Descriptor& d) {
  const FoldPlan plan = make_folds(pmids, k, seed);
  CvResult res;
  double sum = 0.0;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    std::vector<std::string> train;
    for (const auto& p : pmids) {
      if (plan.fold_of(p) != f) train.push_back(p);
    }
    const auto& held = plan.folds[f];
    const auto fp = plan_features(raw, train, weak, targets, selector, d);
    const auto model = wsindex::train(weighted_rows(raw, train, fp.reduced), weak.select_rows(train),
                                      targets, train_cfg, {1, true});
    for (const auto& w : model.warnings) res.warnings.push_back("fold " + std::to_string(f) + ": " + w);
    const auto pred = widen_prediction(predict(model, weighted_rows(raw, held, fp.reduced)), targets);
    const double m = evaluate(pred, weak.select_rows(held), targets).macro_f1;
    res.fold_macro_f1.push_back(m);
    sum += m;
  }
  res.mean_macro_f1 = sum / static_cast<double>(plan.folds.size());
  return res;
}

// ------------------------------------------------------------------ run

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string file_token(std::string s) {
  for (auto& ch : s) {
    if (ch == '/' || ch == ' ' || ch == ':') ch = '_';
  }
  return s;
}

// Content-addressed stage cache. A stage is skipped when a record with the
// same key exists and all of its recorded outputs still hash to the same
// digests.
class StageCache {
 public:
  explicit StageCache(fs::path out) : out_(std::move(out)) {}

  std::string key(const std::string& name, const json& material) const {
    return sha256_hex(name + "\n" + material.dump());
  }

  bool lookup(const std::string& name, const std::string& key,
              std::map<std::string, std::string>& outputs) const {
    const auto rec = record_path(name, key);
    if (!fs::exists(rec)) return false;
    try {
      const auto j = nlohmann::json::parse(read_file(rec));
      std::map<std::string, std::string> recorded = j.at("outputs").get<std::map<std::string, std::string>>();
      for (const auto& [rel, digest] : recorded) {
        const auto p = out_ / rel;
        if (!fs::exists(p) || sha256_file(p) != digest) return false;
      }
      outputs = std::move(recorded);
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  std::map<std::string, std::string> store(const std::string& name, const std::string& key,
                                           const std::vector<std::string>& rels) const {
    std::map<std::string, std::string> outputs;
    for (const auto& rel : rels) outputs[rel] = sha256_file(out_ / rel);
    json j{{"stage", name}, {"key", key}, {"outputs", outputs}};
    write_file_atomic(record_path(name, key), j.dump(2) + "\n");
    return outputs;
  }

 private:
  fs::path record_path(const std::string& name, const std::string& key) const {
    return out_ / "cache" / (name + "-" + key.substr(0, 24) + ".json");
  }

  fs::path out_;
};

struct CellSpec {
  std::string training_set;
  SelectorConfig selector;
  TrainConfig train;

  std::string name() const {
    std::string n = training_set + "/" + std::string(to_string(selector.method)) + "/k" +
                    std::to_string(selector.k) + "/" + (selector.exclude_ct_concepts ? "no-ct" : "all") +
                    "/" + std::string(to_string(train.classifier));
    if (train.classifier == Classifier::LogReg || train.classifier == Classifier::LinearSvm) {
      n += "-" + std::string(linear::to_string(train.penalty)) + "-C" + format_c(train.C);
    }
    return n;
  }

  json to_json() const {
    return {{"training_set", training_set},
            {"selector",
             {{"method", to_string(selector.method)},
              {"k", selector.k},
              {"exclude_ct_concepts", selector.exclude_ct_concepts},
              {"aggregation", aggregation_name(selector.aggregation)}}},
            {"train", train_config_to_json(train)}};
  }
};

std::vector<CellSpec> expand_grid(const PipelineConfig& cfg) {
  std::vector<CellSpec> cells;
  for (const auto& set : cfg.training_sets) {
    for (auto method : cfg.selector.methods) {
      for (bool excl : cfg.selector.exclude_ct_concepts) {
        for (auto k : cfg.selector.k) {
          for (auto type : cfg.classifiers.types) {
            const bool is_linear = type == Classifier::LogReg || type == Classifier::LinearSvm;
            const auto penalties = is_linear ? cfg.classifiers.penalties : std::vector<linear::Penalty>{linear::Penalty::L2};
            const auto cs = is_linear ? cfg.classifiers.C : std::vector<double>{1.0};
            for (auto pen : penalties) {
              for (double c : cs) {
                CellSpec cell;
                cell.training_set = set;
                cell.selector = {method, k, excl, cfg.selector.aggregation};
                cell.train.classifier = type;
                cell.train.penalty = pen;
                cell.train.C = c;
                cell.train.tree = cfg.classifiers.tree;
                cell.train.optimizer = cfg.classifiers.optimizer;
                cells.push_back(std::move(cell));
              }
            }
          }
        }
      }
    }
  }
  for (auto& cell : cells) cell.train.seed = derive_seed(cfg.seed, cell.name());
  return cells;
}

class Runner {
 public:
  Runner(const PipelineConfig& cfg, const RunOptions& opts)
      : cfg_(cfg),
        opts_(opts),
        out_(opts.output_dir ? *opts.output_dir : cfg.output_dir),
        workers_(opts.workers ? std::max<std::size_t>(1, *opts.workers) : cfg.workers),
        cache_(out_) {}

  RunManifest run() {
    manifest_.started_at = utc_now();
    manifest_.config_digest = cfg_.digest();
    manifest_.config = pipeline_config_to_json(cfg_, false);
    try {
      cfg_.validate();
      record_inputs();
      fs::create_directories(out_);
      stage_ingest();
      stage_annotate();
      stage_weaklabel();
      stage_split();
      stage_featurize();
      stage_select();
      stage_train();
      stage_cv();
      stage_baselines();
      stage_relabel();
      stage_evaluate();
    } catch (const std::exception& e) {
      manifest_.ok = false;
      manifest_.failed_stage = current_stage_.empty() ? "config" : current_stage_;
      manifest_.error = e.what();
      StageRecord rec{manifest_.failed_stage, "failed", {}, e.what()};
      manifest_.stages.push_back(rec);
      finish();
      throw StageError(manifest_.failed_stage, e.what(), manifest_);
    }
    finish();
    return manifest_;
  }

 private:
  void log(const std::string& msg) const {
    if (opts_.log) opts_.log(msg);
  }

  void record_inputs() {
    auto& in = manifest_.input_digests;
    in["descriptor"] = sha256_file(cfg_.descriptor);
    if (cfg_.corpus.kind == CorpusSourceConfig::Kind::File) in["corpus"] = sha256_file(cfg_.corpus.path);
    if (cfg_.occurrences.kind == OccurrenceSourceConfig::Kind::Import) in["occurrences"] = sha256_file(cfg_.occurrences.path);
    if (cfg_.occurrences.auxiliary) in["auxiliary"] = sha256_file(*cfg_.occurrences.auxiliary);
    if (cfg_.golden) in["golden"] = sha256_file(*cfg_.golden);
    if (cfg_.second_annotation) in["second_annotation"] = sha256_file(*cfg_.second_annotation);
  }

  // Runs `body` unless the cache holds its outputs; returns the output digests.
  template <typename Body>
  std::map<std::string, std::string> stage(const std::string& name, const json& material,
                                           const std::vector<std::string>& outputs, Body&& body) {
    current_stage_ = name;
    const auto key = cache_.key(name, material);
    StageRecord rec;
    rec.name = name;
    if (cache_.lookup(name, key, rec.outputs)) {
      rec.status = "cached";
      log(name + ": cached");
    } else {
      log(name + ": running");
      body();
      rec.outputs = cache_.store(name, key, outputs);
      rec.status = "ran";
    }
    manifest_.stages.push_back(rec);
    return rec.outputs;
  }

  void warn(const std::string& w) {
    std::lock_guard lock(warn_mu_);
    manifest_.warnings.push_back(w);
    log("warning: " + w);
  }

  fs::path path(const std::string& rel) const { return out_ / rel; }

  // ---- stages

  void stage_ingest() {
    descriptor_ = load_thesaurus(cfg_.descriptor);
    json material{{"descriptor", manifest_.input_digests["descriptor"]},
                  {"corpus", manifest_.config["corpus"]}};
    if (cfg_.corpus.kind == CorpusSourceConfig::Kind::File) material["corpus_digest"] = manifest_.input_digests["corpus"];
    const auto outs = stage("ingest", material, {"corpus.jsonl"}, [&] {
      Corpus corpus;
      if (cfg_.corpus.kind == CorpusSourceConfig::Kind::File) {
        corpus = load_corpus(cfg_.corpus.path, descriptor_.descriptor_id);
      } else {
        EutilsClient client(EutilsConfig::from_env());
        const auto term = cfg_.corpus.term.empty() ? descriptor_query(descriptor_.descriptor_id) : cfg_.corpus.term;
        auto pmids = search_pmids(client, term, cfg_.corpus.page_size);
        if (cfg_.corpus.max_articles > 0 && pmids.size() > cfg_.corpus.max_articles) pmids.resize(cfg_.corpus.max_articles);
        auto result = fetch_articles(client, pmids, cfg_.corpus.batch_size);
        for (const auto& m : result.missing) warn("fetch: no record for pmid " + m);
        for (const auto& r : result.rejected) warn("fetch: rejected record: " + r);
        corpus = std::move(result.corpus);
        corpus.descriptor_id = descriptor_.descriptor_id;
      }
      save_corpus(corpus, path("corpus.jsonl"));
    });
    corpus_digest_ = outs.at("corpus.jsonl");
    corpus_ = load_corpus(path("corpus.jsonl"));
    corpus_.descriptor_id = descriptor_.descriptor_id;
  }

  void stage_annotate() {
    json material{{"corpus", corpus_digest_},
                  {"descriptor", manifest_.input_digests["descriptor"]},
                  {"occurrences", manifest_.config["occurrences"]}};
    for (const char* k : {"occurrences", "auxiliary"}) {
      if (manifest_.input_digests.count(k)) material[std::string(k) + "_digest"] = manifest_.input_digests[k];
    }
    const auto outs = stage("annotate", material, {"occurrences.jsonl"}, [&] {
      std::vector<ConceptOccurrence> occ;
      if (cfg_.occurrences.kind == OccurrenceSourceConfig::Kind::Import) {
        occ = import_occurrences(cfg_.occurrences.path, corpus_);
      } else {
        std::vector<Concept> aux;
        if (cfg_.occurrences.auxiliary) aux = load_auxiliary_concepts(*cfg_.occurrences.auxiliary);
        const auto dict = build_dictionary(descriptor_, cfg_.occurrences.granularity, aux);
        occ = recognize_corpus(corpus_, dict, static_cast<unsigned>(workers_));
      }
      save_occurrences(occ, path("occurrences.jsonl"));
    });
    occurrences_digest_ = outs.at("occurrences.jsonl");
    occurrences_ = load_occurrences(path("occurrences.jsonl"));
  }

  void stage_weaklabel() {
    json material{{"corpus", corpus_digest_},
                  {"occurrences", occurrences_digest_},
                  {"descriptor", manifest_.input_digests["descriptor"]}};
    const auto outs = stage("weaklabel", material, {"weak_labels.csv", "targets.json"}, [&] {
      const auto weak = assign_weak_labels(corpus_, occurrences_, descriptor_);
      save_label_matrix(weak, path("weak_labels.csv"));
      const auto targets = target_labels(weak, descriptor_);
      write_file_atomic(path("targets.json"), json(targets).dump() + "\n");
    });
    weak_digest_ = outs.at("weak_labels.csv");
    weak_ = load_label_matrix(path("weak_labels.csv"), LabelMatrix::Kind::Weak);
    targets_ = nlohmann::json::parse(read_file(path("targets.json"))).get<std::vector<std::string>>();
    for (const auto& fg : fine_grained_labels(descriptor_)) {
      if (std::find(targets_.begin(), targets_.end(), fg) == targets_.end()) {
        warn("label " + fg + " has no weak support and is not a prediction target");
      }
    }
  }

  void stage_split() {
    json material{{"weak", weak_digest_},
                  {"split", manifest_.config["split"]},
                  {"undersample", manifest_.config["undersample"]}};
    const auto outs = stage("split", material, {"split.json"}, [&] {
      SplitBundle s;
      s.seed = cfg_.split_seed;
      const auto pmids = corpus_.pmids();
      s.ma1 = split_ma1(pmids, cfg_.ma1_n, derive_seed(cfg_.split_seed, "ma1"));
      const std::set<std::string> in_ma1(s.ma1.begin(), s.ma1.end());
      std::vector<std::string> rest;
      for (const auto& p : pmids) {
        if (!in_ma1.count(p)) rest.push_back(p);
      }
      s.ma2 = split_ma2(rest, weak_.select_rows(rest), descriptor_, cfg_.ma2_n,
                        derive_seed(cfg_.split_seed, "ma2"));
      s.ws = build_ws(pmids, s.ma1, s.ma2, weak_);
      if (cfg_.undersample_target) {
        s.ws_und = undersample_majority(s.ws, weak_, descriptor_, *cfg_.undersample_target,
                                        derive_seed(cfg_.split_seed, "ws_und"));
      }
      s.validate(pmids);
      write_file_atomic(path("split.json"), split_to_json(s));
    });
    split_digest_ = outs.at("split.json");
    split_ = split_from_json(read_file(path("split.json")));
  }

  void stage_featurize() {
    json material{{"corpus", corpus_digest_},
                  {"occurrences", occurrences_digest_},
                  {"split", split_digest_},
                  {"min_token_df", cfg_.min_token_df}};
    const auto outs = stage("featurize", material, {"features/raw.json"}, [&] {
      // The space is fitted on the training articles only; every article is
      // then represented in it.
      Corpus ws_corpus;
      const auto index = corpus_.index();
      for (const auto& p : split_.ws) ws_corpus.articles.push_back(corpus_.articles[index.at(p)]);
      const auto fitted = build_features(ws_corpus, occurrences_, {cfg_.min_token_df});
      FeatureBundle b;
      b.matrix = featurize(corpus_, occurrences_, fitted.space);
      b.idf = fit_idf(fitted);
      save_feature_bundle(b, path("features/raw.json"));
    });
    features_digest_ = outs.at("features/raw.json");
    raw_ = load_feature_bundle(path("features/raw.json"));
    log("featurize: " + std::to_string(raw_.matrix.space->size()) + " features");
  }

  std::string selection_name(const std::string& set, SelectionMethod m, bool excl) const {
    return "selection/" + set + "-" + std::string(to_string(m)) + "-" + (excl ? "no-ct" : "all");
  }

  void stage_select() {
    const std::size_t max_k = *std::max_element(cfg_.selector.k.begin(), cfg_.selector.k.end());
    std::vector<std::string> outputs;
    for (const auto& set : cfg_.training_sets) {
      for (auto m : cfg_.selector.methods) {
        for (bool excl : cfg_.selector.exclude_ct_concepts) {
          outputs.push_back(selection_name(set, m, excl) + ".csv");
          outputs.push_back(selection_name(set, m, excl) + ".json");
        }
      }
    }
    json material{{"features", features_digest_},
                  {"weak", weak_digest_},
                  {"split", split_digest_},
                  {"descriptor", manifest_.input_digests["descriptor"]},
                  {"selector", manifest_.config["selector"]},
                  {"training_sets", cfg_.training_sets}};
    stage("select", material, outputs, [&] {
      for (const auto& set : cfg_.training_sets) {
        const auto& rows = training_rows(split_, set);
        const FeatureMatrix train_raw = select_feature_rows(raw_.matrix, rows);
        const FeatureMatrix weighted = apply_tfidf(train_raw, fit_idf(train_raw));
        for (auto m : cfg_.selector.methods) {
          const auto scores = score_features(weighted, weak_.select_rows(rows), targets_, m);
          for (const auto& d : scores.degenerate_labels) {
            warn("select: label " + d + " has a single class in " + set);
          }
          for (bool excl : cfg_.selector.exclude_ct_concepts) {
            const SelectorConfig sc{m, max_k, excl, cfg_.selector.aggregation};
            std::vector<RankedFeature> ranked;
            try {
              ranked = select_top_k(scores, *raw_.matrix.space, sc, descriptor_);
            } catch (const ValidationError& e) {
              throw ValidationError(e.rule(), "k = " + std::to_string(max_k) + " on training set " + set +
                                                  " with " + std::string(to_string(m)) + ": " + e.what());
            }
            const auto base = selection_name(set, m, excl);
            write_file_atomic(path(base + ".csv"), selection_report_csv(ranked, scores, *raw_.matrix.space));
            json ids = json::array();
            for (const auto& r : ranked) ids.push_back(r.id);
            write_file_atomic(path(base + ".json"), json{{"ids", ids}}.dump() + "\n");
          }
        }
      }
    });
    for (const auto& set : cfg_.training_sets) {
      for (auto m : cfg_.selector.methods) {
        for (bool excl : cfg_.selector.exclude_ct_concepts) {
          const auto base = selection_name(set, m, excl);
          rankings_[base] = nlohmann::json::parse(read_file(path(base + ".json"))).at("ids").get<std::vector<std::uint32_t>>();
        }
      }
    }
  }

  ReducedSpace cell_space(const CellSpec& cell) const {
    const auto& rows = training_rows(split_, cell.training_set);
    const auto& ranked = rankings_.at(selection_name(cell.training_set, cell.selector.method,
                                                     cell.selector.exclude_ct_concepts));
    const std::vector<std::uint32_t> ids(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(cell.selector.k));
    return reduce_space(*raw_.matrix.space, fit_idf(select_feature_rows(raw_.matrix, rows)), ids);
  }

  json evaluate_sets(const LabelMatrix& pred_ma1, const LabelMatrix& pred_ma2) const {
    json ev;
    if (golden_) {
      ev["ma1"] = evaluation_to_json(evaluate(pred_ma1, golden_->select_rows(split_.ma1), targets_));
      ev["ma2"] = evaluation_to_json(evaluate(pred_ma2, golden_->select_rows(split_.ma2), targets_));
    }
    return ev;
  }

  void load_golden() {
    if (!cfg_.golden || golden_) return;
    auto g = load_label_matrix(*cfg_.golden, LabelMatrix::Kind::Golden);
    for (const auto& t : targets_) {
      if (!g.column(t)) throw ValidationError("golden-labels", "golden annotations lack label " + t);
    }
    for (const auto* set : {&split_.ma1, &split_.ma2}) {
      for (const auto& p : *set) {
        if (!g.row(p)) throw ValidationError("golden-rows", "golden annotations lack test article " + p);
      }
    }
    golden_ = std::move(g);
  }

  json common_material() const {
    return {{"features", features_digest_},
            {"weak", weak_digest_},
            {"split", split_digest_},
            {"descriptor", manifest_.input_digests.at("descriptor")},
            {"golden", cfg_.golden ? manifest_.input_digests.at("golden") : ""}};
  }

  void stage_train() {
    current_stage_ = "train";
    load_golden();
    cells_ = expand_grid(cfg_);
    cell_results_.assign(cells_.size(), json());
    std::vector<int> cached(cells_.size(), 0);
    std::vector<std::map<std::string, std::string>> outs(cells_.size());
    parallel_for(cells_.size(), workers_, [&](std::size_t i) {
      const auto& cell = cells_[i];
      json material = common_material();
      material["cell"] = cell.to_json();
      const auto key = cache_.key("cell", material);
      const auto token = file_token(cell.name());
      const std::string model_rel = "models/" + token + ".json";
      const std::string result_rel = "results/" + token + ".json";
      if (cache_.lookup("cell", key, outs[i])) {
        cached[i] = 1;
      } else {
        const auto reduced = cell_space(cell);
        const auto& rows = training_rows(split_, cell.training_set);
        const auto model = wsindex::train(weighted_rows(raw_, rows, reduced), weak_.select_rows(rows),
                                          targets_, cell.train, {1, false});
        save_model(model, path(model_rel));
        json r;
        r["name"] = cell.name();
        r["cell"] = cell.to_json();
        r["model"] = model_rel;
        r["warnings"] = model.warnings;
        r["evaluations"] = evaluate_sets(widen_prediction(predict(model, weighted_rows(raw_, split_.ma1, reduced)), targets_),
                                         widen_prediction(predict(model, weighted_rows(raw_, split_.ma2, reduced)), targets_));
        write_file_atomic(path(result_rel), r.dump(2) + "\n");
        outs[i] = cache_.store("cell", key, {model_rel, result_rel});
      }
      cell_results_[i] = nlohmann::ordered_json::parse(read_file(path(result_rel)));
    });
    StageRecord rec;
    rec.name = "train";
    const bool all_cached = std::all_of(cached.begin(), cached.end(), [](int c) { return c == 1; });
    rec.status = all_cached ? "cached" : "ran";
    for (const auto& o : outs) rec.outputs.insert(o.begin(), o.end());
    rec.detail = std::to_string(cells_.size()) + " grid cells";
    for (const auto& r : cell_results_) {
      for (const auto& w : r["warnings"]) warn(r["name"].get<std::string>() + ": " + w.get<std::string>());
    }
    log(std::string("train: ") + (all_cached ? "cached" : "ran") + " (" + rec.detail + ")");
    manifest_.stages.push_back(std::move(rec));
  }

  void stage_cv() {
    current_stage_ = "cv";
    if (cfg_.cv_k == 0) {
      manifest_.stages.push_back({"cv", "skipped", {}, "cv_k = 0"});
      return;
    }
    cv_results_.assign(cells_.size(), json());
    std::vector<int> cached(cells_.size(), 0);
    std::vector<std::map<std::string, std::string>> outs(cells_.size());
    parallel_for(cells_.size(), workers_, [&](std::size_t i) {
      const auto& cell = cells_[i];
      json material = common_material();
      material["cell"] = cell.to_json();
      material["cv_k"] = cfg_.cv_k;
      const auto key = cache_.key("cv", material);
      const std::string rel = "cv/" + file_token(cell.name()) + ".json";
      if (cache_.lookup("cv", key, outs[i])) {
        cached[i] = 1;
      } else {
        const auto res = cross_validate(raw_, weak_, targets_, training_rows(split_, cell.training_set),
                                        cell.selector, cell.train, cfg_.cv_k,
                                        derive_seed(cfg_.seed, "cv/" + cell.name()), descriptor_);
        json r{{"name", cell.name()},
               {"k", cfg_.cv_k},
               {"fold_macro_f1", res.fold_macro_f1},
               {"mean_macro_f1", res.mean_macro_f1},
               {"warnings", res.warnings}};
        write_file_atomic(path(rel), r.dump(2) + "\n");
        outs[i] = cache_.store("cv", key, {rel});
      }
      cv_results_[i] = nlohmann::ordered_json::parse(read_file(path(rel)));
    });
    StageRecord rec{"cv", "ran", {}, std::to_string(cfg_.cv_k) + "-fold"};
    if (std::all_of(cached.begin(), cached.end(), [](int c) { return c == 1; })) rec.status = "cached";
    for (const auto& o : outs) rec.outputs.insert(o.begin(), o.end());
    log("cv: " + rec.status);
    manifest_.stages.push_back(std::move(rec));
  }

  void stage_baselines() {
    current_stage_ = "baselines";
    if (cfg_.baselines.empty() || !golden_) {
      manifest_.stages.push_back({"baselines", "skipped", {}, golden_ ? "none requested" : "no golden annotations"});
      return;
    }
    json material = common_material();
    material["corpus"] = corpus_digest_;
    material["baselines"] = manifest_.config["baselines"];
    material["seed"] = cfg_.seed;
    stage("baselines", material, {"baselines.json"}, [&] {
      const auto terms = build_dictionary(descriptor_, Granularity::TermLevel);
      const auto tokens = build_dictionary(descriptor_, Granularity::TokenLevel);
      const BaselineInputs in{&corpus_, &weak_, &descriptor_, &terms, &tokens};
      json all = json::array();
      for (auto kind : cfg_.baselines) {
        const Baseline b{kind, derive_seed(cfg_.seed, "baseline-random")};
        json r{{"name", to_string(kind)}};
        try {
          r["evaluations"] = evaluate_sets(baseline_predict(b, split_.ma1, targets_, in),
                                           baseline_predict(b, split_.ma2, targets_, in));
        } catch (const ValidationError& e) {
          if (e.rule() != "pref-not-target") throw;
          warn(std::string("baseline ") + std::string(to_string(kind)) + " skipped: " + e.what());
          r["skipped"] = e.what();
        }
        all.push_back(std::move(r));
      }
      write_file_atomic(path("baselines.json"), all.dump(2) + "\n");
    });
    baselines_ = nlohmann::ordered_json::parse(read_file(path("baselines.json")));
  }

  double cell_score(const json& r) const {
    const auto& ev = r["evaluations"];
    if (!ev.contains("ma1")) return -1.0;
    return 0.5 * (ev["ma1"]["macro_f1"].get<double>() + ev["ma2"]["macro_f1"].get<double>());
  }

  void stage_relabel() {
    current_stage_ = "relabel";
    if (!cfg_.relabel) {
      manifest_.stages.push_back({"relabel", "skipped", {}, "disabled"});
      return;
    }
    // Best LogReg cell on the under-sampled set when present.
    const std::string set = std::count(cfg_.training_sets.begin(), cfg_.training_sets.end(), "ws_und") ? "ws_und" : cfg_.training_sets.front();
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (cells_[i].training_set != set || cells_[i].train.classifier != Classifier::LogReg) continue;
      if (!best || cell_score(cell_results_[i]) > cell_score(cell_results_[*best])) best = i;
    }
    if (!best) {
      warn("relabel skipped: no logistic regression cell on " + set);
      manifest_.stages.push_back({"relabel", "skipped", {}, "no logistic regression cell"});
      return;
    }
    const auto& cell = cells_[*best];
    json material = common_material();
    material["cell"] = cell.to_json();
    material["model"] = sha256_file(path(cell_results_[*best]["model"].get<std::string>()));
    stage("relabel", material, {"relabel/report.json", "relabel/relabeled_labels.csv", "relabel/model.json"}, [&] {
      const auto model = load_model(path(cell_results_[*best]["model"].get<std::string>()));
      const auto reduced = cell_space(cell);
      const auto& rows = training_rows(split_, cell.training_set);
      const auto res = relabel_and_retrain(model, weighted_rows(raw_, rows, reduced), weak_.select_rows(rows),
                                           cell.train, {workers_, true});
      save_model(res.retrained, path("relabel/model.json"));
      save_label_matrix(res.relabeled, path("relabel/relabeled_labels.csv"));
      std::size_t changed = 0;
      for (std::size_t r = 0; r < res.original.rows(); ++r)
        for (std::size_t c = 0; c < res.original.cols(); ++c) changed += res.original.at(r, c) != res.relabeled.at(r, c);
      json report{{"source_cell", cell.name()},
                  {"changed_cells", changed},
                  {"warnings", res.warnings},
                  {"before", cell_results_[*best]["evaluations"]},
                  {"after", evaluate_sets(widen_prediction(predict(res.retrained, weighted_rows(raw_, split_.ma1, reduced)), targets_),
                                          widen_prediction(predict(res.retrained, weighted_rows(raw_, split_.ma2, reduced)), targets_))}};
      write_file_atomic(path("relabel/report.json"), report.dump(2) + "\n");
    });
    relabel_ = nlohmann::ordered_json::parse(read_file(path("relabel/report.json")));
    for (const auto& w : relabel_["warnings"]) warn("relabel: " + w.get<std::string>());
  }

  void stage_evaluate() {
    json material{{"config", manifest_.config_digest}, {"cells", cell_results_}, {"cv", cv_results_},
                  {"baselines", baselines_}, {"relabel", relabel_}};
    stage("evaluate", material, {"report/evaluation.csv", "report/plot.csv", "report/report.json"}, [&] {
      std::string csv = "configuration,test_set,label,tp,fp,fn,precision,recall,f1\n";
      std::vector<PlotPoint> plot;
      const auto add = [&](const std::string& name, const json& evs) {
        for (const char* set : {"ma1", "ma2"}) {
          if (!evs.contains(set)) continue;
          const auto& ev = evs[set];
          for (const auto& l : ev["labels"]) {
            csv += name + "," + set + "," + l["label_id"].get<std::string>() + "," +
                   std::to_string(l["tp"].get<std::size_t>()) + "," + std::to_string(l["fp"].get<std::size_t>()) +
                   "," + std::to_string(l["fn"].get<std::size_t>()) + "," +
                   format_metric(l["precision"].get<double>()) + "," + format_metric(l["recall"].get<double>()) +
                   "," + format_metric(l["f1"].get<double>()) + "\n";
          }
          csv += name + "," + set + ",macro,,,,,," + format_metric(ev["macro_f1"].get<double>()) + "\n";
          plot.push_back({name, set, ev["macro_f1"].get<double>()});
        }
      };
      for (std::size_t i = 0; i < cell_results_.size(); ++i) {
        add(cell_results_[i]["name"].get<std::string>(), cell_results_[i]["evaluations"]);
        if (!cv_results_.empty()) {
          plot.push_back({cell_results_[i]["name"].get<std::string>(), "cv" + std::to_string(cfg_.cv_k),
                          cv_results_[i]["mean_macro_f1"].get<double>()});
        }
      }
      for (const auto& b : baselines_) {
        if (b.contains("evaluations")) add("baseline/" + b["name"].get<std::string>(), b["evaluations"]);
      }
      if (!relabel_.is_null()) add("relabel/" + relabel_["source_cell"].get<std::string>(), relabel_["after"]);

      json report;
      report["config_digest"] = manifest_.config_digest;
      report["input_digests"] = manifest_.input_digests;
      report["descriptor_id"] = descriptor_.descriptor_id;
      report["targets"] = targets_;
      report["split_sizes"] = {{"ma1", split_.ma1.size()},
                               {"ma2", split_.ma2.size()},
                               {"ws", split_.ws.size()},
                               {"ws_und", split_.ws_und ? json(split_.ws_und->size()) : json(nullptr)}};
      report["cells"] = cell_results_;
      if (!cv_results_.empty()) report["cv"] = cv_results_;
      report["baselines"] = baselines_;
      if (!relabel_.is_null()) report["relabel"] = relabel_;
      if (cfg_.second_annotation && golden_) {
        const auto second = load_label_matrix(*cfg_.second_annotation, LabelMatrix::Kind::Golden);
        std::vector<std::string> both = split_.ma1;
        both.insert(both.end(), split_.ma2.begin(), split_.ma2.end());
        report["kappa"] = kappa_to_json(kappa(golden_->select_rows(both), second.select_rows(both), targets_));
      }
      write_file_atomic(path("report/evaluation.csv"), csv);
      write_file_atomic(path("report/plot.csv"), plot_csv(plot));
      write_file_atomic(path("report/report.json"), report.dump(2) + "\n");
    });
  }

  void finish() {
    manifest_.finished_at = utc_now();
    manifest_.files.clear();
    if (fs::exists(out_)) {
      for (const auto& e : fs::recursive_directory_iterator(out_)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), out_).generic_string();
        if (rel == "manifest.json" || e.path().extension() == ".tmp") continue;
        manifest_.files[rel] = sha256_file(e.path());
      }
      write_file_atomic(out_ / "manifest.json", manifest_to_json(manifest_));
    }
  }

  const PipelineConfig& cfg_;
  const RunOptions& opts_;
  fs::path out_;
  std::size_t workers_;
  StageCache cache_;
  RunManifest manifest_;
  std::string current_stage_;
  std::mutex warn_mu_;

  Descriptor descriptor_;
  Corpus corpus_;
  std::vector<ConceptOccurrence> occurrences_;
  LabelMatrix weak_;
  std::vector<std::string> targets_;
  SplitBundle split_;
  FeatureBundle raw_;
  std::optional<LabelMatrix> golden_;
  std::map<std::string, std::vector<std::uint32_t>> rankings_;
  std::vector<CellSpec> cells_;
  std::vector<json> cell_results_;
  std::vector<json> cv_results_;
  json baselines_ = json::array();
  json relabel_;

  std::string corpus_digest_, occurrences_digest_, weak_digest_, split_digest_, features_digest_;
};

}  // namespace

RunManifest run(const PipelineConfig& cfg, const RunOptions& options) {
  return Runner(cfg, options).run();
}

}  // namespace wsindex
