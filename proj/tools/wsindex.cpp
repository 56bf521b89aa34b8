// Command line front end: one subcommand per pipeline stage plus `run`.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_set>

#include "wsindex/datasets.hpp"
#include "wsindex/digest.hpp"
#include "wsindex/error.hpp"
#include "wsindex/eutils.hpp"
#include "wsindex/evalkit.hpp"
#include "wsindex/features.hpp"
#include "wsindex/ingest.hpp"
#include "wsindex/learn.hpp"
#include "wsindex/pipeline.hpp"
#include "wsindex/recognizer.hpp"
#include "wsindex/rng.hpp"
#include "wsindex/synth.hpp"
#include "wsindex/thesaurus.hpp"
#include "wsindex/weaklabel.hpp"

namespace fs = std::filesystem;
using namespace wsindex;

namespace {

std::string g_stage = "wsindex";

void note(const std::string& msg) { std::cerr << "[" << g_stage << "] " << msg << "\n"; }

// Rows to use: a named split set, a pmid list file, or everything.
std::vector<std::string> pick_rows(const std::string& split_path, const std::string& set,
                                   const std::string& pmid_file,
                                   const std::vector<std::string>& all) {
  if (!pmid_file.empty()) return load_pmid_list(pmid_file);
  if (!split_path.empty()) {
    const auto s = split_from_json(read_file(split_path));
    if (set == "ma1") return s.ma1;
    if (set == "ma2") return s.ma2;
    return training_rows(s, set);
  }
  return all;
}

std::vector<std::string> resolve_targets(const std::string& targets_csv, const std::string& weak_path,
                                         const std::string& descriptor_path) {
  if (!targets_csv.empty()) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : targets_csv + ",") {
      if (c == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    return out;
  }
  if (weak_path.empty() || descriptor_path.empty()) {
    throw ValidationError("targets", "give --targets or both --weak and --descriptor");
  }
  return target_labels(load_label_matrix(weak_path, LabelMatrix::Kind::Weak), load_thesaurus(descriptor_path));
}

// tf-idf weighted rows of a bundle; raw bundles are weighted with their idf.
FeatureMatrix bundle_rows(const FeatureBundle& b, const std::vector<std::string>& pmids) {
  auto m = select_feature_rows(b.matrix, pmids);
  return m.weighted ? m : apply_tfidf(m, b.idf);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained semantic indexing with weak supervision"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  // fetch
  std::string f_descriptor, f_term, f_out;
  std::size_t f_page = 10000, f_batch = 200, f_max = 0;
  auto* fetch = app.add_subcommand("fetch", "Search PubMed and download MEDLINE records as a corpus");
  fetch->add_option("--descriptor", f_descriptor, "Thesaurus JSON; its id forms the default query");
  fetch->add_option("--term", f_term, "Explicit esearch term");
  fetch->add_option("--page-size", f_page, "esearch page size")->check(CLI::Range(1, 10000));
  fetch->add_option("--batch-size", f_batch, "efetch batch size")->check(CLI::Range(1, 500));
  fetch->add_option("--max-articles", f_max, "Keep only the first N pmids (0 = all)");
  fetch->add_option("--out", f_out, "Corpus JSONL; an existing file is resumed")->required();

  // import
  std::vector<std::string> i_xml;
  std::string i_out, i_descriptor_id;
  auto* import = app.add_subcommand("import", "Convert MEDLINE XML files into a corpus");
  import->add_option("xml", i_xml, "MEDLINE/PubMed XML files")->required()->check(CLI::ExistingFile);
  import->add_option("--descriptor-id", i_descriptor_id, "Keep only articles indexed with this descriptor");
  import->add_option("--out", i_out, "Corpus JSONL")->required();

  // annotate
  std::string a_descriptor, a_corpus, a_out, a_aux, a_import, a_gran = "terms";
  unsigned a_workers = 1;
  auto* annotate = app.add_subcommand("annotate", "Find concept occurrences in the corpus");
  annotate->add_option("--descriptor", a_descriptor)->required()->check(CLI::ExistingFile);
  annotate->add_option("--corpus", a_corpus)->required()->check(CLI::ExistingFile);
  annotate->add_option("--granularity", a_gran, "terms or tokens")->check(CLI::IsMember({"terms", "tokens"}));
  annotate->add_option("--auxiliary", a_aux, "Extra concepts used as semantic features")->check(CLI::ExistingFile);
  annotate->add_option("--import", a_import, "Use an external occurrence file instead of matching")->check(CLI::ExistingFile);
  annotate->add_option("--workers", a_workers);
  annotate->add_option("--out", a_out)->required();

  // weaklabel
  std::string w_descriptor, w_corpus, w_occ, w_out, w_targets_out;
  auto* weaklabel = app.add_subcommand("weaklabel", "Assign weak labels from concept occurrences");
  weaklabel->add_option("--descriptor", w_descriptor)->required()->check(CLI::ExistingFile);
  weaklabel->add_option("--corpus", w_corpus)->required()->check(CLI::ExistingFile);
  weaklabel->add_option("--occurrences", w_occ)->required()->check(CLI::ExistingFile);
  weaklabel->add_option("--out", w_out, "Label matrix (.csv or .json)")->required();
  weaklabel->add_option("--targets-out", w_targets_out, "Write the trainable target labels as JSON");

  // split
  std::string s_descriptor, s_weak, s_out;
  std::size_t s_ma1 = 100, s_ma2 = 100;
  std::uint64_t s_seed = 0;
  std::optional<std::size_t> s_und;
  auto* split = app.add_subcommand("split", "Draw MA1, MA2, WS and optionally WS_und");
  split->add_option("--descriptor", s_descriptor)->required()->check(CLI::ExistingFile);
  split->add_option("--weak", s_weak)->required()->check(CLI::ExistingFile);
  split->add_option("--ma1", s_ma1);
  split->add_option("--ma2", s_ma2);
  split->add_option("--seed", s_seed)->required();
  split->add_option("--undersample-target", s_und, "Preferred-concept class size in WS_und");
  split->add_option("--out", s_out)->required();

  // featurize
  std::string z_corpus, z_occ, z_split, z_set = "ws", z_space, z_out;
  std::size_t z_min_df = 2;
  auto* featurize_cmd = app.add_subcommand("featurize", "Build raw lexical and semantic features");
  featurize_cmd->add_option("--corpus", z_corpus)->required()->check(CLI::ExistingFile);
  featurize_cmd->add_option("--occurrences", z_occ)->required()->check(CLI::ExistingFile);
  featurize_cmd->add_option("--split", z_split, "Fit the space and idf on one split set")->check(CLI::ExistingFile);
  featurize_cmd->add_option("--set", z_set, "Split set used for fitting");
  featurize_cmd->add_option("--space", z_space, "Reuse the space of an existing feature bundle")->check(CLI::ExistingFile);
  featurize_cmd->add_option("--min-df", z_min_df, "Minimum document frequency of tokens");
  featurize_cmd->add_option("--out", z_out, "Feature bundle JSON")->required();

  // select
  std::string l_features, l_weak, l_descriptor, l_split, l_set = "ws", l_method = "anova", l_out, l_report,
                                                                 l_targets;
  std::size_t l_k = 100;
  bool l_exclude = false;
  auto* select = app.add_subcommand("select", "Score features and keep the top k");
  select->add_option("--features", l_features, "Raw feature bundle")->required()->check(CLI::ExistingFile);
  select->add_option("--weak", l_weak)->required()->check(CLI::ExistingFile);
  select->add_option("--descriptor", l_descriptor)->required()->check(CLI::ExistingFile);
  select->add_option("--split", l_split)->check(CLI::ExistingFile);
  select->add_option("--set", l_set);
  select->add_option("--method", l_method, "chi2 or anova");
  select->add_option("-k,--k", l_k);
  select->add_flag("--exclude-ct-concepts", l_exclude, "Drop occurrence features of the descriptor's concepts");
  select->add_option("--targets", l_targets, "Comma separated labels (default: trainable weak labels)");
  select->add_option("--report", l_report, "Ranked feature CSV");
  select->add_option("--out", l_out, "Reduced raw feature bundle")->required();

  // train
  std::string t_features, t_labels, t_split, t_set = "ws", t_out, t_targets, t_weak_descriptor,
                                                 t_classifier = "logreg", t_penalty = "l2";
  double t_C = 1.0;
  std::uint64_t t_seed = 0;
  std::size_t t_trees = 100, t_workers = 1;
  auto* train_cmd = app.add_subcommand("train", "Train one-vs-rest classifiers");
  train_cmd->add_option("--features", t_features)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--labels", t_labels, "Weak (or relabeled) label matrix")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--split", t_split)->check(CLI::ExistingFile);
  train_cmd->add_option("--set", t_set);
  train_cmd->add_option("--targets", t_targets);
  train_cmd->add_option("--descriptor", t_weak_descriptor, "Derive targets from the labels")->check(CLI::ExistingFile);
  train_cmd->add_option("--classifier", t_classifier, "logreg, linear_svm, decision_tree or random_forest");
  train_cmd->add_option("--penalty", t_penalty, "l1 or l2");
  train_cmd->add_option("-C,--C", t_C);
  train_cmd->add_option("--n-trees", t_trees);
  train_cmd->add_option("--seed", t_seed)->required();
  train_cmd->add_option("--workers", t_workers);
  train_cmd->add_option("--out", t_out, "Model JSON")->required();

  // predict
  std::string p_model, p_features, p_split, p_set = "ma1", p_pmids, p_out;
  auto* predict_cmd = app.add_subcommand("predict", "Apply a model to feature rows");
  predict_cmd->add_option("--model", p_model)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--features", p_features)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--split", p_split)->check(CLI::ExistingFile);
  predict_cmd->add_option("--set", p_set);
  predict_cmd->add_option("--pmids", p_pmids)->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", p_out)->required();

  // baseline
  std::string b_kind, b_descriptor, b_corpus, b_weak, b_split, b_set = "ma1", b_pmids, b_out, b_targets;
  std::uint64_t b_seed = 0;
  auto* baseline = app.add_subcommand("baseline", "Heuristic baseline predictions");
  baseline->add_option("--kind", b_kind, "AllAll, Random, WSLabels, WSRestAll, AllM, WSRestM, DTerms or DTokens")->required();
  baseline->add_option("--descriptor", b_descriptor)->required()->check(CLI::ExistingFile);
  baseline->add_option("--weak", b_weak)->required()->check(CLI::ExistingFile);
  baseline->add_option("--corpus", b_corpus)->check(CLI::ExistingFile);
  baseline->add_option("--split", b_split)->check(CLI::ExistingFile);
  baseline->add_option("--set", b_set);
  baseline->add_option("--pmids", b_pmids)->check(CLI::ExistingFile);
  baseline->add_option("--targets", b_targets);
  baseline->add_option("--seed", b_seed);
  baseline->add_option("--out", b_out)->required();

  // evaluate
  std::string e_pred, e_golden, e_targets, e_csv, e_json, e_second;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Per-label and macro-averaged P/R/F1");
  evaluate_cmd->add_option("--pred", e_pred)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--golden", e_golden)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--targets", e_targets, "Comma separated (default: prediction columns)");
  evaluate_cmd->add_option("--kappa-with", e_second, "Second annotation for Cohen's kappa against --golden")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--csv", e_csv);
  evaluate_cmd->add_option("--json", e_json);

  // cv
  std::string c_features, c_weak, c_descriptor, c_split, c_set = "ws", c_method = "anova", c_classifier = "logreg",
                                                           c_penalty = "l2", c_targets;
  std::size_t c_k = 100, c_folds = 5;
  double c_C = 1.0;
  std::uint64_t c_seed = 0;
  bool c_exclude = false;
  auto* cv = app.add_subcommand("cv", "Cross-validate against the weak labels");
  cv->add_option("--features", c_features, "Raw feature bundle")->required()->check(CLI::ExistingFile);
  cv->add_option("--weak", c_weak)->required()->check(CLI::ExistingFile);
  cv->add_option("--descriptor", c_descriptor)->required()->check(CLI::ExistingFile);
  cv->add_option("--split", c_split)->check(CLI::ExistingFile);
  cv->add_option("--set", c_set);
  cv->add_option("--method", c_method);
  cv->add_option("-k,--k", c_k);
  cv->add_flag("--exclude-ct-concepts", c_exclude);
  cv->add_option("--classifier", c_classifier);
  cv->add_option("--penalty", c_penalty);
  cv->add_option("-C,--C", c_C);
  cv->add_option("--folds", c_folds);
  cv->add_option("--targets", c_targets);
  cv->add_option("--seed", c_seed)->required();

  // relabel
  std::string r_model, r_features, r_labels, r_split, r_set = "ws_und", r_out, r_labels_out;
  auto* relabel = app.add_subcommand("relabel", "Relabel the training set with a model and retrain");
  relabel->add_option("--model", r_model)->required()->check(CLI::ExistingFile);
  relabel->add_option("--features", r_features)->required()->check(CLI::ExistingFile);
  relabel->add_option("--labels", r_labels)->required()->check(CLI::ExistingFile);
  relabel->add_option("--split", r_split)->check(CLI::ExistingFile);
  relabel->add_option("--set", r_set);
  relabel->add_option("--out", r_out, "Retrained model")->required();
  relabel->add_option("--labels-out", r_labels_out, "Relabeled matrix");

  // run
  std::string u_config, u_out;
  std::size_t u_workers = 0;
  auto* run_cmd = app.add_subcommand("run", "Execute a pipeline configuration");
  run_cmd->add_option("config", u_config, "Pipeline JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--workers", u_workers, "Override the worker count");
  run_cmd->add_option("--output-dir", u_out, "Override the output directory");

  // synth
  std::string y_out;
  SyntheticSpec y_spec;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with golden labels");
  synth->add_option("--articles", y_spec.n_articles);
  synth->add_option("--labels", y_spec.n_labels);
  synth->add_option("--synonyms", y_spec.synonyms_per_label);
  synth->add_option("--miss-rate", y_spec.miss_rate)->check(CLI::Range(0.0, 0.999999));
  synth->add_option("--spurious-rate", y_spec.spurious_rate)->check(CLI::Range(0.0, 0.999999));
  synth->add_option("--seed", y_spec.seed)->required();
  synth->add_option("--out-dir", y_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fetch) {
      g_stage = "fetch";
      std::string term = f_term;
      if (term.empty()) {
        if (f_descriptor.empty()) throw ValidationError("fetch", "give --term or --descriptor");
        term = descriptor_query(load_thesaurus(f_descriptor).descriptor_id);
      }
      EutilsClient client(EutilsConfig::from_env());
      auto pmids = search_pmids(client, term, f_page);
      if (f_max > 0 && pmids.size() > f_max) pmids.resize(f_max);
      note("search returned " + std::to_string(pmids.size()) + " pmids");
      Corpus corpus;
      std::unordered_set<std::string> have;
      if (fs::exists(f_out)) {
        corpus = load_corpus(f_out);
        for (const auto& a : corpus.articles) have.insert(a.pmid);
        note("resuming with " + std::to_string(have.size()) + " articles already present");
      }
      // Append each batch as it arrives so an interrupted fetch can resume.
      std::ofstream out(f_out, std::ios::app | std::ios::binary);
      if (!out) throw IoError("cannot write " + f_out);
      const auto res = fetch_articles(client, pmids, f_batch, have, [&](const std::vector<Article>& batch) {
        for (const auto& a : batch) out << article_to_jsonl(a);
        out.flush();
      });
      for (const auto& m : res.missing) note("no record for pmid " + m);
      note("fetched " + std::to_string(res.corpus.size()) + " articles in " + std::to_string(res.requests) + " requests");
    } else if (*import) {
      g_stage = "import";
      Corpus corpus;
      std::set<std::string> seen;
      for (const auto& file : i_xml) {
        const auto res = parse_medline_xml(read_file(file));
        for (const auto& r : res.rejected) note(file + ": rejected " + r);
        for (const auto& a : res.articles) {
          if (!i_descriptor_id.empty() &&
              std::find(a.descriptor_ids.begin(), a.descriptor_ids.end(), i_descriptor_id) == a.descriptor_ids.end()) {
            continue;
          }
          if (seen.insert(a.pmid).second) corpus.articles.push_back(a);
        }
      }
      save_corpus(corpus, i_out);
      note("wrote " + std::to_string(corpus.size()) + " articles");
    } else if (*annotate) {
      g_stage = "annotate";
      const auto d = load_thesaurus(a_descriptor);
      const auto corpus = load_corpus(a_corpus);
      std::vector<ConceptOccurrence> occ;
      if (!a_import.empty()) {
        occ = import_occurrences(a_import, corpus);
      } else {
        std::vector<Concept> aux;
        if (!a_aux.empty()) aux = load_auxiliary_concepts(a_aux);
        const auto dict = build_dictionary(d, a_gran == "tokens" ? Granularity::TokenLevel : Granularity::TermLevel, aux);
        occ = recognize_corpus(corpus, dict, a_workers);
      }
      save_occurrences(occ, a_out);
      note("wrote " + std::to_string(occ.size()) + " occurrences");
    } else if (*weaklabel) {
      g_stage = "weaklabel";
      const auto d = load_thesaurus(w_descriptor);
      const auto weak = assign_weak_labels(load_corpus(w_corpus), load_occurrences(w_occ), d);
      save_label_matrix(weak, w_out);
      if (!w_targets_out.empty()) {
        write_file_atomic(w_targets_out, nlohmann::json(target_labels(weak, d)).dump() + "\n");
      }
      for (std::size_t c = 0; c < weak.cols(); ++c) {
        note(weak.label_ids()[c] + ": " + std::to_string(weak.support(c)) + " articles");
      }
    } else if (*split) {
      g_stage = "split";
      const auto d = load_thesaurus(s_descriptor);
      const auto weak = load_label_matrix(s_weak, LabelMatrix::Kind::Weak);
      SplitBundle s;
      s.seed = s_seed;
      s.ma1 = split_ma1(weak.pmids(), s_ma1, derive_seed(s_seed, "ma1"));
      const std::set<std::string> in_ma1(s.ma1.begin(), s.ma1.end());
      std::vector<std::string> rest;
      for (const auto& p : weak.pmids()) {
        if (!in_ma1.count(p)) rest.push_back(p);
      }
      s.ma2 = split_ma2(rest, weak.select_rows(rest), d, s_ma2, derive_seed(s_seed, "ma2"));
      s.ws = build_ws(weak.pmids(), s.ma1, s.ma2, weak);
      if (s_und) s.ws_und = undersample_majority(s.ws, weak, d, *s_und, derive_seed(s_seed, "ws_und"));
      s.validate(weak.pmids());
      write_file_atomic(s_out, split_to_json(s));
      note("ma1 " + std::to_string(s.ma1.size()) + ", ma2 " + std::to_string(s.ma2.size()) + ", ws " +
           std::to_string(s.ws.size()) + (s.ws_und ? ", ws_und " + std::to_string(s.ws_und->size()) : ""));
    } else if (*featurize_cmd) {
      g_stage = "featurize";
      const auto corpus = load_corpus(z_corpus);
      const auto occ = load_occurrences(z_occ);
      FeatureBundle b;
      std::shared_ptr<const FeatureSpace> space;
      if (!z_space.empty()) {
        space = load_feature_bundle(z_space).matrix.space;
      } else {
        Corpus fit;
        if (z_split.empty()) {
          fit = corpus;
        } else {
          const auto index = corpus.index();
          const auto s = split_from_json(read_file(z_split));
          for (const auto& p : training_rows(s, z_set)) fit.articles.push_back(corpus.articles[index.at(p)]);
        }
        space = build_features(fit, occ, {z_min_df}).space;
      }
      b.matrix = featurize(corpus, occ, space);
      const auto fit_rows = z_split.empty() ? corpus.pmids()
                                            : training_rows(split_from_json(read_file(z_split)), z_set);
      b.idf = fit_idf(select_feature_rows(b.matrix, fit_rows));
      save_feature_bundle(b, z_out);
      note(std::to_string(space->size()) + " features over " + std::to_string(corpus.size()) + " articles");
    } else if (*select) {
      g_stage = "select";
      const auto raw = load_feature_bundle(l_features);
      if (raw.matrix.weighted) throw ValidationError("raw-features", "select expects a raw feature bundle");
      const auto d = load_thesaurus(l_descriptor);
      const auto weak = load_label_matrix(l_weak, LabelMatrix::Kind::Weak);
      const auto targets = resolve_targets(l_targets, l_weak, l_descriptor);
      const auto rows = pick_rows(l_split, l_set, "", raw.matrix.pmids);
      const SelectorConfig sc{selection_method_from_string(l_method), l_k, l_exclude, Aggregation::Max};
      const auto train_raw = select_feature_rows(raw.matrix, rows);
      const auto idf = fit_idf(train_raw);
      const auto scores = score_features(apply_tfidf(train_raw, idf), weak.select_rows(rows), targets, sc.method);
      const auto ranked = select_top_k(scores, *raw.matrix.space, sc, d);
      if (!l_report.empty()) write_file_atomic(l_report, selection_report_csv(ranked, scores, *raw.matrix.space));
      std::vector<std::uint32_t> ids;
      for (const auto& r : ranked) ids.push_back(r.id);
      const auto reduced = reduce_space(*raw.matrix.space, idf, ids);
      save_feature_bundle({project(raw.matrix, reduced), reduced.idf}, l_out);
      note("kept " + std::to_string(ids.size()) + " of " + std::to_string(raw.matrix.space->size()) + " features");
    } else if (*train_cmd) {
      g_stage = "train";
      const auto b = load_feature_bundle(t_features);
      const auto labels = load_label_matrix(t_labels, LabelMatrix::Kind::Weak);
      const auto rows = pick_rows(t_split, t_set, "", labels.pmids());
      std::vector<std::string> targets;
      if (!t_targets.empty() || !t_weak_descriptor.empty()) {
        targets = resolve_targets(t_targets, t_labels, t_weak_descriptor);
      } else {
        targets = labels.label_ids();
      }
      TrainConfig cfg;
      cfg.classifier = classifier_from_string(t_classifier);
      cfg.penalty = penalty_from_string(t_penalty);
      cfg.C = t_C;
      cfg.tree.n_trees = t_trees;
      cfg.seed = t_seed;
      const auto model = train(bundle_rows(b, rows), labels.select_rows(rows), targets, cfg, {t_workers, false});
      for (const auto& w : model.warnings) note("warning: " + w);
      save_model(model, t_out);
      note("trained " + std::to_string(model.models.size()) + " binary models on " + std::to_string(rows.size()) + " articles");
    } else if (*predict_cmd) {
      g_stage = "predict";
      const auto model = load_model(p_model);
      const auto b = load_feature_bundle(p_features);
      const auto rows = pick_rows(p_split, p_set, p_pmids, b.matrix.pmids);
      save_label_matrix(predict(model, bundle_rows(b, rows)), p_out);
    } else if (*baseline) {
      g_stage = "baseline";
      const auto d = load_thesaurus(b_descriptor);
      const auto weak = load_label_matrix(b_weak, LabelMatrix::Kind::Weak);
      const auto targets = resolve_targets(b_targets, b_weak, b_descriptor);
      const auto rows = pick_rows(b_split, b_set, b_pmids, weak.pmids());
      Corpus corpus;
      if (!b_corpus.empty()) corpus = load_corpus(b_corpus);
      const auto terms = build_dictionary(d, Granularity::TermLevel);
      const auto tokens = build_dictionary(d, Granularity::TokenLevel);
      const BaselineInputs in{b_corpus.empty() ? nullptr : &corpus, &weak, &d, &terms, &tokens};
      save_label_matrix(baseline_predict({baseline_kind_from_string(b_kind), b_seed}, rows, targets, in), b_out);
    } else if (*evaluate_cmd) {
      g_stage = "evaluate";
      const auto pred = load_label_matrix(e_pred, LabelMatrix::Kind::Predicted);
      const auto golden = load_label_matrix(e_golden, LabelMatrix::Kind::Golden);
      const auto targets = e_targets.empty() ? pred.label_ids() : resolve_targets(e_targets, "", "");
      const auto g = golden.select_rows(pred.pmids());
      const auto ev = evaluate(pred, g, targets);
      const auto csv = evaluation_csv(ev);
      if (!e_csv.empty()) write_file_atomic(e_csv, csv);
      if (!e_json.empty()) {
        auto j = evaluation_to_json(ev);
        if (!e_second.empty()) {
          const auto second = load_label_matrix(e_second, LabelMatrix::Kind::Golden);
          j["kappa"] = kappa_to_json(kappa(g, second.select_rows(pred.pmids()), targets));
        }
        write_file_atomic(e_json, j.dump(2) + "\n");
      }
      std::cout << csv;
      if (!e_second.empty()) {
        const auto k = kappa(g, load_label_matrix(e_second, LabelMatrix::Kind::Golden).select_rows(pred.pmids()), targets);
        std::cout << "macro_kappa," << format_metric(k.macro_kappa) << "\n";
      }
    } else if (*cv) {
      g_stage = "cv";
      const auto raw = load_feature_bundle(c_features);
      const auto d = load_thesaurus(c_descriptor);
      const auto weak = load_label_matrix(c_weak, LabelMatrix::Kind::Weak);
      const auto targets = resolve_targets(c_targets, c_weak, c_descriptor);
      const auto rows = pick_rows(c_split, c_set, "", raw.matrix.pmids);
      TrainConfig cfg;
      cfg.classifier = classifier_from_string(c_classifier);
      cfg.penalty = penalty_from_string(c_penalty);
      cfg.C = c_C;
      cfg.seed = c_seed;
      const auto res = cross_validate(raw, weak, targets, rows,
                                      {selection_method_from_string(c_method), c_k, c_exclude, Aggregation::Max},
                                      cfg, c_folds, c_seed, d);
      for (const auto& w : res.warnings) note("warning: " + w);
      for (std::size_t f = 0; f < res.fold_macro_f1.size(); ++f) {
        std::cout << "fold," << f << "," << format_metric(res.fold_macro_f1[f]) << "\n";
      }
      std::cout << "mean,," << format_metric(res.mean_macro_f1) << "\n";
    } else if (*relabel) {
      g_stage = "relabel";
      const auto model = load_model(r_model);
      const auto b = load_feature_bundle(r_features);
      const auto labels = load_label_matrix(r_labels, LabelMatrix::Kind::Weak);
      const auto rows = pick_rows(r_split, r_set, "", labels.pmids());
      const auto res = relabel_and_retrain(model, bundle_rows(b, rows), labels.select_rows(rows), model.config);
      for (const auto& w : res.warnings) note("warning: " + w);
      save_model(res.retrained, r_out);
      if (!r_labels_out.empty()) save_label_matrix(res.relabeled, r_labels_out);
    } else if (*run_cmd) {
      g_stage = "run";
      const auto cfg = load_pipeline_config(u_config);
      RunOptions opts;
      opts.log = [](const std::string& m) { std::cerr << "[run] " << m << "\n"; };
      if (u_workers > 0) opts.workers = u_workers;
      if (!u_out.empty()) opts.output_dir = u_out;
      try {
        const auto manifest = run(cfg, opts);
        for (const auto& s : manifest.stages) std::cout << s.name << "\t" << s.status << "\n";
      } catch (const StageError& e) {
        g_stage = "run:" + e.stage();
        throw;
      }
    } else if (*synth) {
      g_stage = "synth";
      const auto data = generate_synthetic(y_spec);
      fs::create_directories(y_out);
      save_corpus(data.corpus, fs::path(y_out) / "corpus.jsonl");
      save_label_matrix(data.golden, fs::path(y_out) / "golden.csv");
      save_thesaurus(data.descriptor, fs::path(y_out) / "thesaurus.json");
      note("wrote " + std::to_string(data.corpus.size()) + " articles to " + y_out);
    }
  } catch (const ValidationError& e) {
    std::cerr << "[" << g_stage << "] validation error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "[" << g_stage << "] parse error: " << e.what() << "\n";
    return 3;
  } catch (const NetworkError& e) {
    std::cerr << "[" << g_stage << "] network error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "[" << g_stage << "] error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
