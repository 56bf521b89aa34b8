#include "wsindex/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>

#include "wsindex/error.hpp"
#include "wsindex/rng.hpp"

namespace wsindex {

using json = nlohmann::ordered_json;

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Row i of `a` corresponds to row map[i] of `b`.
std::vector<std::size_t> align_rows(const LabelMatrix& a, const LabelMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ValidationError("row-alignment", "matrices cover " + std::to_string(a.rows()) + " and " +
                                               std::to_string(b.rows()) + " articles");
  }
  std::vector<std::size_t> map(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto other = b.row(a.pmids()[r]);
    if (!other) throw ValidationError("row-alignment", "pmid " + a.pmids()[r] + " missing from one matrix");
    map[r] = *other;
  }
  return map;
}

std::size_t require_column(const LabelMatrix& m, const std::string& label, std::string_view which) {
  const auto c = m.column(label);
  if (!c) throw ValidationError("unknown-label", "label " + label + " missing from the " + std::string(which) + " matrix");
  return *c;
}

std::string canonical(std::string_view s) {
  std::string out;
  for (char ch : s) {
    if (ch != '_' && ch != '-') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

}  // namespace

Evaluation evaluate(const LabelMatrix& pred, const LabelMatrix& golden,
                    const std::vector<std::string>& targets) {
  const auto map = align_rows(golden, pred);
  Evaluation e;
  double sum = 0.0;
  for (const auto& t : targets) {
    const auto gc = require_column(golden, t, "golden");
    const auto pc = require_column(pred, t, "predicted");
    LabelMetrics m;
    m.label_id = t;
    for (std::size_t r = 0; r < golden.rows(); ++r) {
      const bool g = golden.at(r, gc), p = pred.at(map[r], pc);
      if (g && p) ++m.tp;
      else if (p) ++m.fp;
      else if (g) ++m.fn;
      else ++m.tn;
    }
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (m.tp + m.fp + m.fn == 0) e.empty_labels.push_back(t);
    sum += m.f1;
    e.labels.push_back(std::move(m));
  }
  e.macro_f1 = targets.empty() ? 0.0 : sum / static_cast<double>(targets.size());
  return e;
}

KappaResult kappa(const LabelMatrix& a, const LabelMatrix& b, const std::vector<std::string>& targets) {
  const auto map = align_rows(a, b);
  KappaResult k;
  double sum = 0.0;
  const double n = static_cast<double>(a.rows());
  for (const auto& t : targets) {
    const auto ac = require_column(a, t, "first");
    const auto bc = require_column(b, t, "second");
    double yy = 0, nn = 0, yn = 0, ny = 0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const bool x = a.at(r, ac), y = b.at(map[r], bc);
      if (x && y) ++yy;
      else if (!x && !y) ++nn;
      else if (x) ++yn;
      else ++ny;
    }
    double value = 0.0;
    bool degenerate = true;
    if (n > 0) {
      const double po = (yy + nn) / n;
      const double pe = ((yy + yn) / n) * ((yy + ny) / n) + ((nn + ny) / n) * ((nn + yn) / n);
      if (pe < 1.0) {
        value = (po - pe) / (1.0 - pe);
        degenerate = false;
      }
    }
    k.labels.push_back(t);
    k.kappa.push_back(value);
    k.degenerate.push_back(degenerate);
    sum += value;
  }
  k.macro_kappa = targets.empty() ? 0.0 : sum / static_cast<double>(targets.size());
  return k;
}

std::string_view to_string(Baseline::Kind k) {
  switch (k) {
    case Baseline::Kind::AllAll: return "AllAll";
    case Baseline::Kind::Random: return "Random";
    case Baseline::Kind::WSLabels: return "WSLabels";
    case Baseline::Kind::WSRestAll: return "WSRestAll";
    case Baseline::Kind::AllM: return "AllM";
    case Baseline::Kind::WSRestM: return "WSRestM";
    case Baseline::Kind::DTerms: return "DTerms";
    case Baseline::Kind::DTokens: return "DTokens";
  }
  return "?";
}

const std::vector<Baseline::Kind>& all_baseline_kinds() {
  static const std::vector<Baseline::Kind> kinds{
      Baseline::Kind::AllAll, Baseline::Kind::Random, Baseline::Kind::WSLabels,
      Baseline::Kind::WSRestAll, Baseline::Kind::AllM, Baseline::Kind::WSRestM,
      Baseline::Kind::DTerms, Baseline::Kind::DTokens};
  return kinds;
}

Baseline::Kind baseline_kind_from_string(std::string_view s) {
  const auto c = canonical(s);
  for (auto k : all_baseline_kinds()) {
    if (canonical(to_string(k)) == c) return k;
  }
  throw ValidationError("baseline", "unknown baseline '" + std::string(s) + "'");
}

LabelMatrix baseline_predict(const Baseline& b, const std::vector<std::string>& pmids,
                             const std::vector<std::string>& targets, const BaselineInputs& in) {
  using K = Baseline::Kind;
  LabelMatrix out(pmids, targets, LabelMatrix::Kind::Predicted);
  const auto need = [&](const void* p, const char* what) {
    if (!p) {
      throw ValidationError("baseline-input", std::string(to_string(b.kind)) + " requires " + what);
    }
  };
  std::size_t pref_col = 0;
  if (b.kind == K::AllM || b.kind == K::WSRestM) {
    need(in.descriptor, "the descriptor");
    const auto it = std::find(targets.begin(), targets.end(), in.descriptor->preferred_concept_id);
    if (it == targets.end()) {
      throw ValidationError("pref-not-target", std::string(to_string(b.kind)) +
                                                   " requires the preferred concept among the targets");
    }
    pref_col = static_cast<std::size_t>(it - targets.begin());
  }

  // WSLabels-derived kinds start from the weak matrix restricted to targets.
  const auto copy_weak = [&] {
    need(in.weak, "weak labels");
    std::vector<std::size_t> cols;
    for (const auto& t : targets) cols.push_back(require_column(*in.weak, t, "weak"));
    for (std::size_t r = 0; r < pmids.size(); ++r) {
      const auto wr = in.weak->row(pmids[r]);
      if (!wr) throw ValidationError("row-alignment", "pmid " + pmids[r] + " has no weak labels row");
      for (std::size_t c = 0; c < cols.size(); ++c) out.set(r, c, in.weak->at(*wr, cols[c]));
    }
  };
  // Unlabeled: no weak label over all of C_t, the top concept included.
  const auto weak_unlabeled = [&](std::size_t r) { return in.weak->row_empty(*in.weak->row(pmids[r])); };

  switch (b.kind) {
    case K::AllAll:
      for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out.set(r, c, true);
      break;
    case K::Random: {
      Rng rng(b.seed);
      for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out.set(r, c, rng.bernoulli(0.5));
      break;
    }
    case K::WSLabels:
      copy_weak();
      break;
    case K::WSRestAll:
      copy_weak();
      for (std::size_t r = 0; r < out.rows(); ++r) {
        if (!weak_unlabeled(r)) continue;
        for (std::size_t c = 0; c < out.cols(); ++c) out.set(r, c, true);
      }
      break;
    case K::AllM:
      for (std::size_t r = 0; r < out.rows(); ++r) out.set(r, pref_col, true);
      break;
    case K::WSRestM:
      copy_weak();
      for (std::size_t r = 0; r < out.rows(); ++r) {
        if (weak_unlabeled(r)) out.set(r, pref_col, true);
      }
      break;
    case K::DTerms:
    case K::DTokens: {
      need(in.corpus, "the corpus");
      const Dictionary* dict = b.kind == K::DTerms ? in.term_dictionary : in.token_dictionary;
      need(dict, "a dictionary");
      const auto index = in.corpus->index();
      for (std::size_t r = 0; r < pmids.size(); ++r) {
        const auto it = index.find(pmids[r]);
        if (it == index.end()) throw ValidationError("unknown-pmid", "pmid " + pmids[r] + " not in corpus");
        std::set<std::string> found;
        for (const auto& o : recognize(in.corpus->articles[it->second], *dict)) found.insert(o.concept_id);
        for (std::size_t c = 0; c < targets.size(); ++c) out.set(r, c, found.count(targets[c]) > 0);
      }
      break;
    }
  }
  return out;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string evaluation_csv(const Evaluation& e) {
  std::string out = "label,tp,fp,fn,precision,recall,f1\n";
  for (const auto& m : e.labels) {
    out += m.label_id + "," + std::to_string(m.tp) + "," + std::to_string(m.fp) + "," +
           std::to_string(m.fn) + "," + format_metric(m.precision) + "," +
           format_metric(m.recall) + "," + format_metric(m.f1) + "\n";
  }
  out += "macro,,,,,," + format_metric(e.macro_f1) + "\n";
  return out;
}

json evaluation_to_json(const Evaluation& e) {
  json labels = json::array();
  for (const auto& m : e.labels) {
    labels.push_back({{"label_id", m.label_id}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn},
                      {"tn", m.tn}, {"precision", m.precision}, {"recall", m.recall},
                      {"f1", m.f1}});
  }
  json j;
  j["labels"] = std::move(labels);
  j["macro_f1"] = e.macro_f1;
  j["empty_labels"] = e.empty_labels;
  if (!e.empty_labels.empty()) {
    j["note"] = "labels without golden positives or predictions contribute F1 = 0 to the macro mean";
  }
  return j;
}

json kappa_to_json(const KappaResult& k) {
  json labels = json::array();
  for (std::size_t i = 0; i < k.labels.size(); ++i) {
    labels.push_back({{"label_id", k.labels[i]}, {"kappa", k.kappa[i]}, {"degenerate", k.degenerate[i]}});
  }
  return {{"labels", std::move(labels)}, {"macro_kappa", k.macro_kappa}};
}

std::string plot_csv(const std::vector<PlotPoint>& points) {
  std::string out = "configuration,test_set,macro_f1\n";
  for (const auto& p : points) {
    out += p.configuration + "," + p.test_set + "," + format_metric(p.macro_f1) + "\n";
  }
  return out;
}

}  // namespace wsindex
