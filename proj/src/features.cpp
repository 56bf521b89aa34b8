#include "wsindex/features.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "wsindex/digest.hpp"
#include "wsindex/error.hpp"
#include "wsindex/text.hpp"

namespace wsindex {

using json = nlohmann::ordered_json;

namespace {

const char* kind_code(FeatureKind k) { return k == FeatureKind::Lexical ? "L" : "S"; }

FeatureKind kind_from_code(std::string_view s) {
  if (s == "L") return FeatureKind::Lexical;
  if (s == "S") return FeatureKind::Semantic;
  throw ValidationError("feature-kind", "unknown feature kind '" + std::string(s) + "'");
}

json space_json(const FeatureSpace& space) {
  json arr = json::array();
  for (const auto& f : space.features()) arr.push_back(json::array({kind_code(f.kind), f.key}));
  return arr;
}

std::unordered_map<std::string, std::vector<std::string>> concepts_by_pmid(
    const std::vector<ConceptOccurrence>& occurrences) {
  std::unordered_map<std::string, std::vector<std::string>> out;
  for (const auto& o : occurrences) out[o.pmid].push_back(o.concept_id);
  return out;
}

}  // namespace

FeatureSpace::FeatureSpace(std::vector<std::pair<FeatureKind, std::string>> defs) {
  features_.reserve(defs.size());
  for (auto& [kind, key] : defs) {
    const auto id = static_cast<std::uint32_t>(features_.size());
    auto& index = kind == FeatureKind::Lexical ? lexical_ : semantic_;
    if (!index.emplace(key, id).second) {
      throw ValidationError("feature-key-unique",
                            std::string("duplicate ") + kind_code(kind) + " feature '" + key + "'");
    }
    features_.push_back(FeatureDef{id, kind, std::move(key)});
  }
  digest_ = sha256_hex(space_json(*this).dump());
}

std::optional<std::uint32_t> FeatureSpace::find(FeatureKind kind, const std::string& key) const {
  const auto& index = kind == FeatureKind::Lexical ? lexical_ : semantic_;
  auto it = index.find(key);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> tokenize(std::string_view t) { return text::tokenize(t); }

FeatureMatrix featurize(const Corpus& corpus, const std::vector<ConceptOccurrence>& occurrences,
                        std::shared_ptr<const FeatureSpace> space) {
  FeatureMatrix m;
  m.space = std::move(space);
  m.values = CsrMatrix(m.space->size());
  const auto concepts = concepts_by_pmid(occurrences);
  std::vector<CsrMatrix::Entry> row;
  std::unordered_map<std::uint32_t, double> counts;
  for (const auto& a : corpus.articles) {
    counts.clear();
    for (const auto& tok : tokenize(a.text())) {
      if (auto id = m.space->find(FeatureKind::Lexical, tok)) counts[*id] += 1.0;
    }
    if (auto it = concepts.find(a.pmid); it != concepts.end()) {
      for (const auto& c : it->second) {
        if (auto id = m.space->find(FeatureKind::Semantic, c)) counts[*id] = 1.0;
      }
    }
    row.assign(counts.begin(), counts.end());
    m.values.add_row(row);
    m.pmids.push_back(a.pmid);
  }
  return m;
}

FeatureMatrix build_features(const Corpus& corpus,
                             const std::vector<ConceptOccurrence>& occurrences,
                             const FeatureOptions& options) {
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& a : corpus.articles) {
    auto toks = tokenize(a.text());
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (auto& t : toks) ++df[t];
  }
  std::set<std::string> lexical;
  for (const auto& [tok, n] : df) {
    if (n >= options.min_token_df) lexical.insert(tok);
  }
  std::unordered_set<std::string> in_corpus;
  for (const auto& a : corpus.articles) in_corpus.insert(a.pmid);
  std::set<std::string> semantic;
  for (const auto& o : occurrences) {
    if (in_corpus.contains(o.pmid)) semantic.insert(o.concept_id);
  }
  std::vector<std::pair<FeatureKind, std::string>> defs;
  for (const auto& t : lexical) defs.emplace_back(FeatureKind::Lexical, t);
  for (const auto& c : semantic) defs.emplace_back(FeatureKind::Semantic, c);
  return featurize(corpus, occurrences, std::make_shared<const FeatureSpace>(std::move(defs)));
}

std::vector<double> fit_idf(const FeatureMatrix& raw) {
  const std::size_t n = raw.values.rows();
  std::vector<std::size_t> df(raw.values.cols(), 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (auto c : raw.values.row_indices(r)) ++df[c];
  }
  std::vector<double> idf(df.size());
  for (std::size_t f = 0; f < df.size(); ++f) {
    idf[f] = std::log((1.0 + static_cast<double>(n)) / (1.0 + static_cast<double>(df[f]))) + 1.0;
  }
  return idf;
}

FeatureMatrix apply_tfidf(const FeatureMatrix& raw, const std::vector<double>& idf) {
  if (raw.weighted) throw ValidationError("tfidf-input", "matrix is already weighted");
  if (idf.size() != raw.values.cols()) throw ValidationError("tfidf-input", "idf size mismatch");
  FeatureMatrix out = raw;
  out.weighted = true;
  for (std::size_t r = 0; r < out.values.rows(); ++r) {
    auto vals = out.values.row_values(r);
    const auto idx = out.values.row_indices(r);
    double norm2 = 0.0;
    for (std::size_t p = 0; p < vals.size(); ++p) {
      vals[p] *= idf[idx[p]];
      norm2 += vals[p] * vals[p];
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& v : vals) v *= inv;
    }
  }
  return out;
}

FeatureMatrix tfidf(const FeatureMatrix& raw) { return apply_tfidf(raw, fit_idf(raw)); }

std::string_view to_string(SelectionMethod m) {
  return m == SelectionMethod::Chi2 ? "chi2" : "anova";
}

SelectionMethod selection_method_from_string(std::string_view s) {
  if (s == "chi2") return SelectionMethod::Chi2;
  if (s == "anova" || s == "anova_f" || s == "f") return SelectionMethod::AnovaF;
  throw ValidationError("selection-method", "unknown selection method '" + std::string(s) + "'");
}

FeatureScores score_features(const FeatureMatrix& m, const LabelMatrix& labels,
                             const std::vector<std::string>& targets, SelectionMethod method) {
  if (labels.pmids() != m.pmids) {
    throw ValidationError("pmid-alignment", "feature and label rows are not aligned");
  }
  const std::size_t n = m.values.rows();
  const std::size_t nf = m.values.cols();
  const CsrMatrix cols = m.values.transpose();
  FeatureScores out;
  out.labels = targets;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  for (const auto& label : targets) {
    const auto c = labels.column(label);
    if (!c) throw ValidationError("label-alignment", "target " + label + " not in label matrix");
    std::vector<char> y(n);
    std::size_t n1 = 0;
    for (std::size_t r = 0; r < n; ++r) {
      y[r] = labels.at(r, *c) ? 1 : 0;
      n1 += static_cast<std::size_t>(y[r]);
    }
    const std::size_t n0 = n - n1;
    std::vector<double> s(nf, 0.0);
    if (n1 == 0 || n0 == 0) {
      out.degenerate_labels.push_back(label);
      out.scores.push_back(std::move(s));
      continue;
    }
    const double dn = static_cast<double>(n), dn1 = static_cast<double>(n1),
                 dn0 = static_cast<double>(n0);
    for (std::size_t f = 0; f < nf; ++f) {
      const auto idx = cols.row_indices(f);
      const auto val = cols.row_values(f);
      double sum1 = 0.0, sum0 = 0.0;
      std::size_t nz1 = 0, nz0 = 0;
      for (std::size_t p = 0; p < idx.size(); ++p) {
        if (y[idx[p]]) {
          sum1 += val[p];
          ++nz1;
        } else {
          sum0 += val[p];
          ++nz0;
        }
      }
      const double total = sum1 + sum0;
      if (method == SelectionMethod::Chi2) {
        if (total <= 0.0) continue;
        const double e1 = total * dn1 / dn, e0 = total * dn0 / dn;
        s[f] = (sum1 - e1) * (sum1 - e1) / e1 + (sum0 - e0) * (sum0 - e0) / e0;
      } else {
        const double mu = total / dn, mu1 = sum1 / dn1, mu0 = sum0 / dn0;
        const double ssb = dn1 * (mu1 - mu) * (mu1 - mu) + dn0 * (mu0 - mu) * (mu0 - mu);
        // implicit zeros of each group contribute mu_g^2 apiece
        double ssw = static_cast<double>(n1 - nz1) * mu1 * mu1 +
                     static_cast<double>(n0 - nz0) * mu0 * mu0;
        for (std::size_t p = 0; p < idx.size(); ++p) {
          const double d = val[p] - (y[idx[p]] ? mu1 : mu0);
          ssw += d * d;
        }
        if (ssw <= 0.0 || n <= 2) {
          s[f] = ssb > 0.0 ? kInf : 0.0;
        } else {
          s[f] = ssb / (ssw / (dn - 2.0));
        }
      }
    }
    out.scores.push_back(std::move(s));
  }
  return out;
}

std::vector<RankedFeature> select_top_k(const FeatureScores& scores, const FeatureSpace& space,
                                        const SelectorConfig& cfg, const Descriptor& d) {
  if (cfg.k == 0) throw ValidationError("selector-k", "k must be at least 1");
  std::vector<char> allowed(space.size(), 1);
  if (cfg.exclude_ct_concepts) {
    for (const auto& f : space.features()) {
      if (f.kind == FeatureKind::Semantic && d.contains(f.key)) allowed[f.id] = 0;
    }
  }
  std::vector<RankedFeature> candidates;
  for (const auto& f : space.features()) {
    if (!allowed[f.id]) continue;
    double agg = 0.0;
    for (const auto& s : scores.scores) agg = std::max(agg, s[f.id]);
    candidates.push_back({f.id, agg});
  }
  if (cfg.k > candidates.size()) {
    throw ValidationError("k-exceeds-features", "k=" + std::to_string(cfg.k) + " but only " +
                                                    std::to_string(candidates.size()) +
                                                    " features are available");
  }
  auto by_rank = [](const RankedFeature& a, const RankedFeature& b) {
    if (a.aggregate != b.aggregate) return a.aggregate > b.aggregate;
    return a.id < b.id;
  };
  if (cfg.aggregation == Aggregation::Max) {
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(cfg.k),
                      candidates.end(), by_rank);
    candidates.resize(cfg.k);
    return candidates;
  }
  std::set<std::uint32_t> chosen;
  for (const auto& s : scores.scores) {
    std::vector<RankedFeature> per_label;
    for (const auto& c : candidates) per_label.push_back({c.id, s[c.id]});
    std::partial_sort(per_label.begin(), per_label.begin() + static_cast<std::ptrdiff_t>(cfg.k),
                      per_label.end(), by_rank);
    for (std::size_t i = 0; i < cfg.k; ++i) chosen.insert(per_label[i].id);
  }
  std::vector<RankedFeature> out;
  for (const auto& c : candidates) {
    if (chosen.contains(c.id)) out.push_back(c);
  }
  std::sort(out.begin(), out.end(), by_rank);
  return out;
}

namespace {

std::string fmt_score(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::string selection_report_csv(const std::vector<RankedFeature>& ranked,
                                 const FeatureScores& scores, const FeatureSpace& space) {
  std::string out = "rank,kind,key";
  for (const auto& l : scores.labels) out += "," + csv_escape(l);
  out += ",aggregate\n";
  std::size_t rank = 0;
  for (const auto& r : ranked) {
    const auto& f = space[r.id];
    out += std::to_string(++rank) + "," + kind_code(f.kind) + "," + csv_escape(f.key);
    for (const auto& s : scores.scores) out += "," + fmt_score(s[r.id]);
    out += "," + fmt_score(r.aggregate) + "\n";
  }
  return out;
}

ReducedSpace reduce_space(const FeatureSpace& space, const std::vector<double>& idf,
                          const std::vector<std::uint32_t>& ids) {
  ReducedSpace out;
  std::vector<std::pair<FeatureKind, std::string>> defs;
  for (auto id : ids) {
    if (id >= space.size()) throw ValidationError("feature-id", "feature id out of range");
    defs.emplace_back(space[id].kind, space[id].key);
    out.idf.push_back(idf.at(id));
  }
  out.space = std::make_shared<const FeatureSpace>(std::move(defs));
  out.source_ids = ids;
  return out;
}

FeatureMatrix project(const FeatureMatrix& raw, const ReducedSpace& reduced) {
  if (raw.weighted) throw ValidationError("project-input", "project expects a raw matrix");
  FeatureMatrix out;
  out.pmids = raw.pmids;
  out.space = reduced.space;
  out.values = raw.values.select_columns(reduced.source_ids);
  return out;
}

std::string space_to_json(const FeatureSpace& space) { return space_json(space).dump(); }

std::shared_ptr<const FeatureSpace> space_from_json(std::string_view json_text) {
  try {
    std::vector<std::pair<FeatureKind, std::string>> defs;
    for (const auto& f : json::parse(json_text)) {
      defs.emplace_back(kind_from_code(f.at(0).get<std::string>()), f.at(1).get<std::string>());
    }
    return std::make_shared<const FeatureSpace>(std::move(defs));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("feature space: ") + e.what(), e.byte, ParseError::Unit::Byte);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema", std::string("feature space: ") + e.what());
  }
}

void save_feature_bundle(const FeatureBundle& b, const std::filesystem::path& path) {
  json j;
  j["space_digest"] = b.matrix.space->digest();
  j["space"] = space_json(*b.matrix.space);
  j["idf"] = b.idf;
  j["weighted"] = b.matrix.weighted;
  j["pmids"] = b.matrix.pmids;
  json rows = json::array();
  for (std::size_t r = 0; r < b.matrix.values.rows(); ++r) {
    json row = json::array();
    const auto idx = b.matrix.values.row_indices(r);
    const auto val = b.matrix.values.row_values(r);
    for (std::size_t p = 0; p < idx.size(); ++p) row.push_back(json::array({idx[p], val[p]}));
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  write_file_atomic(path, j.dump() + "\n");
}

FeatureBundle load_feature_bundle(const std::filesystem::path& path) {
  try {
    const auto j = json::parse(read_file(path));
    std::vector<std::pair<FeatureKind, std::string>> defs;
    for (const auto& f : j.at("space")) {
      defs.emplace_back(kind_from_code(f.at(0).get<std::string>()), f.at(1).get<std::string>());
    }
    FeatureBundle b;
    auto space = std::make_shared<const FeatureSpace>(std::move(defs));
    if (j.contains("space_digest") && j["space_digest"].get<std::string>() != space->digest()) {
      throw ValidationError("space-digest", path.string() + ": feature space digest mismatch");
    }
    b.idf = j.at("idf").get<std::vector<double>>();
    b.matrix.space = space;
    b.matrix.weighted = j.at("weighted").get<bool>();
    b.matrix.pmids = j.at("pmids").get<std::vector<std::string>>();
    b.matrix.values = CsrMatrix(space->size());
    for (const auto& row : j.at("rows")) {
      std::vector<CsrMatrix::Entry> entries;
      for (const auto& e : row) entries.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
      b.matrix.values.add_row(std::move(entries));
    }
    if (b.matrix.values.rows() != b.matrix.pmids.size()) {
      throw ValidationError("feature-rows", path.string() + ": row count differs from pmids");
    }
    return b;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte, ParseError::Unit::Byte);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema", path.string() + ": " + e.what());
  }
}

FeatureMatrix select_feature_rows(const FeatureMatrix& m, const std::vector<std::string>& pmids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < m.pmids.size(); ++i) index.emplace(m.pmids[i], i);
  std::vector<std::size_t> rows;
  rows.reserve(pmids.size());
  for (const auto& p : pmids) {
    auto it = index.find(p);
    if (it == index.end()) throw ValidationError("pmid-alignment", "pmid " + p + " has no features");
    rows.push_back(it->second);
  }
  FeatureMatrix out;
  out.pmids = pmids;
  out.space = m.space;
  out.weighted = m.weighted;
  out.values = m.values.select_rows(rows);
  return out;
}

}  // namespace wsindex
