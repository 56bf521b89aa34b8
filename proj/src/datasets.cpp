#include "wsindex/datasets.hpp"

#include <algorithm>
#include <json.hpp>
#include <map>
#include <unordered_set>

#include "wsindex/digest.hpp"
#include "wsindex/error.hpp"
#include "wsindex/rng.hpp"
#include "wsindex/text.hpp"

namespace wsindex {

using json = nlohmann::ordered_json;

void SplitBundle::validate(const std::vector<std::string>& corpus_pmids) const {
  const std::unordered_set<std::string> all(corpus_pmids.begin(), corpus_pmids.end());
  std::unordered_set<std::string> seen;
  auto check = [&](const std::vector<std::string>& part, const char* name) {
    for (const auto& p : part) {
      if (!all.contains(p)) {
        throw ValidationError("split-subset", std::string(name) + " pmid " + p + " not in corpus");
      }
      if (!seen.insert(p).second) {
        throw ValidationError("split-disjoint", "pmid " + p + " appears in more than one split");
      }
    }
  };
  check(ma1, "ma1");
  check(ma2, "ma2");
  check(ws, "ws");
  if (ws_und) {
    const std::unordered_set<std::string> ws_set(ws.begin(), ws.end());
    for (const auto& p : *ws_und) {
      if (!ws_set.contains(p)) throw ValidationError("split-subset", "ws_und pmid " + p + " not in ws");
    }
  }
}

std::string split_to_json(const SplitBundle& s) {
  json j;
  j["seed"] = s.seed;
  j["ma1"] = s.ma1;
  j["ma2"] = s.ma2;
  j["ws"] = s.ws;
  if (s.ws_und) j["ws_und"] = *s.ws_und;
  return j.dump(1) + "\n";
}

SplitBundle split_from_json(std::string_view json_text) {
  try {
    const auto j = json::parse(json_text);
    SplitBundle s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ma1 = j.at("ma1").get<std::vector<std::string>>();
    s.ma2 = j.at("ma2").get<std::vector<std::string>>();
    s.ws = j.at("ws").get<std::vector<std::string>>();
    if (j.contains("ws_und")) s.ws_und = j.at("ws_und").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema", std::string("split manifest: ") + e.what());
  }
}

std::size_t FoldPlan::fold_of(const std::string& pmid) const {
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (std::find(folds[f].begin(), folds[f].end(), pmid) != folds[f].end()) return f;
  }
  throw ValidationError("fold-member", "pmid " + pmid + " is not in the fold plan");
}

namespace {

std::vector<std::string> in_input_order(const std::vector<std::string>& pmids,
                                        const std::unordered_set<std::string>& chosen) {
  std::vector<std::string> out;
  out.reserve(chosen.size());
  for (const auto& p : pmids) {
    if (chosen.contains(p)) out.push_back(p);
  }
  return out;
}

std::size_t weak_row(const LabelMatrix& weak, const std::string& pmid) {
  const auto r = weak.row(pmid);
  if (!r) throw ValidationError("pmid-alignment", "pmid " + pmid + " has no weak label row");
  return *r;
}

}  // namespace

std::vector<std::string> split_ma1(const std::vector<std::string>& pmids, std::size_t n,
                                   std::uint64_t seed) {
  if (n > pmids.size()) {
    throw ValidationError("sample-size", "cannot draw " + std::to_string(n) + " of " +
                                             std::to_string(pmids.size()) + " pmids");
  }
  Rng rng(seed);
  std::unordered_set<std::string> chosen;
  for (auto i : rng.sample_indices(pmids.size(), n)) chosen.insert(pmids[i]);
  return in_input_order(pmids, chosen);
}

std::vector<std::string> split_ma2(const std::vector<std::string>& pmids, const LabelMatrix& weak,
                                   const Descriptor& d, std::size_t n, std::uint64_t seed) {
  const auto pref = weak.column(d.preferred_concept_id);
  if (!pref) {
    throw ValidationError("label-alignment", "weak matrix lacks the preferred concept column");
  }
  struct Group {
    std::vector<std::string> labels;  // column order
    std::vector<std::string> members;
    std::size_t taken = 0;
    std::size_t cap = 0;
  };
  std::map<std::vector<std::size_t>, Group> by_key;
  for (const auto& p : pmids) {
    const auto r = weak_row(weak, p);
    std::vector<std::size_t> key;
    for (std::size_t c = 0; c < weak.cols(); ++c) {
      if (weak.at(r, c)) key.push_back(c);
    }
    if (key.size() == 1 && key[0] == *pref) continue;
    auto& g = by_key[key];
    if (g.members.empty()) {
      for (auto c : key) g.labels.push_back(weak.label_ids()[c]);
    }
    g.members.push_back(p);
  }
  std::vector<Group> groups;
  std::size_t capacity = 0;
  for (auto& [key, g] : by_key) {
    g.cap = std::max<std::size_t>(1, g.members.size() / 2);
    capacity += std::min(g.cap, g.members.size());
    groups.push_back(std::move(g));
  }
  if (capacity < n) {
    throw ValidationError("ma2-pool", "eligible pool supports only " + std::to_string(capacity) +
                                          " articles, " + std::to_string(n) + " requested");
  }
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.members.size() != b.members.size()) return a.members.size() < b.members.size();
    return a.labels < b.labels;
  });

  Rng rng(seed);
  std::unordered_set<std::string> chosen;
  while (chosen.size() < n) {
    for (auto& g : groups) {
      if (chosen.size() == n) break;
      if (g.taken >= g.cap) continue;
      // draw from the not yet taken tail [taken, size)
      const std::size_t pick = g.taken + rng.below(g.members.size() - g.taken);
      std::swap(g.members[g.taken], g.members[pick]);
      chosen.insert(g.members[g.taken]);
      ++g.taken;
    }
  }
  return in_input_order(pmids, chosen);
}

std::vector<std::string> build_ws(const std::vector<std::string>& pmids,
                                  const std::vector<std::string>& ma1,
                                  const std::vector<std::string>& ma2, const LabelMatrix& weak) {
  std::unordered_set<std::string> held_out(ma1.begin(), ma1.end());
  held_out.insert(ma2.begin(), ma2.end());
  std::vector<std::string> out;
  for (const auto& p : pmids) {
    if (held_out.contains(p)) continue;
    if (!weak.row_empty(weak_row(weak, p))) out.push_back(p);
  }
  return out;
}

std::vector<std::string> undersample_majority(const std::vector<std::string>& ws,
                                              const LabelMatrix& weak, const Descriptor& d,
                                              std::size_t target, std::uint64_t seed) {
  const auto pref = weak.column(d.preferred_concept_id);
  if (!pref) {
    throw ValidationError("label-alignment", "weak matrix lacks the preferred concept column");
  }
  std::vector<std::string> pref_only;
  std::unordered_set<std::string> keep;
  std::size_t pref_retained = 0;
  for (const auto& p : ws) {
    const auto r = weak_row(weak, p);
    bool other = false;
    for (std::size_t c = 0; c < weak.cols(); ++c) other = other || (c != *pref && weak.at(r, c));
    if (other) {
      keep.insert(p);
      pref_retained += weak.at(r, *pref) ? 1 : 0;
    } else if (weak.at(r, *pref)) {
      pref_only.push_back(p);
    }
  }
  const std::size_t want = target > pref_retained ? target - pref_retained : 0;
  Rng rng(seed);
  for (auto i : rng.sample_indices(pref_only.size(), std::min(want, pref_only.size()))) {
    keep.insert(pref_only[i]);
  }
  return in_input_order(ws, keep);
}

FoldPlan make_folds(const std::vector<std::string>& pmids, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > pmids.size()) {
    throw ValidationError("fold-count", "k=" + std::to_string(k) + " must be in [2, " +
                                            std::to_string(pmids.size()) + "]");
  }
  std::vector<std::string> order = pmids;
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(order));
  FoldPlan plan;
  plan.k = k;
  const std::size_t base = order.size() / k;
  const std::size_t extra = order.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    plan.folds.emplace_back(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }
  return plan;
}

std::vector<std::string> load_pmid_list(const std::filesystem::path& path) {
  std::vector<std::string> out;
  for (const auto& line : read_lines(path)) {
    auto t = text::trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

void save_pmid_list(const std::vector<std::string>& pmids, const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : pmids) out += p + "\n";
  write_file_atomic(path, out);
}

}  // namespace wsindex
