#include "wsindex/synth.hpp"

#include <set>

#include "wsindex/error.hpp"
#include "wsindex/rng.hpp"
#include "wsindex/text.hpp"

namespace wsindex {

namespace {

constexpr std::size_t kSignatureWords = 12;
constexpr std::size_t kSignatureDraws = 3;
constexpr double kTopMentionRate = 0.8;
constexpr double kSignatureLeakRate = 0.15;
// Bare mentions of the shared head word ("alzheimer" on its own).
constexpr double kHeadMentionRate = 0.3;

// Pronounceable pseudo-words, unique across the whole generated vocabulary.
class WordMaker {
 public:
  explicit WordMaker(Rng& rng, std::set<std::string> taken) : rng_(rng), taken_(std::move(taken)) {}

  std::string make() {
    static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                    "s", "t", "v", "z", "br", "cl", "dr", "gr", "st", "tr"};
    static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "eo", "ou"};
    for (;;) {
      std::string w;
      const std::size_t syllables = 2 + rng_.below(2);
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng_.below(std::size(kOnsets))];
        w += kVowels[rng_.below(std::size(kVowels))];
      }
      if (rng_.bernoulli(0.5)) w += kOnsets[rng_.below(14)];
      if (taken_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> taken_;
};

struct LabelVocab {
  std::vector<std::string> terms;
  std::vector<std::string> signature;
};

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  const std::size_t n_labels = spec.synonym_map.empty() ? spec.n_labels : spec.synonym_map.size();
  if (n_labels == 0) throw ValidationError("synthetic-labels", "at least one label is required");
  if (!(spec.miss_rate >= 0 && spec.miss_rate < 1) ||
      !(spec.spurious_rate >= 0 && spec.spurious_rate < 1)) {
    throw ValidationError("synthetic-noise", "noise rates must lie in [0, 1)");
  }
  if (spec.synonym_map.empty() && spec.synonyms_per_label == 0) {
    throw ValidationError("synthetic-labels", "synonyms_per_label must be positive");
  }
  Rng rng(spec.seed);

  std::set<std::string> reserved;
  for (const auto& [id, terms] : spec.synonym_map) {
    if (terms.empty()) throw ValidationError("synthetic-labels", "label " + id + " has no terms");
    for (const auto& t : terms) {
      for (auto& tok : text::tokenize(t)) reserved.insert(tok);
    }
  }
  WordMaker words(rng, reserved);

  // Thesaurus: fine-grained labels first (the first is preferred), then the
  // broader top concept. Generated terms share a head word, like
  // "early onset alzheimer" and "familial alzheimer".
  Descriptor d;
  d.descriptor_id = "D900000";
  const std::string head = words.make();
  d.name = head;
  std::vector<LabelVocab> vocab(n_labels);
  for (std::size_t l = 0; l < n_labels; ++l) {
    Concept c;
    if (spec.synonym_map.empty()) {
      c.concept_id = "M90" + std::string(5 - std::to_string(l + 1).size(), '0') + std::to_string(l + 1);
      for (std::size_t s = 0; s < spec.synonyms_per_label; ++s) {
        vocab[l].terms.push_back(s == 0 && l == 0 ? head + " " + words.make()
                                                  : words.make() + " " + head);
      }
    } else {
      c.concept_id = spec.synonym_map[l].first;
      vocab[l].terms = spec.synonym_map[l].second;
    }
    c.name = vocab[l].terms.front();
    for (std::size_t s = 0; s < vocab[l].terms.size(); ++s) c.terms.push_back({vocab[l].terms[s], s == 0});
    c.relation = l == 0 ? Relation::Preferred : Relation::Narrower;
    d.concepts.push_back(std::move(c));
  }
  Concept top;
  top.concept_id = "M9099999";
  const std::string top_term = words.make() + " " + words.make();
  top.name = top_term;
  top.terms = {{top_term, true}};
  top.relation = Relation::Broader;
  d.concepts.push_back(top);
  d.preferred_concept_id = d.concepts[0].concept_id;
  d.top_concept_id = top.concept_id;
  d.validate();

  for (auto& v : vocab) {
    for (std::size_t i = 0; i < kSignatureWords; ++i) v.signature.push_back(words.make());
  }
  std::vector<std::string> background(spec.background_vocabulary);
  for (auto& w : background) w = words.make();

  std::vector<std::string> label_ids;
  for (std::size_t l = 0; l < n_labels; ++l) label_ids.push_back(d.concepts[l].concept_id);

  SyntheticData out;
  out.descriptor = d;
  out.corpus.descriptor_id = d.descriptor_id;
  std::vector<std::string> pmids;
  for (std::size_t i = 0; i < spec.n_articles; ++i) pmids.push_back(std::to_string(30000000 + i));
  out.golden = LabelMatrix(pmids, label_ids, LabelMatrix::Kind::Golden);

  const auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    return v[rng.below(v.size())];
  };
  for (std::size_t i = 0; i < spec.n_articles; ++i) {
    // Golden set: none (10%), one label (70%), or two labels (20%). The
    // preferred concept is drawn twice as often as the others.
    std::vector<bool> gold(n_labels, false);
    const double u = rng.uniform();
    const std::size_t count = u < 0.1 ? 0 : (u < 0.8 ? 1 : 2);
    for (std::size_t k = 0; k < std::min(count, n_labels); ++k) {
      for (;;) {
        const std::size_t draw = rng.below(n_labels + 1);
        const std::size_t l = draw == n_labels ? 0 : draw;
        if (!gold[l]) {
          gold[l] = true;
          break;
        }
      }
    }

    std::vector<std::string> units;
    for (std::size_t t = 0; t < spec.abstract_tokens; ++t) units.push_back(pick(background));
    std::string title_word = pick(background);
    for (std::size_t l = 0; l < n_labels; ++l) {
      out.golden.set(i, l, gold[l]);
      if (gold[l]) {
        if (!rng.bernoulli(spec.miss_rate)) units.push_back(pick(vocab[l].terms));
        for (std::size_t s = 0; s < kSignatureDraws; ++s) units.push_back(pick(vocab[l].signature));
        title_word = pick(vocab[l].signature);
      } else {
        if (rng.bernoulli(spec.spurious_rate)) units.push_back(pick(vocab[l].terms));
        if (rng.bernoulli(kSignatureLeakRate)) units.push_back(pick(vocab[l].signature));
      }
    }
    if (rng.bernoulli(kTopMentionRate)) units.push_back(top_term);
    if (spec.synonym_map.empty() && rng.bernoulli(kHeadMentionRate)) units.push_back(head);
    rng.shuffle(std::span(units));

    Article a;
    a.pmid = pmids[i];
    a.title = pick(background) + " " + title_word + " " + pick(background);
    // Capitalize the first letter and end with a period for realism.
    if (!a.title.empty()) a.title[0] = static_cast<char>(a.title[0] - 'a' + 'A');
    a.title += ".";
    for (std::size_t u2 = 0; u2 < units.size(); ++u2) {
      if (u2 > 0) a.abstract += (u2 % 12 == 0) ? ". " : " ";
      a.abstract += units[u2];
    }
    a.abstract += ".";
    a.descriptor_ids = {d.descriptor_id};
    out.corpus.articles.push_back(std::move(a));
  }
  return out;
}

}  // namespace wsindex
