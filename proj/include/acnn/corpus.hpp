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
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "acnn/error.hpp"
#include "acnn/hash.hpp"
#include "acnn/random.hpp"

namespace acnn {

// ---------------------------------------------------------------------------
// Labels and demographics

enum class TriageClass : std::size_t {
  kUrgentCare = 0,
  kGeneralPractice = 1,
  kTelecare = 2,
};

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<TriageClass, kNumClasses> kAllClasses = {
    TriageClass::kUrgentCare, TriageClass::kGeneralPractice,
    TriageClass::kTelecare};

constexpr std::size_t ClassIndex(TriageClass c) {
  return static_cast<std::size_t>(c);
}

constexpr std::string_view ClassName(TriageClass c) {
  switch (c) {
    case TriageClass::kUrgentCare: return "UrgentCare";
    case TriageClass::kGeneralPractice: return "GeneralPractice";
    case TriageClass::kTelecare: return "Telecare";
  }
  return "?";
}

inline TriageClass ParseClass(std::string_view name) {
  std::string lower;
  for (char ch : name) {
    if (ch != '_' && ch != '-' && ch != ' ')
      lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  if (lower == "urgentcare" || lower == "urgent" || lower == "0") return TriageClass::kUrgentCare;
  if (lower == "generalpractice" || lower == "gp" || lower == "1") return TriageClass::kGeneralPractice;
  if (lower == "telecare" || lower == "2") return TriageClass::kTelecare;
  Fail(ErrorCode::kSpec, "unknown class '" + std::string(name) + "'");
}

enum class Gender { kMale, kFemale };

enum class DatasetMode { kSymptoms, kFulltext };

inline constexpr std::string_view ModeName(DatasetMode mode) {
  return mode == DatasetMode::kSymptoms ? "symptoms" : "fulltext";
}

inline DatasetMode ParseMode(std::string_view name) {
  if (name == "symptoms") return DatasetMode::kSymptoms;
  if (name == "fulltext" || name == "full-text") return DatasetMode::kFulltext;
  Fail(ErrorCode::kSpec, "unknown dataset mode '" + std::string(name) + "'");
}

inline constexpr int kMaxAge = 110;

struct CaseRecord {
  std::vector<std::string> tokens;
  TriageClass label = TriageClass::kTelecare;
  int age = 0;
  Gender gender = Gender::kMale;
  // Token positions of planted red flags and of members of complete
  // red-flag pairs. Empty for external data.
  std::vector<std::size_t> planted_flags;

  void Validate() const {
    Require(!tokens.empty(), ErrorCode::kSpec, "case record without tokens");
    Require(age >= 0 && age <= kMaxAge, ErrorCode::kSpec,
            "age " + std::to_string(age) + " outside 0..110");
    for (std::size_t idx : planted_flags)
      Require(idx < tokens.size(), ErrorCode::kSpec,
              "planted flag index " + std::to_string(idx) + " out of range");
  }

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

// ---------------------------------------------------------------------------
// Generator

struct LengthRange {
  std::size_t min = 1;
  double mean = 1.0;
  std::size_t max = 1;
};

// Token inventory of the synthetic domain, split into disjoint strata.
struct Lexicon {
  std::vector<std::string> red_flags;
  std::vector<std::pair<std::string, std::string>> red_flag_pairs;
  std::vector<std::string> moderate;
  std::vector<std::string> benign;  // includes negated moderate symptoms
  std::vector<std::string> filler;
  std::vector<std::string> stopwords;
};

inline std::string NumberedToken(std::string_view prefix, std::size_t i,
                                 int width = 3) {
  std::string digits = std::to_string(i);
  while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
  return std::string(prefix) + digits;
}

inline const std::vector<std::string>& DefaultStopwords() {
  static const std::vector<std::string> kStopwords = {
      "und", "der", "die", "das", "mit", "bei", "seit", "ist",
      "ein", "eine", "hat", "sich", "auf", "im", "zu", "von"};
  return kStopwords;
}

struct GeneratorSpec {
  std::size_t red_flag_singles = 10;
  std::size_t red_flag_pairs = 4;
  std::size_t moderate_symptoms = 120;
  std::size_t benign_symptoms = 130;
  std::size_t negated_symptoms = 32;
  std::size_t filler_words = 200;
  // Urgent Care, General Practice, Telecare.
  std::array<double, kNumClasses> proportions = {0.44, 0.17, 0.39};
  // Symptom-token counts per class (filler excluded).
  std::array<LengthRange, kNumClasses> lengths = {
      LengthRange{3, 7.0, 14}, LengthRange{3, 7.0, 14},
      LengthRange{3, 7.0, 14}};
  // Probability that a record receives one token from a stratum that does
  // not match its label.
  double p_noise = 0.0;
  // Probability that a label is replaced by a different class.
  double label_noise = 0.0;
  DatasetMode mode = DatasetMode::kSymptoms;
  // Share of urgent records whose urgency comes from a red-flag pair alone.
  double pair_case_fraction = 0.3;
  // Probability that an urgent or general-practice record without a complete
  // pair carries a single pair member.
  double lone_pair_member_rate = 0.4;
  // Probability that a red-flag-driven urgent record has a second red flag.
  double second_flag_rate = 0.2;
  // Mean filler tokens inserted after each symptom in fulltext mode.
  double filler_per_symptom = 2.5;

  void Validate() const {
    auto check = [](bool ok, const std::string& what) {
      Require(ok, ErrorCode::kSpec, what);
    };
    check(red_flag_singles >= 2, "need at least two red-flag tokens");
    check(red_flag_pairs >= 1, "need at least one red-flag pair");
    check(moderate_symptoms >= 2, "need at least two moderate symptoms");
    check(benign_symptoms >= 2, "need at least two benign symptoms");
    check(negated_symptoms <= moderate_symptoms,
          "more negated symptoms than moderate symptoms");
    double total = 0.0;
    for (double p : proportions) {
      check(p >= 0.0, "negative class proportion");
      total += p;
    }
    check(std::abs(total - 1.0) < 1e-9, "class proportions must sum to 1");
    for (const LengthRange& r : lengths) {
      check(r.min >= 3 && r.min <= r.max, "length range needs 3 <= min <= max");
      check(r.mean >= static_cast<double>(r.min) &&
                r.mean <= static_cast<double>(r.max),
            "length mean outside [min, max]");
    }
    check(p_noise >= 0.0 && p_noise < 1.0, "p_noise must lie in [0,1)");
    check(label_noise >= 0.0 && label_noise < 1.0,
          "label noise must lie in [0,1)");
    for (double p : {pair_case_fraction, lone_pair_member_rate, second_flag_rate})
      check(p >= 0.0 && p <= 1.0, "rate outside [0,1]");
    check(filler_per_symptom >= 0.0, "negative filler rate");
    if (mode == DatasetMode::kFulltext)
      check(filler_words >= 1, "fulltext mode needs filler words");
  }

  Lexicon MakeLexicon() const {
    Lexicon lex;
    for (std::size_t i = 0; i < red_flag_singles; ++i)
      lex.red_flags.push_back(NumberedToken("rf_", i, 2));
    for (std::size_t i = 0; i < red_flag_pairs; ++i)
      lex.red_flag_pairs.emplace_back(NumberedToken("pr_", i, 2) + "a",
                                      NumberedToken("pr_", i, 2) + "b");
    for (std::size_t i = 0; i < moderate_symptoms; ++i)
      lex.moderate.push_back(NumberedToken("md_", i));
    for (std::size_t i = 0; i < benign_symptoms; ++i)
      lex.benign.push_back(NumberedToken("bn_", i));
    for (std::size_t i = 0; i < negated_symptoms; ++i)
      lex.benign.push_back("no_" + lex.moderate[i]);
    for (std::size_t i = 0; i < filler_words; ++i)
      lex.filler.push_back(NumberedToken("fw_", i));
    lex.stopwords = DefaultStopwords();
    return lex;
  }

  std::uint64_t Hash() const {
    Fnv1a h;
    h.Update(std::string_view("generator-spec-v1"));
    for (std::size_t v : {red_flag_singles, red_flag_pairs, moderate_symptoms,
                          benign_symptoms, negated_symptoms, filler_words})
      h.Update(static_cast<std::uint64_t>(v));
    for (double p : proportions) h.Update(p);
    for (const LengthRange& r : lengths) {
      h.Update(static_cast<std::uint64_t>(r.min));
      h.Update(r.mean);
      h.Update(static_cast<std::uint64_t>(r.max));
    }
    for (double v : {p_noise, label_noise, pair_case_fraction,
                     lone_pair_member_rate, second_flag_rate, filler_per_symptom})
      h.Update(v);
    h.Update(static_cast<std::uint64_t>(mode));
    return h.Digest();
  }
};

struct Corpus {
  std::vector<CaseRecord> records;
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  std::array<std::size_t, kNumClasses> ClassCounts() const {
    std::array<std::size_t, kNumClasses> counts{};
    for (const CaseRecord& r : records) ++counts[ClassIndex(r.label)];
    return counts;
  }

  // Content fingerprint over tokens, labels and demographics.
  std::uint64_t ContentHash() const {
    Fnv1a h;
    for (const CaseRecord& r : records) {
      h.Update(static_cast<std::uint64_t>(r.tokens.size()));
      for (const std::string& t : r.tokens) {
        h.Update(t);
        h.Update(std::uint64_t{0});
      }
      h.Update(static_cast<std::uint64_t>(r.label));
      h.Update(static_cast<std::uint64_t>(r.age));
      h.Update(static_cast<std::uint64_t>(r.gender));
    }
    return h.Digest();
  }
};

namespace detail {

// Exact per-class quotas by largest remainder.
inline std::array<std::size_t, kNumClasses> Quotas(
    std::size_t n, const std::array<double, kNumClasses>& proportions) {
  std::array<std::size_t, kNumClasses> counts{};
  std::array<double, kNumClasses> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double exact = proportions[c] * static_cast<double>(n);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - std::floor(exact);
    assigned += counts[c];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c)
      if (remainder[c] > remainder[best]) best = c;
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

inline std::size_t DrawLength(Rng& rng, const LengthRange& range) {
  if (range.max == range.min) return range.min;
  const std::size_t spread = range.max - range.min;
  const double q = (range.mean - static_cast<double>(range.min)) /
                   static_cast<double>(spread);
  std::size_t len = range.min;
  for (std::size_t i = 0; i < spread; ++i) len += rng.Bernoulli(q) ? 1 : 0;
  return len;
}

// Draws one token from a stratum that is not already used by the record.
inline const std::string& DrawFresh(Rng& rng,
                                    const std::vector<std::string>& stratum,
                                    std::set<std::string>& used) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::string& t = stratum[rng.Below(stratum.size())];
    if (used.insert(t).second) return t;
  }
  for (const std::string& t : stratum)
    if (used.insert(t).second) return t;
  return stratum[rng.Below(stratum.size())];
}

// A unit is one symptom or an adjacent red-flag pair.
using Unit = std::vector<std::string>;

inline CaseRecord ComposeRecord(Rng& rng, const GeneratorSpec& spec,
                                const Lexicon& lex, TriageClass label) {
  std::set<std::string> used;
  std::vector<Unit> units;
  const std::size_t target = DrawLength(rng, spec.lengths[ClassIndex(label)]);
  std::size_t symptom_count = 0;
  auto add = [&](const std::string& token) {
    units.push_back({token});
    ++symptom_count;
  };
  auto add_lone_member = [&] {
    const auto& pair = lex.red_flag_pairs[rng.Below(lex.red_flag_pairs.size())];
    if (used.count(pair.first) || used.count(pair.second)) return;
    const std::string& member = rng.Bernoulli(0.5) ? pair.first : pair.second;
    used.insert(member);
    add(member);
  };

  switch (label) {
    case TriageClass::kUrgentCare: {
      if (rng.Bernoulli(spec.pair_case_fraction)) {
        const auto& pair = lex.red_flag_pairs[rng.Below(lex.red_flag_pairs.size())];
        used.insert(pair.first);
        used.insert(pair.second);
        units.push_back({pair.first, pair.second});
        symptom_count += 2;
      } else {
        add(DrawFresh(rng, lex.red_flags, used));
        if (rng.Bernoulli(spec.second_flag_rate))
          add(DrawFresh(rng, lex.red_flags, used));
        if (rng.Bernoulli(spec.lone_pair_member_rate)) add_lone_member();
      }
      while (symptom_count < target) {
        add(rng.Bernoulli(0.5) ? DrawFresh(rng, lex.moderate, used)
                               : DrawFresh(rng, lex.benign, used));
      }
      break;
    }
    case TriageClass::kGeneralPractice: {
      add(DrawFresh(rng, lex.moderate, used));
      if (rng.Bernoulli(spec.lone_pair_member_rate)) add_lone_member();
      while (symptom_count < target) {
        add(rng.Bernoulli(0.4) ? DrawFresh(rng, lex.moderate, used)
                               : DrawFresh(rng, lex.benign, used));
      }
      break;
    }
    case TriageClass::kTelecare: {
      while (symptom_count < target) add(DrawFresh(rng, lex.benign, used));
      break;
    }
  }

  // Contamination: a token from a stratum above the label's own.
  if (spec.p_noise > 0.0 && rng.Bernoulli(spec.p_noise)) {
    if (label == TriageClass::kTelecare && rng.Bernoulli(0.5)) {
      add(DrawFresh(rng, lex.moderate, used));
    } else if (label != TriageClass::kUrgentCare) {
      add(DrawFresh(rng, lex.red_flags, used));
    } else {
      add(DrawFresh(rng, lex.benign, used));
    }
  }

  rng.Shuffle(units);

  CaseRecord record;
  record.label = label;
  std::set<std::string> red(lex.red_flags.begin(), lex.red_flags.end());
  for (const Unit& unit : units) {
    const bool is_pair = unit.size() == 2;
    for (const std::string& token : unit) {
      if (is_pair || red.count(token)) record.planted_flags.push_back(record.tokens.size());
      record.tokens.push_back(token);
      if (spec.mode == DatasetMode::kFulltext && !is_pair) {
        // Filler follows each symptom unit, never splits a pair.
        const double q = spec.filler_per_symptom / (spec.filler_per_symptom + 1.0);
        while (rng.Bernoulli(q)) {
          record.tokens.push_back(rng.Bernoulli(0.4)
                                      ? lex.stopwords[rng.Below(lex.stopwords.size())]
                                      : lex.filler[rng.Below(lex.filler.size())]);
        }
      }
    }
    if (spec.mode == DatasetMode::kFulltext && is_pair) {
      const double q = spec.filler_per_symptom / (spec.filler_per_symptom + 1.0);
      while (rng.Bernoulli(q))
        record.tokens.push_back(lex.filler[rng.Below(lex.filler.size())]);
    }
  }
  record.age = static_cast<int>(rng.Below(91));
  record.gender = rng.Bernoulli(0.5) ? Gender::kMale : Gender::kFemale;
  return record;
}

}  // namespace detail

// Labels are assigned by exact quota and then shuffled, so class counts match
// the proportions up to rounding. Label noise is applied afterwards.
inline Corpus GenerateCorpus(const GeneratorSpec& spec, std::size_t n,
                             std::uint64_t seed) {
  spec.Validate();
  Require(n >= 1, ErrorCode::kSpec, "corpus size must be at least 1");
  const Lexicon lex = spec.MakeLexicon();
  Rng rng(DeriveSeed(seed, "corpus"));

  const auto quotas = detail::Quotas(n, spec.proportions);
  std::vector<TriageClass> labels;
  labels.reserve(n);
  for (std::size_t c = 0; c < kNumClasses; ++c)
    labels.insert(labels.end(), quotas[c], kAllClasses[c]);
  rng.Shuffle(labels);

  Corpus corpus;
  corpus.spec_hash = spec.Hash();
  corpus.seed = seed;
  corpus.records.reserve(n);
  for (TriageClass label : labels) {
    CaseRecord record = detail::ComposeRecord(rng, spec, lex, label);
    if (spec.label_noise > 0.0 && rng.Bernoulli(spec.label_noise)) {
      const std::size_t shift = 1 + rng.Below(kNumClasses - 1);
      record.label = kAllClasses[(ClassIndex(label) + shift) % kNumClasses];
    }
    corpus.records.push_back(std::move(record));
  }
  return corpus;
}

// Ground-truth labelling rule of the generator: a red flag or a complete
// pair means urgent; otherwise any moderate symptom means general practice.
inline TriageClass OracleLabel(const CaseRecord& record, const Lexicon& lex) {
  std::set<std::string> present(record.tokens.begin(), record.tokens.end());
  for (const std::string& t : lex.red_flags)
    if (present.count(t)) return TriageClass::kUrgentCare;
  for (const auto& [a, b] : lex.red_flag_pairs)
    if (present.count(a) && present.count(b)) return TriageClass::kUrgentCare;
  for (const std::string& t : lex.moderate)
    if (present.count(t)) return TriageClass::kGeneralPractice;
  return TriageClass::kTelecare;
}

// ---------------------------------------------------------------------------
// Tokenization and vocabulary

// Lowercases ASCII, splits on whitespace, strips leading and trailing
// punctuation. Inner punctuation ("37,4") is kept.
inline std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    std::size_t begin = 0, end = current.size();
    auto punct = [](char ch) {
      const auto u = static_cast<unsigned char>(ch);
      return u < 128 && std::ispunct(u);
    };
    while (begin < end && punct(current[begin])) ++begin;
    while (end > begin && punct(current[end - 1])) --end;
    if (end > begin) tokens.push_back(current.substr(begin, end - begin));
    current.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 128 && std::isspace(u)) {
      flush();
    } else {
      current.push_back(u < 128 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  flush();
  return tokens;
}

class Vocabulary {
 public:
  static constexpr std::size_t kPadding = 0;
  static constexpr std::size_t kUnknown = 1;
  static constexpr std::size_t kFirstWord = 2;

  Vocabulary() : id_to_token_{"<pad>", "<unk>"} {}

  explicit Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
    for (const std::string& w : words) Add(w);
  }

  std::size_t Id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnknown : it->second;
  }

  bool Contains(std::string_view token) const {
    return token_to_id_.count(std::string(token)) > 0;
  }

  const std::string& Token(std::size_t id) const {
    Require(id < id_to_token_.size(), ErrorCode::kIndex,
            "token id " + std::to_string(id) + " outside vocabulary");
    return id_to_token_[id];
  }

  // Number of ids including the two reserved ones.
  std::size_t size() const { return id_to_token_.size(); }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::uint64_t Hash() const {
    Fnv1a h;
    for (const std::string& t : id_to_token_) {
      h.Update(t);
      h.Update(std::uint64_t{0});
    }
    return h.Digest();
  }

 private:
  void Add(const std::string& word) {
    Require(!token_to_id_.count(word), ErrorCode::kSpec,
            "duplicate vocabulary token '" + word + "'");
    token_to_id_.emplace(word, id_to_token_.size());
    id_to_token_.push_back(word);
  }

  std::unordered_map<std::string, std::size_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Keeps tokens with count >= min_count that are not stop words. Ids are
// dense from 2, ordered by descending count then lexicographically.
inline Vocabulary BuildVocab(const Corpus& corpus, std::size_t min_count,
                             const std::vector<std::string>& stopwords = {}) {
  Require(min_count >= 1, ErrorCode::kSpec, "min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const CaseRecord& r : corpus.records)
    for (const std::string& t : r.tokens) ++counts[t];
  const std::set<std::string> stop(stopwords.begin(), stopwords.end());
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [token, count] : counts)
    if (count >= min_count && !stop.count(token)) kept.emplace_back(token, count);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [token, count] : kept) words.push_back(token);
  return Vocabulary(words);
}

inline constexpr std::size_t kDemographicsSize = 3;
using Demographics = std::array<double, kDemographicsSize>;

// [age / 110, male, female]
inline Demographics EncodeDemographics(int age, Gender gender) {
  return {static_cast<double>(age) / kMaxAge,
          gender == Gender::kMale ? 1.0 : 0.0,
          gender == Gender::kFemale ? 1.0 : 0.0};
}

struct EncodedCase {
  std::vector<std::size_t> ids;  // length max_len, right-padded with 0
  std::size_t length = 0;        // non-padding positions
  Demographics demographics{};
  TriageClass label = TriageClass::kTelecare;
};

inline EncodedCase Encode(const CaseRecord& record, const Vocabulary& vocab,
                          std::size_t max_len) {
  Require(max_len >= 1, ErrorCode::kSpec, "max_len must be at least 1");
  EncodedCase out;
  out.ids.assign(max_len, Vocabulary::kPadding);
  out.length = std::min(record.tokens.size(), max_len);
  for (std::size_t i = 0; i < out.length; ++i) out.ids[i] = vocab.Id(record.tokens[i]);
  out.demographics = EncodeDemographics(record.age, record.gender);
  out.label = record.label;
  return out;
}

// Tokens for non-reserved ids, in order.
inline std::vector<std::string> Decode(const EncodedCase& encoded,
                                       const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (std::size_t id : encoded.ids)
    if (id >= Vocabulary::kFirstWord) tokens.push_back(vocab.Token(id));
  return tokens;
}

inline std::vector<EncodedCase> EncodeAll(const Corpus& corpus,
                                          const Vocabulary& vocab,
                                          std::size_t max_len) {
  std::vector<EncodedCase> out;
  out.reserve(corpus.size());
  for (const CaseRecord& r : corpus.records) out.push_back(Encode(r, vocab, max_len));
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
  double train = 0.90;
  double validation = 0.05;
  double test = 0.05;
};

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

struct DatasetSplit {
  Corpus train, validation, test;
};

// Stratified by class. Per-class validation/test counts are floor(n_c * r)
// topped up by largest remainder until the global targets are met; indices
// inside each part are ascending.
inline SplitIndices SplitCorpusIndices(const Corpus& corpus,
                                       const SplitRatios& ratios,
                                       std::uint64_t seed) {
  Require(ratios.train >= 0 && ratios.validation >= 0 && ratios.test >= 0,
          ErrorCode::kSpec, "negative split ratio");
  Require(std::abs(ratios.train + ratios.validation + ratios.test - 1.0) < 1e-9,
          ErrorCode::kSpec, "split ratios must sum to 1");
  const std::size_t n = corpus.size();
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < n; ++i)
    by_class[ClassIndex(corpus.records[i].label)].push_back(i);

  Rng rng(DeriveSeed(seed, "split"));
  for (auto& members : by_class) rng.Shuffle(members);

  const std::array<double, 3> r = {ratios.validation, ratios.test, ratios.train};
  const auto global = detail::Quotas(n, {r[0], r[1], r[2]});
  // take[c][part] for part in {validation, test}
  std::array<std::array<std::size_t, 2>, kNumClasses> take{};
  for (std::size_t part = 0; part < 2; ++part) {
    std::size_t assigned = 0;
    std::array<double, kNumClasses> remainder{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double exact = r[part] * static_cast<double>(by_class[c].size());
      take[c][part] = static_cast<std::size_t>(std::floor(exact));
      remainder[c] = exact - std::floor(exact);
      assigned += take[c][part];
    }
    while (assigned < global[part]) {
      std::size_t best = kNumClasses;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (take[c][0] + take[c][1] >= by_class[c].size()) continue;
        if (best == kNumClasses || remainder[c] > remainder[best]) best = c;
      }
      if (best == kNumClasses) break;
      ++take[best][part];
      remainder[best] = -1.0;
      ++assigned;
    }
  }

  SplitIndices out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& members = by_class[c];
    const std::size_t nv = std::min(take[c][0], members.size());
    const std::size_t nt = std::min(take[c][1], members.size() - nv);
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i < nv) out.validation.push_back(members[i]);
      else if (i < nv + nt) out.test.push_back(members[i]);
      else out.train.push_back(members[i]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline Corpus Subset(const Corpus& corpus, const std::vector<std::size_t>& indices) {
  Corpus out;
  out.spec_hash = corpus.spec_hash;
  out.seed = corpus.seed;
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(corpus.records.at(i));
  return out;
}

inline DatasetSplit SplitCorpus(const Corpus& corpus, const SplitRatios& ratios,
                                std::uint64_t seed) {
  const SplitIndices idx = SplitCorpusIndices(corpus, ratios, seed);
  return {Subset(corpus, idx.train), Subset(corpus, idx.validation),
          Subset(corpus, idx.test)};
}

// ---------------------------------------------------------------------------
// JSON-lines serialization

inline nlohmann::json RecordToJson(const CaseRecord& r) {
  nlohmann::json j;
  j["tokens"] = r.tokens;
  j["label"] = std::string(ClassName(r.label));
  j["age"] = r.age;
  j["gender"] = r.gender == Gender::kMale ? "male" : "female";
  j["planted_flags"] = r.planted_flags;
  return j;
}

inline CaseRecord RecordFromJson(const nlohmann::json& j) {
  CaseRecord r;
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  const auto& label = j.at("label");
  r.label = label.is_number_integer()
                ? ParseClass(std::to_string(label.get<int>()))
                : ParseClass(label.get<std::string>());
  r.age = j.value("age", 0);
  const std::string gender = j.value("gender", std::string("male"));
  Require(gender == "male" || gender == "female", ErrorCode::kSpec,
          "gender must be 'male' or 'female', got '" + gender + "'");
  r.gender = gender == "male" ? Gender::kMale : Gender::kFemale;
  if (j.contains("planted_flags"))
    r.planted_flags = j.at("planted_flags").get<std::vector<std::size_t>>();
  r.Validate();
  return r;
}

inline void WriteCorpusJsonl(const Corpus& corpus, std::ostream& out) {
  for (const CaseRecord& r : corpus.records) out << RecordToJson(r).dump() << '\n';
}

inline void WriteCorpusJsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), ErrorCode::kIo, "cannot write " + path);
  WriteCorpusJsonl(corpus, out);
  Require(out.good(), ErrorCode::kIo, "write failed for " + path);
}

inline Corpus ReadCorpusJsonl(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      corpus.records.push_back(RecordFromJson(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kSpec, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      Fail(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

inline Corpus ReadCorpusJsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorCode::kIo, "cannot read " + path);
  return ReadCorpusJsonl(in);
}

}  // namespace acnn
