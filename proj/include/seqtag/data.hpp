// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "seqtag/registry.hpp"
#include "seqtag/rng.hpp"

namespace seqtag {

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;  // aligned BIO tags
  std::string domain;
  std::string scheme_id;
};

enum class Split { train, dev, test };

struct Corpus {
  std::vector<Sentence> train;
  std::vector<Sentence> dev;
  std::vector<Sentence> test;

  std::map<std::string, std::size_t> per_domain_counts() const;
  std::vector<Sentence> of_domain(Split split, const std::string& domain) const;
  std::vector<Sentence> of_scheme(Split split, const std::string& scheme_id) const;
  const std::vector<Sentence>& split(Split s) const;
  std::vector<std::string> domain_names() const;  // first-seen order
};

// Whole-word vocabulary with reserved ids.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  static Tokenizer build(const std::vector<Sentence>& sentences);

  int id_of(const std::string& token) const;  // kUnk for unknown
  const std::string& token_of(int id) const;
  int vocab_size() const { return static_cast<int>(id_to_token_.size()); }

 private:
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct EncodedSentence {
  std::vector<int> ids;     // [CLS] + token ids, truncated to max_len
  std::vector<int> labels;  // aligned tag indices; [CLS] = ignore_index
};

constexpr int kIgnoreIndex = -100;

EncodedSentence encode(const Tokenizer& tok, const std::vector<std::string>& tokens,
                       const std::vector<int>& label_ids, int max_len);
std::vector<int> encode_tokens(const Tokenizer& tok,
                               const std::vector<std::string>& tokens, int max_len);
EncodedSentence encode_sentence(const Tokenizer& tok, const Sentence& s,
                                const LabelScheme& scheme, int max_len);

// ---- CoNLL ingestion ----

struct ParseResult {
  std::vector<Sentence> sentences;
  std::size_t bio_repairs = 0;  // dangling I-X rewritten to B-X
};

// token<TAB>tag lines, blank line between sentences.
ParseResult parse_conll(const std::string& text, const LabelScheme& scheme);
std::string to_conll(const std::vector<Sentence>& sentences);

// Repairs a tag sequence in place; returns the number of rewrites.
std::size_t repair_bio(std::vector<std::string>& labels);
bool is_valid_bio(const std::vector<std::string>& labels);

// ---- synthetic multi-domain generator ----

struct AmbiguousEntity {
  std::vector<std::string> surface;              // one or two tokens
  std::map<std::string, std::string> label_map;  // domain -> entity type
  std::map<std::string, double> weight;          // domain -> sampling weight
};

struct DomainSpec {
  std::string name;
  std::string scheme_id;
  int budget = 0;             // total sentences across splits
  int n_markers = 4;          // domain-unique filler words
  double marker_rate = 0.45;  // per-sentence probability of a marker token
};

struct SyntheticSpec {
  std::vector<DomainSpec> domains;
  std::vector<AmbiguousEntity> ambiguous_entities;
  double ambiguity_rate = 0.3;  // per-sentence probability of an ambiguous mention
  int vocab_size = 700;         // shared context words
  std::uint64_t seed = 1;
  double dev_fraction = 0.1;
  double test_fraction = 0.1;

  void validate() const;
};

// The built-in label schemes: a 21-tag scheme for the formal/informal pair
// and a 9-tag scheme (incl. MISC) for the ten skewed domains.
LabelScheme scheme_rich21();
LabelScheme scheme_compact9();

// The default desk-scale setup: 2 rich-scheme domains plus 10 skewed
// compact-scheme domains with cross-domain ambiguous entities.
SyntheticSpec default_desk_spec(std::uint64_t seed = 1);

Corpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace seqtag
