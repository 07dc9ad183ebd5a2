// SPDX-License-Identifier: Apache-2.0
#include "seqtag/data.hpp"

#include <algorithm>
#include <sstream>

namespace seqtag {

std::map<std::string, std::size_t> Corpus::per_domain_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto* part : {&train, &dev, &test}) {
    for (const auto& s : *part) ++counts[s.domain];
  }
  return counts;
}

const std::vector<Sentence>& Corpus::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::dev: return dev;
    default: return test;
  }
}

std::vector<Sentence> Corpus::of_domain(Split sp, const std::string& domain) const {
  std::vector<Sentence> out;
  for (const auto& s : split(sp)) {
    if (s.domain == domain) out.push_back(s);
  }
  return out;
}

std::vector<Sentence> Corpus::of_scheme(Split sp, const std::string& scheme_id) const {
  std::vector<Sentence> out;
  for (const auto& s : split(sp)) {
    if (s.scheme_id == scheme_id) out.push_back(s);
  }
  return out;
}

std::vector<std::string> Corpus::domain_names() const {
  std::vector<std::string> names;
  for (const auto* part : {&train, &dev, &test}) {
    for (const auto& s : *part) {
      if (std::find(names.begin(), names.end(), s.domain) == names.end()) {
        names.push_back(s.domain);
      }
    }
  }
  return names;
}

// ---- tokenizer ----

Tokenizer Tokenizer::build(const std::vector<Sentence>& sentences) {
  Tokenizer t;
  t.id_to_token_ = {"[PAD]", "[UNK]", "[CLS]"};
  for (std::size_t i = 0; i < t.id_to_token_.size(); ++i) {
    t.token_to_id_[t.id_to_token_[i]] = static_cast<int>(i);
  }
  for (const auto& s : sentences) {
    for (const auto& tok : s.tokens) {
      if (!t.token_to_id_.count(tok)) {
        t.token_to_id_[tok] = static_cast<int>(t.id_to_token_.size());
        t.id_to_token_.push_back(tok);
      }
    }
  }
  return t;
}

int Tokenizer::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw LookupError("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> encode_tokens(const Tokenizer& tok,
                               const std::vector<std::string>& tokens, int max_len) {
  std::vector<int> ids{Tokenizer::kCls};
  const std::size_t cap = static_cast<std::size_t>(max_len);
  for (const auto& t : tokens) {
    if (ids.size() >= cap) break;
    ids.push_back(tok.id_of(t));
  }
  return ids;
}

EncodedSentence encode(const Tokenizer& tok, const std::vector<std::string>& tokens,
                       const std::vector<int>& label_ids, int max_len) {
  EncodedSentence e;
  e.ids = encode_tokens(tok, tokens, max_len);
  e.labels.assign(e.ids.size(), kIgnoreIndex);
  for (std::size_t i = 1; i < e.ids.size(); ++i) e.labels[i] = label_ids[i - 1];
  return e;
}

EncodedSentence encode_sentence(const Tokenizer& tok, const Sentence& s,
                                const LabelScheme& scheme, int max_len) {
  std::vector<int> label_ids;
  label_ids.reserve(s.labels.size());
  for (const auto& l : s.labels) {
    const int idx = scheme.tag_index(l);
    if (idx < 0) {
      throw DataError("label '" + l + "' not in scheme '" + scheme.id + "'");
    }
    label_ids.push_back(idx);
  }
  return encode(tok, s.tokens, label_ids, max_len);
}

// ---- BIO handling ----

std::size_t repair_bio(std::vector<std::string>& labels) {
  std::size_t repairs = 0;
  std::string prev = "O";
  for (auto& l : labels) {
    if (l.rfind("I-", 0) == 0) {
      const std::string type = l.substr(2);
      const bool continues = (prev == "B-" + type || prev == "I-" + type);
      if (!continues) {
        l = "B-" + type;
        ++repairs;
      }
    }
    prev = l;
  }
  return repairs;
}

bool is_valid_bio(const std::vector<std::string>& labels) {
  std::vector<std::string> copy = labels;
  return repair_bio(copy) == 0;
}

ParseResult parse_conll(const std::string& text, const LabelScheme& scheme) {
  scheme.validate();
  ParseResult res;
  Sentence cur;
  cur.scheme_id = scheme.id;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&]() {
    if (!cur.tokens.empty()) {
      res.bio_repairs += repair_bio(cur.labels);
      res.sentences.push_back(cur);
      cur.tokens.clear();
      cur.labels.clear();
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError("line " + std::to_string(lineno) + ": expected token<TAB>tag");
    }
    const std::string token = line.substr(0, tab);
    const std::string tag = line.substr(tab + 1);
    if (scheme.tag_index(tag) < 0) {
      throw ParseError("line " + std::to_string(lineno) + ": tag '" + tag +
                       "' not in scheme '" + scheme.id + "'");
    }
    cur.tokens.push_back(token);
    cur.labels.push_back(tag);
  }
  flush();
  return res;
}

std::string to_conll(const std::vector<Sentence>& sentences) {
  std::ostringstream os;
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      os << s.tokens[i] << '\t' << s.labels[i] << '\n';
    }
    os << '\n';
  }
  return os.str();
}

// ---- schemes ----

namespace {

std::vector<std::string> bio_tags(const std::vector<std::string>& types) {
  std::vector<std::string> tags{"O"};
  for (const auto& t : types) {
    tags.push_back("B-" + t);
    tags.push_back("I-" + t);
  }
  return tags;
}

}  // namespace

LabelScheme scheme_rich21() {
  LabelScheme s;
  s.id = "rich21";
  s.tags = bio_tags({"PER", "ORG", "LOC", "DAT", "TIM", "MON", "PCT", "FAC", "EVE", "PRO"});
  return s;
}

LabelScheme scheme_compact9() {
  LabelScheme s;
  s.id = "compact9";
  s.tags = bio_tags({"PER", "ORG", "LOC", "MISC"});
  return s;
}

// ---- synthetic generator ----

void SyntheticSpec::validate() const {
  if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0) {
    throw ParamError("ambiguity_rate must lie in [0,1]");
  }
  if (domains.empty()) throw ParamError("synthetic spec needs at least one domain");
  if (dev_fraction < 0.0 || test_fraction < 0.0 ||
      dev_fraction + test_fraction >= 1.0) {
    throw ParamError("dev/test fractions must be >= 0 and sum below 1");
  }
  if (vocab_size < 1) throw ParamError("vocab_size must be >= 1");
  for (const auto& d : domains) {
    if (d.budget <= 0) throw ParamError("domain '" + d.name + "' budget must be > 0");
  }
  for (const auto& e : ambiguous_entities) {
    std::vector<std::string> distinct;
    for (const auto& [dom, label] : e.label_map) {
      if (std::find(distinct.begin(), distinct.end(), label) == distinct.end()) {
        distinct.push_back(label);
      }
    }
    if (distinct.size() < 2) {
      throw ParamError("ambiguous entity '" + e.surface.front() +
                       "' needs >=2 distinct labels across domains");
    }
  }
}

SyntheticSpec default_desk_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;

  const std::string rich = scheme_rich21().id;
  const std::string compact = scheme_compact9().id;

  spec.domains = {
      {"formal", rich, 800},   {"informal", rich, 800},
      // skewed ten, mirroring a heavy-tailed multi-domain corpus
      {"acad", compact, 240},  {"fun", compact, 290},  {"art", compact, 350},
      {"game", compact, 430},  {"med", compact, 560},  {"it", compact, 700},
      {"sport", compact, 1000},{"travel", compact, 1300},
      {"econ", compact, 1700}, {"news", compact, 2000},
  };

  // The flagship context-flip entity: an organization in political and
  // economic contexts, a location in travel.
  AmbiguousEntity us;
  us.surface = {"united", "states"};
  us.label_map = {{"econ", "ORG"}, {"news", "ORG"}, {"it", "ORG"}, {"travel", "LOC"}};
  us.weight = {{"econ", 1.0}, {"news", 1.0}, {"it", 1.0}, {"travel", 1.0}};
  spec.ambiguous_entities.push_back(us);

  // Every compact domain owns one conflicting surface: its local reading is
  // PER while every other compact domain reads it as ORG, so the pooled
  // majority always disagrees with the owner. Owner sampling weights fall
  // with domain size, concentrating a pooled model's deficit in the small
  // domains.
  const std::vector<std::string> compact_domains = {"acad", "fun",   "art",  "game",
                                                    "med",  "it",    "sport","travel",
                                                    "econ", "news"};
  const std::vector<double> owner_weight = {30.0, 22.0, 16.0, 11.0, 8.0,
                                            6.0,  4.5,  3.2,  2.2,  1.6};
  for (std::size_t i = 0; i < compact_domains.size(); ++i) {
    AmbiguousEntity e;
    const std::string& owner = compact_domains[i];
    e.surface = {"amb_" + owner};
    for (const auto& d : compact_domains) {
      e.label_map[d] = (d == owner) ? "PER" : "ORG";
      e.weight[d] = (d == owner) ? owner_weight[i] : 1.0;
    }
    spec.ambiguous_entities.push_back(e);
  }

  // Conflicting pair for the rich-scheme couple, one minority reading each.
  AmbiguousEntity tesla;
  tesla.surface = {"tesla"};
  tesla.label_map = {{"formal", "PER"}, {"informal", "ORG"}};
  tesla.weight = {{"formal", 1.0}, {"informal", 2.5}};
  spec.ambiguous_entities.push_back(tesla);
  AmbiguousEntity apple;
  apple.surface = {"apple"};
  apple.label_map = {{"formal", "ORG"}, {"informal", "PER"}};
  apple.weight = {{"formal", 2.5}, {"informal", 1.0}};
  spec.ambiguous_entities.push_back(apple);

  return spec;
}

namespace {

struct DomainPools {
  // (surface tokens, entity type) drawn when a sentence takes an entity
  std::vector<std::pair<std::vector<std::string>, std::string>> unambiguous;
  std::vector<const AmbiguousEntity*> ambiguous;
  std::vector<double> ambiguous_weights;
  std::vector<std::string> markers;
};

}  // namespace

Corpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  std::vector<std::string> context;
  context.reserve(static_cast<std::size_t>(spec.vocab_size));
  for (int i = 0; i < spec.vocab_size; ++i) context.push_back("w" + std::to_string(i));

  const std::map<std::string, LabelScheme> schemes = {
      {scheme_rich21().id, scheme_rich21()},
      {scheme_compact9().id, scheme_compact9()}};

  std::map<std::string, DomainPools> pools;
  for (const auto& d : spec.domains) {
    DomainPools p;
    const LabelScheme& scheme = schemes.at(d.scheme_id);
    const auto types = scheme.entity_types();
    // Domain-unique unambiguous entities, a couple per entity type, some
    // two tokens long so I- tags occur.
    int idx = 0;
    for (const auto& type : types) {
      for (int k = 0; k < 2; ++k) {
        std::vector<std::string> surface{"ent_" + d.name + "_" + std::to_string(idx)};
        if (k == 1) surface.push_back("tail_" + d.name + "_" + std::to_string(idx));
        p.unambiguous.emplace_back(surface, type);
        ++idx;
      }
    }
    for (const auto& e : spec.ambiguous_entities) {
      auto it = e.label_map.find(d.name);
      if (it == e.label_map.end()) continue;
      p.ambiguous.push_back(&e);
      p.ambiguous_weights.push_back(e.weight.count(d.name) ? e.weight.at(d.name) : 1.0);
    }
    for (int m = 0; m < d.n_markers; ++m) {
      p.markers.push_back("m_" + d.name + "_" + std::to_string(m));
    }
    pools.emplace(d.name, std::move(p));
  }

  Corpus corpus;
  for (std::size_t di = 0; di < spec.domains.size(); ++di) {
    const auto& d = spec.domains[di];
    const DomainPools& p = pools.at(d.name);
    Rng drng = Rng(spec.seed ^ std::hash<std::string>{}(d.name));
    // Each domain prefers its own slice of the shared vocabulary, the way
    // text genres skew their word distributions. Slices are disjoint, but
    // any single word is still weak evidence because every slice is also
    // sampled by every other domain through the uniform component.
    const std::size_t n_dom = spec.domains.size();
    const int window =
        std::max(1, spec.vocab_size / static_cast<int>(n_dom));
    // Stride the window starts by a unit coprime to the domain count so
    // domains adjacent in the list do not get neighboring slices.
    const std::size_t slot = (di * 5) % n_dom;
    const int window_start =
        static_cast<int>(slot * static_cast<std::size_t>(spec.vocab_size) / n_dom);
    std::vector<Sentence> sentences;
    for (int i = 0; i < d.budget; ++i) {
      Sentence s;
      s.domain = d.name;
      s.scheme_id = d.scheme_id;
      const bool take_ambiguous =
          !p.ambiguous.empty() && drng.bernoulli(spec.ambiguity_rate);
      const int n_ctx = static_cast<int>(drng.uniform_int(5, 9));
      for (int c = 0; c < n_ctx; ++c) {
        // Ambiguous mentions live in domain-anonymous sentences: their
        // context is drawn from the global distribution only, so nothing
        // at sentence level gives the reading away.
        int w;
        if (!take_ambiguous && drng.bernoulli(0.75)) {
          w = (window_start + static_cast<int>(drng.uniform_int(0, window - 1))) %
              spec.vocab_size;
        } else {
          w = static_cast<int>(drng.uniform_int(0, spec.vocab_size - 1));
        }
        s.tokens.push_back(context[static_cast<std::size_t>(w)]);
        s.labels.push_back("O");
      }
      const bool take_marker = drng.bernoulli(d.marker_rate);
      // Ambiguous mentions appear without a domain marker in the same
      // sentence: sentence-level context must not give the reading away.
      if (take_marker && !take_ambiguous) {
        const std::size_t m = static_cast<std::size_t>(
            drng.uniform_int(0, static_cast<std::int64_t>(p.markers.size()) - 1));
        const std::size_t pos = static_cast<std::size_t>(
            drng.uniform_int(0, static_cast<std::int64_t>(s.tokens.size())));
        s.tokens.insert(s.tokens.begin() + pos, p.markers[m]);
        s.labels.insert(s.labels.begin() + pos, "O");
      }
      std::vector<std::string> ent_surface;
      std::string ent_type;
      if (take_ambiguous) {
        double total = 0.0;
        for (double w : p.ambiguous_weights) total += w;
        double pick = drng.uniform(0.0, total);
        std::size_t j = 0;
        for (; j + 1 < p.ambiguous.size(); ++j) {
          pick -= p.ambiguous_weights[j];
          if (pick <= 0.0) break;
        }
        ent_surface = p.ambiguous[j]->surface;
        ent_type = p.ambiguous[j]->label_map.at(d.name);
      } else if (drng.bernoulli(0.8)) {
        const auto& u = p.unambiguous[static_cast<std::size_t>(drng.uniform_int(
            0, static_cast<std::int64_t>(p.unambiguous.size()) - 1))];
        ent_surface = u.first;
        ent_type = u.second;
      }
      if (!ent_surface.empty()) {
        const std::size_t pos = static_cast<std::size_t>(
            drng.uniform_int(0, static_cast<std::int64_t>(s.tokens.size())));
        for (std::size_t t = 0; t < ent_surface.size(); ++t) {
          s.tokens.insert(s.tokens.begin() + pos + t, ent_surface[t]);
          s.labels.insert(s.labels.begin() + pos + t,
                          (t == 0 ? "B-" : "I-") + ent_type);
        }
      }
      sentences.push_back(std::move(s));
    }
    // deterministic split: dev/test fractions off the tail after shuffle
    drng.shuffle(sentences);
    const std::size_t n = sentences.size();
    const std::size_t n_dev = std::max<std::size_t>(
        1, static_cast<std::size_t>(spec.dev_fraction * static_cast<double>(n)));
    const std::size_t n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(spec.test_fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n - n_dev - n_test) corpus.train.push_back(sentences[i]);
      else if (i < n - n_test) corpus.dev.push_back(sentences[i]);
      else corpus.test.push_back(sentences[i]);
    }
  }
  return corpus;
}

}  // namespace seqtag
