#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "protoem/common.hpp"
#include "protoem/taxonomy.hpp"

namespace protoem {

struct EventMention {
  std::string mention_id;
  int sent_idx = 0;
  int start = 0;  // half-open token interval [start, end)
  int end = 0;
  std::string event_id;  // groups coreferent mentions
};

// Gold labels per task, keyed by ordered (source, target) mention ids.
// Directional tasks carry the annotated direction; coreference is stored
// symmetrized onto both orders.
struct GoldRelations {
  std::array<std::map<std::pair<std::string, std::string>, std::string>, 4> by_task;

  const std::map<std::pair<std::string, std::string>, std::string>& task(Task t) const {
    return by_task[static_cast<std::size_t>(t)];
  }
  std::map<std::pair<std::string, std::string>, std::string>& task(Task t) {
    return by_task[static_cast<std::size_t>(t)];
  }
};

struct Document {
  std::string doc_id;
  std::vector<std::vector<std::string>> sentences;
  std::vector<EventMention> mentions;
  std::vector<EventMention> timex;
  GoldRelations gold;

  int word_count() const {
    int n = 0;
    for (const auto& s : sentences) n += static_cast<int>(s.size());
    return n;
  }
  // Flattened sentence-major word index.
  int global_index(int sent_idx, int token_idx) const {
    int n = 0;
    for (int s = 0; s < sent_idx; ++s) n += static_cast<int>(sentences[s].size());
    return n + token_idx;
  }
  const EventMention* find_mention(const std::string& id) const {
    for (const auto& m : mentions)
      if (m.mention_id == id) return &m;
    return nullptr;
  }
};

struct CorpusStats {
  std::size_t documents = 0;
  std::size_t mentions = 0;
  std::size_t timex = 0;
  std::array<std::size_t, 4> gold_entries = {0, 0, 0, 0};
  std::size_t skipped_relations = 0;   // endpoints not resolvable to event mentions
  std::size_t conflicting_relations = 0;  // same ordered pair, differing label (first wins)
};

struct Corpus {
  std::vector<Document> docs;
  std::size_t skipped_relations = 0;
  std::size_t conflicting_relations = 0;

  CorpusStats stats() const {
    CorpusStats st;
    st.documents = docs.size();
    st.skipped_relations = skipped_relations;
    st.conflicting_relations = conflicting_relations;
    for (const auto& d : docs) {
      st.mentions += d.mentions.size();
      st.timex += d.timex.size();
      for (Task t : kAllTasks)
        st.gold_entries[static_cast<std::size_t>(t)] += d.gold.task(t).size();
    }
    return st;
  }

  const Document* find(const std::string& doc_id) const {
    for (const auto& d : docs)
      if (d.doc_id == doc_id) return &d;
    return nullptr;
  }
};

// One ordered event-mention pair with its four task labels (indices within
// each task's label block; 0 is always None).
struct LabeledPair {
  std::string src;
  std::string dst;
  std::array<int, 4> labels = {0, 0, 0, 0};

  int label(Task t) const { return labels[static_cast<std::size_t>(t)]; }
};

namespace detail {

inline void validate_mention(const Document& doc, const EventMention& m, const char* kind) {
  if (m.start >= m.end)
    throw DataError("document " + doc.doc_id + ": " + kind + " " + m.mention_id +
                    " has empty span");
  if (m.sent_idx < 0 || m.sent_idx >= static_cast<int>(doc.sentences.size()))
    throw DataError("document " + doc.doc_id + ": " + kind + " " + m.mention_id +
                    " sentence index out of range");
  if (m.end > static_cast<int>(doc.sentences[static_cast<std::size_t>(m.sent_idx)].size()))
    throw DataError("document " + doc.doc_id + ": " + kind + " " + m.mention_id +
                    " span exceeds sentence length");
}

// Resolves an annotation id to event-mention ids: a mention id maps to
// itself, an event id expands to all of its mentions; anything else
// (e.g. a TIMEX id) resolves to nothing.
struct IdResolver {
  std::unordered_map<std::string, std::vector<std::string>> table;

  explicit IdResolver(const Document& doc) {
    for (const auto& m : doc.mentions) {
      table[m.mention_id].push_back(m.mention_id);
      table[m.event_id].push_back(m.mention_id);
    }
  }
  const std::vector<std::string>* resolve(const std::string& id) const {
    auto it = table.find(id);
    return it == table.end() ? nullptr : &it->second;
  }
};

inline void add_gold(Document& doc, const IdResolver& resolver, const Taxonomy& tax, Task task,
                     const std::string& src, const std::string& dst, const std::string& raw_label,
                     std::size_t& skipped, std::size_t& conflicts) {
  auto canon = tax.canonical_label(task, raw_label);
  if (!canon)
    throw DataError("document " + doc.doc_id + ": unknown " + task_name(task) + " label '" +
                    raw_label + "'");
  const auto* src_ids = resolver.resolve(src);
  const auto* dst_ids = resolver.resolve(dst);
  if (src_ids == nullptr || dst_ids == nullptr) {
    ++skipped;
    return;
  }
  auto& gold = doc.gold.task(task);
  auto insert_pair = [&](const std::string& a, const std::string& b) {
    if (a == b) return;
    auto key = std::make_pair(a, b);
    auto it = gold.find(key);
    if (it != gold.end()) {
      if (it->second != *canon) ++conflicts;
      return;
    }
    gold.emplace(key, *canon);
  };
  for (const auto& a : *src_ids)
    for (const auto& b : *dst_ids) {
      insert_pair(a, b);
      if (task == Task::Coreference) insert_pair(b, a);
    }
}

inline EventMention parse_mention(const nlohmann::json& j, const std::string& event_id) {
  EventMention m;
  m.mention_id = j.at("id").get<std::string>();
  m.sent_idx = j.at("sent_id").get<int>();
  const auto& off = j.at("offset");
  m.start = off.at(0).get<int>();
  m.end = off.at(1).get<int>();
  m.event_id = event_id;
  return m;
}

inline Document parse_document(const nlohmann::json& j, const Taxonomy& tax,
                               std::size_t& skipped, std::size_t& conflicts) {
  Document doc;
  doc.doc_id = j.at("id").get<std::string>();
  for (const auto& sent : j.at("tokens"))
    doc.sentences.push_back(sent.get<std::vector<std::string>>());

  std::unordered_set<std::string> seen_mentions;
  for (const auto& ev : j.value("events", nlohmann::json::array())) {
    const std::string event_id = ev.at("id").get<std::string>();
    for (const auto& mj : ev.at("mention")) {
      EventMention m = parse_mention(mj, event_id);
      if (!seen_mentions.insert(m.mention_id).second)
        throw DataError("document " + doc.doc_id + ": duplicate mention id " + m.mention_id);
      validate_mention(doc, m, "mention");
      doc.mentions.push_back(std::move(m));
    }
  }
  for (const auto& tj : j.value("TIMEX", nlohmann::json::array())) {
    EventMention m;
    m.mention_id = tj.at("id").get<std::string>();
    m.event_id = m.mention_id;
    m.sent_idx = tj.at("sent_id").get<int>();
    const auto& off = tj.at("offset");
    m.start = off.at(0).get<int>();
    m.end = off.at(1).get<int>();
    validate_mention(doc, m, "TIMEX");
    doc.timex.push_back(std::move(m));
  }

  IdResolver resolver(doc);

  // Primary schema: "relations": { task: [[src, dst, label], ...] }.
  if (j.contains("relations")) {
    for (const auto& [key, entries] : j.at("relations").items()) {
      auto task = task_from_name(key);
      if (!task) throw DataError("document " + doc.doc_id + ": unknown task '" + key + "'");
      for (const auto& r : entries)
        add_gold(doc, resolver, tax, *task, r.at(0).get<std::string>(),
                 r.at(1).get<std::string>(), r.at(2).get<std::string>(), skipped, conflicts);
    }
  }

  // MAVEN-ERE native keys, accepted as aliases.
  if (j.contains("temporal_relations")) {
    for (const auto& [label, pairs] : j.at("temporal_relations").items())
      for (const auto& r : pairs)
        add_gold(doc, resolver, tax, Task::Temporal, r.at(0).get<std::string>(),
                 r.at(1).get<std::string>(), label, skipped, conflicts);
  }
  if (j.contains("causal_relations")) {
    for (const auto& [label, pairs] : j.at("causal_relations").items())
      for (const auto& r : pairs)
        add_gold(doc, resolver, tax, Task::Causal, r.at(0).get<std::string>(),
                 r.at(1).get<std::string>(), label, skipped, conflicts);
  }
  if (j.contains("subevent_relations")) {
    for (const auto& r : j.at("subevent_relations"))
      add_gold(doc, resolver, tax, Task::Subevent, r.at(0).get<std::string>(),
               r.at(1).get<std::string>(), "Subevent", skipped, conflicts);
  }
  // Event-cluster coreference: events listing several mentions.
  if (j.contains("coreference_relations")) {
    for (const auto& r : j.at("coreference_relations"))
      add_gold(doc, resolver, tax, Task::Coreference, r.at(0).get<std::string>(),
               r.at(1).get<std::string>(), "Coref", skipped, conflicts);
  }
  {
    std::unordered_map<std::string, std::vector<std::string>> clusters;
    for (const auto& m : doc.mentions) clusters[m.event_id].push_back(m.mention_id);
    for (const auto& [event_id, members] : clusters) {
      (void)event_id;
      for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b)
          add_gold(doc, resolver, tax, Task::Coreference, members[a], members[b], "Coref",
                   skipped, conflicts);
    }
  }
  return doc;
}

}  // namespace detail

// [OP] load_corpus: line-delimited JSON, one document per line.
inline Corpus load_corpus(const std::string& path, const Taxonomy& tax = Taxonomy()) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  Corpus corpus;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    Document doc;
    try {
      doc = detail::parse_document(j, tax, corpus.skipped_relations,
                                   corpus.conflicting_relations);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen_ids.insert(doc.doc_id).second)
      throw DataError(path + ":" + std::to_string(line_no) + ": duplicate doc_id " + doc.doc_id);
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

// [OP] enumerate_pairs: all ordered pairs over event mentions, each carrying
// its four task labels (None where no gold relation exists).
inline std::vector<LabeledPair> enumerate_pairs(const Document& doc,
                                                const Taxonomy& tax = Taxonomy()) {
  std::vector<LabeledPair> pairs;
  const std::size_t m = doc.mentions.size();
  if (m < 2) return pairs;
  pairs.reserve(m * (m - 1));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      LabeledPair p;
      p.src = doc.mentions[i].mention_id;
      p.dst = doc.mentions[j].mention_id;
      for (Task t : kAllTasks) {
        const auto& gold = doc.gold.task(t);
        auto it = gold.find(std::make_pair(p.src, p.dst));
        if (it != gold.end())
          p.labels[static_cast<std::size_t>(t)] = tax.label_index(t, it->second);
      }
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

// [OP] sample_low_resource: deterministic document-level subsample of
// ceil(fraction * |docs|) documents, original order preserved.
inline Corpus sample_low_resource(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ConfigError("sample_low_resource: fraction must be in (0, 1], got " +
                      std::to_string(fraction));
  const std::size_t n = corpus.docs.size();
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).child("low_resource_sample");
  rng.shuffle(order);
  order.resize(std::min(keep, n));
  std::sort(order.begin(), order.end());
  Corpus out;
  out.skipped_relations = corpus.skipped_relations;
  out.conflicting_relations = corpus.conflicting_relations;
  for (std::size_t i : order) out.docs.push_back(corpus.docs[i]);
  return out;
}

// A prototype example: the minimal contiguous sentence span covering both
// mentions, with the two event spans re-indexed into it.
struct Example {
  std::string doc_id;
  std::vector<std::string> text;
  int e1_start = 0, e1_end = 0;
  int e2_start = 0, e2_end = 0;
  int node = -1;  // taxonomy node this example illustrates
};

inline Example make_example(const Document& doc, const EventMention& src,
                            const EventMention& dst, int node) {
  Example ex;
  ex.doc_id = doc.doc_id;
  ex.node = node;
  const int s0 = std::min(src.sent_idx, dst.sent_idx);
  const int s1 = std::max(src.sent_idx, dst.sent_idx);
  for (int s = s0; s <= s1; ++s) {
    const auto& sent = doc.sentences[static_cast<std::size_t>(s)];
    ex.text.insert(ex.text.end(), sent.begin(), sent.end());
  }
  auto local = [&](const EventMention& m) {
    int off = 0;
    for (int s = s0; s < m.sent_idx; ++s)
      off += static_cast<int>(doc.sentences[static_cast<std::size_t>(s)].size());
    return std::make_pair(off + m.start, off + m.end);
  };
  std::tie(ex.e1_start, ex.e1_end) = local(src);
  std::tie(ex.e2_start, ex.e2_end) = local(dst);
  return ex;
}

// Trims example context (never the event spans) until at most max_words
// tokens remain; words farthest from the spans go first.
inline void cap_example(Example& ex, int max_words) {
  if (max_words <= 0) return;
  while (static_cast<int>(ex.text.size()) > max_words) {
    const int lo = std::min(ex.e1_start, ex.e2_start);
    const int hi = std::max(ex.e1_end, ex.e2_end);
    const int before = lo;
    const int after = static_cast<int>(ex.text.size()) - hi;
    if (before == 0 && after == 0) break;  // spans alone exceed the cap
    if (before >= after) {
      ex.text.erase(ex.text.begin());
      --ex.e1_start; --ex.e1_end; --ex.e2_start; --ex.e2_end;
    } else {
      ex.text.pop_back();
    }
  }
}

namespace detail {

struct GoldInstance {
  const Document* doc;
  const EventMention* src;
  const EventMention* dst;
  std::string key;  // lowercased trigger-word pair, for frequency ranking
};

inline std::string span_text_lower(const Document& doc, const EventMention& m) {
  std::string out;
  const auto& sent = doc.sentences[static_cast<std::size_t>(m.sent_idx)];
  for (int i = m.start; i < m.end; ++i) {
    if (!out.empty()) out.push_back(' ');
    for (char c : sent[static_cast<std::size_t>(i)])
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

inline std::vector<GoldInstance> gold_instances(const Corpus& corpus, const Taxonomy& tax,
                                                int node) {
  const Task task = tax.node_task(node);
  const std::string& label = tax.node_label(node);
  std::vector<GoldInstance> out;
  for (const auto& doc : corpus.docs) {
    for (const auto& [pair, l] : doc.gold.task(task)) {
      if (l != label) continue;
      const EventMention* src = doc.find_mention(pair.first);
      const EventMention* dst = doc.find_mention(pair.second);
      if (src == nullptr || dst == nullptr) continue;
      // Example spans must not overlap.
      if (src->sent_idx == dst->sent_idx && src->start < dst->end && dst->start < src->end)
        continue;
      GoldInstance gi{&doc, src, dst,
                      span_text_lower(doc, *src) + "\t" + span_text_lower(doc, *dst)};
      out.push_back(std::move(gi));
    }
  }
  // Stable base order for determinism.
  std::sort(out.begin(), out.end(), [](const GoldInstance& a, const GoldInstance& b) {
    return std::tie(a.doc->doc_id, a.src->mention_id, a.dst->mention_id) <
           std::tie(b.doc->doc_id, b.src->mention_id, b.dst->mention_id);
  });
  return out;
}

}  // namespace detail

enum class SelectionStrategy { TopK, Random };

inline SelectionStrategy selection_from_name(const std::string& s) {
  if (s == "topk") return SelectionStrategy::TopK;
  if (s == "random") return SelectionStrategy::Random;
  throw ConfigError("unknown selection strategy: " + s);
}

// [OP] select_examples. TopK ranks distinct trigger-word pairs by how often
// they carry the relation and keeps one example per pair (falling back to
// repeated pairs when fewer than K distinct ones exist); Random draws K gold
// instances with a seed-derived generator. None labels have no examples.
inline std::vector<Example> select_examples(const Corpus& corpus, const Taxonomy& tax, int node,
                                            int k, SelectionStrategy strategy,
                                            std::uint64_t seed, int max_words = 0) {
  if (k < 1) throw ConfigError("select_examples: K must be >= 1");
  if (tax.node_label(node) == "None")
    throw ConfigError("select_examples: '" + tax.node_name(node) +
                      "' takes no examples; use build_none_prototype");
  auto instances = detail::gold_instances(corpus, tax, node);
  std::vector<std::size_t> chosen;
  if (strategy == SelectionStrategy::Random) {
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(seed).child("select_examples/" + tax.node_name(node));
    rng.shuffle(order);
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(k)));
    chosen = std::move(order);
  } else {
    std::unordered_map<std::string, int> freq;
    for (const auto& gi : instances) ++freq[gi.key];
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return freq[instances[a].key] > freq[instances[b].key];
    });
    std::unordered_set<std::string> used;
    std::vector<std::size_t> dup;
    for (std::size_t i : order) {
      if (static_cast<int>(chosen.size()) >= k) break;
      if (used.insert(instances[i].key).second)
        chosen.push_back(i);
      else
        dup.push_back(i);
    }
    for (std::size_t i : dup) {
      if (static_cast<int>(chosen.size()) >= k) break;
      chosen.push_back(i);
    }
  }
  std::vector<Example> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) {
    const auto& gi = instances[i];
    Example ex = make_example(*gi.doc, *gi.src, *gi.dst, node);
    if (max_words > 0) cap_example(ex, max_words);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace protoem
