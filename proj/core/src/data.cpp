#include "spft/data.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <set>

#include "nlohmann/json.hpp"
#include "spft/io.hpp"
#include "spft/rng.hpp"

namespace spft {

namespace {

using nlohmann::json;

constexpr uint64_t kSignatureSeed = 0xac0057ab1eULL;  // project-wide, never configurable

const std::vector<std::string> kSyllables = {
    "ba", "be", "bo", "da", "de", "do", "ka", "ke", "ko", "la", "le", "lo",
    "ma", "mi", "mo", "na", "ne", "no", "ra", "re", "ro", "sa", "se", "so",
    "ta", "te", "to", "va", "vi", "vo", "za", "zo", "zu", "ki", "ku", "shi"};

struct Template {
  std::string pattern;  // "{}" marks the entity slot, at most one per pattern
  std::string category; // chatbot entity category, empty for music/source
};

const std::vector<std::string> kSourcePhrases = {
    "turn it up",
    "turn it down",
    "call me later",
    "call mom now",
    "what time is it",
    "set an alarm for {num} {ampm}",
    "remind me to {chore}",
    "turn {onoff} the {device}",
    "what's the weather {day}",
    "take me {place}",
    "volume {updown} please",
    "open the {portal}",
    "read my messages",
    "how far is the {venue}",
    "cancel my {item}",
    "start a timer for {num} minutes",
    "is it going to rain {day}",
    "add milk to the shopping list",
    "when is my next meeting",
    "lock the front door",
};

const std::map<std::string, std::vector<std::string>> kSourceSlots = {
    {"num", {"3", "5", "7", "9", "10", "15"}},
    {"ampm", {"am", "pm"}},
    {"chore", {"check the mail", "water the plants", "walk the dog", "buy groceries"}},
    {"onoff", {"on", "off"}},
    {"device", {"lights", "fan", "heater", "tv"}},
    {"day", {"today", "tomorrow", "tonight"}},
    {"place", {"home", "to work", "downtown"}},
    {"updown", {"up", "down"}},
    {"portal", {"door", "window", "garage"}},
    {"venue", {"store", "airport", "station"}},
    {"item", {"alarm", "meeting", "order"}},
};

const std::vector<Template> kMusicTemplates = {
    {"play {}", ""},
    {"play {} now", ""},
    {"play some {}", ""},
    {"put on {}", ""},
    {"i want to hear {}", ""},
    {"play the song {}", ""},
    {"add {} to my playlist", ""},
    {"skip this and play {}", ""},
    {"shuffle songs by {}", ""},
    {"play {} on repeat", ""},
};

const std::vector<Template> kChatbotTemplates = {
    {"what does {} do", "org"},
    {"who founded {}", "org"},
    {"is {} hiring", "org"},
    {"tell me about {}", "org"},
    {"where is {} located", "org"},
    {"how do i install {}", "tech"},
    {"what is {} used for", "tech"},
    {"is {} open source", "tech"},
    {"how do i update {}", "tech"},
    {"does {} work offline", "tech"},
    {"how do you cook {}", "food"},
    {"is {} healthy", "food"},
    {"where can i buy {}", "food"},
    {"what goes well with {}", "food"},
    {"how many calories in {}", "food"},
};

std::string make_entity_word(Rng& rng) {
  int64_t syllables = rng.uniform_int(2, 3);
  std::string word;
  for (int64_t s = 0; s < syllables; ++s) {
    word += kSyllables[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(kSyllables.size()) - 1))];
  }
  return word;
}

std::vector<std::string> make_lexicon(uint64_t seed, int64_t count,
                                      const std::set<std::string>& exclude) {
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (static_cast<int64_t>(out.size()) < count) {
    int64_t words = rng.uniform_int(1, 3);
    std::string entity;
    for (int64_t w = 0; w < words; ++w) {
      if (w) entity += ' ';
      entity += make_entity_word(rng);
    }
    if (seen.count(entity) || exclude.count(entity)) continue;
    seen.insert(entity);
    out.push_back(entity);
  }
  return out;
}

std::string fill_source_slots(const std::string& pattern, Rng& rng) {
  std::string out;
  size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      size_t close = pattern.find('}', i);
      std::string key = pattern.substr(i + 1, close - i - 1);
      const auto& options = kSourceSlots.at(key);
      out += options[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(options.size()) - 1))];
      i = close + 1;
    } else {
      out += pattern[i++];
    }
  }
  return out;
}

Utterance make_source_utterance(Rng& rng) {
  Utterance u;
  u.domain = "source";
  const std::string& pattern =
      kSourcePhrases[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(kSourcePhrases.size()) - 1))];
  u.text = fill_source_slots(pattern, rng);
  return u;
}

Utterance make_target_utterance(const std::string& domain, const std::vector<Template>& templates,
                                const std::map<std::string, std::vector<std::string>>& lexicons,
                                Rng& rng) {
  Utterance u;
  u.domain = domain;
  const Template& tpl =
      templates[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(templates.size()) - 1))];
  const auto& lex = lexicons.at(tpl.category);
  if (lex.empty()) throw_config("gen_corpora: empty entity lexicon for category '" + tpl.category + "'");
  const std::string& entity =
      lex[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(lex.size()) - 1))];
  size_t slot = tpl.pattern.find("{}");
  u.text = tpl.pattern.substr(0, slot) + entity + tpl.pattern.substr(slot + 2);
  EntitySpan span;
  span.start = static_cast<int64_t>(slot);
  span.end = static_cast<int64_t>(slot + entity.size());
  span.surface = entity;
  u.entities.push_back(span);
  return u;
}

void attach_audio(Utterance& u, uint64_t seed, const DataConfig& cfg) {
  u.frames = synth_audio(u.text, seed, cfg.noise_sigma, cfg.max_dup, cfg.frame_dim);
}

Corpus make_split(const DataConfig& cfg, const std::string& split_name, int64_t count, bool paired,
                  const std::function<Utterance(Rng&)>& factory) {
  Corpus corpus;
  uint64_t split_seed = mix_seed(cfg.seed, std::hash<std::string>{}(split_name));
  for (int64_t i = 0; i < count; ++i) {
    uint64_t u_seed = mix_seed(split_seed, static_cast<uint64_t>(i));
    Rng rng(u_seed);
    Utterance u = factory(rng);
    if (paired) attach_audio(u, mix_seed(u_seed, 0xa0d10), cfg);
    corpus.items.push_back(std::move(u));
  }
  return corpus;
}

std::map<std::string, std::vector<std::string>> category_lexicons(
    const std::string& domain, const std::vector<std::string>& entities) {
  // music: one unlabeled pool; chatbot: round-robin org/tech/food pools
  std::map<std::string, std::vector<std::string>> out;
  if (domain == "music") {
    out[""] = entities;
  } else {
    const char* cats[3] = {"org", "tech", "food"};
    for (size_t i = 0; i < entities.size(); ++i) out[cats[i % 3]].push_back(entities[i]);
  }
  return out;
}

}  // namespace

bool Corpus::paired() const {
  for (const auto& u : items)
    if (!u.frames.has_value()) return false;
  return !items.empty();
}

const DomainData& DataSet::target(const std::string& domain) const {
  for (const auto& d : targets)
    if (d.domain == domain) return d;
  throw_contract("DataSet: no target domain named " + domain);
}

AcousticSignatureTable::AcousticSignatureTable(int64_t frame_dim) : frame_dim_(frame_dim) {
  Tokenizer tok;
  const std::string& alphabet = tok.alphabet();
  for (size_t i = 0; i < alphabet.size(); ++i) {
    Rng rng(mix_seed(kSignatureSeed, mix_seed(static_cast<uint64_t>(frame_dim),
                                              static_cast<uint64_t>(alphabet[i]))));
    std::vector<double> sig(static_cast<size_t>(frame_dim));
    for (double& v : sig) v = rng.gaussian();
    table_[alphabet[i]] = std::move(sig);
  }
}

const std::vector<double>& AcousticSignatureTable::signature(char c) const {
  auto it = table_.find(c);
  if (it == table_.end()) throw_data(std::string("signature_table: character '") + c + "' outside the alphabet");
  return it->second;
}

const AcousticSignatureTable& signature_table(int64_t frame_dim) {
  static std::mutex mu;
  static std::map<int64_t, AcousticSignatureTable> tables;
  std::lock_guard<std::mutex> lock(mu);
  auto it = tables.find(frame_dim);
  if (it == tables.end()) it = tables.emplace(frame_dim, AcousticSignatureTable(frame_dim)).first;
  return it->second;
}

FrameMatrix synth_audio(const std::string& text, uint64_t seed, double noise_sigma, int64_t max_dup,
                        int64_t frame_dim) {
  if (text.empty()) throw_data("synth_audio: empty text");
  if (max_dup < 1) throw_config("synth_audio: max_dup must be >= 1");
  const AcousticSignatureTable& table = signature_table(frame_dim);
  Rng rng(seed);
  FrameMatrix frames;
  frames.cols = frame_dim;
  for (char c : text) {
    const std::vector<double>& sig = table.signature(c);
    int64_t dup = rng.uniform_int(1, max_dup);
    for (int64_t r = 0; r < dup; ++r) {
      for (int64_t j = 0; j < frame_dim; ++j) {
        frames.values.push_back(sig[static_cast<size_t>(j)] + noise_sigma * rng.gaussian());
      }
      ++frames.rows;
    }
  }
  return frames;
}

DataSet gen_corpora(const DataConfig& config) {
  if (config.source_train < 1 || config.target_text < 1 || config.target_test < 1) {
    throw_config("gen_corpora: split sizes must be positive");
  }
  if (config.lexicon_size < 1) throw_config("gen_corpora: empty entity lexicon");
  if (config.test_entity_overlap < 0.0 || config.test_entity_overlap > 1.0) {
    throw_config("gen_corpora: test_entity_overlap must lie in [0,1]");
  }

  DataSet ds;
  ds.config = config;
  ds.source_train = make_split(config, "source_train", config.source_train, true, make_source_utterance);
  ds.source_test = make_split(config, "source_test", config.source_test, true, make_source_utterance);

  struct DomainPlan {
    std::string name;
    const std::vector<Template>* templates;
  };
  const std::vector<DomainPlan> plans = {{"music", &kMusicTemplates}, {"chatbot", &kChatbotTemplates}};

  for (const auto& plan : plans) {
    DomainData dd;
    dd.domain = plan.name;
    uint64_t lex_seed = mix_seed(config.seed, std::hash<std::string>{}("lexicon_" + plan.name));
    dd.train_entities = make_lexicon(lex_seed, config.lexicon_size, {});

    // Test entities: a configured share drawn from the train lexicon, the
    // rest fresh (default: full overlap).
    int64_t shared = static_cast<int64_t>(
        std::llround(config.test_entity_overlap * static_cast<double>(config.lexicon_size)));
    dd.test_entities.assign(dd.train_entities.begin(), dd.train_entities.begin() + shared);
    if (shared < config.lexicon_size) {
      std::set<std::string> exclude(dd.train_entities.begin(), dd.train_entities.end());
      auto fresh = make_lexicon(mix_seed(lex_seed, 17), config.lexicon_size - shared, exclude);
      dd.test_entities.insert(dd.test_entities.end(), fresh.begin(), fresh.end());
    }

    auto train_lex = category_lexicons(plan.name, dd.train_entities);
    auto test_lex = category_lexicons(plan.name, dd.test_entities);
    const auto& templates = *plan.templates;
    auto train_factory = [&](Rng& rng) {
      return make_target_utterance(plan.name, templates, train_lex, rng);
    };
    auto test_factory = [&](Rng& rng) {
      return make_target_utterance(plan.name, templates, test_lex, rng);
    };

    dd.text_only = make_split(config, plan.name + "_text", config.target_text, false, train_factory);
    dd.test = make_split(config, plan.name + "_test", config.target_test, true, test_factory);
    dd.dev = make_split(config, plan.name + "_dev", config.target_dev, true, test_factory);

    if (config.unseen_test > 0) {
      std::set<std::string> exclude(dd.train_entities.begin(), dd.train_entities.end());
      auto unseen = make_lexicon(mix_seed(lex_seed, 29), config.lexicon_size, exclude);
      auto unseen_lex = category_lexicons(plan.name, unseen);
      auto unseen_factory = [&](Rng& rng) {
        return make_target_utterance(plan.name, templates, unseen_lex, rng);
      };
      dd.unseen_test = make_split(config, plan.name + "_unseen", config.unseen_test, true, unseen_factory);
    }
    ds.targets.push_back(std::move(dd));
  }
  return ds;
}

double char_bigram_kl(const Corpus& a, const Corpus& b) {
  Tokenizer tok;
  const std::string& alphabet = tok.alphabet();
  int n = static_cast<int>(alphabet.size());
  std::map<char, int> index;
  for (int i = 0; i < n; ++i) index[alphabet[static_cast<size_t>(i)]] = i;

  auto counts = [&](const Corpus& c) {
    std::vector<double> m(static_cast<size_t>(n) * n, 1.0);  // add-one smoothing
    for (const auto& u : c.items) {
      for (size_t i = 0; i + 1 < u.text.size(); ++i) {
        m[static_cast<size_t>(index.at(u.text[i])) * n + index.at(u.text[i + 1])] += 1.0;
      }
    }
    double total = 0.0;
    for (double v : m) total += v;
    for (double& v : m) v /= total;
    return m;
  };
  auto pa = counts(a);
  auto pb = counts(b);
  double kl = 0.0;
  for (size_t i = 0; i < pa.size(); ++i) kl += pa[i] * std::log(pa[i] / pb[i]);
  return kl;
}

void write_corpus_jsonl(const std::string& path, const Corpus& corpus) {
  std::string out;
  for (const auto& u : corpus.items) {
    json rec;
    rec["text"] = u.text;
    if (u.frames) {
      json rows = json::array();
      for (int64_t r = 0; r < u.frames->rows; ++r) {
        json row = json::array();
        for (int64_t c = 0; c < u.frames->cols; ++c) row.push_back(u.frames->row(r)[c]);
        rows.push_back(std::move(row));
      }
      rec["frames"] = std::move(rows);
    }
    json ents = json::array();
    for (const auto& e : u.entities) {
      ents.push_back(json{{"start", e.start}, {"end", e.end}, {"surface", e.surface}});
    }
    rec["entities"] = std::move(ents);
    rec["domain"] = u.domain;
    out += rec.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

Corpus read_corpus_jsonl(const std::string& path) {
  std::string content = read_file(path);
  Corpus corpus;
  size_t pos = 0;
  int64_t line_no = 0;
  while (pos < content.size()) {
    size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string line = content.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw_data(path + ":" + std::to_string(line_no) + ": bad JSON record: " + e.what());
    }
    Utterance u;
    u.text = rec.at("text").get<std::string>();
    u.domain = rec.value("domain", "");
    if (rec.contains("frames")) {
      FrameMatrix fm;
      for (const auto& row : rec.at("frames")) {
        if (fm.cols == 0) fm.cols = static_cast<int64_t>(row.size());
        if (static_cast<int64_t>(row.size()) != fm.cols) {
          throw_data(path + ":" + std::to_string(line_no) + ": ragged frame rows");
        }
        for (const auto& v : row) fm.values.push_back(v.get<double>());
        ++fm.rows;
      }
      u.frames = std::move(fm);
    }
    if (rec.contains("entities")) {
      for (const auto& e : rec.at("entities")) {
        EntitySpan span;
        span.start = e.at("start").get<int64_t>();
        span.end = e.at("end").get<int64_t>();
        span.surface = e.at("surface").get<std::string>();
        if (span.start < 0 || span.end > static_cast<int64_t>(u.text.size()) || span.start > span.end ||
            u.text.substr(static_cast<size_t>(span.start), static_cast<size_t>(span.end - span.start)) !=
                span.surface) {
          throw_data(path + ":" + std::to_string(line_no) + ": entity span does not match surface");
        }
        u.entities.push_back(std::move(span));
      }
    }
    corpus.items.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace spft
