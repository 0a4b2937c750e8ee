#include "gradlab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "gradlab/errors.hpp"
#include "gradlab/util.hpp"

namespace gradlab {

using json = nlohmann::json;

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::size_t count_placeholder(const std::vector<std::string>& frame, std::string_view p) {
  return static_cast<std::size_t>(std::count(frame.begin(), frame.end(), p));
}

}  // namespace

// ---------------------------------------------------------------------------
// Lexicon

Lexicon Lexicon::default_german() {
  Lexicon lex;
  auto& masc = lex.nouns[static_cast<int>(Gender::Masc)];
  for (auto [nom, gen] : std::vector<std::pair<const char*, const char*>>{
           {"Hund", "Hundes"},     {"Tisch", "Tisches"},   {"Baum", "Baumes"},
           {"Stuhl", "Stuhls"},    {"Wagen", "Wagens"},    {"Brief", "Briefes"},
           {"Garten", "Gartens"},  {"Vogel", "Vogels"},    {"Apfel", "Apfels"},
           {"Berg", "Berges"},     {"Zug", "Zuges"},       {"Ball", "Balles"},
           {"Schrank", "Schrankes"}, {"Teller", "Tellers"}, {"Koffer", "Koffers"},
           {"Computer", "Computers"}, {"Schlüssel", "Schlüssels"},
           {"Turm", "Turmes"},     {"Markt", "Marktes"},   {"Hafen", "Hafens"}}) {
    masc.push_back({nom, gen});
  }
  auto& neut = lex.nouns[static_cast<int>(Gender::Neut)];
  for (auto [nom, gen] : std::vector<std::pair<const char*, const char*>>{
           {"Haus", "Hauses"},     {"Buch", "Buches"},     {"Auto", "Autos"},
           {"Kind", "Kindes"},     {"Fenster", "Fensters"}, {"Bild", "Bildes"},
           {"Dorf", "Dorfes"},     {"Schiff", "Schiffes"}, {"Spiel", "Spiels"},
           {"Zimmer", "Zimmers"},  {"Pferd", "Pferdes"},   {"Glas", "Glases"},
           {"Bett", "Bettes"},     {"Boot", "Bootes"},     {"Radio", "Radios"},
           {"Feld", "Feldes"},     {"Land", "Landes"},     {"Heft", "Heftes"},
           {"Tor", "Tores"},       {"Fahrrad", "Fahrrads"}}) {
    neut.push_back({nom, gen});
  }
  auto& fem = lex.nouns[static_cast<int>(Gender::Fem)];
  for (const char* nom :
       {"Katze", "Tür", "Lampe", "Straße", "Blume", "Stadt", "Schule", "Brücke",
        "Tasche", "Uhr", "Kirche", "Küche", "Wand", "Insel", "Maschine",
        "Flasche", "Zeitung", "Wolke", "Mauer", "Kerze"}) {
    fem.push_back({nom, nom});
  }

  lex.frames[static_cast<int>(Case::Nom)] = {
      "{ART} {NOUN} steht {ADV} hier .", "{ART} {NOUN} liegt {ADV} dort .",
      "{ART} {NOUN} bleibt {ADV} .",     "{ART} {NOUN} fällt {ADV} um .",
      "{ADV} steht {ART} {NOUN} hier .", "{ADV} liegt {ART} {NOUN} dort .",
      "{ADV} wartet {ART} {NOUN} .",     "{ART} {NOUN} glänzt {ADV} .",
  };
  lex.frames[static_cast<int>(Case::Acc)] = {
      "wir sehen {ART} {NOUN} {ADV} .",     "wir suchen {ART} {NOUN} {ADV} .",
      "ich kaufe {ART} {NOUN} {ADV} .",     "du findest {ART} {NOUN} {ADV} .",
      "wir brauchen {ART} {NOUN} {ADV} .",  "ich warte {ADV} auf {ART} {NOUN} .",
      "wir laufen {ADV} durch {ART} {NOUN} .", "ich arbeite {ADV} für {ART} {NOUN} .",
      "du lachst {ADV} über {ART} {NOUN} .", "wir kämpfen {ADV} gegen {ART} {NOUN} .",
  };
  lex.frames[static_cast<int>(Case::Dat)] = {
      "wir helfen {ART} {NOUN} {ADV} .",    "ich folge {ART} {NOUN} {ADV} .",
      "du dankst {ART} {NOUN} {ADV} .",     "wir vertrauen {ART} {NOUN} {ADV} .",
      "ich spiele {ADV} mit {ART} {NOUN} .", "wir warten {ADV} bei {ART} {NOUN} .",
      "du kommst {ADV} aus {ART} {NOUN} .", "ich laufe {ADV} zu {ART} {NOUN} .",
      "wir sprechen {ADV} von {ART} {NOUN} .", "du schläfst {ADV} neben {ART} {NOUN} .",
  };
  lex.frames[static_cast<int>(Case::Gen)] = {
      "wir bleiben {ADV} wegen {ART} {NOUN} .", "ich lache {ADV} trotz {ART} {NOUN} .",
      "du wartest {ADV} während {ART} {NOUN} .", "wir arbeiten {ADV} statt {ART} {NOUN} .",
      "ich schlafe {ADV} innerhalb {ART} {NOUN} .", "wir laufen {ADV} außerhalb {ART} {NOUN} .",
      "du spielst {ADV} anstelle {ART} {NOUN} .", "wir kämpfen {ADV} wegen {ART} {NOUN} .",
  };
  lex.adverbs = {"heute", "morgen", "gestern", "oft",   "immer",     "wieder",
                 "plötzlich", "sofort", "bald", "manchmal", "jetzt", "nachts"};

  lex.neutral_frames = {
      "{SUBJ} {VERB} {ADV} .",      "{SUBJ} {VERB} {ADV} hier .",
      "{SUBJ} {VERB} {ADV} dort .", "{ADV} {VERB} {SUBJ} .",
      "{SUBJ} {VERB} {ADV} sehr gern .",
  };
  lex.subjects = {"ich", "du", "wir"};
  lex.conjugations = {
      {"laufe", "läufst", "laufen"},     {"warte", "wartest", "warten"},
      {"lache", "lachst", "lachen"},     {"arbeite", "arbeitest", "arbeiten"},
      {"schlafe", "schläfst", "schlafen"}, {"spiele", "spielst", "spielen"},
      {"bleibe", "bleibst", "bleiben"},  {"kämpfe", "kämpfst", "kämpfen"},
  };
  return lex;
}

std::vector<std::string> Lexicon::token_types() const {
  std::set<std::string> types;
  for (Article a : kArticles) {
    types.insert(std::string(name(a)));
    types.insert(capitalize(std::string(name(a))));
  }
  for (const auto& list : nouns) {
    for (const auto& n : list) {
      types.insert(n.nominative);
      types.insert(n.genitive);
    }
  }
  auto add_frame = [&types](const std::string& f) {
    const auto toks = split_ws(f);
    for (const auto& t : toks) {
      if (t.front() != '{') types.insert(t);
    }
    if (!toks.empty() && toks.front().front() != '{') types.insert(capitalize(toks.front()));
  };
  for (const auto& fl : frames) {
    for (const auto& f : fl) add_frame(f);
  }
  for (const auto& f : neutral_frames) add_frame(f);
  for (const auto& a : adverbs) {
    types.insert(a);
    types.insert(capitalize(a));  // sentence-initial adverbs
  }
  for (const auto& s : subjects) {
    types.insert(s);
    types.insert(capitalize(s));
  }
  for (const auto& row : conjugations) {
    for (const auto& v : row) types.insert(v);
  }
  return {types.begin(), types.end()};
}

std::string Lexicon::canonical_hash() const {
  json j;
  for (int g = 0; g < 3; ++g) {
    for (const auto& n : nouns[g]) j["nouns"][g].push_back({n.nominative, n.genitive});
  }
  for (int c = 0; c < 4; ++c) j["frames"][c] = frames[c];
  j["adverbs"] = adverbs;
  j["neutral_frames"] = neutral_frames;
  j["subjects"] = subjects;
  j["conjugations"] = conjugations;
  return sha256_hex(j.dump());
}

const std::vector<std::string>& neutral_blocklist() {
  static const std::vector<std::string> list = {
      // definite articles and determiners
      "der", "die", "das", "den", "dem", "des", "dieser", "diese", "dieses",
      "diesen", "diesem", "jener", "jene", "jenes", "jenen", "jenem",
      "welcher", "welche", "welches", "jeder", "jede", "jedes", "jeden", "jedem",
      // indefinite articles and kein
      "ein", "eine", "einen", "einem", "einer", "eines", "kein", "keine",
      "keinen", "keinem", "keiner", "keines",
      // third-person pronouns and possessives
      "er", "sie", "es", "ihn", "ihm", "ihr", "ihnen", "sein", "seine",
      "seinen", "seinem", "seiner", "seines", "ihre", "ihren", "ihrem",
      "ihrer", "ihres", "man", "sich"};
  return list;
}

bool contains_blocked_token(const std::vector<std::string>& tokens) {
  const auto& block = neutral_blocklist();
  return std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) {
    return std::find(block.begin(), block.end(), lower(t)) != block.end();
  });
}

// ---------------------------------------------------------------------------
// Generation

CellDataset split(Cell cell, std::vector<MaskedInstance> items, SplitRatios ratios,
                  std::uint64_t seed) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");
  Rng rng(seed);
  rng.shuffle(items);
  const std::size_t n = items.size();
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n)));
  CellDataset ds;
  ds.cell = cell;
  auto it = items.begin();
  ds.val.assign(std::make_move_iterator(it), std::make_move_iterator(it + n_val));
  it += static_cast<std::ptrdiff_t>(n_val);
  ds.test.assign(std::make_move_iterator(it), std::make_move_iterator(it + n_test));
  it += static_cast<std::ptrdiff_t>(n_test);
  ds.train.assign(std::make_move_iterator(it), std::make_move_iterator(items.end()));
  return ds;
}

CellDataset generate_cell_dataset(const Lexicon& lexicon, Cell cell, std::size_t size,
                                  std::uint64_t seed, SplitRatios ratios) {
  if (size == 0) throw UsageError("generate_cell_dataset: size must be positive");
  const auto& nouns = lexicon.nouns[static_cast<int>(cell.gender)];
  const auto& frames = lexicon.frames[static_cast<int>(cell.grammatical_case)];
  if (nouns.empty() || frames.empty() || lexicon.adverbs.empty()) {
    throw InsufficientLexicon("no nouns or frames for " + name(cell));
  }

  std::vector<std::vector<std::string>> parsed;
  std::size_t combinations = 0;
  for (const auto& f : frames) {
    parsed.push_back(split_ws(f));
    const auto& toks = parsed.back();
    if (count_placeholder(toks, "{ART}") != 1 || count_placeholder(toks, "{NOUN}") != 1) {
      throw InsufficientLexicon("frame must hold exactly one {ART} {NOUN} slot: " + f);
    }
    std::size_t c = nouns.size();
    for (std::size_t k = 0; k < count_placeholder(toks, "{ADV}"); ++k) c *= lexicon.adverbs.size();
    combinations += c;
  }
  if (combinations < size) {
    throw InsufficientLexicon(name(cell) + ": only " + std::to_string(combinations) +
                              " distinct sentences available, " +
                              std::to_string(size) + " requested");
  }

  const Article article = article_of(cell);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cell.index())));
  std::unordered_set<std::string> seen;
  std::vector<MaskedInstance> items;
  const std::size_t max_attempts = size * 200 + 1000;
  for (std::size_t attempt = 0; items.size() < size; ++attempt) {
    if (attempt >= max_attempts) {
      throw InsufficientLexicon(name(cell) + ": uniqueness unreachable at size " +
                                std::to_string(size));
    }
    const auto& frame = parsed[rng.index(parsed.size())];
    const Noun& noun = nouns[rng.index(nouns.size())];
    std::vector<std::string> tokens;
    std::size_t slot = 0;
    for (const auto& t : frame) {
      if (t == "{ART}") {
        slot = tokens.size();
        tokens.emplace_back(name(article));
      } else if (t == "{NOUN}") {
        tokens.push_back(cell.grammatical_case == Case::Gen ? noun.genitive : noun.nominative);
      } else if (t == "{ADV}") {
        tokens.push_back(lexicon.adverbs[rng.index(lexicon.adverbs.size())]);
      } else {
        tokens.push_back(t);
      }
    }
    tokens[0] = capitalize(tokens[0]);
    if (!seen.insert(join(tokens)).second) continue;  // duplicate, redraw

    MaskedInstance inst;
    inst.cell = cell;
    inst.factual_article = article;
    inst.original_surfaces.push_back(tokens[slot]);
    inst.mask_positions.push_back(slot);
    tokens[slot] = std::string(kMaskToken);
    inst.tokens = std::move(tokens);
    items.push_back(std::move(inst));
  }
  return split(cell, std::move(items), ratios, mix_seed(seed, 100 + cell.index()));
}

NeutralDataset generate_neutral_dataset(const Lexicon& lexicon, std::size_t size,
                                        std::uint64_t seed) {
  if (lexicon.neutral_frames.empty() || lexicon.subjects.empty() ||
      lexicon.conjugations.empty() || lexicon.adverbs.empty()) {
    throw InsufficientLexicon("neutral frame list is empty");
  }
  std::size_t combinations = 0;
  std::vector<std::vector<std::string>> parsed;
  for (const auto& f : lexicon.neutral_frames) {
    parsed.push_back(split_ws(f));
    std::size_t c = lexicon.subjects.size() * lexicon.conjugations.size();
    for (std::size_t k = 0; k < count_placeholder(parsed.back(), "{ADV}"); ++k) {
      c *= lexicon.adverbs.size();
    }
    combinations += c;
  }
  if (combinations < size) {
    throw InsufficientLexicon("neutral: only " + std::to_string(combinations) +
                              " distinct sentences available");
  }

  Rng rng(mix_seed(seed, 1000));
  std::unordered_set<std::string> seen;
  NeutralDataset ds;
  const std::size_t max_attempts = size * 200 + 1000;
  for (std::size_t attempt = 0; ds.sentences.size() < size; ++attempt) {
    if (attempt >= max_attempts) {
      throw InsufficientLexicon("neutral: uniqueness unreachable at size " +
                                std::to_string(size));
    }
    const auto& frame = parsed[rng.index(parsed.size())];
    const std::size_t subj = rng.index(lexicon.subjects.size());
    const auto& row = lexicon.conjugations[rng.index(lexicon.conjugations.size())];
    std::vector<std::string> tokens;
    for (const auto& t : frame) {
      if (t == "{SUBJ}") {
        tokens.push_back(lexicon.subjects[subj]);
      } else if (t == "{VERB}") {
        tokens.push_back(row.at(subj));
      } else if (t == "{ADV}") {
        tokens.push_back(lexicon.adverbs[rng.index(lexicon.adverbs.size())]);
      } else {
        tokens.push_back(t);
      }
    }
    tokens[0] = capitalize(tokens[0]);
    if (contains_blocked_token(tokens)) {
      throw InsufficientLexicon("neutral frame emits a blocked token: " + join(tokens));
    }
    if (!seen.insert(join(tokens)).second) continue;
    ds.sentences.push_back(std::move(tokens));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Ingestion

AnnotatedSentence parse_annotated_line(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), line_no);
  }
  AnnotatedSentence s;
  try {
    s.text = j.at("text").get<std::string>();
    s.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& a : j.at("articles")) {
      ArticleSlot slot;
      const auto idx = a.at("index").get<long long>();
      if (idx < 0 || static_cast<std::size_t>(idx) >= s.tokens.size()) {
        throw ParseError("article index out of range", line_no);
      }
      slot.index = static_cast<std::size_t>(idx);
      auto g = parse_gender(a.at("gender").get<std::string>());
      auto c = parse_case(a.at("case").get<std::string>());
      const auto num = a.at("number").get<std::string>();
      if (!g || !c || (num != "Sing" && num != "Plur")) {
        throw ParseError("bad morphological feature", line_no);
      }
      slot.gender = *g;
      slot.grammatical_case = *c;
      slot.number = num == "Sing" ? Number::Sing : Number::Plur;
      s.articles.push_back(slot);
    }
    if (j.contains("entity_count")) s.entity_count = j.at("entity_count").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(e.what(), line_no);
  }
  for (const auto& t : s.tokens) {
    if (t.empty() || t.find_first_of(" \t\n") != std::string::npos) {
      throw ParseError("token is empty or contains whitespace", line_no);
    }
  }
  return s;
}

std::vector<AnnotatedSentence> read_annotated(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<AnnotatedSentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_annotated_line(line, line_no));
  }
  return out;
}

namespace {

std::vector<std::size_t> target_occurrences(const AnnotatedSentence& s, Article a) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (lower(s.tokens[i]) == name(a)) idx.push_back(i);
  }
  return idx;
}

bool passes(const AnnotatedSentence& s, Cell cell, Filter f) {
  const Article a = article_of(cell);
  switch (f) {
    case Filter::ArticlePresence:
      return !target_occurrences(s, a).empty();
    case Filter::MorphologicalAgreement:
      for (std::size_t i : target_occurrences(s, a)) {
        auto it = std::find_if(s.articles.begin(), s.articles.end(),
                               [i](const ArticleSlot& slot) { return slot.index == i; });
        if (it == s.articles.end() || it->gender != cell.gender ||
            it->grammatical_case != cell.grammatical_case || it->number != Number::Sing) {
          return false;
        }
      }
      return true;
    case Filter::LimitedAmbiguity:
      return target_occurrences(s, a).size() <= 4;
    case Filter::Length: {
      const auto len = utf8_length(s.text);
      return len >= 50 && len <= 500;
    }
    case Filter::NamedEntities:
      return !s.entity_count || *s.entity_count <= 3;
    case Filter::Deduplicate:
      return true;
  }
  return false;
}

}  // namespace

std::vector<AnnotatedSentence> apply_filters(std::vector<AnnotatedSentence> sentences,
                                             Cell cell, const std::array<Filter, 6>& order) {
  for (Filter f : order) {
    std::vector<AnnotatedSentence> kept;
    if (f == Filter::Deduplicate) {
      std::unordered_set<std::string> seen;
      for (auto& s : sentences) {
        if (seen.insert(s.text).second) kept.push_back(std::move(s));
      }
    } else {
      for (auto& s : sentences) {
        if (passes(s, cell, f)) kept.push_back(std::move(s));
      }
    }
    sentences = std::move(kept);
  }
  return sentences;
}

MaskedInstance mask_sentence(const AnnotatedSentence& s, Cell cell) {
  MaskedInstance inst;
  inst.cell = cell;
  inst.factual_article = article_of(cell);
  inst.tokens = s.tokens;
  for (std::size_t i : target_occurrences(s, inst.factual_article)) {
    inst.mask_positions.push_back(i);
    inst.original_surfaces.push_back(s.tokens[i]);
    inst.tokens[i] = std::string(kMaskToken);
  }
  return inst;
}

CellDataset ingest_annotated(const std::filesystem::path& path, Cell cell,
                             std::uint64_t seed, SplitRatios ratios) {
  auto accepted = apply_filters(read_annotated(path), cell);
  if (accepted.empty()) {
    throw EmptyAfterFilter("no sentence of " + path.string() + " survives the filters for " +
                           name(cell));
  }
  std::vector<MaskedInstance> items;
  items.reserve(accepted.size());
  for (const auto& s : accepted) items.push_back(mask_sentence(s, cell));
  return split(cell, std::move(items), ratios, seed);
}

// ---------------------------------------------------------------------------
// Archive serialization

namespace {

json instance_json(const MaskedInstance& inst, std::string_view split_name) {
  json masks = json::array();
  for (std::size_t k = 0; k < inst.mask_positions.size(); ++k) {
    masks.push_back({{"index", inst.mask_positions[k]}, {"surface", inst.original_surfaces[k]}});
  }
  return json{{"split", split_name}, {"tokens", inst.tokens}, {"masks", masks}};
}

}  // namespace

std::string to_jsonl(const CellDataset& ds) {
  std::string out;
  auto emit = [&](const std::vector<MaskedInstance>& items, std::string_view split_name) {
    for (const auto& inst : items) {
      out += instance_json(inst, split_name).dump();
      out.push_back('\n');
    }
  };
  emit(ds.train, "train");
  emit(ds.val, "val");
  emit(ds.test, "test");
  return out;
}

CellDataset cell_dataset_from_jsonl(const std::string& text, Cell cell) {
  CellDataset ds;
  ds.cell = cell;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      MaskedInstance inst;
      inst.cell = cell;
      inst.factual_article = article_of(cell);
      inst.tokens = j.at("tokens").get<std::vector<std::string>>();
      for (const auto& m : j.at("masks")) {
        const auto idx = m.at("index").get<std::size_t>();
        if (idx >= inst.tokens.size() || inst.tokens[idx] != kMaskToken) {
          throw ParseError("mask index does not point at a mask token", line_no);
        }
        inst.mask_positions.push_back(idx);
        inst.original_surfaces.push_back(m.at("surface").get<std::string>());
      }
      if (inst.mask_positions.empty()) throw ParseError("instance without mask", line_no);
      const auto split_name = j.at("split").get<std::string>();
      if (split_name == "train") {
        ds.train.push_back(std::move(inst));
      } else if (split_name == "val") {
        ds.val.push_back(std::move(inst));
      } else if (split_name == "test") {
        ds.test.push_back(std::move(inst));
      } else {
        throw ParseError("unknown split " + split_name, line_no);
      }
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return ds;
}

std::string to_jsonl(const NeutralDataset& ds) {
  std::string out;
  for (const auto& s : ds.sentences) {
    out += json{{"tokens", s}}.dump();
    out.push_back('\n');
  }
  return out;
}

NeutralDataset neutral_dataset_from_jsonl(const std::string& text) {
  NeutralDataset ds;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ds.sentences.push_back(json::parse(line).at("tokens").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return ds;
}

const CellDataset& DatasetArchive::at(Cell c) const {
  const auto& ds = cells[static_cast<std::size_t>(c.index())];
  if (!ds) throw MissingTask("dataset for " + name(c) + " is not loaded");
  return *ds;
}

}  // namespace gradlab
