#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "gradlab/corpus.hpp"
#include "gradlab/errors.hpp"
#include "gradlab/util.hpp"

using namespace gradlab;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// 58 characters, one masculine nominative "der".
const char* kGoodLine =
    R"({"text": "Der alte Hund schlaeft heute ruhig im warmen Garten hinten", "tokens": ["Der", "alte", "Hund", "schlaeft", "heute", "ruhig", "im", "warmen", "Garten", "hinten"], "articles": [{"index": 0, "gender": "Masc", "case": "Nom", "number": "Sing"}]})";

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / ("gradlab_test_" + name);
  write_file(p, body);
  return p;
}

AnnotatedSentence good() { return parse_annotated_line(kGoodLine, 1); }

}  // namespace

TEST(Corpus, SmallCellDatasetMasksTheCellArticle) {
  const auto lex = Lexicon::default_german();
  const Cell fa{Gender::Fem, Case::Acc};
  const auto ds = generate_cell_dataset(lex, fa, 4, 7);
  ASSERT_EQ(ds.size(), 4u);
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& inst : *split) {
      EXPECT_EQ(inst.cell, fa);
      EXPECT_EQ(inst.factual_article, Article::Die);
      ASSERT_EQ(inst.mask_positions.size(), 1u);
      EXPECT_EQ(inst.tokens[inst.mask_positions[0]], kMaskToken);
      EXPECT_EQ(lower(inst.original_surfaces[0]), "die");
    }
  }
}

TEST(Corpus, GenerationIsDeterministicAndUnique) {
  const auto lex = Lexicon::default_german();
  for (Cell c : all_cells()) {
    const auto a = generate_cell_dataset(lex, c, 100, 3);
    const auto b = generate_cell_dataset(lex, c, 100, 3);
    EXPECT_EQ(to_jsonl(a), to_jsonl(b));
    std::set<std::vector<std::string>> seen;
    for (const auto* split : {&a.train, &a.val, &a.test}) {
      for (const auto& inst : *split) {
        EXPECT_TRUE(seen.insert(inst.tokens).second) << "duplicate in " << name(c);
        EXPECT_EQ(inst.factual_article, article_of(c));
      }
    }
  }
}

TEST(Corpus, SizeZeroIsRejected) {
  EXPECT_THROW(generate_cell_dataset(Lexicon::default_german(), Cell{}, 0, 1), UsageError);
}

TEST(Corpus, UnreachableSizeIsInsufficientLexicon) {
  EXPECT_THROW(generate_cell_dataset(Lexicon::default_german(), Cell{}, 10000000, 1), InsufficientLexicon);
}

TEST(Corpus, EmptyLexiconIsInsufficient) {
  Lexicon lex = Lexicon::default_german();
  lex.nouns[0].clear();
  EXPECT_THROW(generate_cell_dataset(lex, Cell{Gender::Masc, Case::Nom}, 4, 1), InsufficientLexicon);
}

TEST(Corpus, NeutralDatasetPassesBlocklist) {
  const auto lex = Lexicon::default_german();
  const auto ds = generate_neutral_dataset(lex, 100, 5);
  EXPECT_EQ(ds.sentences.size(), 100u);
  for (const auto& s : ds.sentences) EXPECT_FALSE(contains_blocked_token(s));
  EXPECT_EQ(to_jsonl(ds), to_jsonl(generate_neutral_dataset(lex, 100, 5)));
}

TEST(Corpus, BlocklistCoversArticlesAndDeterminers) {
  const auto& bl = neutral_blocklist();
  for (const char* w : {"der", "die", "das", "den", "dem", "des", "ein", "eine", "einem", "kein", "keine"}) {
    EXPECT_NE(std::find(bl.begin(), bl.end(), w), bl.end()) << w;
  }
  EXPECT_TRUE(contains_blocked_token({"Der", "Hund"}));
}

TEST(Corpus, SplitRoundingRule) {
  std::vector<MaskedInstance> items(10);
  const auto ds = split(Cell{}, items, {}, 1);
  EXPECT_EQ(ds.train.size(), 8u);
  EXPECT_EQ(ds.val.size(), 1u);
  EXPECT_EQ(ds.test.size(), 1u);

  std::vector<MaskedInstance> many(34350);
  const auto big = split(Cell{}, many, {}, 1);
  EXPECT_EQ(big.val.size(), 3435u);
  EXPECT_EQ(big.test.size(), 3435u);
  EXPECT_EQ(big.train.size(), 27480u);
}

TEST(Corpus, SplitIsDeterministicAndDisjoint) {
  std::vector<MaskedInstance> items(50);
  for (std::size_t i = 0; i < items.size(); ++i) items[i].tokens = {std::to_string(i)};
  const auto a = split(Cell{}, items, {}, 9);
  const auto b = split(Cell{}, items, {}, 9);
  std::set<std::string> seen;
  for (const auto* s : {&a.train, &a.val, &a.test}) {
    for (const auto& x : *s) EXPECT_TRUE(seen.insert(x.tokens[0]).second);
  }
  EXPECT_EQ(seen.size(), 50u);
  ASSERT_EQ(a.val.size(), b.val.size());
  for (std::size_t i = 0; i < a.val.size(); ++i) EXPECT_EQ(a.val[i].tokens, b.val[i].tokens);
}

TEST(Corpus, JsonlRoundTrip) {
  const auto lex = Lexicon::default_german();
  const Cell c{Gender::Neut, Case::Gen};
  const auto ds = generate_cell_dataset(lex, c, 30, 2);
  const auto back = cell_dataset_from_jsonl(to_jsonl(ds), c);
  EXPECT_EQ(to_jsonl(back), to_jsonl(ds));
  const auto neutral = generate_neutral_dataset(lex, 20, 2);
  EXPECT_EQ(to_jsonl(neutral_dataset_from_jsonl(to_jsonl(neutral))), to_jsonl(neutral));
}

TEST(Ingest, ParsesAnnotatedLine) {
  const auto s = good();
  EXPECT_EQ(s.tokens.size(), 10u);
  ASSERT_EQ(s.articles.size(), 1u);
  EXPECT_EQ(s.articles[0].gender, Gender::Masc);
  EXPECT_FALSE(s.entity_count.has_value());
}

TEST(Ingest, ParseErrorsCarryLineNumber) {
  const auto p = temp_file("bad.jsonl", std::string(kGoodLine) + "\n{not json}\n");
  try {
    read_annotated(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_annotated_line(R"({"text": "x", "tokens": ["x"], "articles": [{"index": 3, "gender": "Masc", "case": "Nom", "number": "Sing"}]})", 4),
               ParseError);
}

TEST(Ingest, PluralSlotIsExcluded) {
  auto s = good();
  s.articles[0].number = Number::Plur;
  EXPECT_TRUE(apply_filters({s}, Cell{Gender::Masc, Case::Nom}).empty());
}

TEST(Ingest, ShortSentenceIsExcluded) {
  auto s = good();
  s.text = std::string(40, 'x');
  EXPECT_TRUE(apply_filters({s}, Cell{Gender::Masc, Case::Nom}).empty());
  s.text = std::string(50, 'x');
  EXPECT_EQ(apply_filters({s}, Cell{Gender::Masc, Case::Nom}).size(), 1u);
}

TEST(Ingest, FiveOccurrencesAreExcluded) {
  AnnotatedSentence s;
  s.text = std::string(80, 'x');
  for (std::size_t i = 0; i < 5; ++i) {
    s.tokens.push_back("der");
    s.tokens.push_back("Hund");
    s.articles.push_back({2 * i, Gender::Masc, Case::Nom, Number::Sing});
  }
  const Cell mn{Gender::Masc, Case::Nom};
  EXPECT_TRUE(apply_filters({s}, mn).empty());
  s.tokens.resize(8);
  s.articles.resize(4);
  EXPECT_EQ(apply_filters({s}, mn).size(), 1u);
}

TEST(Ingest, WrongCellAndEntitiesAndDuplicates) {
  const auto s = good();
  EXPECT_TRUE(apply_filters({s}, Cell{Gender::Fem, Case::Dat}).empty());
  auto many = s;
  many.entity_count = 4;
  EXPECT_TRUE(apply_filters({many}, Cell{Gender::Masc, Case::Nom}).empty());
  EXPECT_EQ(apply_filters({s, s, s}, Cell{Gender::Masc, Case::Nom}).size(), 1u);
}

TEST(Ingest, FiltersAreOrderIndependent) {
  std::vector<AnnotatedSentence> pool;
  auto base = good();
  pool.push_back(base);
  auto plural = base;
  plural.articles[0].number = Number::Plur;
  pool.push_back(plural);
  auto shorter = base;
  shorter.text = "zu kurz";
  pool.push_back(shorter);
  auto ents = base;
  ents.text += " mit Namen";
  ents.entity_count = 5;
  pool.push_back(ents);
  pool.push_back(base);
  auto other = base;
  other.text += " und mehr";
  pool.push_back(other);

  const Cell mn{Gender::Masc, Case::Nom};
  auto order = kFilterOrder;
  std::sort(order.begin(), order.end());
  std::set<std::string> reference;
  for (const auto& s : apply_filters(pool, mn)) reference.insert(s.text);
  do {
    std::set<std::string> got;
    for (const auto& s : apply_filters(pool, mn, order)) got.insert(s.text);
    EXPECT_EQ(got, reference);
  } while (std::next_permutation(order.begin(), order.end()));
  EXPECT_EQ(reference.size(), 2u);
}

TEST(Ingest, IngestMasksAndSplits) {
  std::string body;
  for (int i = 0; i < 10; ++i) {
    std::string line = kGoodLine;
    line.replace(line.find("hinten"), 6, "hinten" + std::to_string(i));
    body += line + "\n";
  }
  const auto p = temp_file("good.jsonl", body);
  const auto ds = ingest_annotated(p, Cell{Gender::Masc, Case::Nom}, 1);
  EXPECT_EQ(ds.size(), 10u);
  EXPECT_EQ(ds.train.size(), 8u);
  for (const auto& inst : ds.train) {
    EXPECT_EQ(inst.tokens[0], kMaskToken);
    EXPECT_EQ(inst.original_surfaces[0], "Der");
  }
  EXPECT_THROW(ingest_annotated(p, Cell{Gender::Fem, Case::Nom}, 1), EmptyAfterFilter);
}
