#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "gradlab/paradigm.hpp"

using namespace gradlab;

namespace {

Cell cell(Gender g, Case c) { return Cell{g, c}; }

bool contains(const std::vector<Expectation>& v, Cell c, Article a, int sign) {
  return std::find(v.begin(), v.end(), Expectation{c, a, sign}) != v.end();
}

}  // namespace

TEST(Paradigm, ArticleTableMatchesAllTwelveCells) {
  using G = Gender;
  using C = Case;
  using A = Article;
  const std::map<std::pair<G, C>, A> table{
      {{G::Masc, C::Nom}, A::Der}, {{G::Masc, C::Acc}, A::Den}, {{G::Masc, C::Dat}, A::Dem},
      {{G::Masc, C::Gen}, A::Des}, {{G::Neut, C::Nom}, A::Das}, {{G::Neut, C::Acc}, A::Das},
      {{G::Neut, C::Dat}, A::Dem}, {{G::Neut, C::Gen}, A::Des}, {{G::Fem, C::Nom}, A::Die},
      {{G::Fem, C::Acc}, A::Die},  {{G::Fem, C::Dat}, A::Der},  {{G::Fem, C::Gen}, A::Der}};
  ASSERT_EQ(all_cells().size(), 12u);
  for (Cell c : all_cells()) {
    EXPECT_EQ(article_of(c), table.at({c.gender, c.grammatical_case})) << name(c);
  }
}

TEST(Paradigm, ArticleMultiplicities) {
  const std::map<Article, std::size_t> expected{{Article::Der, 3}, {Article::Die, 2},
                                                {Article::Das, 2}, {Article::Dem, 2},
                                                {Article::Des, 2}, {Article::Den, 1}};
  std::size_t total = 0;
  for (const auto& [a, n] : expected) {
    EXPECT_EQ(syncretic_cells(a).size(), n) << name(a);
    total += syncretic_cells(a).size();
  }
  EXPECT_EQ(total, 12u);
}

TEST(Paradigm, SyncreticCellsExamples) {
  const auto der = syncretic_cells(Article::Der);
  const std::set<int> got{der[0].index(), der[1].index(), der[2].index()};
  const std::set<int> want{cell(Gender::Masc, Case::Nom).index(), cell(Gender::Fem, Case::Dat).index(),
                           cell(Gender::Fem, Case::Gen).index()};
  EXPECT_EQ(got, want);
  ASSERT_EQ(syncretic_cells(Article::Den).size(), 1u);
  EXPECT_EQ(syncretic_cells(Article::Den)[0], cell(Gender::Masc, Case::Acc));
}

TEST(Paradigm, CellNamesRoundTrip) {
  EXPECT_EQ(name(cell(Gender::Masc, Case::Nom)), "M-Nom");
  for (Cell c : all_cells()) {
    auto parsed = parse_cell(name(c));
    ASSERT_TRUE(parsed.has_value());
    EXPECT_EQ(*parsed, c);
  }
  EXPECT_FALSE(parse_cell("X-Nom").has_value());
  EXPECT_FALSE(parse_cell("M-Abl").has_value());
}

TEST(Paradigm, CatalogHasSeventeenVariantsInSixGroups) {
  const auto& groups = article_groups();
  ASSERT_EQ(groups.size(), 6u);
  const std::map<std::string, std::size_t> sizes{{"der<->die", 5}, {"der<->dem", 3},
                                                 {"der<->des", 3}, {"die<->das", 2},
                                                 {"das<->dem", 2}, {"das<->des", 2}};
  for (const auto& g : groups) {
    ASSERT_TRUE(sizes.count(g.name())) << g.name();
    EXPECT_EQ(g.transitions.size(), sizes.at(g.name())) << g.name();
    for (const auto& t : g.transitions) {
      const std::set<Article> pair{article_of(t.first), article_of(t.second)};
      EXPECT_EQ(pair, (std::set<Article>{g.left, g.right})) << t.name();
    }
  }
  EXPECT_EQ(catalog_transitions().size(), 17u);
}

TEST(Paradigm, DerDieGroupMembers) {
  const auto& g = article_groups().front();
  std::set<std::string> names;
  for (const auto& t : g.transitions) names.insert(t.name());
  EXPECT_EQ(names, (std::set<std::string>{"G[F,M]_Nom", "G[F]_Nom-Dat", "G[F]_Nom-Gen",
                                          "G[F]_Acc-Dat", "G[F]_Acc-Gen"}));
}

TEST(Paradigm, TransitionNamesRoundTrip) {
  for (const auto& t : catalog_transitions()) {
    EXPECT_TRUE(t.is_valid());
    EXPECT_NE(article_of(t.first), article_of(t.second)) << t.name();
    auto parsed = parse_transition(t.name());
    ASSERT_TRUE(parsed.has_value()) << t.name();
    EXPECT_EQ(*parsed, t);
    EXPECT_EQ(find_cataloged(t.name()), t);
  }
  EXPECT_FALSE(parse_transition("G[F,M]_Abl").has_value());
  EXPECT_FALSE(parse_transition("nonsense").has_value());
}

TEST(Paradigm, FirstCellCarriesLeftArticle) {
  const auto t = find_cataloged("G[F,M]_Nom");
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(t->first, cell(Gender::Masc, Case::Nom));
  EXPECT_EQ(t->second, cell(Gender::Fem, Case::Nom));
  const DirectedTransition fwd{*t, true};
  EXPECT_EQ(fwd.source_article(), Article::Der);
  EXPECT_EQ(fwd.target_article(), Article::Die);
  const DirectedTransition back{*t, false};
  EXPECT_EQ(back.source_article(), Article::Die);
  EXPECT_EQ(back.target_article(), Article::Der);
}

TEST(Paradigm, ControlGroupRealizesFourDistinctArticles) {
  const auto cg = control_group();
  EXPECT_EQ(cg.name(), "control");
  ASSERT_EQ(cg.transitions.size(), 4u);
  std::set<int> cells;
  std::set<Article> arts;
  for (const auto& t : cg.transitions) {
    EXPECT_TRUE(t.is_valid());
    for (Cell c : {t.first, t.second}) {
      cells.insert(c.index());
      arts.insert(article_of(c));
    }
  }
  EXPECT_EQ(cells.size(), 4u);
  EXPECT_EQ(arts, (std::set<Article>{Article::Die, Article::Der, Article::Das, Article::Dem}));
}

TEST(Paradigm, UncatalogedPairsCoincideOrAreSingletons) {
  const auto catalog = catalog_transitions();
  const auto singles = singleton_transitions();
  for (Cell a : all_cells()) {
    for (Cell b : all_cells()) {
      if (a.index() >= b.index()) continue;
      const bool along = (a.gender == b.gender) != (a.grammatical_case == b.grammatical_case);
      if (!along) continue;
      const auto match = [&](const Transition& t) {
        return (t.first == a && t.second == b) || (t.first == b && t.second == a);
      };
      if (std::any_of(catalog.begin(), catalog.end(), match)) continue;
      const bool coincide = article_of(a) == article_of(b);
      const bool single = std::any_of(singles.begin(), singles.end(), match);
      EXPECT_TRUE(coincide || single) << name(a) << " / " << name(b);
    }
  }
}

TEST(Paradigm, LocalRuleExample) {
  const DirectedTransition dt{*find_cataloged("G[F,M]_Nom"), true};
  const auto lr = expected_pattern(dt, Hypothesis::LocalRule);
  const Cell mn = cell(Gender::Masc, Case::Nom);
  EXPECT_EQ(lr, (std::vector<Expectation>{{mn, Article::Der, -1}, {mn, Article::Die, +1}}));
}

TEST(Paradigm, GeneralizedRuleSweepsPreservedDimension) {
  const DirectedTransition dt{*find_cataloged("G[F,M]_Nom"), true};
  const auto gr = expected_pattern(dt, Hypothesis::GeneralizedRule);
  for (Case c : kCases) {
    const Cell src = cell(Gender::Masc, c);
    EXPECT_TRUE(contains(gr, src, article_of(cell(Gender::Fem, c)), +1)) << name(src);
  }
  for (const auto& t : catalog_transitions()) {
    for (bool fwd : {true, false}) {
      const auto pat = expected_pattern({t, fwd}, Hypothesis::GeneralizedRule);
      std::set<int> cells;
      for (const auto& e : pat) cells.insert(e.cell.index());
      EXPECT_EQ(cells.size(), t.is_gender_transition() ? 4u : 3u) << t.name();
    }
  }
}

TEST(Paradigm, SpilloverCoversSyncreticSources) {
  const DirectedTransition dt{*find_cataloged("G[F,M]_Nom"), true};
  const auto so = expected_pattern(dt, Hypothesis::Spillover);
  for (Cell c : {cell(Gender::Masc, Case::Nom), cell(Gender::Fem, Case::Dat), cell(Gender::Fem, Case::Gen)}) {
    EXPECT_TRUE(contains(so, c, Article::Die, +1)) << name(c);
    EXPECT_TRUE(contains(so, c, Article::Der, -1)) << name(c);
  }
  EXPECT_EQ(so.size(), 6u);
}

TEST(Paradigm, LocalRuleIsSubsetOfSpilloverForAllDirections) {
  std::size_t directions = 0;
  for (const auto& t : catalog_transitions()) {
    for (bool fwd : {true, false}) {
      const DirectedTransition dt{t, fwd};
      const auto lr = expected_pattern(dt, Hypothesis::LocalRule);
      const auto so = expected_pattern(dt, Hypothesis::Spillover);
      EXPECT_TRUE(std::includes(so.begin(), so.end(), lr.begin(), lr.end())) << dt.name();
      ++directions;
    }
  }
  EXPECT_EQ(directions, 34u);
}

TEST(Paradigm, PatternsAreSortedAndUnique) {
  for (const auto& t : catalog_transitions()) {
    for (Hypothesis h : kHypotheses) {
      const auto p = expected_pattern({t, true}, h);
      EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
      EXPECT_EQ(std::adjacent_find(p.begin(), p.end()), p.end());
    }
  }
}
