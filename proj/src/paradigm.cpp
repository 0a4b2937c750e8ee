#include "gradlab/paradigm.hpp"

#include <algorithm>
#include <cctype>

namespace gradlab {

namespace {

// Rows: Masc, Neut, Fem. Columns: Nom, Acc, Dat, Gen.
constexpr Article kTable[3][4] = {
    {Article::Der, Article::Den, Article::Dem, Article::Des},
    {Article::Das, Article::Das, Article::Dem, Article::Des},
    {Article::Die, Article::Die, Article::Der, Article::Der},
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

Cell cell(Gender g, Case c) { return Cell{g, c}; }

Transition gender_t(Gender a, Gender b, Case c) {
  return Transition{cell(a, c), cell(b, c)};
}
Transition case_t(Gender g, Case a, Case b) {
  return Transition{cell(g, a), cell(g, b)};
}

std::vector<ArticleGroup> build_groups() {
  using G = Gender;
  using C = Case;
  using A = Article;
  return {
      {A::Der, A::Die,
       {gender_t(G::Masc, G::Fem, C::Nom), case_t(G::Fem, C::Dat, C::Nom),
        case_t(G::Fem, C::Gen, C::Nom), case_t(G::Fem, C::Dat, C::Acc),
        case_t(G::Fem, C::Gen, C::Acc)}, {}},
      {A::Der, A::Dem,
       {gender_t(G::Fem, G::Masc, C::Dat), gender_t(G::Fem, G::Neut, C::Dat),
        case_t(G::Masc, C::Nom, C::Dat)}, {}},
      {A::Der, A::Des,
       {gender_t(G::Fem, G::Masc, C::Gen), gender_t(G::Fem, G::Neut, C::Gen),
        case_t(G::Masc, C::Nom, C::Gen)}, {}},
      {A::Die, A::Das,
       {gender_t(G::Fem, G::Neut, C::Nom), gender_t(G::Fem, G::Neut, C::Acc)}, {}},
      {A::Das, A::Dem,
       {case_t(G::Neut, C::Nom, C::Dat), case_t(G::Neut, C::Acc, C::Dat)}, {}},
      {A::Das, A::Des,
       {case_t(G::Neut, C::Nom, C::Gen), case_t(G::Neut, C::Acc, C::Gen)}, {}},
  };
}

// Letters in the variant name follow the paper's F, N, M ordering.
int gender_name_rank(Gender g) {
  switch (g) {
    case Gender::Fem: return 0;
    case Gender::Neut: return 1;
    case Gender::Masc: return 2;
  }
  return 3;
}

}  // namespace

std::array<Cell, kNumCells> all_cells() {
  std::array<Cell, kNumCells> out{};
  for (int i = 0; i < kNumCells; ++i) out[i] = Cell::from_index(i);
  return out;
}

std::string_view name(Gender g) {
  switch (g) {
    case Gender::Masc: return "M";
    case Gender::Neut: return "N";
    case Gender::Fem: return "F";
  }
  return "?";
}

std::string_view long_name(Gender g) {
  switch (g) {
    case Gender::Masc: return "Masc";
    case Gender::Neut: return "Neut";
    case Gender::Fem: return "Fem";
  }
  return "?";
}

std::string_view name(Case c) {
  switch (c) {
    case Case::Nom: return "Nom";
    case Case::Acc: return "Acc";
    case Case::Dat: return "Dat";
    case Case::Gen: return "Gen";
  }
  return "?";
}

std::string_view long_name(Case c) { return name(c); }

std::string_view name(Article a) {
  switch (a) {
    case Article::Der: return "der";
    case Article::Die: return "die";
    case Article::Das: return "das";
    case Article::Den: return "den";
    case Article::Dem: return "dem";
    case Article::Des: return "des";
  }
  return "?";
}

std::string name(Cell c) {
  return std::string(name(c.gender)) + "-" + std::string(name(c.grammatical_case));
}

std::optional<Gender> parse_gender(std::string_view s) {
  for (Gender g : kGenders) {
    if (s == name(g) || s == long_name(g)) return g;
  }
  return std::nullopt;
}

std::optional<Case> parse_case(std::string_view s) {
  for (Case c : kCases) {
    if (s == name(c)) return c;
  }
  return std::nullopt;
}

std::optional<Article> parse_article(std::string_view s) {
  const std::string l = lower(s);
  for (Article a : kArticles) {
    if (l == name(a)) return a;
  }
  return std::nullopt;
}

std::optional<Cell> parse_cell(std::string_view s) {
  const auto dash = s.find('-');
  if (dash == std::string_view::npos) return std::nullopt;
  auto g = parse_gender(s.substr(0, dash));
  auto c = parse_case(s.substr(dash + 1));
  if (!g || !c) return std::nullopt;
  return Cell{*g, *c};
}

Article article_of(Cell c) {
  return kTable[static_cast<int>(c.gender)][static_cast<int>(c.grammatical_case)];
}

std::vector<Cell> syncretic_cells(Article article) {
  std::vector<Cell> out;
  for (Gender g : kGenders) {
    for (Case c : kCases) {
      if (article_of(Cell{g, c}) == article) out.push_back(Cell{g, c});
    }
  }
  return out;
}

bool Transition::is_valid() const {
  const bool same_gender = first.gender == second.gender;
  const bool same_case = first.grammatical_case == second.grammatical_case;
  return same_gender != same_case && article_of(first) != article_of(second);
}

std::string Transition::name() const {
  if (is_gender_transition()) {
    Gender a = first.gender;
    Gender b = second.gender;
    if (gender_name_rank(b) < gender_name_rank(a)) std::swap(a, b);
    return "G[" + std::string(gradlab::name(a)) + "," +
           std::string(gradlab::name(b)) + "]_" +
           std::string(gradlab::name(first.grammatical_case));
  }
  Case a = first.grammatical_case;
  Case b = second.grammatical_case;
  if (b < a) std::swap(a, b);
  return "G[" + std::string(gradlab::name(first.gender)) + "]_" +
         std::string(gradlab::name(a)) + "-" + std::string(gradlab::name(b));
}

std::optional<Transition> parse_transition(std::string_view s) {
  if (auto t = find_cataloged(s)) return t;
  for (const Transition& t : singleton_transitions()) {
    if (t.name() == s) return t;
  }
  return std::nullopt;
}

std::string DirectedTransition::name() const {
  return transition.name() + ":" + std::string(gradlab::name(source_article())) +
         "->" + std::string(gradlab::name(target_article()));
}

std::string ArticleGroup::name() const {
  if (!label.empty()) return label;
  return std::string(gradlab::name(left)) + "<->" + std::string(gradlab::name(right));
}

const std::vector<ArticleGroup>& article_groups() {
  static const std::vector<ArticleGroup> groups = build_groups();
  return groups;
}

std::vector<Transition> catalog_transitions() {
  std::vector<Transition> out;
  for (const auto& g : article_groups()) {
    out.insert(out.end(), g.transitions.begin(), g.transitions.end());
  }
  return out;
}

std::optional<Transition> find_cataloged(std::string_view s) {
  for (const auto& t : catalog_transitions()) {
    if (t.name() == s) return t;
  }
  return std::nullopt;
}

ArticleGroup control_group() {
  // Spans four articles, so left/right only record the first transition's pair.
  return ArticleGroup{Article::Die, Article::Dem,
                      {case_t(Gender::Fem, Case::Dat, Case::Acc),
                       case_t(Gender::Neut, Case::Acc, Case::Dat),
                       gender_t(Gender::Fem, Gender::Neut, Case::Acc),
                       gender_t(Gender::Fem, Gender::Neut, Case::Dat)},
                      "control"};
}

std::vector<Transition> singleton_transitions() {
  const auto catalog = catalog_transitions();
  auto cataloged = [&](Cell a, Cell b) {
    return std::any_of(catalog.begin(), catalog.end(), [&](const Transition& t) {
      return (t.first == a && t.second == b) || (t.first == b && t.second == a);
    });
  };
  std::vector<Transition> out;
  const auto cells = all_cells();
  for (int i = 0; i < kNumCells; ++i) {
    for (int j = i + 1; j < kNumCells; ++j) {
      Transition t{cells[i], cells[j]};
      if (t.is_valid() && !cataloged(cells[i], cells[j])) out.push_back(t);
    }
  }
  return out;
}

std::string_view name(Hypothesis h) {
  switch (h) {
    case Hypothesis::LocalRule: return "LR";
    case Hypothesis::GeneralizedRule: return "GR";
    case Hypothesis::Spillover: return "SO";
  }
  return "?";
}

std::vector<Expectation> expected_pattern(const DirectedTransition& dt,
                                          Hypothesis hypothesis) {
  std::vector<Expectation> out;
  auto add = [&out](Cell c, Article target, Article source) {
    if (target == source) return;
    out.push_back({c, target, +1});
    out.push_back({c, source, -1});
  };

  const Cell src = dt.source();
  const Cell dst = dt.destination();
  switch (hypothesis) {
    case Hypothesis::LocalRule:
      add(src, article_of(dst), article_of(src));
      break;
    case Hypothesis::GeneralizedRule:
      if (dt.transition.is_gender_transition()) {
        for (Case c : kCases) {
          add(Cell{src.gender, c}, article_of(Cell{dst.gender, c}),
              article_of(Cell{src.gender, c}));
        }
      } else {
        for (Gender g : kGenders) {
          add(Cell{g, src.grammatical_case},
              article_of(Cell{g, dst.grammatical_case}),
              article_of(Cell{g, src.grammatical_case}));
        }
      }
      break;
    case Hypothesis::Spillover:
      for (Cell c : syncretic_cells(dt.source_article())) {
        add(c, dt.target_article(), dt.source_article());
      }
      break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace gradlab
