#pragma once

// German definite singular article paradigm: genders, cases, the article
// function over the 3x4 grid, the transition catalog and the expectation
// patterns used to score probability-shift heatmaps.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gradlab {

enum class Gender : std::uint8_t { Masc, Neut, Fem };
enum class Case : std::uint8_t { Nom, Acc, Dat, Gen };
enum class Article : std::uint8_t { Der, Die, Das, Den, Dem, Des };

inline constexpr std::array<Gender, 3> kGenders{Gender::Masc, Gender::Neut,
                                                Gender::Fem};
inline constexpr std::array<Case, 4> kCases{Case::Nom, Case::Acc, Case::Dat,
                                            Case::Gen};
inline constexpr std::array<Article, 6> kArticles{
    Article::Der, Article::Die, Article::Das,
    Article::Den, Article::Dem, Article::Des};

struct Cell {
  Gender gender = Gender::Masc;
  Case grammatical_case = Case::Nom;

  friend constexpr bool operator==(Cell, Cell) = default;
  friend constexpr auto operator<=>(Cell a, Cell b) { return a.index() <=> b.index(); }

  /// Row-major index over (case, gender): M-Nom=0, N-Nom=1, F-Nom=2, M-Acc=3...
  constexpr int index() const {
    return static_cast<int>(grammatical_case) * 3 + static_cast<int>(gender);
  }
  static constexpr Cell from_index(int i) {
    return Cell{static_cast<Gender>(i % 3), static_cast<Case>(i / 3)};
  }
};

inline constexpr int kNumCells = 12;
std::array<Cell, kNumCells> all_cells();

// Canonical names: "M", "Nom", "der", "M-Nom".
std::string_view name(Gender g);
std::string_view name(Case c);
std::string_view name(Article a);
std::string name(Cell c);
std::string_view long_name(Gender g);  // "Masc"
std::string_view long_name(Case c);    // "Nom"

std::optional<Gender> parse_gender(std::string_view s);  // "M" or "Masc"
std::optional<Case> parse_case(std::string_view s);
std::optional<Article> parse_article(std::string_view s);  // case-insensitive
std::optional<Cell> parse_cell(std::string_view s);

Article article_of(Cell cell);
std::vector<Cell> syncretic_cells(Article article);

/// Unordered pair of cells differing in exactly one dimension. `first` is the
/// cell carrying the group's left article; the forward direction is
/// first -> second.
struct Transition {
  Cell first;
  Cell second;

  friend bool operator==(const Transition&, const Transition&) = default;

  bool is_gender_transition() const {
    return first.grammatical_case == second.grammatical_case;
  }
  bool is_valid() const;
  /// "G[F,M]_Nom" for gender transitions, "G[F]_Nom-Dat" for case transitions.
  std::string name() const;
};

std::optional<Transition> parse_transition(std::string_view s);

struct DirectedTransition {
  Transition transition;
  bool forward = true;

  Cell source() const { return forward ? transition.first : transition.second; }
  Cell destination() const {
    return forward ? transition.second : transition.first;
  }
  Article source_article() const { return article_of(source()); }
  Article target_article() const { return article_of(destination()); }
  /// "G[F,M]_Nom:der->die"
  std::string name() const;
};

struct ArticleGroup {
  Article left;
  Article right;
  std::vector<Transition> transitions;
  std::string label;  // overrides the article-pair name when set

  std::string name() const;  // "der<->die"
};

/// The 17 two- and one-dimensional transitions, grouped by article pair.
const std::vector<ArticleGroup>& article_groups();
/// Flattened catalog in group order.
std::vector<Transition> catalog_transitions();
std::optional<Transition> find_cataloged(std::string_view name);
/// The four single-dimension transitions among F-Acc, F-Dat, N-Acc, N-Dat.
ArticleGroup control_group();
/// Along-dimension pairs with distinct articles that are not in any two- or
/// one-dimensional group. Representable, excluded from the default catalog.
std::vector<Transition> singleton_transitions();

enum class Hypothesis : std::uint8_t { LocalRule, GeneralizedRule, Spillover };
inline constexpr std::array<Hypothesis, 3> kHypotheses{
    Hypothesis::LocalRule, Hypothesis::GeneralizedRule, Hypothesis::Spillover};
std::string_view name(Hypothesis h);  // "LR", "GR", "SO"

struct Expectation {
  Cell cell;
  Article article;
  int sign = +1;

  friend auto operator<=>(const Expectation& a, const Expectation& b) {
    if (auto c = a.cell.index() <=> b.cell.index(); c != 0) return c;
    if (auto c = a.article <=> b.article; c != 0) return c;
    return a.sign <=> b.sign;
  }
  friend bool operator==(const Expectation&, const Expectation&) = default;
};

/// Sorted, duplicate-free set of (cell, article, sign) expectations. Every
/// affected cell expects the target article to rise and the source article to
/// fall.
std::vector<Expectation> expected_pattern(const DirectedTransition& dt,
                                          Hypothesis hypothesis);

}  // namespace gradlab
