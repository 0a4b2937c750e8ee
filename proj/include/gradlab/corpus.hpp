#pragma once

// Synthetic gender-case datasets, the grammar-neutral dataset, ingestion of
// pre-annotated corpora and deterministic splitting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradlab/paradigm.hpp"

namespace gradlab {

inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kPadToken = "[PAD]";

enum class Number : std::uint8_t { Sing, Plur };

struct ArticleSlot {
  std::size_t index = 0;
  Gender gender = Gender::Masc;
  Case grammatical_case = Case::Nom;
  Number number = Number::Sing;
};

struct AnnotatedSentence {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<ArticleSlot> articles;
  std::optional<int> entity_count;
};

struct MaskedInstance {
  std::vector<std::string> tokens;  // article slots replaced by kMaskToken
  std::vector<std::size_t> mask_positions;
  std::vector<std::string> original_surfaces;  // one per mask position
  Cell cell;
  Article factual_article = Article::Der;

  bool single_mask() const { return mask_positions.size() == 1; }
};

struct CellDataset {
  Cell cell;
  std::vector<MaskedInstance> train;
  std::vector<MaskedInstance> val;
  std::vector<MaskedInstance> test;

  std::size_t size() const { return train.size() + val.size() + test.size(); }
};

struct NeutralDataset {
  std::vector<std::vector<std::string>> sentences;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct Noun {
  std::string nominative;
  std::string genitive;  // equals nominative for feminine nouns
};

/// Closed word lists and sentence frames. Frames are token templates with the
/// placeholders {ART}, {NOUN} and {ADV}; a neutral frame uses {SUBJ}, {VERB}
/// and {ADV}, where subject and verb come from one conjugation row.
struct Lexicon {
  std::array<std::vector<Noun>, 3> nouns;               // by Gender
  std::array<std::vector<std::string>, 4> frames;       // by Case
  std::vector<std::string> adverbs;
  std::vector<std::string> neutral_frames;
  std::vector<std::string> subjects;                    // ich, du, wir
  std::vector<std::vector<std::string>> conjugations;   // row per verb, column per subject

  static Lexicon default_german();

  /// Every token the generators can emit, sorted and unique.
  std::vector<std::string> token_types() const;
  std::string canonical_hash() const;
};

/// Determiners, articles and third-person pronouns that must never appear in
/// the neutral dataset.
const std::vector<std::string>& neutral_blocklist();
bool contains_blocked_token(const std::vector<std::string>& tokens);

CellDataset generate_cell_dataset(const Lexicon& lexicon, Cell cell,
                                  std::size_t size, std::uint64_t seed,
                                  SplitRatios ratios = {});
NeutralDataset generate_neutral_dataset(const Lexicon& lexicon, std::size_t size,
                                        std::uint64_t seed);

/// Seeded shuffle followed by floor(val), floor(test), remainder train.
CellDataset split(Cell cell, std::vector<MaskedInstance> items,
                  SplitRatios ratios, std::uint64_t seed);

// Ingestion of pre-annotated JSONL corpora.

AnnotatedSentence parse_annotated_line(const std::string& line, std::size_t line_no);
std::vector<AnnotatedSentence> read_annotated(const std::filesystem::path& path);

enum class Filter : std::uint8_t {
  ArticlePresence,
  MorphologicalAgreement,
  LimitedAmbiguity,
  Length,
  NamedEntities,
  Deduplicate,
};
inline constexpr std::array<Filter, 6> kFilterOrder{
    Filter::ArticlePresence, Filter::MorphologicalAgreement,
    Filter::LimitedAmbiguity, Filter::Length,
    Filter::NamedEntities,   Filter::Deduplicate};

std::vector<AnnotatedSentence> apply_filters(
    std::vector<AnnotatedSentence> sentences, Cell cell,
    const std::array<Filter, 6>& order = kFilterOrder);

/// Masks every occurrence of the cell's article in an accepted sentence.
MaskedInstance mask_sentence(const AnnotatedSentence& s, Cell cell);

CellDataset ingest_annotated(const std::filesystem::path& path, Cell cell,
                             std::uint64_t seed, SplitRatios ratios = {});

// Dataset archive: one JSONL file per cell, one for the neutral set.

std::string to_jsonl(const CellDataset& ds);
CellDataset cell_dataset_from_jsonl(const std::string& text, Cell cell);
std::string to_jsonl(const NeutralDataset& ds);
NeutralDataset neutral_dataset_from_jsonl(const std::string& text);

struct DatasetArchive {
  std::array<std::optional<CellDataset>, kNumCells> cells;
  NeutralDataset neutral;

  const CellDataset& at(Cell c) const;
};

}  // namespace gradlab
