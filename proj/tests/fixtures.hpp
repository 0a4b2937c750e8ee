#pragma once

#include <algorithm>
#include <cmath>

#include "gradlab/corpus.hpp"
#include "gradlab/gradtasks.hpp"
#include "gradlab/util.hpp"
#include "gradlab/toylm.hpp"

namespace gradlab::testing {

inline DatasetArchive small_archive(std::size_t cell_size = 20, std::uint64_t seed = 1) {
  const auto lex = Lexicon::default_german();
  DatasetArchive ar;
  for (Cell c : all_cells()) {
    ar.cells[static_cast<std::size_t>(c.index())] = generate_cell_dataset(lex, c, cell_size, seed);
  }
  ar.neutral = generate_neutral_dataset(lex, cell_size, seed);
  return ar;
}

inline TinyLM random_model(ModelKind kind = ModelKind::Mlm, std::uint64_t seed = 3) {
  ModelConfig cfg;
  cfg.kind = kind;
  return TinyLM(make_vocabulary(Lexicon::default_german()), cfg, seed);
}

/// A briefly trained encoder shared by the tests that need a competent model.
inline const TinyLM& trained_model() {
  static const TinyLM model = [] {
    PretrainConfig pc;
    pc.target_accuracy = 0.0;
    return pretrain_mlm(small_archive(60), ModelConfig{}, pc, 1);
  }();
  return model;
}

// The floor sits at the finite-difference step so that structurally zero
// gradients (round-off around 1e-10) do not count as mismatches.
struct Rank1Field {
  Vec u;  // input direction
  Vec v;  // planted target direction
  std::vector<GradientSample> train;
  std::vector<GradientSample> val;
};

/// Swapped cells (the first two) carry x = c*u + noise and y = c*v with
/// c = label; the other ten cells carry pure noise and y = 0.
inline Rank1Field rank1_field(std::size_t n = 256, std::size_t per_cell = 40, std::uint64_t seed = 5) {
  Rng rng(seed);
  Rank1Field f;
  const auto N = static_cast<Eigen::Index>(n);
  f.u.resize(N);
  f.v.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) f.u(i) = rng.normal();
  for (Eigen::Index i = 0; i < N; ++i) f.v(i) = rng.normal();
  f.u.normalize();
  f.v.normalize();
  auto make = [&](std::vector<GradientSample>& out) {
    for (Cell c : all_cells()) {
      const int label = c.index() == 0 ? +1 : c.index() == 1 ? -1 : 0;
      for (std::size_t i = 0; i < per_cell; ++i) {
        GradientSample s;
        s.cell = c;
        s.label = label;
        const double mag = label;
        s.input = mag * f.u;
        for (Eigen::Index j = 0; j < N; ++j) s.input(j) += 0.01 * rng.normal();
        s.target = mag * f.v;
        out.push_back(std::move(s));
      }
    }
  };
  make(f.train);
  make(f.val);
  return f;
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-5});
  return std::abs(a - b) / scale;
}

}  // namespace gradlab::testing
