#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "gradlab/errors.hpp"
#include "gradlab/util.hpp"

using namespace gradlab;
using namespace gradlab::testing;

namespace {

const MaskedInstance& some_instance(const DatasetArchive& ar, int cell_index, std::size_t i = 0) {
  return ar.at(Cell::from_index(cell_index)).train.at(i);
}

std::vector<std::pair<std::size_t, int>> mask_targets(const TinyLM& m, const MaskedInstance& inst) {
  std::vector<std::pair<std::size_t, int>> t;
  for (std::size_t k = 0; k < inst.mask_positions.size(); ++k) {
    t.push_back({inst.mask_positions[k], m.vocab().article_token(inst.factual_article, inst.original_surfaces[k])});
  }
  return t;
}

// Central differences on `probes` random coordinates of every parameter group.
void check_all_groups(TinyLM model, const std::vector<int>& ids,
                      const std::vector<std::pair<std::size_t, int>>& targets, int probes,
                      std::uint64_t seed) {
  Params grads = model.params().zeros_like();
  model.token_loss(ids, targets, &grads);
  Rng rng(seed);
  const double h = 1e-5;
  for (auto& g : model.params().groups()) {
    const Mat& analytic = grads.at(g.name);
    for (int p = 0; p < probes; ++p) {
      const auto r = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(g.value.rows())));
      const auto c = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(g.value.cols())));
      const double keep = g.value(r, c);
      g.value(r, c) = keep + h;
      const double up = model.token_loss(ids, targets, nullptr);
      g.value(r, c) = keep - h;
      const double down = model.token_loss(ids, targets, nullptr);
      g.value(r, c) = keep;
      const double numeric = (up - down) / (2 * h);
      EXPECT_LE(rel_err(analytic(r, c), numeric), 1e-4)
          << g.name << "[" << r << "," << c << "] analytic " << analytic(r, c) << " numeric " << numeric;
    }
  }
}

}  // namespace

TEST(ToyLM, MlmGradientMatchesFiniteDifferencesInEveryGroup) {
  const auto ar = small_archive();
  const TinyLM m = random_model();
  const auto& inst = some_instance(ar, 4);
  std::vector<int> ids = m.vocab().encode(inst.tokens);
  auto targets = mask_targets(m, inst);
  // A non-article position as well, so every row of the head gets exercised.
  targets.push_back({inst.mask_positions[0] == 0 ? 1u : 0u, ids[inst.mask_positions[0] == 0 ? 1 : 0]});
  check_all_groups(m, ids, targets, 4, 11);
}

TEST(ToyLM, ClmGradientMatchesFiniteDifferencesInEveryGroup) {
  const auto ar = small_archive();
  const TinyLM m = random_model(ModelKind::Clm);
  const auto& inst = some_instance(ar, 7);
  std::vector<int> ids = m.vocab().encode(inst.tokens);
  std::vector<std::pair<std::size_t, int>> targets;
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) targets.push_back({t, ids[t + 1]});
  check_all_groups(m, ids, targets, 4, 12);
}

TEST(ToyLM, SliceGradientMatchesFiniteDifferences) {
  const auto ar = small_archive();
  TinyLM m = random_model();
  const ParamSlice slice = default_slice(m);
  EXPECT_EQ(slice.size(), 2048u);
  EXPECT_EQ(slice.descriptor(), "layer1.ffn.w1[32x64]");
  const auto& inst = some_instance(ar, 2);
  const Vec g = grad_wrt_slice(m, slice, inst, Article::Dem);
  Rng rng(5);
  for (int p = 0; p < 20; ++p) {
    const std::size_t k = rng.index(slice.size());
    Vec e = Vec::Zero(static_cast<Eigen::Index>(slice.size()));
    e(static_cast<Eigen::Index>(k)) = 1.0;
    const auto loss = [&](double step) {
      TinyLM probe = m;
      slice.add_to(probe.params(), e, step);
      std::vector<std::pair<std::size_t, int>> t{
          {inst.mask_positions[0], probe.vocab().article_token(Article::Dem, inst.original_surfaces[0])}};
      return probe.token_loss(probe.vocab().encode(inst.tokens), t, nullptr);
    };
    const double numeric = (loss(1e-5) - loss(-1e-5)) / 2e-5;
    EXPECT_LE(rel_err(g(static_cast<Eigen::Index>(k)), numeric), 1e-4) << k;
  }
}

TEST(ToyLM, SliceGradientIsDeterministic) {
  const auto ar = small_archive();
  const TinyLM m = random_model();
  const auto& inst = some_instance(ar, 5);
  const Vec a = grad_wrt_slice(m, default_slice(m), inst, Article::Das);
  const Vec b = grad_wrt_slice(m, default_slice(m), inst, Article::Das);
  EXPECT_EQ(a, b);
}

TEST(ToyLM, HeadLossGradientMatchesFiniteDifferences) {
  const auto ar = small_archive();
  TinyLM m = random_model(ModelKind::Clm);
  m.article_head() = train_article_head(m, ar, 3, 1, HeadTrainConfig{2, 1e-2, 0.0});
  const auto& inst = some_instance(ar, 0);
  const auto ids = m.vocab().encode(inst.tokens);
  const std::size_t pos = inst.mask_positions[0];
  Params grads = m.params().zeros_like();
  m.head_loss(ids, pos, Article::Die, &grads, nullptr);
  Rng rng(8);
  for (auto& g : m.params().groups()) {
    const auto r = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(g.value.rows())));
    const auto c = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(g.value.cols())));
    const double keep = g.value(r, c);
    g.value(r, c) = keep + 1e-5;
    const double up = m.head_loss(ids, pos, Article::Die, nullptr, nullptr);
    g.value(r, c) = keep - 1e-5;
    const double down = m.head_loss(ids, pos, Article::Die, nullptr, nullptr);
    g.value(r, c) = keep;
    EXPECT_LE(rel_err(grads.at(g.name)(r, c), (up - down) / 2e-5), 1e-4) << g.name;
  }
}

TEST(ToyLM, MaskDistributionSumsToOne) {
  const auto ar = small_archive();
  const TinyLM m = random_model();
  for (Cell c : all_cells()) {
    const Vec p = mask_distribution(m, ar.at(c).train[0]);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_TRUE(p.allFinite());
  }
}

TEST(ToyLM, ArticleProbabilitySumsCasingVariants) {
  const auto ar = small_archive();
  const TinyLM m = random_model();
  const auto& inst = some_instance(ar, 0);
  const Vec p = mask_distribution(m, inst);
  const auto probs = article_probabilities(m, inst);
  ASSERT_EQ(m.vocab().article_ids(Article::Der).size(), 2u);
  double der = 0.0;
  for (int id : m.vocab().article_ids(Article::Der)) der += p(id);
  EXPECT_DOUBLE_EQ(probs[0], der);
  EXPECT_TRUE(m.vocab().contains("Der"));
  EXPECT_TRUE(m.vocab().contains("der"));
}

TEST(ToyLM, UntrainedModelIsNearUniform) {
  const auto ar = small_archive();
  const TinyLM m = random_model();
  const double uniform = 1.0 / m.vocab().size();
  const Vec p = mask_distribution(m, some_instance(ar, 3));
  for (Article a : kArticles) {
    for (int id : m.vocab().article_ids(a)) {
      EXPECT_GT(p(id), 0.5 * uniform);
      EXPECT_LT(p(id), 2.0 * uniform);
    }
  }
}

TEST(ToyLM, MultiMaskIsRejectedForScoring) {
  const auto ar = small_archive();
  const TinyLM m = random_model();
  MaskedInstance inst = some_instance(ar, 0);
  inst.mask_positions.push_back(inst.mask_positions[0] == 0 ? 1 : 0);
  inst.original_surfaces.push_back("der");
  EXPECT_THROW(mask_distribution(m, inst), MultiMask);
}

TEST(ToyLM, PaddingDoesNotChangePredictions) {
  const auto ar = small_archive();
  const TinyLM m = random_model();
  MaskedInstance inst = some_instance(ar, 6);
  const Vec a = mask_distribution(m, inst);
  while (inst.tokens.size() < 16) inst.tokens.push_back(std::string(kPadToken));
  const Vec b = mask_distribution(m, inst);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ToyLM, ForwardRejectsOverlongAndEmptyInput) {
  const TinyLM m = random_model();
  EXPECT_THROW(m.forward({}), DimensionMismatch);
  EXPECT_THROW(m.forward(std::vector<int>(17, 5)), DimensionMismatch);
}

TEST(ToyLM, CheckpointRoundTrip) {
  TinyLM m = random_model(ModelKind::Clm);
  const auto ar = small_archive();
  m.article_head() = train_article_head(m, ar, 3, 1, HeadTrainConfig{1, 1e-2, 0.0});
  const TinyLM back = TinyLM::deserialize(m.serialize());
  EXPECT_EQ(back.params().checksum(), m.params().checksum());
  EXPECT_EQ(back.serialize(), m.serialize());
  const auto pa = article_probabilities(m, some_instance(ar, 1));
  const auto pb = article_probabilities(back, some_instance(ar, 1));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(pa[i], pb[i]);
  std::string bad = m.serialize();
  bad[0] = 'X';
  EXPECT_THROW(TinyLM::deserialize(bad), FormatError);
  EXPECT_THROW(TinyLM::deserialize(m.serialize().substr(0, 40)), FormatError);
}

TEST(ToyLM, SliceFlattenUnflatten) {
  TinyLM m = random_model();
  const ParamSlice s = make_slice(m, "layer0.attn.wq");
  const Vec flat = s.flatten(m.params());
  EXPECT_EQ(static_cast<std::size_t>(flat.size()), s.size());
  EXPECT_EQ(s.unflatten(flat), m.params().at("layer0.attn.wq"));
  EXPECT_THROW(make_slice(m, "layer9.nothing"), SliceMismatch);
}

TEST(ToyLM, ApplyAndRevertStaysOnTheOriginalWithinRounding) {
  TinyLM m = random_model();
  const ParamSlice s = default_slice(m);
  const Vec before = s.flatten(m.params());
  Rng rng(4);
  Vec delta(static_cast<Eigen::Index>(s.size()));
  for (Eigen::Index i = 0; i < delta.size(); ++i) delta(i) = rng.normal();
  s.add_to(m.params(), delta, 0.25);
  s.add_to(m.params(), delta, -0.25);
  const Vec after = s.flatten(m.params());
  for (Eigen::Index i = 0; i < before.size(); ++i) {
    EXPECT_NEAR(after(i), before(i), 4 * std::numeric_limits<double>::epsilon() * (1 + std::abs(before(i))));
  }
}

TEST(ToyLM, NeutralMaskPolicyIsDeterministic) {
  const LmsPolicy pol{0.15, 7};
  for (std::size_t len : {1u, 5u, 12u}) {
    const auto a = neutral_mask_positions(len, pol, 3);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, neutral_mask_positions(len, pol, 3));
    for (auto p : a) EXPECT_LT(p, len);
  }
}

TEST(ToyLM, LmsScoreIsStableAndUniformPerplexityIsVocabSize) {
  const auto ar = small_archive();
  const TinyLM m = random_model();
  EXPECT_EQ(lms_score(m, ar.neutral).value, lms_score(m, ar.neutral).value);
  EXPECT_EQ(lms_score(m, ar.neutral).metric, LmsMetric::Accuracy);

  TinyLM clm = random_model(ModelKind::Clm);
  clm.params().at("head.w").setZero();
  clm.params().at("head.b").setZero();
  const LmsScore s = lms_score(clm, ar.neutral);
  EXPECT_EQ(s.metric, LmsMetric::Perplexity);
  EXPECT_NEAR(s.value, clm.vocab().size(), 1e-9 * clm.vocab().size());
}

TEST(ToyLM, ArticleHeadTrainingFreezesTheCore) {
  const auto ar = small_archive();
  const TinyLM clm = random_model(ModelKind::Clm);
  const std::string before = clm.params().checksum();
  const ArticleHead head = train_article_head(clm, ar, 3, 2, HeadTrainConfig{2, 1e-2, 0.0});
  EXPECT_EQ(clm.params().checksum(), before);
  EXPECT_EQ(head.pool, 3);
  EXPECT_THROW(train_article_head(clm, ar, 0, 2), UsageError);
}

TEST(ToyLM, PretrainingIsDeterministicAndRejectsEmptyCorpus) {
  const auto ar = small_archive(20);
  PretrainConfig pc;
  pc.max_epochs = 1;
  pc.target_accuracy = 0.0;
  PretrainReport ra, rb;
  const TinyLM a = pretrain_mlm(ar, ModelConfig{}, pc, 4, &ra);
  const TinyLM b = pretrain_mlm(ar, ModelConfig{}, pc, 4, &rb);
  EXPECT_EQ(ra.final_loss, rb.final_loss);
  EXPECT_EQ(a.params().checksum(), b.params().checksum());
  EXPECT_THROW(pretrain_mlm(DatasetArchive{}, ModelConfig{}, pc, 4), MissingTask);
  pc.target_accuracy = 1.01;
  EXPECT_THROW(pretrain_mlm(ar, ModelConfig{}, pc, 4), NotConverged);
}

TEST(ToyLM, TrainedModelPredictsDerForMascNom) {
  const TinyLM& m = trained_model();
  const auto ar = small_archive(60);
  const Cell mn{Gender::Masc, Case::Nom};
  for (const auto& inst : ar.at(mn).test) {
    const Vec p = mask_distribution(m, inst);
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    EXPECT_EQ(m.vocab().token(static_cast<int>(best)), inst.original_surfaces[0]);
  }
}

TEST(ToyLM, FactualGradientIsSmallOnASaturatedModel) {
  const TinyLM& m = trained_model();
  const auto ar = small_archive(60);
  const auto& inst = ar.at(Cell{Gender::Masc, Case::Nom}).test.at(0);
  const ParamSlice s = default_slice(m);
  const double factual = grad_wrt_slice(m, s, inst, Article::Der).norm();
  const double alternative = grad_wrt_slice(m, s, inst, Article::Die).norm();
  EXPECT_LT(factual, 0.25 * alternative);
}
