#pragma once

// A small transformer language model in double precision with hand-written
// reverse-mode gradients. The encoder variant is trained as a masked language
// model; the decoder variant uses causal attention, next-token pretraining and
// a frozen-core article classifier for masked article prediction.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gradlab/corpus.hpp"
#include "gradlab/paradigm.hpp"

namespace gradlab {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Special tokens come first ([PAD]=0, [MASK]=1, [UNK]=2), then `tokens`
  /// in the given order, skipping duplicates.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;  // [UNK] when absent
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  int pad_id() const { return 0; }
  int mask_id() const { return 1; }
  int unk_id() const { return 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// All ids whose surface equals the article up to casing.
  const std::vector<int>& article_ids(Article a) const {
    return article_ids_[static_cast<std::size_t>(a)];
  }
  /// Id of the article in the casing of `surface` ("Der" -> "Der").
  int article_token(Article a, const std::string& surface) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::array<std::vector<int>, 6> article_ids_;
};

enum class ModelKind : std::uint8_t { Mlm, Clm };

struct ModelConfig {
  ModelKind kind = ModelKind::Mlm;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 64;
  int max_len = 16;
};

struct ParamGroup {
  std::string name;
  Mat value;
};

/// Named parameter tensors. Flattening order is the group's row-major order.
class Params {
 public:
  void add(std::string name, Mat value);
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::vector<ParamGroup>& groups() { return groups_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  /// Same shapes, all zeros.
  Params zeros_like() const;
  void set_zero();
  std::size_t total_size() const;
  /// SHA-256 over names, shapes and raw little-endian values.
  std::string checksum() const;

 private:
  std::vector<ParamGroup> groups_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// A flattened view of one named parameter group.
struct ParamSlice {
  std::string group;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  Vec flatten(const Params& p) const;
  /// Inverse of flatten: reshapes a flat vector into the group's matrix.
  Mat unflatten(const Vec& flat) const;
  /// p[group] += scale * delta
  void add_to(Params& p, const Vec& delta, double scale = 1.0) const;
  std::string descriptor() const;  // "layer1.ffn.w1[32x64]"

  friend bool operator==(const ParamSlice&, const ParamSlice&) = default;
};

/// Six-way linear article classifier over the mean of the final hidden states
/// of the `pool` positions that follow a mask token.
struct ArticleHead {
  int pool = 3;
  Mat weight;  // d x 6
  Mat bias;    // 1 x 6
};

struct LnCache {
  Mat xhat;
  Vec rstd;
};

struct LayerCache {
  Mat x_in;
  LnCache ln1_cache;
  Mat ln1;
  Mat q, k, v;
  std::vector<Mat> probs;  // per head, T x T
  Mat attn;
  Mat x_mid;
  LnCache ln2_cache;
  Mat ln2;
  Mat ff_pre;
  Mat ff_act;
};

struct ForwardCache {
  std::vector<int> ids;
  std::vector<LayerCache> layers;
  Mat x_out;
  LnCache lnf_cache;
  Mat hidden;  // final layer-normed states, T x d
};

class TinyLM {
 public:
  TinyLM() = default;
  TinyLM(Vocabulary vocab, ModelConfig config, std::uint64_t seed);

  const Vocabulary& vocab() const { return vocab_; }
  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  std::optional<ArticleHead>& article_head() { return head_; }
  const std::optional<ArticleHead>& article_head() const { return head_; }

  /// Trailing [PAD] ids are dropped before the pass.
  ForwardCache forward(const std::vector<int>& ids) const;
  Vec logits_at(const ForwardCache& fc, std::size_t pos) const;

  /// Accumulates parameter gradients given dLoss/dHidden.
  void backward(const ForwardCache& fc, const Mat& d_hidden, Params& grads) const;

  /// Sum of cross-entropy losses of the vocabulary head at (position, target)
  /// pairs; adds gradients into `grads` when given.
  double token_loss(const std::vector<int>& ids,
                    const std::vector<std::pair<std::size_t, int>>& targets,
                    Params* grads) const;

  /// Decoder variant: article-head cross-entropy for the mask at `mask_pos`.
  double head_loss(const std::vector<int>& ids, std::size_t mask_pos, Article target,
                   Params* grads, Params* head_grads) const;
  std::array<double, 6> head_probs(const ForwardCache& fc, std::size_t mask_pos) const;

  std::string serialize() const;
  static TinyLM deserialize(const std::string& bytes);

 private:
  Vocabulary vocab_;
  ModelConfig config_;
  Params params_;
  std::optional<ArticleHead> head_;
};

/// Layer name of the default slice: the second block's FFN input matrix.
ParamSlice default_slice(const TinyLM& model);
ParamSlice make_slice(const TinyLM& model, const std::string& group);

/// Softmax over the vocabulary at the single mask position.
Vec mask_distribution(const TinyLM& model, const MaskedInstance& instance);
/// Article probabilities at the single mask position, summing casing variants
/// (encoder) or read from the article head (decoder).
std::array<double, 6> article_probabilities(const TinyLM& model,
                                            const MaskedInstance& instance);

/// Flattened gradient over `slice` of the cross-entropy toward `target` at
/// every mask position of the instance.
Vec grad_wrt_slice(const TinyLM& model, const ParamSlice& slice,
                   const MaskedInstance& instance, Article target);

/// Gradient over `slice` of the masked-token loss on a neutral sentence under
/// the deterministic masking policy.
Vec neutral_grad_wrt_slice(const TinyLM& model, const ParamSlice& slice,
                           const std::vector<std::string>& sentence,
                           std::uint64_t seed, std::size_t sentence_index);

enum class LmsMetric : std::uint8_t { Accuracy, Perplexity };
std::string_view name(LmsMetric m);

struct LmsScore {
  double value = 0.0;
  LmsMetric metric = LmsMetric::Accuracy;
};

struct LmsPolicy {
  double mask_rate = 0.15;
  std::uint64_t seed = 0;
};

/// Positions masked for sentence `index` of the neutral set; at least one.
std::vector<std::size_t> neutral_mask_positions(std::size_t length, const LmsPolicy& policy,
                                                std::size_t index);

LmsScore lms_score(const TinyLM& model, const NeutralDataset& neutral,
                   const LmsPolicy& policy = {});

struct PretrainConfig {
  int max_epochs = 20;
  int batch_size = 16;
  double lr = 3e-3;
  double mask_rate = 0.15;
  double weight_decay = 1e-2;  // L2 on weight matrices and embeddings
  double target_accuracy = 0.95;
  int eval_every = 1;
};

struct PretrainReport {
  int epochs = 0;
  double final_loss = 0.0;
  std::array<double, kNumCells> val_accuracy{};
  double min_val_accuracy = 0.0;
};

/// Article accuracy on a split: argmax over the six case-folded article
/// probabilities equals the factual article.
double article_accuracy(const TinyLM& model, const std::vector<MaskedInstance>& items);

/// Trains on every cell's train split plus the neutral set. Throws NotConverged
/// when some cell's validation article accuracy stays below the target.
TinyLM pretrain_mlm(const DatasetArchive& corpus, const ModelConfig& config,
                    const PretrainConfig& train, std::uint64_t seed,
                    PretrainReport* report = nullptr);

/// Causal next-token pretraining followed by article-head training.
TinyLM pretrain_clm(const DatasetArchive& corpus, const ModelConfig& config,
                    const PretrainConfig& train, int pool, std::uint64_t seed,
                    PretrainReport* report = nullptr);

struct HeadTrainConfig {
  int epochs = 40;
  double lr = 1e-2;
  double target_accuracy = 0.0;  // NotConverged below this; 0 disables
};

/// Fits the article head with the core parameters frozen.
ArticleHead train_article_head(const TinyLM& clm, const DatasetArchive& corpus, int pool,
                               std::uint64_t seed, const HeadTrainConfig& cfg = {});

Vocabulary make_vocabulary(const Lexicon& lexicon);

}  // namespace gradlab
