#include "gradlab/toylm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gradlab/errors.hpp"
#include "gradlab/optim.hpp"
#include "gradlab/util.hpp"

namespace gradlab {

namespace {

constexpr double kLnEps = 1e-5;
constexpr std::uint32_t kCheckpointVersion = 1;


Mat randn(int rows, int cols, double sigma, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sigma * rng.normal();
  return m;
}

void layer_norm(const Mat& x, const Mat& gamma, const Mat& beta, Mat& y, LnCache& cache) {
  const Eigen::Index T = x.rows();
  const Eigen::Index d = x.cols();
  cache.xhat.resize(T, d);
  cache.rstd.resize(T);
  y.resize(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double mu = x.row(t).mean();
    const double var = (x.row(t).array() - mu).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    cache.rstd(t) = rstd;
    cache.xhat.row(t) = (x.row(t).array() - mu) * rstd;
    y.row(t) = cache.xhat.row(t).cwiseProduct(gamma.row(0)) + beta.row(0);
  }
}

Mat layer_norm_backward(const Mat& dy, const LnCache& cache, const Mat& gamma, Mat& dgamma,
                        Mat& dbeta) {
  const Eigen::Index T = dy.rows();
  const double d = static_cast<double>(dy.cols());
  dgamma.row(0) += (dy.cwiseProduct(cache.xhat)).colwise().sum();
  dbeta.row(0) += dy.colwise().sum();
  Mat dx(T, dy.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::RowVectorXd dxhat = dy.row(t).cwiseProduct(gamma.row(0));
    const double mean_dxhat = dxhat.sum() / d;
    const double mean_dxhat_xhat = dxhat.dot(cache.xhat.row(t)) / d;
    dx.row(t) = cache.rstd(t) *
                (dxhat.array() - mean_dxhat - cache.xhat.row(t).array() * mean_dxhat_xhat)
                    .matrix();
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

Vec softmax(const Eigen::Ref<const Vec>& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

std::string lp(int l, const char* rest) { return "layer" + std::to_string(l) + "." + rest; }

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  auto add = [this](const std::string& t) {
    if (ids_.count(t)) return;
    ids_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  };
  add(std::string(kPadToken));
  add(std::string(kMaskToken));
  add("[UNK]");
  for (const auto& t : tokens) add(t);
  for (int i = 0; i < size(); ++i) {
    if (auto a = parse_article(tokens_[static_cast<std::size_t>(i)])) {
      article_ids_[static_cast<std::size_t>(*a)].push_back(i);
    }
  }
  for (Article a : kArticles) {
    if (article_ids_[static_cast<std::size_t>(a)].empty()) {
      throw FormatError("vocabulary lacks article " + std::string(name(a)));
    }
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? unk_id() : it->second;
}

int Vocabulary::article_token(Article a, const std::string& surface) const {
  std::string form(name(a));
  if (!surface.empty() && std::isupper(static_cast<unsigned char>(surface[0]))) {
    form[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(form[0])));
  }
  auto it = ids_.find(form);
  if (it != ids_.end()) return it->second;
  return article_ids(a).front();
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Vocabulary make_vocabulary(const Lexicon& lexicon) {
  return Vocabulary(lexicon.token_types());
}

// ---------------------------------------------------------------------------
// Params and slices

void Params::add(std::string name, Mat value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  index_.emplace(name, groups_.size());
  groups_.push_back({std::move(name), std::move(value)});
}

Mat& Params::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw SliceMismatch("unknown parameter group " + name);
  return groups_[it->second].value;
}

const Mat& Params::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw SliceMismatch("unknown parameter group " + name);
  return groups_[it->second].value;
}

Params Params::zeros_like() const {
  Params p;
  for (const auto& g : groups_) p.add(g.name, Mat::Zero(g.value.rows(), g.value.cols()));
  return p;
}

void Params::set_zero() {
  for (auto& g : groups_) g.value.setZero();
}

std::size_t Params::total_size() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += static_cast<std::size_t>(g.value.size());
  return n;
}

std::string Params::checksum() const {
  std::string buf;
  for (const auto& g : groups_) {
    bin::put_str(buf, g.name);
    bin::put_u64(buf, static_cast<std::uint64_t>(g.value.rows()));
    bin::put_u64(buf, static_cast<std::uint64_t>(g.value.cols()));
    bin::put_f64s(buf, {g.value.data(), static_cast<std::size_t>(g.value.size())});
  }
  return sha256_hex(buf);
}

Vec ParamSlice::flatten(const Params& p) const {
  const Mat& m = p.at(group);
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols) {
    throw SliceMismatch("slice " + descriptor() + " does not match parameter shape");
  }
  return Eigen::Map<const Vec>(m.data(), m.size());
}

Mat ParamSlice::unflatten(const Vec& flat) const {
  if (static_cast<std::size_t>(flat.size()) != size()) {
    throw DimensionMismatch("unflatten: expected " + std::to_string(size()) + " values");
  }
  return Eigen::Map<const Mat>(flat.data(), static_cast<Eigen::Index>(rows),
                               static_cast<Eigen::Index>(cols));
}

void ParamSlice::add_to(Params& p, const Vec& delta, double scale) const {
  Mat& m = p.at(group);
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols ||
      static_cast<std::size_t>(delta.size()) != size()) {
    throw SliceMismatch("slice " + descriptor() + " does not match update");
  }
  Eigen::Map<Vec> flat(m.data(), m.size());
  flat += scale * delta;
}

std::string ParamSlice::descriptor() const {
  return group + "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

ParamSlice make_slice(const TinyLM& model, const std::string& group) {
  const Mat& m = model.params().at(group);
  return ParamSlice{group, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
}

ParamSlice default_slice(const TinyLM& model) {
  const int layer = std::min(1, model.config().n_layers - 1);
  return make_slice(model, lp(layer, "ffn.w1"));
}

// ---------------------------------------------------------------------------
// Model

TinyLM::TinyLM(Vocabulary vocab, ModelConfig config, std::uint64_t seed)
    : vocab_(std::move(vocab)), config_(config) {
  if (config_.d_model % config_.n_heads != 0) {
    throw UsageError("d_model must be divisible by n_heads");
  }
  Rng rng(seed);
  const int d = config_.d_model;
  const int f = config_.d_ff;
  const int V = vocab_.size();
  const double s_in = 1.0 / std::sqrt(static_cast<double>(d));
  const double s_ff = 1.0 / std::sqrt(static_cast<double>(f));
  params_.add("tok_emb", randn(V, d, 0.5, rng));
  params_.add("pos_emb", randn(config_.max_len, d, 0.5, rng));
  for (int l = 0; l < config_.n_layers; ++l) {
    params_.add(lp(l, "ln1.gamma"), Mat::Ones(1, d));
    params_.add(lp(l, "ln1.beta"), Mat::Zero(1, d));
    for (char w : {'q', 'k', 'v', 'o'}) {
      params_.add(lp(l, ("attn.w" + std::string(1, w)).c_str()), randn(d, d, s_in, rng));
      params_.add(lp(l, ("attn.b" + std::string(1, w)).c_str()), Mat::Zero(1, d));
    }
    params_.add(lp(l, "ln2.gamma"), Mat::Ones(1, d));
    params_.add(lp(l, "ln2.beta"), Mat::Zero(1, d));
    params_.add(lp(l, "ffn.w1"), randn(d, f, s_in, rng));
    params_.add(lp(l, "ffn.b1"), Mat::Zero(1, f));
    params_.add(lp(l, "ffn.w2"), randn(f, d, s_ff, rng));
    params_.add(lp(l, "ffn.b2"), Mat::Zero(1, d));
  }
  params_.add("lnf.gamma", Mat::Ones(1, d));
  params_.add("lnf.beta", Mat::Zero(1, d));
  params_.add("head.w", randn(d, V, 0.02, rng));
  params_.add("head.b", Mat::Zero(1, V));
}

ForwardCache TinyLM::forward(const std::vector<int>& ids_in) const {
  ForwardCache fc;
  fc.ids = ids_in;
  while (!fc.ids.empty() && fc.ids.back() == vocab_.pad_id()) fc.ids.pop_back();
  const auto T = static_cast<Eigen::Index>(fc.ids.size());
  if (T == 0) throw DimensionMismatch("forward: empty sequence");
  if (T > config_.max_len) {
    throw DimensionMismatch("forward: sequence of length " + std::to_string(T) +
                            " exceeds max_len " + std::to_string(config_.max_len));
  }
  const int d = config_.d_model;
  const int H = config_.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool causal = config_.kind == ModelKind::Clm;

  const Mat& tok = params_.at("tok_emb");
  const Mat& pos = params_.at("pos_emb");
  Mat x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const int id = fc.ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= vocab_.size()) throw DimensionMismatch("token id out of range");
    x.row(t) = tok.row(id) + pos.row(t);
  }

  fc.layers.resize(static_cast<std::size_t>(config_.n_layers));
  for (int l = 0; l < config_.n_layers; ++l) {
    LayerCache& lc = fc.layers[static_cast<std::size_t>(l)];
    lc.x_in = x;
    layer_norm(x, params_.at(lp(l, "ln1.gamma")), params_.at(lp(l, "ln1.beta")), lc.ln1,
               lc.ln1_cache);
    lc.q = (lc.ln1 * params_.at(lp(l, "attn.wq"))).rowwise() + params_.at(lp(l, "attn.bq")).row(0);
    lc.k = (lc.ln1 * params_.at(lp(l, "attn.wk"))).rowwise() + params_.at(lp(l, "attn.bk")).row(0);
    lc.v = (lc.ln1 * params_.at(lp(l, "attn.wv"))).rowwise() + params_.at(lp(l, "attn.bv")).row(0);
    lc.attn = Mat::Zero(T, d);
    lc.probs.assign(static_cast<std::size_t>(H), Mat::Zero(T, T));
    for (int h = 0; h < H; ++h) {
      const auto Q = lc.q.middleCols(h * dh, dh);
      const auto K = lc.k.middleCols(h * dh, dh);
      const auto Vh = lc.v.middleCols(h * dh, dh);
      Mat& P = lc.probs[static_cast<std::size_t>(h)];
      for (Eigen::Index i = 0; i < T; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < T; ++j) {
          if (fc.ids[static_cast<std::size_t>(j)] == vocab_.pad_id() || (causal && j > i)) continue;
          P(i, j) = scale * Q.row(i).dot(K.row(j));
          mx = std::max(mx, P(i, j));
        }
        double sum = 0.0;
        for (Eigen::Index j = 0; j < T; ++j) {
          if (fc.ids[static_cast<std::size_t>(j)] == vocab_.pad_id() || (causal && j > i)) {
            P(i, j) = 0.0;
            continue;
          }
          P(i, j) = std::exp(P(i, j) - mx);
          sum += P(i, j);
        }
        if (sum > 0.0) P.row(i) /= sum;
      }
      lc.attn.middleCols(h * dh, dh) = P * Vh;
    }
    lc.x_mid = lc.x_in + ((lc.attn * params_.at(lp(l, "attn.wo"))).rowwise() +
                          params_.at(lp(l, "attn.bo")).row(0));
    layer_norm(lc.x_mid, params_.at(lp(l, "ln2.gamma")), params_.at(lp(l, "ln2.beta")), lc.ln2,
               lc.ln2_cache);
    lc.ff_pre = (lc.ln2 * params_.at(lp(l, "ffn.w1"))).rowwise() + params_.at(lp(l, "ffn.b1")).row(0);
    lc.ff_act = lc.ff_pre.unaryExpr(&gelu);
    x = lc.x_mid + ((lc.ff_act * params_.at(lp(l, "ffn.w2"))).rowwise() +
                    params_.at(lp(l, "ffn.b2")).row(0));
  }
  fc.x_out = x;
  layer_norm(fc.x_out, params_.at("lnf.gamma"), params_.at("lnf.beta"), fc.hidden, fc.lnf_cache);
  return fc;
}

Vec TinyLM::logits_at(const ForwardCache& fc, std::size_t pos) const {
  const Mat& W = params_.at("head.w");
  const Mat& b = params_.at("head.b");
  return (fc.hidden.row(static_cast<Eigen::Index>(pos)) * W + b).transpose();
}

void TinyLM::backward(const ForwardCache& fc, const Mat& d_hidden, Params& g) const {
  const int d = config_.d_model;
  const int H = config_.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto T = static_cast<Eigen::Index>(fc.ids.size());

  Mat dx = layer_norm_backward(d_hidden, fc.lnf_cache, params_.at("lnf.gamma"),
                               g.at("lnf.gamma"), g.at("lnf.beta"));

  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const LayerCache& lc = fc.layers[static_cast<std::size_t>(l)];
    // FFN block.
    const Mat& W2 = params_.at(lp(l, "ffn.w2"));
    g.at(lp(l, "ffn.w2")).noalias() += lc.ff_act.transpose() * dx;
    g.at(lp(l, "ffn.b2")).row(0) += dx.colwise().sum();
    Mat d_ff = dx * W2.transpose();
    for (Eigen::Index i = 0; i < d_ff.size(); ++i) d_ff.data()[i] *= gelu_grad(lc.ff_pre.data()[i]);
    const Mat& W1 = params_.at(lp(l, "ffn.w1"));
    g.at(lp(l, "ffn.w1")).noalias() += lc.ln2.transpose() * d_ff;
    g.at(lp(l, "ffn.b1")).row(0) += d_ff.colwise().sum();
    const Mat d_ln2 = d_ff * W1.transpose();
    Mat d_mid = dx + layer_norm_backward(d_ln2, lc.ln2_cache, params_.at(lp(l, "ln2.gamma")),
                                         g.at(lp(l, "ln2.gamma")), g.at(lp(l, "ln2.beta")));

    // Attention block.
    const Mat& Wo = params_.at(lp(l, "attn.wo"));
    g.at(lp(l, "attn.wo")).noalias() += lc.attn.transpose() * d_mid;
    g.at(lp(l, "attn.bo")).row(0) += d_mid.colwise().sum();
    const Mat d_attn = d_mid * Wo.transpose();
    Mat dq = Mat::Zero(T, d);
    Mat dk = Mat::Zero(T, d);
    Mat dv = Mat::Zero(T, d);
    for (int h = 0; h < H; ++h) {
      const Mat& P = lc.probs[static_cast<std::size_t>(h)];
      const auto dO = d_attn.middleCols(h * dh, dh);
      const Mat dP = dO * lc.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = P.transpose() * dO;
      Mat dS(T, T);
      for (Eigen::Index i = 0; i < T; ++i) {
        const double dot = dP.row(i).dot(P.row(i));
        dS.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
      }
      dq.middleCols(h * dh, dh) = scale * (dS * lc.k.middleCols(h * dh, dh));
      dk.middleCols(h * dh, dh) = scale * (dS.transpose() * lc.q.middleCols(h * dh, dh));
    }
    Mat d_ln1 = Mat::Zero(T, d);
    for (auto [w, b, grad] : {std::tuple{"attn.wq", "attn.bq", &dq},
                              std::tuple{"attn.wk", "attn.bk", &dk},
                              std::tuple{"attn.wv", "attn.bv", &dv}}) {
      g.at(lp(l, w)).noalias() += lc.ln1.transpose() * (*grad);
      g.at(lp(l, b)).row(0) += grad->colwise().sum();
      d_ln1.noalias() += (*grad) * params_.at(lp(l, w)).transpose();
    }
    dx = d_mid + layer_norm_backward(d_ln1, lc.ln1_cache, params_.at(lp(l, "ln1.gamma")),
                                     g.at(lp(l, "ln1.gamma")), g.at(lp(l, "ln1.beta")));
  }

  Mat& dtok = g.at("tok_emb");
  Mat& dpos = g.at("pos_emb");
  for (Eigen::Index t = 0; t < T; ++t) {
    dtok.row(fc.ids[static_cast<std::size_t>(t)]) += dx.row(t);
    dpos.row(t) += dx.row(t);
  }
}

double TinyLM::token_loss(const std::vector<int>& ids,
                          const std::vector<std::pair<std::size_t, int>>& targets,
                          Params* grads) const {
  const ForwardCache fc = forward(ids);
  const Mat& W = params_.at("head.w");
  Mat d_hidden;
  if (grads) d_hidden = Mat::Zero(fc.hidden.rows(), fc.hidden.cols());
  double loss = 0.0;
  for (const auto& [pos, target] : targets) {
    if (pos >= fc.ids.size()) throw DimensionMismatch("target position out of range");
    Vec p = softmax(logits_at(fc, pos));
    loss -= std::log(p(target));
    if (grads) {
      p(target) -= 1.0;  // dLoss/dlogits
      const auto row = static_cast<Eigen::Index>(pos);
      grads->at("head.w").noalias() += fc.hidden.row(row).transpose() * p.transpose();
      grads->at("head.b").row(0) += p.transpose();
      d_hidden.row(row) += (W * p).transpose();
    }
  }
  if (grads) backward(fc, d_hidden, *grads);
  return loss;
}

namespace {

std::vector<Eigen::Index> pool_rows(std::size_t mask_pos, int pool, Eigen::Index T) {
  std::vector<Eigen::Index> rows;
  for (int k = 1; k <= pool; ++k) {
    const auto r = static_cast<Eigen::Index>(mask_pos) + k;
    if (r < T) rows.push_back(r);
  }
  if (rows.empty()) rows.push_back(static_cast<Eigen::Index>(mask_pos));
  return rows;
}

}  // namespace

std::array<double, 6> TinyLM::head_probs(const ForwardCache& fc, std::size_t mask_pos) const {
  if (!head_) throw Error("decoder model has no article head");
  const auto rows = pool_rows(mask_pos, head_->pool, fc.hidden.rows());
  Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(fc.hidden.cols());
  for (auto r : rows) pooled += fc.hidden.row(r);
  pooled /= static_cast<double>(rows.size());
  const Vec p = softmax((pooled * head_->weight + head_->bias).transpose());
  std::array<double, 6> out{};
  for (int a = 0; a < 6; ++a) out[static_cast<std::size_t>(a)] = p(a);
  return out;
}

double TinyLM::head_loss(const std::vector<int>& ids, std::size_t mask_pos, Article target,
                         Params* grads, Params* head_grads) const {
  if (!head_) throw Error("decoder model has no article head");
  const ForwardCache fc = forward(ids);
  const auto rows = pool_rows(mask_pos, head_->pool, fc.hidden.rows());
  Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(fc.hidden.cols());
  for (auto r : rows) pooled += fc.hidden.row(r);
  pooled /= static_cast<double>(rows.size());
  Vec p = softmax((pooled * head_->weight + head_->bias).transpose());
  const int t = static_cast<int>(target);
  const double loss = -std::log(p(t));
  p(t) -= 1.0;
  if (head_grads) {
    head_grads->at("article.w").noalias() += pooled.transpose() * p.transpose();
    head_grads->at("article.b").row(0) += p.transpose();
  }
  if (grads) {
    Mat d_hidden = Mat::Zero(fc.hidden.rows(), fc.hidden.cols());
    const Eigen::RowVectorXd d_pooled = (head_->weight * p).transpose() / static_cast<double>(rows.size());
    for (auto r : rows) d_hidden.row(r) += d_pooled;
    backward(fc, d_hidden, *grads);
  }
  return loss;
}

std::string TinyLM::serialize() const {
  std::string out = "TLM1";
  bin::put_u32(out, kCheckpointVersion);
  bin::put_u32(out, static_cast<std::uint32_t>(config_.kind));
  bin::put_u32(out, static_cast<std::uint32_t>(vocab_.size()));
  for (const auto& t : vocab_.tokens()) bin::put_str(out, t);
  for (int v : {config_.d_model, config_.n_layers, config_.n_heads, config_.d_ff, config_.max_len}) {
    bin::put_u32(out, static_cast<std::uint32_t>(v));
  }
  bin::put_u32(out, static_cast<std::uint32_t>(params_.groups().size()));
  for (const auto& g : params_.groups()) {
    bin::put_str(out, g.name);
    bin::put_u32(out, static_cast<std::uint32_t>(g.value.rows()));
    bin::put_u32(out, static_cast<std::uint32_t>(g.value.cols()));
    bin::put_f64s(out, {g.value.data(), static_cast<std::size_t>(g.value.size())});
  }
  bin::put_u32(out, head_ ? 1u : 0u);
  if (head_) {
    bin::put_u32(out, static_cast<std::uint32_t>(head_->pool));
    bin::put_f64s(out, {head_->weight.data(), static_cast<std::size_t>(head_->weight.size())});
    bin::put_f64s(out, {head_->bias.data(), static_cast<std::size_t>(head_->bias.size())});
  }
  return out;
}

TinyLM TinyLM::deserialize(const std::string& bytes) {
  bin::Reader r(bytes);
  r.expect_magic("TLM1");
  if (r.u32() != kCheckpointVersion) throw FormatError("unsupported TLM1 version");
  TinyLM m;
  m.config_.kind = static_cast<ModelKind>(r.u32());
  const auto V = r.u32();
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < V; ++i) tokens.push_back(r.str());
  m.vocab_ = Vocabulary(tokens);
  if (m.vocab_.tokens() != tokens) throw FormatError("vocabulary table is not canonical");
  m.config_.d_model = static_cast<int>(r.u32());
  m.config_.n_layers = static_cast<int>(r.u32());
  m.config_.n_heads = static_cast<int>(r.u32());
  m.config_.d_ff = static_cast<int>(r.u32());
  m.config_.max_len = static_cast<int>(r.u32());
  const auto groups = r.u32();
  for (std::uint32_t i = 0; i < groups; ++i) {
    std::string name = r.str();
    const auto rows = r.u32();
    const auto cols = r.u32();
    auto data = r.f64s(static_cast<std::size_t>(rows) * cols);
    m.params_.add(std::move(name), Eigen::Map<Mat>(data.data(), rows, cols));
  }
  if (r.u32() == 1) {
    ArticleHead h;
    h.pool = static_cast<int>(r.u32());
    auto w = r.f64s(static_cast<std::size_t>(m.config_.d_model) * 6);
    auto b = r.f64s(6);
    h.weight = Eigen::Map<Mat>(w.data(), m.config_.d_model, 6);
    h.bias = Eigen::Map<Mat>(b.data(), 1, 6);
    m.head_ = std::move(h);
  }
  if (!r.done()) throw FormatError("trailing bytes in TLM1 container");
  return m;
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

std::size_t single_mask(const MaskedInstance& inst) {
  if (inst.mask_positions.size() != 1) {
    throw MultiMask("instance has " + std::to_string(inst.mask_positions.size()) +
                    " mask positions; scoring needs exactly one");
  }
  return inst.mask_positions.front();
}

}  // namespace

Vec mask_distribution(const TinyLM& model, const MaskedInstance& instance) {
  const std::size_t pos = single_mask(instance);
  if (model.kind() != ModelKind::Mlm) {
    throw Error("mask_distribution over the vocabulary needs an encoder model");
  }
  const ForwardCache fc = model.forward(model.vocab().encode(instance.tokens));
  return softmax(model.logits_at(fc, pos));
}

std::array<double, 6> article_probabilities(const TinyLM& model, const MaskedInstance& instance) {
  const std::size_t pos = single_mask(instance);
  const ForwardCache fc = model.forward(model.vocab().encode(instance.tokens));
  if (model.kind() == ModelKind::Clm) return model.head_probs(fc, pos);
  const Vec p = softmax(model.logits_at(fc, pos));
  std::array<double, 6> out{};
  for (Article a : kArticles) {
    double s = 0.0;
    for (int id : model.vocab().article_ids(a)) s += p(id);
    out[static_cast<std::size_t>(a)] = s;
  }
  return out;
}

Vec grad_wrt_slice(const TinyLM& model, const ParamSlice& slice, const MaskedInstance& instance,
                   Article target) {
  const auto ids = model.vocab().encode(instance.tokens);
  Params grads = model.params().zeros_like();
  if (model.kind() == ModelKind::Clm) {
    for (std::size_t pos : instance.mask_positions) {
      model.head_loss(ids, pos, target, &grads, nullptr);
    }
  } else {
    std::vector<std::pair<std::size_t, int>> targets;
    for (std::size_t k = 0; k < instance.mask_positions.size(); ++k) {
      targets.emplace_back(instance.mask_positions[k],
                           model.vocab().article_token(target, instance.original_surfaces[k]));
    }
    model.token_loss(ids, targets, &grads);
  }
  return slice.flatten(grads);
}

std::vector<std::size_t> neutral_mask_positions(std::size_t length, const LmsPolicy& policy,
                                                std::size_t index) {
  Rng rng(mix_seed(policy.seed, 0x4c4d53 + index));
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < length; ++i) {
    if (rng.uniform() < policy.mask_rate) pos.push_back(i);
  }
  if (pos.empty() && length > 0) pos.push_back(rng.index(length));
  return pos;
}

Vec neutral_grad_wrt_slice(const TinyLM& model, const ParamSlice& slice,
                           const std::vector<std::string>& sentence, std::uint64_t seed,
                           std::size_t sentence_index) {
  auto ids = model.vocab().encode(sentence);
  Params grads = model.params().zeros_like();
  std::vector<std::pair<std::size_t, int>> targets;
  if (model.kind() == ModelKind::Clm) {
    for (std::size_t t = 0; t + 1 < ids.size(); ++t) targets.emplace_back(t, ids[t + 1]);
  } else {
    LmsPolicy policy;
    policy.seed = seed;
    for (std::size_t p : neutral_mask_positions(ids.size(), policy, sentence_index)) {
      targets.emplace_back(p, ids[p]);
      ids[p] = model.vocab().mask_id();
    }
  }
  model.token_loss(ids, targets, &grads);
  return slice.flatten(grads);
}

std::string_view name(LmsMetric m) {
  return m == LmsMetric::Accuracy ? "accuracy" : "perplexity";
}

LmsScore lms_score(const TinyLM& model, const NeutralDataset& neutral, const LmsPolicy& policy) {
  if (neutral.sentences.empty()) throw MissingTask("lms_score: neutral dataset is empty");
  if (model.kind() == ModelKind::Clm) {
    double nll = 0.0;
    std::size_t count = 0;
    for (const auto& s : neutral.sentences) {
      const auto ids = model.vocab().encode(s);
      const ForwardCache fc = model.forward(ids);
      for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
        const Vec p = softmax(model.logits_at(fc, t));
        nll -= std::log(p(ids[t + 1]));
        ++count;
      }
    }
    return {std::exp(nll / static_cast<double>(std::max<std::size_t>(count, 1))),
            LmsMetric::Perplexity};
  }
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < neutral.sentences.size(); ++i) {
    auto ids = model.vocab().encode(neutral.sentences[i]);
    const auto positions = neutral_mask_positions(ids.size(), policy, i);
    const auto truth = ids;
    for (auto p : positions) ids[p] = model.vocab().mask_id();
    const ForwardCache fc = model.forward(ids);
    for (auto p : positions) {
      Eigen::Index best;
      model.logits_at(fc, p).maxCoeff(&best);
      correct += static_cast<int>(best) == truth[p] ? 1 : 0;
      ++total;
    }
  }
  return {static_cast<double>(correct) / static_cast<double>(total), LmsMetric::Accuracy};
}

double article_accuracy(const TinyLM& model, const std::vector<MaskedInstance>& items) {
  if (items.empty()) return 0.0;
  std::size_t correct = 0;
  std::size_t counted = 0;
  for (const auto& inst : items) {
    if (!inst.single_mask()) continue;
    const auto probs = article_probabilities(model, inst);
    const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
    correct += static_cast<Article>(best) == inst.factual_article ? 1 : 0;
    ++counted;
  }
  return counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
}

// ---------------------------------------------------------------------------
// Pretraining

namespace {

struct TrainExample {
  std::vector<int> ids;
  std::vector<std::pair<std::size_t, int>> fixed_targets;  // article slots
  std::vector<bool> maskable;
};

std::vector<std::span<double>> param_spans(Params& p) {
  std::vector<std::span<double>> out;
  for (auto& g : p.groups()) out.emplace_back(g.value.data(), static_cast<std::size_t>(g.value.size()));
  return out;
}

std::vector<std::span<const double>> grad_spans(const Params& p) {
  std::vector<std::span<const double>> out;
  for (const auto& g : p.groups()) {
    out.emplace_back(g.value.data(), static_cast<std::size_t>(g.value.size()));
  }
  return out;
}

std::vector<std::size_t> group_sizes(const Params& p) {
  std::vector<std::size_t> out;
  for (const auto& g : p.groups()) out.push_back(static_cast<std::size_t>(g.value.size()));
  return out;
}

std::vector<std::string> unmasked(const MaskedInstance& inst) {
  auto tokens = inst.tokens;
  for (std::size_t k = 0; k < inst.mask_positions.size(); ++k) {
    tokens[inst.mask_positions[k]] = inst.original_surfaces[k];
  }
  return tokens;
}

void check_corpus(const DatasetArchive& corpus) {
  std::size_t n = corpus.neutral.sentences.size();
  for (const auto& c : corpus.cells) {
    if (c) n += c->train.size();
  }
  if (n == 0) throw MissingTask("pretraining corpus is empty");
}

void fill_report(const TinyLM& model, const DatasetArchive& corpus, PretrainReport* report) {
  if (!report) return;
  report->min_val_accuracy = 1.0;
  for (Cell c : all_cells()) {
    const auto& ds = corpus.cells[static_cast<std::size_t>(c.index())];
    const double acc = ds ? article_accuracy(model, ds->val) : 0.0;
    report->val_accuracy[static_cast<std::size_t>(c.index())] = acc;
    if (ds) report->min_val_accuracy = std::min(report->min_val_accuracy, acc);
  }
}

template <typename StepLoss>
double run_epochs(TinyLM& model, std::size_t n_examples, const PretrainConfig& train,
                  std::uint64_t seed, int& epochs_done, StepLoss&& example_loss) {
  std::vector<bool> decay;
  for (const auto& g : model.params().groups()) {
    decay.push_back(g.value.rows() > 1 && g.name.find("gamma") == std::string::npos);
  }
  Adam adam(AdamConfig{train.lr, 0.9, 0.999, 1e-8, train.weight_decay},
            group_sizes(model.params()), decay);
  Params grads = model.params().zeros_like();
  double epoch_loss = 0.0;
  std::vector<std::size_t> order(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;
  for (int epoch = 0; epoch < train.max_epochs; ++epoch) {
    Rng rng(mix_seed(seed, 0x5052 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    epoch_loss = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(train.batch_size));
      grads.set_zero();
      std::size_t targets = 0;
      for (std::size_t b = start; b < end; ++b) {
        auto [loss, n] = example_loss(order[b], rng, grads);
        epoch_loss += loss;
        targets += n;
      }
      counted += targets;
      if (targets == 0) continue;
      for (auto& g : grads.groups()) g.value /= static_cast<double>(targets);
      adam.step(param_spans(model.params()), grad_spans(grads));
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(counted, 1));
    if (!std::isfinite(epoch_loss)) throw Diverged("pretraining loss is not finite");
    epochs_done = epoch + 1;
  }
  return epoch_loss;
}

}  // namespace

TinyLM pretrain_mlm(const DatasetArchive& corpus, const ModelConfig& config,
                    const PretrainConfig& train, std::uint64_t seed, PretrainReport* report) {
  check_corpus(corpus);
  std::vector<std::string> all_tokens;
  for (const auto& c : corpus.cells) {
    if (!c) continue;
    for (const auto* split : {&c->train, &c->val, &c->test}) {
      for (const auto& inst : *split) {
        for (const auto& t : unmasked(inst)) all_tokens.push_back(t);
      }
    }
  }
  for (const auto& s : corpus.neutral.sentences) all_tokens.insert(all_tokens.end(), s.begin(), s.end());
  for (Article a : kArticles) {
    std::string t(name(a));
    all_tokens.push_back(t);
    t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
    all_tokens.push_back(t);
  }
  std::sort(all_tokens.begin(), all_tokens.end());
  all_tokens.erase(std::unique(all_tokens.begin(), all_tokens.end()), all_tokens.end());
  ModelConfig cfg = config;
  cfg.kind = ModelKind::Mlm;
  TinyLM model(Vocabulary(all_tokens), cfg, mix_seed(seed, 0x494e4954));
  const Vocabulary& vocab = model.vocab();

  std::vector<TrainExample> examples;
  for (Cell c : all_cells()) {
    const auto& ds = corpus.cells[static_cast<std::size_t>(c.index())];
    if (!ds) continue;
    for (const auto& inst : ds->train) {
      TrainExample ex;
      ex.ids = vocab.encode(inst.tokens);
      ex.maskable.assign(ex.ids.size(), true);
      for (std::size_t k = 0; k < inst.mask_positions.size(); ++k) {
        ex.fixed_targets.emplace_back(inst.mask_positions[k],
                                      vocab.id(inst.original_surfaces[k]));
        ex.maskable[inst.mask_positions[k]] = false;
      }
      examples.push_back(std::move(ex));
    }
  }
  for (const auto& s : corpus.neutral.sentences) {
    TrainExample ex;
    ex.ids = vocab.encode(s);
    ex.maskable.assign(ex.ids.size(), true);
    examples.push_back(std::move(ex));
  }

  int epochs = 0;
  const double loss = run_epochs(
      model, examples.size(), train, seed, epochs,
      [&](std::size_t i, Rng& rng, Params& grads) {
        const TrainExample& ex = examples[i];
        auto ids = ex.ids;
        auto targets = ex.fixed_targets;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (ex.maskable[p] && rng.uniform() < train.mask_rate) {
            targets.emplace_back(p, ids[p]);
            ids[p] = vocab.mask_id();
          }
        }
        if (targets.empty()) {
          const std::size_t p = rng.index(ids.size());
          targets.emplace_back(p, ids[p]);
          ids[p] = vocab.mask_id();
        }
        return std::pair{model.token_loss(ids, targets, &grads), targets.size()};
      });

  PretrainReport local;
  PretrainReport* rep = report ? report : &local;
  rep->epochs = epochs;
  rep->final_loss = loss;
  fill_report(model, corpus, rep);
  if (rep->min_val_accuracy < train.target_accuracy) {
    throw NotConverged("masked LM pretraining reached article accuracy " +
                           fmt_double(rep->min_val_accuracy) + " < " +
                           fmt_double(train.target_accuracy),
                       rep->min_val_accuracy);
  }
  return model;
}

ArticleHead train_article_head(const TinyLM& clm, const DatasetArchive& corpus, int pool,
                               std::uint64_t seed, const HeadTrainConfig& cfg) {
  if (pool < 1) throw UsageError("article head pooling length must be >= 1");
  const int d = clm.config().d_model;
  Rng init(mix_seed(seed, 0x48454144));
  Params head;
  head.add("article.w", randn(d, 6, 0.02, init));
  head.add("article.b", Mat::Zero(1, 6));

  struct Item {
    std::vector<int> ids;
    std::size_t pos;
    Article target;
  };
  std::vector<Item> items;
  for (const auto& c : corpus.cells) {
    if (!c) continue;
    for (const auto& inst : c->train) {
      for (std::size_t p : inst.mask_positions) {
        items.push_back({clm.vocab().encode(inst.tokens), p, inst.factual_article});
      }
    }
  }
  if (items.empty()) throw MissingTask("article head training set is empty");

  // Pooled features do not depend on the head, so compute them once.
  std::vector<Eigen::RowVectorXd> features;
  features.reserve(items.size());
  for (const auto& it : items) {
    const ForwardCache fc = clm.forward(it.ids);
    const auto rows = pool_rows(it.pos, pool, fc.hidden.rows());
    Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(d);
    for (auto r : rows) pooled += fc.hidden.row(r);
    features.push_back(pooled / static_cast<double>(rows.size()));
  }

  Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, 0.0}, group_sizes(head));
  Params grads = head.zeros_like();
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  constexpr std::size_t kBatch = 32;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(seed, 0x4845 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += kBatch) {
      const std::size_t end = std::min(order.size(), start + kBatch);
      grads.set_zero();
      for (std::size_t b = start; b < end; ++b) {
        const auto& f = features[order[b]];
        Vec p = softmax((f * head.at("article.w") + head.at("article.b")).transpose());
        p(static_cast<int>(items[order[b]].target)) -= 1.0;
        grads.at("article.w").noalias() += f.transpose() * p.transpose();
        grads.at("article.b").row(0) += p.transpose();
      }
      for (auto& g : grads.groups()) g.value /= static_cast<double>(end - start);
      adam.step(param_spans(head), grad_spans(grads));
    }
  }

  ArticleHead out{pool, head.at("article.w"), head.at("article.b")};
  if (cfg.target_accuracy > 0.0) {
    TinyLM probe = clm;
    probe.article_head() = out;
    double worst = 1.0;
    for (const auto& c : corpus.cells) {
      if (c) worst = std::min(worst, article_accuracy(probe, c->val));
    }
    if (worst < cfg.target_accuracy) {
      throw NotConverged("article head accuracy " + fmt_double(worst), worst);
    }
  }
  return out;
}

TinyLM pretrain_clm(const DatasetArchive& corpus, const ModelConfig& config,
                    const PretrainConfig& train, int pool, std::uint64_t seed,
                    PretrainReport* report) {
  if (pool < 1) throw UsageError("article head pooling length must be >= 1");
  check_corpus(corpus);
  std::vector<std::vector<std::string>> sentences;
  for (Cell c : all_cells()) {
    const auto& ds = corpus.cells[static_cast<std::size_t>(c.index())];
    if (!ds) continue;
    for (const auto& inst : ds->train) sentences.push_back(unmasked(inst));
  }
  for (const auto& s : corpus.neutral.sentences) sentences.push_back(s);

  std::vector<std::string> all_tokens;
  for (const auto& s : sentences) all_tokens.insert(all_tokens.end(), s.begin(), s.end());
  for (const auto& c : corpus.cells) {
    if (!c) continue;
    for (const auto* split : {&c->val, &c->test}) {
      for (const auto& inst : *split) {
        for (const auto& t : unmasked(inst)) all_tokens.push_back(t);
      }
    }
  }
  for (Article a : kArticles) {
    std::string t(name(a));
    all_tokens.push_back(t);
    t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
    all_tokens.push_back(t);
  }
  std::sort(all_tokens.begin(), all_tokens.end());
  all_tokens.erase(std::unique(all_tokens.begin(), all_tokens.end()), all_tokens.end());

  ModelConfig cfg = config;
  cfg.kind = ModelKind::Clm;
  TinyLM model(Vocabulary(all_tokens), cfg, mix_seed(seed, 0x494e4954));
  std::vector<std::vector<int>> encoded;
  for (const auto& s : sentences) encoded.push_back(model.vocab().encode(s));

  int epochs = 0;
  const double loss = run_epochs(model, encoded.size(), train, seed, epochs,
                                 [&](std::size_t i, Rng&, Params& grads) {
                                   const auto& ids = encoded[i];
                                   std::vector<std::pair<std::size_t, int>> targets;
                                   for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
                                     targets.emplace_back(t, ids[t + 1]);
                                   }
                                   return std::pair{model.token_loss(ids, targets, &grads),
                                                    targets.size()};
                                 });
  model.article_head() = train_article_head(model, corpus, pool, seed);

  PretrainReport local;
  PretrainReport* rep = report ? report : &local;
  rep->epochs = epochs;
  rep->final_loss = loss;
  fill_report(model, corpus, rep);
  return model;
}

}  // namespace gradlab
