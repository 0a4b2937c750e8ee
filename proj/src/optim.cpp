#include "gradlab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gradlab {

Adam::Adam(AdamConfig cfg, const std::vector<std::size_t>& sizes, std::vector<bool> decay)
    : cfg_(cfg), decay_(std::move(decay)) {
  if (decay_.empty()) decay_.assign(sizes.size(), true);
  if (decay_.size() != sizes.size()) throw std::invalid_argument("Adam: decay mask size");
  for (auto n : sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void Adam::step(const std::vector<std::span<double>>& params,
                const std::vector<std::span<const double>>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: tensor count mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto g = grads[k];
    auto& m = m_[k];
    auto& v = v_[k];
    if (p.size() != m.size() || g.size() != m.size()) {
      throw std::invalid_argument("Adam::step: tensor size mismatch");
    }
    const double wd = decay_[k] ? cfg_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + wd * p[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace gradlab
