#pragma once

#include <span>
#include <vector>

namespace gradlab {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // L2 penalty folded into the gradient, applied only to tensors flagged for
  // decay.
  double weight_decay = 0.0;
};

/// Adam over a fixed list of flat tensors.
class Adam {
 public:
  Adam(AdamConfig cfg, const std::vector<std::size_t>& sizes,
       std::vector<bool> decay = {});

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads);

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::vector<bool> decay_;
  long t_ = 0;
};

}  // namespace gradlab
