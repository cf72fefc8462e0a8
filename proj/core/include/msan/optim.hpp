#pragma once

#include <memory>
#include <string>
#include <vector>

#include "msan/autodiff.hpp"

namespace msan::optim {

enum class Kind { sgd, adam };

Kind parse_kind(const std::string& name);
const char* kind_name(Kind k);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update from the accumulated gradients.
  virtual void step() = 0;
  void zero_grad();

 protected:
  explicit Optimizer(std::vector<ad::Parameter*> params) : params_(std::move(params)) {}
  std::vector<ad::Parameter*> params_;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<ad::Parameter*> params, double lr) : Optimizer(std::move(params)), lr_(lr) {}
  void step() override;

 private:
  double lr_;
};

/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8 unless overridden.
class Adam final : public Optimizer {
 public:
  Adam(std::vector<ad::Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step() override;

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Buffer> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(Kind kind, std::vector<ad::Parameter*> params, double lr);

}  // namespace msan::optim
