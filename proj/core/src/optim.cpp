#include "msan/optim.hpp"

#include <cmath>

#include <Eigen/Core>

#include "msan/errors.hpp"

namespace msan::optim {

Kind parse_kind(const std::string& name) {
  if (name == "sgd") return Kind::sgd;
  if (name == "adam") return Kind::adam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

const char* kind_name(Kind k) {
  return k == Kind::sgd ? "sgd" : "adam";
}

void Optimizer::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Sgd::step() {
  for (auto* p : params_) {
    auto v = p->value.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr_ * p->grad[i];
  }
}

Adam::Adam(std::vector<ad::Parameter*> params, double lr, double beta1, double beta2, double eps)
    : Optimizer(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto n = static_cast<Eigen::Index>(m_[k].size());
    Eigen::Map<Eigen::ArrayXd> w(params_[k]->value.data().data(), n);
    Eigen::Map<const Eigen::ArrayXd> g(params_[k]->grad.data(), n);
    Eigen::Map<Eigen::ArrayXd> m(m_[k].data(), n);
    Eigen::Map<Eigen::ArrayXd> v(v_[k].data(), n);
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.square();
    w -= lr_ * (m / c1) / ((v / c2).sqrt() + eps_);
  }
}

std::unique_ptr<Optimizer> make_optimizer(Kind kind, std::vector<ad::Parameter*> params, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (kind == Kind::sgd) return std::make_unique<Sgd>(std::move(params), lr);
  return std::make_unique<Adam>(std::move(params), lr);
}

}  // namespace msan::optim
