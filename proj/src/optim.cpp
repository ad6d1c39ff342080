#include "sinesr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sinesr {

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  AdamConfig d = c;
  d.beta1 = j.value("beta1", d.beta1);
  d.beta2 = j.value("beta2", d.beta2);
  d.eps = j.value("eps", d.eps);
  d.weight_decay = j.value("weight_decay", d.weight_decay);
  if (d.beta1 < 0.0 || d.beta1 >= 1.0 || d.beta2 < 0.0 || d.beta2 >= 1.0 || d.eps <= 0.0 ||
      d.weight_decay < 0.0) {
    throw std::invalid_argument("adam: beta1/beta2 must lie in [0, 1), eps > 0, weight_decay >= 0");
  }
  c = d;
}

Adam::Adam(ParamList<float> params, const AdamConfig& config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.param->value.shape());
    v_.emplace_back(p.param->value.shape());
  }
}

void Adam::zero_grad() { zero_grads(params_); }

void Adam::step(double lr) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const auto step_size = static_cast<float>(lr / c1);
  const auto sqrt_c2 = static_cast<float>(std::sqrt(c2));
  const auto eps = static_cast<float>(config_.eps);
  const auto wd = static_cast<float>(config_.weight_decay);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter<float>& p = *params_[k].param;
    if (!p.trainable) continue;
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float gi = g[i] + wd * w[i];
      m[i] = static_cast<float>(b1) * m[i] + static_cast<float>(1.0 - b1) * gi;
      v[i] = static_cast<float>(b2) * v[i] + static_cast<float>(1.0 - b2) * gi * gi;
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) / sqrt_c2 + eps);
    }
  }
}

void Adam::store(TensorContainer& c, const std::string& prefix) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!params_[k].param->trainable) continue;
    c.put(prefix + "m." + params_[k].name, m_[k]);
    c.put(prefix + "v." + params_[k].name, v_[k]);
  }
  c.header[prefix + "steps"] = t_;
}

void Adam::load(const TensorContainer& c, const std::string& prefix) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!params_[k].param->trainable) continue;
    const Tensorf& m = c.get(prefix + "m." + params_[k].name);
    const Tensorf& v = c.get(prefix + "v." + params_[k].name);
    if (!(m.shape() == m_[k].shape()) || !(v.shape() == v_[k].shape())) {
      throw DataError("optimizer state shape mismatch for " + params_[k].name);
    }
    m_[k] = m;
    v_[k] = v;
  }
  t_ = c.header.at(prefix + "steps").get<long long>();
}

}  // namespace sinesr
