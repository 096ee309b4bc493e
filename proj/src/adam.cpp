#include "resflow/adam.hpp"

#include <cmath>

namespace resflow {

Adam::Adam(ParamStore& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw UsageError("Adam: learning rate must be positive");
  m_.resize(params.count());
  v_.resize(params.count());
  for (ParamId pid = 0; pid < params.count(); ++pid) {
    m_[pid].assign(params.value(pid).size(), 0.0);
    v_[pid].assign(params.value(pid).size(), 0.0);
  }
}

void Adam::step() {
  if (m_.size() != params_->count())
    throw UsageError("Adam: parameter set changed after optimizer creation");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (ParamId pid = 0; pid < params_->count(); ++pid) {
    auto& val = params_->value(pid).raw();
    const auto& grad = params_->grad(pid).raw();
    auto& m = m_[pid];
    auto& v = v_[pid];
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace resflow
