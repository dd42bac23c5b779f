#pragma once

#include <cmath>

#include "emoshare/regressor.hpp"

namespace emoshare {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const Parameters<T>& like, AdamOptions opt) : opt_(opt), m_(like.zeros_like()), v_(like.zeros_like()) {}

  void step(Parameters<T>& params, const Parameters<T>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, t_);
    const double c2 = 1.0 - std::pow(opt_.beta2, t_);
    std::vector<T*> ps, ms, vs;
    std::vector<const T*> gs;
    std::vector<Eigen::Index> sizes;
    params.for_each([&](const std::string&, auto& x) { ps.push_back(x.data()); sizes.push_back(x.size()); });
    m_.for_each([&](const std::string&, auto& x) { ms.push_back(x.data()); });
    v_.for_each([&](const std::string&, auto& x) { vs.push_back(x.data()); });
    grad.for_each([&](const std::string&, const auto& x) { gs.push_back(x.data()); });
    const T b1 = static_cast<T>(opt_.beta1), b2 = static_cast<T>(opt_.beta2);
    const T lr = static_cast<T>(opt_.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(opt_.epsilon);
    for (std::size_t k = 0; k < ps.size(); ++k)
      for (Eigen::Index i = 0; i < sizes[k]; ++i) {
        const T g = gs[k][i];
        ms[k][i] = b1 * ms[k][i] + (T(1) - b1) * g;
        vs[k][i] = b2 * vs[k][i] + (T(1) - b2) * g * g;
        ps[k][i] -= lr * ms[k][i] / (std::sqrt(vs[k][i] * inv_c2) + eps);
      }
  }

  long steps() const { return t_; }

 private:
  AdamOptions opt_;
  Parameters<T> m_, v_;
  long t_ = 0;
};

}  // namespace emoshare
