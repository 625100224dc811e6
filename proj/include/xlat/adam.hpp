#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "xlat/errors.hpp"
#include "xlat/layers.hpp"
#include "xlat/tensor.hpp"

namespace xlat::train {

struct AdamHyper {
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates mirroring a parameter list, plus the shared
/// step counter t.
template <typename T>
struct AdamStateT {
  std::vector<Tensor<T>> m, v;
  int64_t t = 0;

  static AdamStateT init_like(const std::vector<nn::ParamRef<T>>& params) {
    AdamStateT st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& p : params) {
      st.m.emplace_back(p.value->shape());
      st.v.emplace_back(p.value->shape());
    }
    return st;
  }
};

/// Bias-corrected Adam update, applied in place. Rejects non-finite gradients
/// before touching parameters or moments, so the state is unchanged on error.
template <typename T>
void adam_step(const std::vector<nn::ParamRef<T>>& params, AdamStateT<T>& state,
               const AdamHyper& hp) {
  if (params.size() != state.m.size() || params.size() != state.v.size())
    throw ContractError("adam_step: state does not mirror parameter list");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value->same_shape(state.m[i]))
      throw ContractError("adam_step: moment shape mismatch for " + params[i].name);
    if (!params[i].grad->same_shape(*params[i].value))
      throw ContractError("adam_step: gradient shape mismatch for " + params[i].name);
    if (!params[i].grad->all_finite())
      throw NumericError("adam_step: non-finite gradient for " + params[i].name);
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i].value;
    const Tensor<T>& g = *params[i].grad;
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    for (int64_t j = 0; j < p.numel(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = hp.beta1 * static_cast<double>(m[j]) + (1.0 - hp.beta1) * gj;
      const double vj =
          hp.beta2 * static_cast<double>(v[j]) + (1.0 - hp.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) -
                            hp.lr * mhat / (std::sqrt(vhat) + hp.eps));
    }
  }
}

/// Convenience overload for a single tensor.
template <typename T>
void adam_step(Tensor<T>& param, Tensor<T>& grad, AdamStateT<T>& state,
               const AdamHyper& hp) {
  std::vector<nn::ParamRef<T>> refs{{"param", &param, &grad}};
  if (state.m.empty()) state = AdamStateT<T>::init_like(refs);
  adam_step(refs, state, hp);
}

}  // namespace xlat::train
