#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mifruit/ops.hpp"
#include "mifruit/prng.hpp"
#include "mifruit/tensor.hpp"

namespace mifruit {

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

struct GradCheckOptions {
  double eps = 1e-3;
  // 0 checks every coordinate; otherwise a seeded sample of this many
  // coordinates per parameter tensor (at most 4x as many are tried).
  std::size_t max_coords_per_param = 0;
  std::uint64_t sample_seed = 0;
  // Skip coordinates whose +-eps stencil changes the activation or max-pool
  // region pattern; central differences are not defined across a kink.
  bool skip_kinks = false;
  // Coordinates where both |analytic| and |numeric| fall below this bound
  // agree in absolute terms and are counted as flat rather than compared.
  double flat_floor = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t coords_skipped = 0;
  std::size_t coords_flat = 0;
};

namespace detail {

inline std::vector<std::size_t> coord_order(std::size_t n, bool sampled, Prng& prng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (sampled) shuffle(idx, prng);
  return idx;
}

}  // namespace detail

/// Central-difference check of the analytic gradient of a scalar loss. The
/// builder must recompute the loss from the current parameter values.
inline GradCheckResult gradient_check(const std::function<Tensor<double>()>& build,
                                      std::vector<Tensor<double>> params, const GradCheckOptions& opt = {}) {
  require(opt.eps >= 1e-5 && opt.eps <= 1e-2, "gradient_check: eps must lie in [1e-5, 1e-2]");
  GradCheckResult result;
  if (params.empty()) return result;

  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor<double> loss = build();
  if (!std::isfinite(loss.item())) fail(ErrorKind::numeric_failure, "gradient_check: non-finite loss");
  backward(loss);

  auto eval = [&](std::uint64_t& signature) {
    NoGradGuard guard;
    detail::KinkTrace trace;
    detail::KinkTraceScope scope(trace);
    const double v = build().item();
    if (!std::isfinite(v)) fail(ErrorKind::numeric_failure, "gradient_check: non-finite loss");
    signature = trace.hash;
    return v;
  };
  std::uint64_t base_sig = 0;
  eval(base_sig);

  Prng prng(opt.sample_seed);
  const std::size_t quota = opt.max_coords_per_param;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    std::size_t taken = 0, tried = 0;
    for (std::size_t i : detail::coord_order(p.numel(), quota != 0, prng)) {
      if (quota != 0 && (taken == quota || tried == 4 * quota)) break;
      ++tried;
      const double orig = p[i];
      std::uint64_t up_sig = 0, down_sig = 0;
      p[i] = orig + opt.eps;
      const double up = eval(up_sig);
      p[i] = orig - opt.eps;
      const double down = eval(down_sig);
      p[i] = orig;
      if (opt.skip_kinks && (up_sig != base_sig || down_sig != base_sig)) {
        ++result.coords_skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * opt.eps);
      if (std::max(std::fabs(analytic[i]), std::fabs(numeric)) < opt.flat_floor) {
        ++result.coords_flat;
        ++taken;
        continue;
      }
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      ++result.coords_checked;
      ++taken;
    }
  }
  return result;
}

/// Full central-difference gradient of the loss with respect to one tensor.
inline std::vector<double> numeric_gradient(const std::function<Tensor<double>()>& build, Tensor<double> param,
                                            double eps) {
  NoGradGuard guard;
  std::vector<double> out(param.numel());
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double orig = param[i];
    param[i] = orig + eps;
    const double up = build().item();
    param[i] = orig - eps;
    const double down = build().item();
    param[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) fail(ErrorKind::numeric_failure, "numeric_gradient: non-finite loss");
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

/// Maximum relative error between two gradient vectors of equal length.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  require(analytic.size() == numeric.size(), "max_relative_error: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) m = std::max(m, relative_error(analytic[i], numeric[i]));
  return m;
}

}  // namespace mifruit
