#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtgan/diff_array.hpp"
#include "dtgan/generator.hpp"

namespace dtgan {

enum class LossVariant { dtgan, dtgan_m, dtgan_g, dtgan_u };

inline LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "dtgan") return LossVariant::dtgan;
  if (s == "dtgan-m" || s == "dtgan_m") return LossVariant::dtgan_m;
  if (s == "dtgan-g" || s == "dtgan_g") return LossVariant::dtgan_g;
  if (s == "dtgan-u" || s == "dtgan_u") return LossVariant::dtgan_u;
  throw std::invalid_argument("unknown loss variant '" + s + "'");
}

inline std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::dtgan: return "dtgan";
    case LossVariant::dtgan_m: return "dtgan-m";
    case LossVariant::dtgan_g: return "dtgan-g";
    case LossVariant::dtgan_u: return "dtgan-u";
  }
  return "?";
}

struct LossConfig {
  LossVariant variant = LossVariant::dtgan;
  double gamma = 1.0;         // task-loss weight
  int k_samples = 20;         // variety-loss sample count
  double r_hat_epsilon = 1e-8;  // density denominator guard of the disk loss

  void validate() const {
    if (gamma < 0.0) throw std::invalid_argument("LossConfig: gamma must be >= 0");
    if (k_samples < 1) throw std::invalid_argument("LossConfig: K must be >= 1");
    if (r_hat_epsilon <= 0.0)
      throw std::invalid_argument("LossConfig: r_hat_epsilon must be > 0");
  }
};

// Wasserstein pair: the critic drives real scores above fake ones by
// minimizing d_loss = mean(fake) - mean(real); the generator minimizes
// g_loss = -mean(fake).
inline std::pair<DiffArray, DiffArray> wgan_losses(const DiffArray& scores_fake,
                                                   const DiffArray& scores_real) {
  if (scores_fake.size() < 1 || scores_real.size() < 1) {
    throw std::invalid_argument("wgan_losses: empty score vector");
  }
  if (scores_fake.shape() != scores_real.shape()) {
    throw std::invalid_argument("wgan_losses: score shapes differ: " +
                                shape_str(scores_fake.shape()) + " vs " +
                                shape_str(scores_real.shape()));
  }
  auto d_loss = sub(mean(scores_fake), mean(scores_real));
  auto g_loss = neg(mean(scores_fake));
  return {d_loss, g_loss};
}

// Variety loss: each pedestrian keeps only its best sample. Per sample and
// pedestrian the error is the time-averaged squared Euclidean displacement
// between prediction and truth; the min over the K samples is averaged over
// pedestrians.
inline DiffArray variety_mse(const std::vector<DiffArray>& samples,
                             const DiffArray& truth) {
  if (samples.empty()) {
    throw std::invalid_argument("variety_mse: need at least one sample");
  }
  if (truth.rank() != 3 || truth.dim(2) != 2) {
    throw std::invalid_argument("variety_mse: truth must be [T x N x 2], got " +
                                shape_str(truth.shape()));
  }
  const int T = truth.dim(0);
  std::vector<DiffArray> per_sample_err;
  per_sample_err.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.shape() != truth.shape()) {
      throw std::invalid_argument("variety_mse: sample shape " +
                                  shape_str(s.shape()) +
                                  " does not match truth " +
                                  shape_str(truth.shape()));
    }
    auto diff = sub(s, truth);                        // [T x N x 2]
    auto sq = mul(diff, diff);
    auto per_tn = sum_axis(sq, 2);                    // [T x N]
    auto per_ped = scale(sum_axis(per_tn, 0), 1.0 / T);  // [N]
    per_sample_err.push_back(per_ped);
  }
  return mean(min_axis0(stack0(per_sample_err)));  // min over K, mean over N
}

// Negative log-likelihood of the truth displacements under per-(t, i)
// bivariate Gaussians, value level. Mean over pedestrians of the per-frame
// NLL sum.
inline double gaussian_nll(const GaussianParams& p,
                           const std::vector<double>& truth) {
  if (static_cast<int>(truth.size()) != p.t_len * p.n * 2) {
    throw std::invalid_argument("gaussian_nll: truth size mismatch");
  }
  const double log2pi = std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (int t = 0; t < p.t_len; ++t)
    for (int i = 0; i < p.n; ++i) {
      const auto m = static_cast<std::size_t>((t * p.n + i) * 2);
      const double sx = p.sigma[m], sy = p.sigma[m + 1];
      const double rho = p.rho[static_cast<std::size_t>(t * p.n + i)];
      auto bad = [&](const std::string& why) {
        throw std::invalid_argument("gaussian_nll: " + why + " at frame " +
                                    std::to_string(t) + ", pedestrian " +
                                    std::to_string(i));
      };
      if (!std::isfinite(sx) || !std::isfinite(sy) || !std::isfinite(rho) ||
          !std::isfinite(p.mu[m]) || !std::isfinite(p.mu[m + 1]) ||
          !std::isfinite(truth[m]) || !std::isfinite(truth[m + 1]))
        bad("non-finite input");
      if (sx <= 0.0 || sy <= 0.0) bad("non-positive sigma");
      if (std::abs(rho) >= 1.0) bad("correlation outside (-1, 1)");
      const double dx = (truth[m] - p.mu[m]) / sx;
      const double dy = (truth[m + 1] - p.mu[m + 1]) / sy;
      const double omr = 1.0 - rho * rho;
      const double q = dx * dx - 2.0 * rho * dx * dy + dy * dy;
      acc += log2pi + std::log(sx) + std::log(sy) + 0.5 * std::log(omr) +
             q / (2.0 * omr);
    }
  return acc / p.n;
}

// Differentiable Gaussian NLL straight from the decoder's raw channels
// (mu_x, mu_y, log sigma_x, log sigma_y, atanh rho). Same value as
// gaussian_nll composed with the activations.
inline DiffArray gaussian_nll_loss(const DiffArray& raw,
                                   const std::vector<double>& truth) {
  if (raw.rank() != 3 || raw.dim(2) < 5) {
    throw std::invalid_argument(
        "gaussian_nll_loss: want [T x N x 5+] raw channels, got " +
        shape_str(raw.shape()));
  }
  const int T = raw.dim(0), N = raw.dim(1);
  if (static_cast<int>(truth.size()) != T * N * 2) {
    throw std::invalid_argument("gaussian_nll_loss: truth size mismatch");
  }
  auto ch = [&](int c) { return reshape(slice(raw, 2, c, 1), {T, N}); };
  std::vector<double> tx(static_cast<std::size_t>(T * N)),
      ty(static_cast<std::size_t>(T * N));
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < N; ++i) {
      tx[static_cast<std::size_t>(t * N + i)] =
          truth[static_cast<std::size_t>((t * N + i) * 2)];
      ty[static_cast<std::size_t>(t * N + i)] =
          truth[static_cast<std::size_t>((t * N + i) * 2 + 1)];
    }
  auto truth_x = DiffArray::from({T, N}, std::move(tx));
  auto truth_y = DiffArray::from({T, N}, std::move(ty));

  auto log_sx = ch(2);
  auto log_sy = ch(3);
  auto rho = tanh(ch(4));
  // normalized residuals: (x - mu) * exp(-log sigma)
  auto dx = mul(sub(truth_x, ch(0)), exp(neg(log_sx)));
  auto dy = mul(sub(truth_y, ch(1)), exp(neg(log_sy)));
  auto omr = add_scalar(neg(mul(rho, rho)), 1.0);  // 1 - rho^2
  auto q = add(sub(mul(dx, dx), scale(mul(rho, mul(dx, dy)), 2.0)), mul(dy, dy));
  const double log2pi = std::log(2.0 * std::numbers::pi);
  auto nll = add(add(add_scalar(add(log_sx, log_sy), log2pi),
                     scale(log(omr), 0.5)),
                 div(q, scale(omr, 2.0)));   // [T x N]
  return mean(sum_axis(nll, 0));             // sum over t, mean over peds
}

// Uniform-disk NLL, value level. The truth displacement (measured from the
// disk center) either lands inside the radius — density 1/(pi r^2 + eps) —
// or outside, density 0; the 1e-12 floor keeps the out-of-disk log finite.
inline double uniform_nll(const std::vector<double>& r_hat,
                          const std::vector<double>& truth_disp, int t_len,
                          int n, double epsilon) {
  if (static_cast<int>(r_hat.size()) != t_len * n ||
      static_cast<int>(truth_disp.size()) != t_len * n * 2) {
    throw std::invalid_argument("uniform_nll: size mismatch");
  }
  if (epsilon < 0.0) {
    throw std::invalid_argument("uniform_nll: epsilon must be >= 0");
  }
  constexpr double kFloor = 1e-12;
  double acc = 0.0;
  for (int t = 0; t < t_len; ++t)
    for (int i = 0; i < n; ++i) {
      const double r = r_hat[static_cast<std::size_t>(t * n + i)];
      if (r <= 0.0) {
        throw std::invalid_argument("uniform_nll: non-positive radius at frame " +
                                    std::to_string(t) + ", pedestrian " +
                                    std::to_string(i));
      }
      const double x = truth_disp[static_cast<std::size_t>((t * n + i) * 2)];
      const double y = truth_disp[static_cast<std::size_t>((t * n + i) * 2 + 1)];
      const double inside = std::sqrt(x * x + y * y) < r ? 1.0 : 0.0;
      const double density = inside / (std::numbers::pi * r * r + epsilon);
      acc += -std::log(density + kFloor);
    }
  return acc / n;
}

// Differentiable disk loss from the decoder's raw channels (mu_x, mu_y,
// log r). The disk for frame t is centered at the previous *predicted*
// position, so the truth displacement is measured against the model's own
// rollout. The inside/outside indicator is a value-level constant — the flat
// density has zero positional gradient almost everywhere, so only the radius
// channel receives gradient. That is the honest derivative of the objective,
// and it is the main suspect for why this variant trains poorly.
inline DiffArray uniform_nll_loss(const DiffArray& raw,
                                  const TrajectoryBatch& batch,
                                  double epsilon) {
  if (raw.rank() != 3 || raw.dim(2) < 3) {
    throw std::invalid_argument(
        "uniform_nll_loss: want [T x N x 3+] raw channels, got " +
        shape_str(raw.shape()));
  }
  if (epsilon <= 0.0) {
    throw std::invalid_argument("uniform_nll_loss: epsilon must be > 0");
  }
  const int T = raw.dim(0), N = raw.dim(1);
  if (batch.pred_len != T || batch.n_peds() != N) {
    throw std::invalid_argument("uniform_nll_loss: batch does not match raw shape");
  }
  auto mu = concat(slice(raw, 2, 0, 1), slice(raw, 2, 1, 1), 2);  // [T x N x 2]
  auto r = reshape(exp(slice(raw, 2, 2, 1)), {T, N});

  // Rollout of predicted absolute positions (value level is enough for the
  // indicator; the graph rollout exists for callers needing positions).
  std::vector<double> mask(static_cast<std::size_t>(T * N), 0.0);
  {
    const auto& mv = mu.values();
    const auto& rv = r.values();
    for (int i = 0; i < N; ++i) {
      double cx = batch.abs_at(batch.obs_len - 1, i, 0);
      double cy = batch.abs_at(batch.obs_len - 1, i, 1);
      for (int t = 0; t < T; ++t) {
        const double txv = batch.abs_at(batch.obs_len + t, i, 0);
        const double tyv = batch.abs_at(batch.obs_len + t, i, 1);
        const double dx = txv - cx, dy = tyv - cy;
        if (std::sqrt(dx * dx + dy * dy) <
            rv[static_cast<std::size_t>(t * N + i)])
          mask[static_cast<std::size_t>(t * N + i)] = 1.0;
        cx += mv[static_cast<std::size_t>((t * N + i) * 2)];
        cy += mv[static_cast<std::size_t>((t * N + i) * 2 + 1)];
      }
    }
  }
  constexpr double kFloor = 1e-12;
  auto denom = add_scalar(scale(mul(r, r), std::numbers::pi), epsilon);
  auto density = div(DiffArray::from({T, N}, mask), denom);
  auto nll = neg(log(add_scalar(density, kFloor)));  // [T x N]
  return mean(sum_axis(nll, 0));
}

// Composite objective: the plain variant is purely adversarial; the others
// add the weighted task loss.
inline DiffArray total_generator_loss(const LossConfig& cfg,
                                      const DiffArray& g_adv,
                                      const DiffArray& task) {
  if (cfg.variant == LossVariant::dtgan) return g_adv;
  return add(g_adv, scale(task, cfg.gamma));
}

}  // namespace dtgan
