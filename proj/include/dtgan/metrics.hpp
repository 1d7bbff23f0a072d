#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtgan {

// K candidate futures for one window, absolute coordinates, plus the truth.
struct PredictionSet {
  int k = 0;
  int t_len = 0;
  int n = 0;
  std::vector<double> samples;  // [K x T x N x 2]
  std::vector<double> truth;    // [T x N x 2]

  double sample_at(int kk, int t, int i, int c) const {
    return samples[static_cast<std::size_t>((((kk * t_len) + t) * n + i) * 2 + c)];
  }
  double truth_at(int t, int i, int c) const {
    return truth[static_cast<std::size_t>((t * n + i) * 2 + c)];
  }
};

// Best-of-K displacement errors. Each pedestrian independently picks its best
// sample, separately for the averaged (ADE) and final-frame (FDE) error; the
// result is the mean over pedestrians.
inline std::pair<double, double> ade_fde(const PredictionSet& p) {
  if (p.k < 1 || p.n < 1 || p.t_len < 1) {
    throw std::invalid_argument("ade_fde: empty prediction set");
  }
  double ade_sum = 0.0, fde_sum = 0.0;
  for (int i = 0; i < p.n; ++i) {
    double best_ade = 0.0, best_fde = 0.0;
    for (int k = 0; k < p.k; ++k) {
      double dist_sum = 0.0, final_dist = 0.0;
      for (int t = 0; t < p.t_len; ++t) {
        const double dx = p.sample_at(k, t, i, 0) - p.truth_at(t, i, 0);
        const double dy = p.sample_at(k, t, i, 1) - p.truth_at(t, i, 1);
        const double d = std::sqrt(dx * dx + dy * dy);
        dist_sum += d;
        if (t == p.t_len - 1) final_dist = d;
      }
      const double a = dist_sum / p.t_len;
      if (k == 0 || a < best_ade) best_ade = a;
      if (k == 0 || final_dist < best_fde) best_fde = final_dist;
    }
    ade_sum += best_ade;
    fde_sum += best_fde;
  }
  return {ade_sum / p.n, fde_sum / p.n};
}

// Per-(frame, pedestrian) Gaussian fit over the K samples.
struct FittedGaussian {
  int t_len = 0, n = 0;
  std::vector<double> mu_hat;   // [T x N x 2]
  std::vector<double> cov_hat;  // [T x N x 2 x 2] row-major (xx, xy, yx, yy)

  double mu_at(int t, int i, int c) const {
    return mu_hat[static_cast<std::size_t>((t * n + i) * 2 + c)];
  }
  double cov_at(int t, int i, int r, int c) const {
    return cov_hat[static_cast<std::size_t>(((t * n + i) * 2 + r) * 2 + c)];
  }
};

// Sample mean and unbiased sample covariance per (t, i) across the K samples.
inline FittedGaussian fit_gaussians(const PredictionSet& p) {
  if (p.k < 2) {
    throw std::invalid_argument(
        "fit_gaussians: need at least 2 samples for a covariance, got " +
        std::to_string(p.k));
  }
  FittedGaussian f;
  f.t_len = p.t_len;
  f.n = p.n;
  f.mu_hat.assign(static_cast<std::size_t>(p.t_len * p.n * 2), 0.0);
  f.cov_hat.assign(static_cast<std::size_t>(p.t_len * p.n * 4), 0.0);
  for (int t = 0; t < p.t_len; ++t)
    for (int i = 0; i < p.n; ++i) {
      double mx = 0.0, my = 0.0;
      for (int k = 0; k < p.k; ++k) {
        mx += p.sample_at(k, t, i, 0);
        my += p.sample_at(k, t, i, 1);
      }
      mx /= p.k;
      my /= p.k;
      double cxx = 0.0, cxy = 0.0, cyy = 0.0;
      for (int k = 0; k < p.k; ++k) {
        const double dx = p.sample_at(k, t, i, 0) - mx;
        const double dy = p.sample_at(k, t, i, 1) - my;
        cxx += dx * dx;
        cxy += dx * dy;
        cyy += dy * dy;
      }
      const double denom = p.k - 1;  // unbiased
      const auto m = static_cast<std::size_t>((t * p.n + i) * 2);
      f.mu_hat[m] = mx;
      f.mu_hat[m + 1] = my;
      const auto c = static_cast<std::size_t>((t * p.n + i) * 4);
      f.cov_hat[c] = cxx / denom;
      f.cov_hat[c + 1] = cxy / denom;
      f.cov_hat[c + 2] = cxy / denom;
      f.cov_hat[c + 3] = cyy / denom;
    }
  return f;
}

// Average Mahalanobis distance between the truth points and the fitted
// distributions; the covariance gets a tiny ridge before the closed-form
// 2x2 inversion, just enough to keep an exactly-degenerate sample
// covariance invertible without measurably moving well-conditioned scores.
inline double amd(const FittedGaussian& f, const std::vector<double>& truth) {
  if (static_cast<int>(truth.size()) != f.t_len * f.n * 2) {
    throw std::invalid_argument("amd: truth size does not match the fit");
  }
  double acc = 0.0;
  for (int t = 0; t < f.t_len; ++t)
    for (int i = 0; i < f.n; ++i) {
      const double a = f.cov_at(t, i, 0, 0) + 1e-12;
      const double b = f.cov_at(t, i, 0, 1);
      const double d = f.cov_at(t, i, 1, 1) + 1e-12;
      const double det = a * d - b * b;
      if (det <= 0.0 || !std::isfinite(det)) {
        throw std::runtime_error("amd: covariance singular at frame " +
                                 std::to_string(t) + ", pedestrian " +
                                 std::to_string(i));
      }
      const double dx = truth[static_cast<std::size_t>((t * f.n + i) * 2)] -
                        f.mu_at(t, i, 0);
      const double dy = truth[static_cast<std::size_t>((t * f.n + i) * 2 + 1)] -
                        f.mu_at(t, i, 1);
      // [dx dy] Sigma^-1 [dx dy]^T with the adjugate inverse
      const double q = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
      acc += std::sqrt(q);
    }
  return acc / (f.t_len * f.n);
}

// Average largest-amplitude eigenvalue of the fitted covariances: overall
// spread of the predicted cloud. Closed-form symmetric 2x2 eigenvalues.
inline double amv(const FittedGaussian& f) {
  double acc = 0.0;
  for (int t = 0; t < f.t_len; ++t)
    for (int i = 0; i < f.n; ++i) {
      const double a = f.cov_at(t, i, 0, 0);
      const double b = f.cov_at(t, i, 0, 1);
      const double d = f.cov_at(t, i, 1, 1);
      const double mean = 0.5 * (a + d);
      const double r = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
      const double l1 = mean + r, l2 = mean - r;
      acc += std::abs(l1) >= std::abs(l2) ? l1 : l2;
    }
  return acc / (f.t_len * f.n);
}

struct MetricRow {
  std::string name;
  double ade = 0.0, fde = 0.0, amd = 0.0, amv = 0.0;
};

// Plain text table with one row per scene plus an AVG row.
inline std::string format_metric_table(const std::vector<MetricRow>& rows) {
  std::string out = "scene        ade      fde      amd      amv\n";
  char buf[160];
  MetricRow avg{"AVG", 0, 0, 0, 0};
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-10s %8.4f %8.4f %8.4f %8.4f\n",
                  r.name.c_str(), r.ade, r.fde, r.amd, r.amv);
    out += buf;
    avg.ade += r.ade;
    avg.fde += r.fde;
    avg.amd += r.amd;
    avg.amv += r.amv;
  }
  if (!rows.empty()) {
    const auto n = static_cast<double>(rows.size());
    std::snprintf(buf, sizeof(buf), "%-10s %8.4f %8.4f %8.4f %8.4f\n", "AVG",
                  avg.ade / n, avg.fde / n, avg.amd / n, avg.amv / n);
    out += buf;
  }
  return out;
}

}  // namespace dtgan
