// Release gate: eight self-contained checks, one printed line each
// (PASS / FAIL / SKIP with a reason). Exits nonzero if any check fails.
// Unlike the unit suites this binary trains real (tiny) models end to end,
// so it owns its tolerances and budgets in one place.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "dtgan/dtgan.hpp"

using namespace dtgan;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
std::vector<std::string> lines(9);

void record(int num, bool pass, const std::string& detail) {
  lines[static_cast<std::size_t>(num)] =
      "criterion " + std::to_string(num) + ": " +
      (pass ? "PASS" : "FAIL") + " — " + detail;
  if (!pass) ++failures;
}

void record_skip(int num, const std::string& why) {
  lines[static_cast<std::size_t>(num)] =
      "criterion " + std::to_string(num) + ": SKIP — " + why;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- check 1
// Analytic gradients vs central finite differences for both generator heads
// and the critic, at the contract sizes N=4, T_o=8, T_p=12, F=8. Parameters
// are randomized first: with zero biases the frame-0 features (identically
// zero displacements) park every rectifier exactly on its kink, where a
// two-sided difference quotient measures the average of the one-sided slopes
// instead of a derivative.
struct FdStats {
  int resolved = 0;    // entries large enough for the relative comparison
  int unresolved = 0;  // below the difference quotient's own noise floor
  double worst = 0.0;
  bool ok = true;
};

// Central differences at h=1e-6 carry rounding noise of roughly
// ulp(loss)/h ~ 1e-9 absolute, so gradients smaller than 1e-4 cannot be
// certified to a 1e-4 relative error; those entries get an absolute
// agreement check instead and are excluded from the headline count.
template <typename LossFn>
void fd_sweep(ParameterStore& ps, LossFn loss_of, int per_tensor,
              std::uint64_t pick_seed, FdStats& st) {
  ps.zero_grads();
  loss_of().backward();
  const double h = 1e-6;
  Rng pick(pick_seed);
  for (auto& [name, p] : ps.entries()) {
    (void)name;
    const int k = std::min<int>(per_tensor, static_cast<int>(p.size()));
    for (int c = 0; c < k; ++c) {
      const auto ix = pick.next_index(p.values().size());
      const double saved = p.values()[ix];
      p.mutable_values()[ix] = saved + h;
      const double fp = loss_of().item();
      p.mutable_values()[ix] = saved - h;
      const double fm = loss_of().item();
      p.mutable_values()[ix] = saved;
      const double numeric = (fp - fm) / (2 * h);
      const double analytic = p.grad()[ix];
      if (std::max(std::abs(numeric), std::abs(analytic)) < 1e-4) {
        if (std::abs(numeric - analytic) >= 1e-6) st.ok = false;
        ++st.unresolved;
        continue;
      }
      const double denom = std::max(std::abs(numeric), std::abs(analytic));
      const double rel = std::abs(numeric - analytic) / denom;
      st.worst = std::max(st.worst, rel);
      if (rel >= 1e-4) st.ok = false;
      ++st.resolved;
    }
  }
}

TrajectoryBatch random_batch(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrackPoint> pts;
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform(-3, 3), y = rng.uniform(-3, 3);
    for (int f = 0; f < 20; ++f) {
      pts.push_back({f, i, x, y});
      x += rng.uniform(-0.5, 0.5);
      y += rng.uniform(-0.5, 0.5);
    }
  }
  return extract_sequences(pts, 20, n - 1, 1, 8).at(0);
}

void randomize(ParameterStore& ps, std::uint64_t seed, double amp) {
  Rng r(seed);
  for (auto& [name, p] : ps.entries()) {
    (void)name;
    for (auto& v : p.mutable_values()) v = r.uniform(-amp, amp);
  }
}

void check_gradients() {
  const auto t0 = Clock::now();
  FdStats st;
  auto batch = random_batch(4, 31);
  auto g = build_graphs(batch, 5);

  {  // point head: weighted sum of the absolute rollout
    GeneratorConfig cfg;
    ParameterStore ps;
    Generator gen(cfg, ps, 2024);
    randomize(ps, 7151, 0.6);
    Rng wr(6);
    std::vector<double> wv(12 * 4 * 2);
    for (auto& v : wv) v = wr.uniform(-1, 1);
    auto weights = DiffArray::from({12, 4, 2}, wv);
    std::vector<double> last(4 * 2);
    for (int i = 0; i < 4; ++i)
      for (int c = 0; c < 2; ++c)
        last[static_cast<std::size_t>(i * 2 + c)] = batch.abs_at(7, i, c);
    auto last_obs = DiffArray::from({4, 2}, last);
    auto loss_of = [&]() {
      return sum(mul(rel_to_abs_graph(gen.forward(g), last_obs), weights));
    };
    fd_sweep(ps, loss_of, 8, 101, st);
  }

  {  // gaussian head: the likelihood loss exercises exp and tanh links
    GeneratorConfig cfg;
    cfg.head = OutputHead::gaussian;
    ParameterStore ps;
    Generator gen(cfg, ps, 2025);
    // the likelihood exponentiates a network output to get sigma, so large
    // random weights drive sigma toward zero and the loss (and its
    // curvature) into territory no finite difference can resolve
    randomize(ps, 7152, 0.3);
    std::vector<double> truth;
    for (int t = 0; t < 12; ++t)
      for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 2; ++c) truth.push_back(batch.rel_at(8 + t, i, c));
    auto loss_of = [&]() { return gaussian_nll_loss(gen.forward(g), truth); };
    fd_sweep(ps, loss_of, 8, 102, st);
  }

  {  // critic over a full observed-plus-future trajectory
    DiscriminatorConfig cfg;
    ParameterStore ps;
    Discriminator disc(cfg, ps, 2026);
    randomize(ps, 7153, 0.6);
    Rng ir(12);
    std::vector<double> traj(20 * 4 * 2);
    for (auto& v : traj) v = ir.uniform(-1, 1);
    auto input = DiffArray::from({20, 4, 2}, traj);
    auto loss_of = [&]() { return sum(disc.score(input)); };
    fd_sweep(ps, loss_of, 10, 103, st);
  }

  const double secs = seconds_since(t0);
  char buf[180];
  std::snprintf(buf, sizeof buf,
                "%d entries, worst rel err %.2e (limit 1e-4), %d more below "
                "the noise floor agreed absolutely, %.1fs (limit 60s)",
                st.resolved, st.worst, st.unresolved, secs);
  record(1, st.ok && st.resolved >= 200 && secs < 60.0, buf);
}

// ---------------------------------------------------------------- check 2
// Window extraction vs a literal re-derivation: enumerate unique frames,
// slide every window, intersect pedestrian presence frame by frame, keep
// strictly more than min_ped. Random gaps in both frame ids and presence.
void check_extraction() {
  Rng rng(4242);
  bool ok = true;
  int windows = 0;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    const int n_frames = 4 + static_cast<int>(rng.next_index(10));
    const int n_peds = 2 + static_cast<int>(rng.next_index(6));
    const int slen = 2 + static_cast<int>(rng.next_index(4));
    const int min_ped = 1 + static_cast<int>(rng.next_index(3));
    const int skip = 1 + static_cast<int>(rng.next_index(3));

    std::vector<TrackPoint> pts;
    long long frame = 0;
    for (int f = 0; f < n_frames; ++f) {
      frame += 1 + static_cast<long long>(rng.next_index(3));  // gappy ids
      for (int p = 0; p < n_peds; ++p)
        if (rng.uniform() < 0.75)
          pts.push_back({frame, p, rng.uniform(-10, 10), rng.uniform(-10, 10)});
    }

    // oracle
    std::set<long long> frame_set;
    std::set<long long> ped_set;
    std::map<std::pair<long long, long long>, std::pair<double, double>> at;
    for (const auto& p : pts) {
      frame_set.insert(p.frame_id);
      ped_set.insert(p.ped_id);
      at[{p.frame_id, p.ped_id}] = {p.x, p.y};
    }
    std::vector<long long> frames(frame_set.begin(), frame_set.end());
    struct Want {
      std::vector<long long> peds;
      std::vector<double> abs;
    };
    std::vector<Want> want;
    for (std::size_t s = 0;
         s + static_cast<std::size_t>(slen) <= frames.size();
         s += static_cast<std::size_t>(skip)) {
      std::vector<long long> keep;
      for (long long pid : ped_set) {
        bool full = true;
        for (int t = 0; t < slen; ++t)
          if (!at.count({frames[s + static_cast<std::size_t>(t)], pid}))
            full = false;
        if (full) keep.push_back(pid);
      }
      if (static_cast<int>(keep.size()) <= min_ped) continue;
      Want w;
      w.peds = keep;
      for (int t = 0; t < slen; ++t)
        for (long long pid : keep) {
          auto [x, y] = at[{frames[s + static_cast<std::size_t>(t)], pid}];
          w.abs.push_back(x);
          w.abs.push_back(y);
        }
      want.push_back(std::move(w));
    }

    auto got = extract_sequences(pts, slen, min_ped, skip);
    if (got.size() != want.size()) {
      ok = false;
      break;
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i].ped_ids != want[i].peds ||
          got[i].abs_pos != want[i].abs)
        ok = false;
    }
    windows += static_cast<int>(got.size());
  }
  record(2, ok, "100 random datasets, " + std::to_string(windows) +
                    " windows, exact match");
}

// ---------------------------------------------------------------- check 3
// Hand-computable anchors for every metric and likelihood.
void check_metric_anchors() {
  bool ok = true;
  std::string bad;

  {  // constant (0.3, 0.4) offset: every displacement error is 0.5
    PredictionSet p;
    p.k = 1;
    p.t_len = 12;
    p.n = 1;
    p.samples.resize(12 * 2);
    p.truth.resize(12 * 2);
    for (int t = 0; t < 12; ++t) {
      p.truth[static_cast<std::size_t>(2 * t)] = 1.0 * t;
      p.truth[static_cast<std::size_t>(2 * t + 1)] = 2.0 * t;
      p.samples[static_cast<std::size_t>(2 * t)] = 1.0 * t + 0.3;
      p.samples[static_cast<std::size_t>(2 * t + 1)] = 2.0 * t + 0.4;
    }
    auto [ade, fde] = ade_fde(p);
    if (std::abs(ade - 0.5) > 1e-12 || std::abs(fde - 0.5) > 1e-12) {
      ok = false;
      bad += " ade_fde";
    }
  }

  {  // identity covariance: Mahalanobis collapses to Euclidean
    const int T = 2, N = 2;
    FittedGaussian f;
    f.t_len = T;
    f.n = N;
    f.mu_hat.assign(T * N * 2, 0.0);
    f.cov_hat.assign(T * N * 4, 0.0);
    Rng rng(5);
    std::vector<double> truth(T * N * 2);
    for (auto& v : truth) v = rng.uniform(-3, 3);
    for (auto& v : f.mu_hat) v = rng.uniform(-3, 3);
    for (int j = 0; j < T * N; ++j) {
      f.cov_hat[static_cast<std::size_t>(4 * j)] = 1.0;
      f.cov_hat[static_cast<std::size_t>(4 * j + 3)] = 1.0;
    }
    double want = 0.0;
    for (int j = 0; j < T * N; ++j)
      want += std::hypot(truth[static_cast<std::size_t>(2 * j)] -
                             f.mu_hat[static_cast<std::size_t>(2 * j)],
                         truth[static_cast<std::size_t>(2 * j + 1)] -
                             f.mu_hat[static_cast<std::size_t>(2 * j + 1)]);
    want /= T * N;
    if (std::abs(amd(f, truth) - want) > 1e-9) {
      ok = false;
      bad += " amd";
    }
  }

  {  // diag(4, 1): spread score is the dominant eigenvalue
    FittedGaussian f;
    f.t_len = 1;
    f.n = 1;
    f.mu_hat.assign(2, 0.0);
    f.cov_hat = {4.0, 0.0, 0.0, 1.0};
    if (std::abs(amv(f) - 4.0) > 1e-12) {
      ok = false;
      bad += " amv";
    }
  }

  {  // truth at the mean of a unit isotropic gaussian: log(2 pi) per frame
    GaussianParams p;
    p.t_len = 1;
    p.n = 1;
    p.mu = {0.5, 0.5};
    p.sigma = {1.0, 1.0};
    p.rho = {0.0};
    const double nll = gaussian_nll(p, {0.5, 0.5});
    if (std::abs(nll - std::log(2 * std::numbers::pi)) > 1e-9) {
      ok = false;
      bad += " gaussian_nll";
    }
  }

  {  // inside a unit disk the density is 1/pi
    const double nll = uniform_nll({1.0}, {0.1, 0.2}, 1, 1, 0.0);
    if (std::abs(nll - std::log(std::numbers::pi)) > 1e-9) {
      ok = false;
      bad += " uniform_nll";
    }
  }

  record(3, ok, ok ? "all five anchor values exact within tolerance"
                   : "failed:" + bad);
}

// ---------------------------------------------------------------- check 4
// Benchmark preprocessing counts. Needs the released scene files on disk
// (DTGAN_DATA_DIR with one directory per scene); skipped otherwise.
void check_dataset_counts() {
  const char* root = std::getenv("DTGAN_DATA_DIR");
  if (!root || !*root) {
    record_skip(4,
                "DTGAN_DATA_DIR is not set; place the benchmark scene "
                "directories there to enable this check");
    return;
  }
  const auto t0 = Clock::now();
  struct Expect {
    const char* scene;
    std::size_t train, val, test;
  };
  const std::vector<Expect> table = {{"eth", 2785, 660, 70},
                                     {"hotel", 2594, 621, 301},
                                     {"univ", 2076, 530, 947},
                                     {"zara1", 2322, 605, 602},
                                     {"zara2", 2112, 501, 921}};
  std::vector<std::string> names;
  for (const auto& e : table)
    if (fs::is_directory(fs::path(root) / e.scene)) names.push_back(e.scene);
  if (names.empty()) {
    record_skip(4, std::string("no scene directories under ") + root);
    return;
  }
  auto scenes = scan_scenes(root, names);
  bool ok = true;
  std::string detail;
  for (const auto& e : table) {
    bool present = false;
    for (const auto& n : names) present = present || n == e.scene;
    if (!present) continue;
    auto split = make_splits(scenes, e.scene);
    auto within = [](std::size_t got, std::size_t want) {
      return std::abs(static_cast<double>(got) - static_cast<double>(want)) <=
             0.05 * static_cast<double>(want);
    };
    const bool good = within(split.train.size(), e.train) &&
                      within(split.val.size(), e.val) &&
                      within(split.test.size(), e.test);
    ok = ok && good;
    detail += std::string(e.scene) + " " + std::to_string(split.train.size()) +
              "/" + std::to_string(split.val.size()) + "/" +
              std::to_string(split.test.size()) + (good ? " ok; " : " BAD; ");
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%.1fs, limit 120s)", secs);
  record(4, ok, detail + buf);
}

// ------------------------------------------------------- checks 5, 6, 7
// Shared synthetic corpus: 200 constant-velocity trajectories observed with
// small gaussian jitter, so the repeat-last-displacement oracle has a real
// error for the bound to scale from (on noiseless data it is zero and the
// margin collapses to the additive constant alone).
std::vector<TrajectoryBatch> cv_corpus(int n_windows, int n_peds,
                                       std::uint64_t seed) {
  std::vector<TrajectoryBatch> out;
  Rng rng(seed);
  for (int w = 0; w < n_windows; ++w) {
    std::vector<TrackPoint> pts;
    for (int i = 0; i < n_peds; ++i) {
      const double x0 = rng.uniform(-4, 4), y0 = rng.uniform(-4, 4);
      const double vx = rng.uniform(-0.5, 0.5), vy = rng.uniform(-0.5, 0.5);
      for (int f = 0; f < 20; ++f)
        pts.push_back({f, i, x0 + vx * f + 0.02 * rng.normal(),
                       y0 + vy * f + 0.02 * rng.normal()});
    }
    out.push_back(extract_sequences(pts, 20, n_peds - 1, 1, 8).at(0));
  }
  return out;
}

// repeat the last observed displacement forward
double cv_oracle_ade(const std::vector<TrajectoryBatch>& test) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& b : test) {
    for (int i = 0; i < b.n_peds(); ++i) {
      const double vx = b.rel_at(b.obs_len - 1, i, 0);
      const double vy = b.rel_at(b.obs_len - 1, i, 1);
      double x = b.abs_at(b.obs_len - 1, i, 0);
      double y = b.abs_at(b.obs_len - 1, i, 1);
      for (int t = 0; t < b.pred_len; ++t) {
        x += vx;
        y += vy;
        total += std::hypot(x - b.abs_at(b.obs_len + t, i, 0),
                            y - b.abs_at(b.obs_len + t, i, 1));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

void check_training_criteria() {
  const auto t0 = Clock::now();
  auto train = cv_corpus(50, 4, 71);  // 200 trajectories, 8-in/12-out
  auto val = cv_corpus(30, 4, 555);
  auto test = cv_corpus(30, 4, 720);

  GeneratorConfig gcfg;
  gcfg.head = OutputHead::gaussian;
  ParameterStore gs;
  Generator gen(gcfg, gs, 2025);

  TrainConfig tcfg;
  tcfg.batch_size = 8;  // the corpus is tiny; a full-size batch would leave
                        // too few optimizer steps in the fixed epoch budget
  tcfg.pretrain_epochs = 50;
  tcfg.adv_epochs = 0;
  tcfg.seed = 42;
  tcfg.loss.variant = LossVariant::dtgan_g;

  const auto ckpt =
      (fs::temp_directory_path() / "dtgan_acceptance_best.ckpt").string();
  pretrain(gen, train, val, tcfg, "", ckpt);
  load_checkpoint_into(ckpt, {&gs});  // score the best-validation state
  fs::remove(ckpt);

  auto rep = evaluate_split(gen, test, 20, 2, 9001);
  const double oracle = cv_oracle_ade(test);
  const double bound = 2 * oracle + 0.05;
  const double secs5 = seconds_since(t0);
  {
    char buf[180];
    std::snprintf(buf, sizeof buf,
                  "50-epoch ADE %.4f vs bound %.4f (2 x oracle %.4f + 0.05), "
                  "%.1fs (limit 600s)",
                  rep.ade, bound, oracle, secs5);
    record(5, rep.ade <= bound && secs5 < 600.0, buf);
  }

  {  // five evaluation seeds on the same trained model
    std::vector<double> ades, fdes;
    for (std::uint64_t es : {3ull, 42ull, 43ull, 123ull, 222ull}) {
      auto r = evaluate_split(gen, test, 20, 2, es);
      ades.push_back(r.ade);
      fdes.push_back(r.fde);
    }
    auto sa = mean_std(ades);
    auto sf = mean_std(fdes);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "5-seed ADE %.4f±%.4f FDE %.4f±%.4f (std limit 0.07)",
                  sa.mean, sa.stddev, sf.mean, sf.stddev);
    record(7, sa.stddev <= 0.07 && sf.stddev <= 0.07, buf);
  }

  {  // 20 adversarial epochs: finite losses, both clip boxes exact
    DiscriminatorConfig dcfg;
    ParameterStore ds;
    Discriminator disc(dcfg, ds, 77);
    TrainConfig acfg = tcfg;
    acfg.pretrain_epochs = 0;
    acfg.adv_epochs = 20;
    int steps = 0;
    bool finite = true, d_box = true, g_box = true;
    double worst_w = 0.0, worst_g = 0.0;
    auto observer = [&](const StepInfo& si) {
      if (si.phase != "adv") return;
      ++steps;
      finite = finite && std::isfinite(si.d_loss) &&
               std::isfinite(si.g_loss) && std::isfinite(si.task_loss);
      d_box = d_box && si.max_abs_d_weight <= 0.1;
      g_box = g_box && si.max_abs_g_grad <= 1.0;
      worst_w = std::max(worst_w, si.max_abs_d_weight);
      worst_g = std::max(worst_g, si.max_abs_g_grad);
    };
    adversarial_train(gen, disc, train, acfg, "", observer);
    // final state double-check straight off the parameter store
    for (const auto& [name, p] : ds.entries()) {
      (void)name;
      for (double v : p.values()) d_box = d_box && std::abs(v) <= 0.1;
    }
    char buf[180];
    std::snprintf(buf, sizeof buf,
                  "%d adversarial steps, losses finite %s, max |critic w| "
                  "%.6f (<= 0.1), max |gen grad| %.6f (<= 1)",
                  steps, finite ? "yes" : "NO", worst_w, worst_g);
    record(6, steps > 0 && finite && d_box && g_box, buf);
  }
}

// ---------------------------------------------------------------- check 8
void note_long_run() {
  record_skip(8,
              "full-benchmark accuracy targets need multi-hour training on "
              "the real scenes; the recipe and expected numbers are in "
              "README.md under 'Long-run benchmark harness'");
}

}  // namespace

int main() {
  check_gradients();
  check_extraction();
  check_metric_anchors();
  check_dataset_counts();
  check_training_criteria();  // fills 5, 6, 7
  note_long_run();
  for (int i = 1; i <= 8; ++i)
    std::printf("%s\n", lines[static_cast<std::size_t>(i)].c_str());
  std::printf(failures == 0 ? "all checks passed\n"
                            : "%d check(s) failed\n",
              failures);
  return failures == 0 ? 0 : 1;
}
