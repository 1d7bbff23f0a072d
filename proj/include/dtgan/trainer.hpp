#pragma once

// Two-phase training: task-loss pre-training of the generator, then
// alternating critic/generator updates with weight and gradient clipping.
// Every source of randomness is derived from the config seed, so a run is
// reproducible bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dtgan/checkpoint.hpp"
#include "dtgan/data.hpp"
#include "dtgan/diff_array.hpp"
#include "dtgan/discriminator.hpp"
#include "dtgan/generator.hpp"
#include "dtgan/graph.hpp"
#include "dtgan/losses.hpp"
#include "dtgan/metrics.hpp"
#include "dtgan/optim.hpp"
#include "dtgan/param_store.hpp"
#include "dtgan/rng.hpp"

namespace dtgan {

struct TrainConfig {
  int batch_size = 32;
  double pretrain_lr = 0.001;  // Adam
  double adv_lr = 1e-5;        // RMSProp, both networks
  int pretrain_epochs = 50;
  int adv_epochs = 100;
  int d_steps_per_g = 1;
  double g_clip_lo = -1.0, g_clip_hi = 1.0;  // generator gradients, pre-step
  double d_clip_lo = -0.1, d_clip_hi = 0.1;  // critic weights, post-step
  std::uint64_t seed = 42;
  LossConfig loss;

  void validate() const {
    if (batch_size < 1)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (pretrain_lr <= 0.0)
      throw std::invalid_argument("TrainConfig: pretrain_lr must be > 0");
    if (adv_lr < 0.0)
      throw std::invalid_argument("TrainConfig: adv_lr must be >= 0");
    if (pretrain_epochs < 0 || adv_epochs < 0)
      throw std::invalid_argument("TrainConfig: epoch counts must be >= 0");
    if (d_steps_per_g < 1)
      throw std::invalid_argument("TrainConfig: d_steps_per_g must be >= 1");
    if (g_clip_lo > g_clip_hi || d_clip_lo > d_clip_hi)
      throw std::invalid_argument("TrainConfig: clip interval is empty");
    loss.validate();
  }
};

// One log line; the adversarial columns stay empty during pre-training.
struct TrainLogRow {
  int epoch = 0;
  std::string phase;  // "pretrain" | "adv"
  int batch = 0;
  bool has_adv = false;
  double d_loss = 0.0, g_loss = 0.0, task_loss = 0.0;

  std::string csv() const {
    char buf[160];
    if (has_adv) {
      std::snprintf(buf, sizeof buf, "%d,%s,%d,%.17g,%.17g,%.17g", epoch,
                    phase.c_str(), batch, d_loss, g_loss, task_loss);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%s,%d,,,%.17g", epoch, phase.c_str(),
                    batch, task_loss);
    }
    return buf;
  }
};

inline constexpr const char* kTrainLogHeader =
    "epoch,phase,batch,d_loss,g_loss,task_loss";

// Per optimizer step snapshot for observers (tests assert the clipping
// invariants through this).
struct StepInfo {
  std::string phase;
  int epoch = 0;
  int batch = 0;
  double d_loss = 0.0, g_loss = 0.0, task_loss = 0.0;
  double max_abs_d_weight = 0.0;  // largest |critic weight| after its clip
  double max_abs_g_grad = 0.0;    // largest |generator grad| at step time
};
using StepObserver = std::function<void(const StepInfo&)>;

struct TrainResult {
  std::vector<TrainLogRow> rows;
  std::vector<double> epoch_train_loss;  // per-epoch mean over windows
  std::vector<double> epoch_val_loss;    // pre-training only
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
};

namespace train_detail {

// Deterministic per-event seed stream, independent of how many numbers each
// consumer draws.
struct SeedStream {
  std::uint64_t tag;
  std::uint64_t n = 0;
  std::uint64_t next() { return mix_seed(tag, n++); }
};

inline DiffArray rel_window(const TrajectoryBatch& b, int t0, int len) {
  const int N = b.n_peds();
  std::vector<double> v(static_cast<std::size_t>(len * N * 2));
  for (int t = 0; t < len; ++t)
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < 2; ++c)
        v[static_cast<std::size_t>((t * N + i) * 2 + c)] =
            b.rel_at(t0 + t, i, c);
  return DiffArray::from({len, N, 2}, std::move(v));
}

inline DiffArray future_rel(const TrajectoryBatch& b) {
  return rel_window(b, b.obs_len, b.pred_len);
}
inline DiffArray obs_rel(const TrajectoryBatch& b) {
  return rel_window(b, 0, b.obs_len);
}

inline double max_abs_values(const ParameterStore& ps) {
  double m = 0.0;
  for (const auto& [name, p] : ps.entries()) {
    (void)name;
    for (double v : p.values()) m = std::max(m, std::abs(v));
  }
  return m;
}

inline double max_abs_grads(const ParameterStore& ps) {
  double m = 0.0;
  for (const auto& [name, p] : ps.entries()) {
    (void)name;
    for (double v : p.grad()) m = std::max(m, std::abs(v));
  }
  return m;
}

// A differentiable displacement sample [T_p x N x 2] plus the raw head output
// it came from. The gaussian head reparameterizes: mu + L z with z drawn
// outside the graph, so gradients reach the distribution parameters.
struct FakeSample {
  DiffArray rel;
  DiffArray raw;
};

inline FakeSample sample_fake(const Generator& gen, const GraphSequence& g,
                              Rng& noise) {
  auto raw = gen.forward(g);
  if (gen.config().head == OutputHead::point) {
    return {slice(raw, 2, 0, 2), raw};
  }
  const int T = raw.dim(0), N = raw.dim(1);
  auto ch = [&](int c) { return reshape(slice(raw, 2, c, 1), {T, N}); };
  auto mu_x = ch(0), mu_y = ch(1);
  auto sig_x = exp(ch(2)), sig_y = exp(ch(3));
  auto rho = tanh(ch(4));
  std::vector<double> z1v(static_cast<std::size_t>(T * N)),
      z2v(static_cast<std::size_t>(T * N));
  for (std::size_t j = 0; j < z1v.size(); ++j) {
    z1v[j] = noise.normal();
    z2v[j] = noise.normal();
  }
  auto z1 = DiffArray::from({T, N}, std::move(z1v));
  auto z2 = DiffArray::from({T, N}, std::move(z2v));
  auto one = DiffArray::full({T, N}, 1.0);
  auto x = add(mu_x, mul(sig_x, z1));
  auto tail = add(mul(rho, z1), mul(sqrt(sub(one, mul(rho, rho))), z2));
  auto y = add(mu_y, mul(sig_y, tail));
  auto rel = concat(reshape(x, {T, N, 1}), reshape(y, {T, N, 1}), 2);
  return {rel, raw};
}

// Critic input for one window: the future alone, or observation + future
// stitched along the time axis.
inline DiffArray critic_input(const TrajectoryBatch& b, const DiffArray& fut,
                              DiscInputMode mode) {
  if (mode == DiscInputMode::future_only) return fut;
  return concat(obs_rel(b), fut, 0);
}

// Task loss of one window. Fresh random-weight graphs are drawn from wseed
// for every forward pass; the plain variant trains on MSE (a single-sample
// variety loss) because it has no task term of its own.
inline DiffArray window_task_loss(const Generator& gen,
                                  const TrajectoryBatch& b,
                                  const LossConfig& lc,
                                  const DiffArray& truth_rel,
                                  SeedStream& wseed) {
  switch (lc.variant) {
    case LossVariant::dtgan: {
      auto g = build_graphs(b, wseed.next());
      auto raw = gen.forward(g);
      return variety_mse({slice(raw, 2, 0, 2)}, truth_rel);
    }
    case LossVariant::dtgan_m: {
      std::vector<DiffArray> samples;
      samples.reserve(static_cast<std::size_t>(lc.k_samples));
      for (int k = 0; k < lc.k_samples; ++k) {
        auto g = build_graphs(b, wseed.next());
        auto raw = gen.forward(g);
        samples.push_back(slice(raw, 2, 0, 2));
      }
      return variety_mse(samples, truth_rel);
    }
    case LossVariant::dtgan_g: {
      auto g = build_graphs(b, wseed.next());
      return gaussian_nll_loss(gen.forward(g), truth_rel.values());
    }
    case LossVariant::dtgan_u: {
      auto g = build_graphs(b, wseed.next());
      return uniform_nll_loss(gen.forward(g), b, lc.r_hat_epsilon);
    }
  }
  throw std::logic_error("window_task_loss: unreachable");
}

inline void check_variant_head(const GeneratorConfig& g, const LossConfig& lc) {
  const bool wants_gauss = lc.variant == LossVariant::dtgan_g;
  if (wants_gauss && g.head != OutputHead::gaussian)
    throw std::invalid_argument(
        "trainer: dtgan_g needs the gaussian output head");
  if (!wants_gauss && g.head != OutputHead::point)
    throw std::invalid_argument(
        "trainer: variant " + to_string(lc.variant) +
        " needs the point output head");
  if (lc.variant == LossVariant::dtgan_u && !g.radius_channel)
    throw std::invalid_argument(
        "trainer: dtgan_u needs the radius output channel");
}

struct LogSink {
  std::ofstream file;
  explicit LogSink(const std::string& path) {
    if (path.empty()) return;
    file.open(path);
    if (!file) throw std::runtime_error("trainer: cannot open log " + path);
    file << kTrainLogHeader << "\n";
  }
  void write(const TrainLogRow& row) {
    if (!file.is_open()) return;
    file << row.csv() << "\n";
    file.flush();
  }
};

}  // namespace train_detail

// Task-loss-only warm-up of the generator. Gradients accumulate over the
// windows of each mini-batch before one Adam step; the per-epoch validation
// loss decides the best checkpoint. `save_stores` is what goes into that
// checkpoint (pass the critic's store too when a later phase needs it).
inline TrainResult pretrain(
    Generator& gen, const std::vector<TrajectoryBatch>& train,
    const std::vector<TrajectoryBatch>& val, const TrainConfig& cfg,
    const std::string& log_path = "", const std::string& best_ckpt_path = "",
    std::vector<const ParameterStore*> save_stores = {},
    StepObserver observer = {}) {
  cfg.validate();
  train_detail::check_variant_head(gen.config(), cfg.loss);
  if (train.empty())
    throw std::invalid_argument("pretrain: training split is empty");
  if (save_stores.empty()) save_stores = {&gen.params()};

  TrainResult res;
  train_detail::LogSink log(log_path);
  Adam opt(cfg.pretrain_lr);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x0BEF));
  train_detail::SeedStream wseed{mix_seed(cfg.seed, 0xD7A1)};

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::vector<TrajectoryBatch>& val_split = val.empty() ? train : val;

  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_sum = 0.0;
    int epoch_windows = 0;
    int batch_idx = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++batch_idx) {
      const auto stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int m = static_cast<int>(stop - start);
      gen.params().zero_grads();
      double batch_sum = 0.0;
      for (std::size_t w = start; w < stop; ++w) {
        const auto& b = train[order[w]];
        auto truth = train_detail::future_rel(b);
        auto loss =
            train_detail::window_task_loss(gen, b, cfg.loss, truth, wseed);
        const double lv = loss.item();
        if (!std::isfinite(lv))
          throw std::runtime_error(
              "pretrain: non-finite loss at epoch " + std::to_string(epoch) +
              ", batch " + std::to_string(batch_idx));
        batch_sum += lv;
        loss.backward();
      }
      gen.params().scale_grads(1.0 / m);
      const double gmax = train_detail::max_abs_grads(gen.params());
      opt.step(gen.params());

      TrainLogRow row;
      row.epoch = epoch;
      row.phase = "pretrain";
      row.batch = batch_idx;
      row.task_loss = batch_sum / m;
      res.rows.push_back(row);
      log.write(row);
      if (observer) {
        StepInfo info;
        info.phase = "pretrain";
        info.epoch = epoch;
        info.batch = batch_idx;
        info.task_loss = row.task_loss;
        info.max_abs_g_grad = gmax;
        observer(info);
      }
      epoch_sum += batch_sum;
      epoch_windows += m;
    }
    res.epoch_train_loss.push_back(epoch_sum / epoch_windows);

    // validation pass, forward only; its seed stream restarts per epoch so
    // the training stream is untouched by how often validation runs
    train_detail::SeedStream vseed{
        mix_seed(cfg.seed, mix_seed(0x7A1D, static_cast<std::uint64_t>(epoch)))};
    double vsum = 0.0;
    for (const auto& b : val_split) {
      auto truth = train_detail::future_rel(b);
      vsum += train_detail::window_task_loss(gen, b, cfg.loss, truth, vseed)
                  .item();
    }
    const double vloss = vsum / static_cast<double>(val_split.size());
    res.epoch_val_loss.push_back(vloss);
    if (vloss < res.best_val) {
      res.best_val = vloss;
      res.best_epoch = epoch;
      if (!best_ckpt_path.empty())
        save_checkpoint(best_ckpt_path, cfg.seed, save_stores);
    }
  }
  return res;
}

// Alternating WGAN updates. Per mini-batch: `d_steps_per_g` critic steps on
// real vs detached generated futures (weights clipped after every step), then
// one generator step on adversarial + weighted task loss (gradients clipped
// before the step).
inline TrainResult adversarial_train(
    Generator& gen, Discriminator& disc,
    const std::vector<TrajectoryBatch>& train, const TrainConfig& cfg,
    const std::string& log_path = "", StepObserver observer = {}) {
  cfg.validate();
  train_detail::check_variant_head(gen.config(), cfg.loss);
  if (train.empty())
    throw std::invalid_argument("adversarial_train: training split is empty");

  TrainResult res;
  train_detail::LogSink log(log_path);
  RMSProp g_opt(cfg.adv_lr), d_opt(cfg.adv_lr);
  Rng shuffle_rng(mix_seed(cfg.seed, 0xADE7));
  train_detail::SeedStream wseed{mix_seed(cfg.seed, 0x97A3)};
  train_detail::SeedStream zseed{mix_seed(cfg.seed, 0x5A3B)};
  const DiscInputMode mode = disc.config().input_mode;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.adv_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_sum = 0.0;
    int epoch_windows = 0;
    int batch_idx = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++batch_idx) {
      const auto stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int m = static_cast<int>(stop - start);

      // -- critic phase
      double d_sum = 0.0;
      double d_wmax = 0.0;
      for (int s = 0; s < cfg.d_steps_per_g; ++s) {
        disc.params().zero_grads();
        for (std::size_t w = start; w < stop; ++w) {
          const auto& b = train[order[w]];
          auto g = build_graphs(b, wseed.next());
          Rng noise(zseed.next());
          auto fake = train_detail::sample_fake(gen, g, noise);
          auto fake_in =
              train_detail::critic_input(b, fake.rel.detach(), mode);
          auto real_in =
              train_detail::critic_input(b, train_detail::future_rel(b), mode);
          auto [d_loss, g_loss] =
              wgan_losses(disc.score(fake_in), disc.score(real_in));
          (void)g_loss;
          const double dv = d_loss.item();
          if (!std::isfinite(dv))
            throw std::runtime_error(
                "adversarial_train: non-finite critic loss at epoch " +
                std::to_string(epoch) + ", batch " + std::to_string(batch_idx));
          d_sum += dv;
          d_loss.backward();
        }
        disc.params().scale_grads(1.0 / m);
        d_opt.step(disc.params());
        clip_weights(disc.params(), cfg.d_clip_lo, cfg.d_clip_hi);
        d_wmax =
            std::max(d_wmax, train_detail::max_abs_values(disc.params()));
      }
      const double d_mean = d_sum / (m * cfg.d_steps_per_g);

      // -- generator phase
      gen.params().zero_grads();
      double g_sum = 0.0, task_sum = 0.0;
      for (std::size_t w = start; w < stop; ++w) {
        const auto& b = train[order[w]];
        auto truth = train_detail::future_rel(b);
        auto g = build_graphs(b, wseed.next());
        Rng noise(zseed.next());
        auto fake = train_detail::sample_fake(gen, g, noise);
        auto g_adv =
            neg(mean(disc.score(train_detail::critic_input(b, fake.rel, mode))));

        DiffArray task = DiffArray::scalar(0.0);
        switch (cfg.loss.variant) {
          case LossVariant::dtgan:
            break;  // purely adversarial
          case LossVariant::dtgan_m: {
            std::vector<DiffArray> samples{fake.rel};
            for (int k = 1; k < cfg.loss.k_samples; ++k) {
              auto gk = build_graphs(b, wseed.next());
              samples.push_back(slice(gen.forward(gk), 2, 0, 2));
            }
            task = variety_mse(samples, truth);
            break;
          }
          case LossVariant::dtgan_g:
            task = gaussian_nll_loss(fake.raw, truth.values());
            break;
          case LossVariant::dtgan_u:
            task = uniform_nll_loss(fake.raw, b, cfg.loss.r_hat_epsilon);
            break;
        }
        auto total = total_generator_loss(cfg.loss, g_adv, task);
        const double tv = total.item();
        if (!std::isfinite(tv))
          throw std::runtime_error(
              "adversarial_train: non-finite generator loss at epoch " +
              std::to_string(epoch) + ", batch " + std::to_string(batch_idx));
        g_sum += g_adv.item();
        task_sum += task.item();
        epoch_sum += tv;
        total.backward();
      }
      gen.params().scale_grads(1.0 / m);
      clip_gradients(gen.params(), cfg.g_clip_lo, cfg.g_clip_hi);
      const double g_gmax = train_detail::max_abs_grads(gen.params());
      g_opt.step(gen.params());

      TrainLogRow row;
      row.epoch = epoch;
      row.phase = "adv";
      row.batch = batch_idx;
      row.has_adv = true;
      row.d_loss = d_mean;
      row.g_loss = g_sum / m;
      row.task_loss = task_sum / m;
      res.rows.push_back(row);
      log.write(row);
      if (observer) {
        StepInfo info;
        info.phase = "adv";
        info.epoch = epoch;
        info.batch = batch_idx;
        info.d_loss = d_mean;
        info.g_loss = row.g_loss;
        info.task_loss = row.task_loss;
        info.max_abs_d_weight = d_wmax;
        info.max_abs_g_grad = g_gmax;
        observer(info);
      }
      epoch_windows += m;
    }
    res.epoch_train_loss.push_back(epoch_sum / epoch_windows);
  }
  return res;
}

// Metric report over a test split, best-of-K protocol. ADE/FDE and AMD/AMV
// use separate sample counts and independent seed streams per window.
struct EvalReport {
  double ade = 0.0, fde = 0.0, amd = 0.0, amv = 0.0;
  int windows = 0;
};

inline EvalReport evaluate_split(const Generator& gen,
                                 const std::vector<TrajectoryBatch>& test,
                                 int k_adefde, int k_amdamv,
                                 std::uint64_t eval_seed) {
  if (test.empty())
    throw std::invalid_argument("evaluate_split: test split is empty");
  if (k_adefde < 1 || k_amdamv < 2)
    throw std::invalid_argument(
        "evaluate_split: need k_adefde >= 1 and k_amdamv >= 2");
  const std::uint64_t seed_de = mix_seed(eval_seed, 0xDE);
  const std::uint64_t seed_mv = mix_seed(eval_seed, 0xA11);
  EvalReport r;
  for (std::size_t w = 0; w < test.size(); ++w) {
    const auto& b = test[w];
    auto p_de = gen.generate(b, mix_seed(seed_de, w), k_adefde);
    auto [a, f] = ade_fde(p_de);
    auto p_mv = gen.generate(b, mix_seed(seed_mv, w), k_amdamv);
    auto fit = fit_gaussians(p_mv);
    r.ade += a;
    r.fde += f;
    r.amd += amd(fit, p_mv.truth);
    r.amv += amv(fit);
  }
  const auto nw = static_cast<double>(test.size());
  r.ade /= nw;
  r.fde /= nw;
  r.amd /= nw;
  r.amv /= nw;
  r.windows = static_cast<int>(test.size());
  return r;
}

// Rebuilds both networks from their configs, restores a combined checkpoint
// (generator store first, critic store second), and scores the test split.
// Horizon disagreements surface as shape mismatches during the restore or as
// rejected generate() calls.
inline EvalReport evaluate_checkpoint(const std::string& ckpt_path,
                                      const GeneratorConfig& gcfg,
                                      const DiscriminatorConfig& dcfg,
                                      const std::vector<TrajectoryBatch>& test,
                                      int k_adefde = 20, int k_amdamv = 100,
                                      std::uint64_t eval_seed = 42) {
  ParameterStore gs, ds;
  Generator gen(gcfg, gs, 0);
  Discriminator disc(dcfg, ds, 0);
  (void)disc;
  load_checkpoint_into(ckpt_path, {&gs, &ds});
  return evaluate_split(gen, test, k_adefde, k_amdamv, eval_seed);
}

// Mean and sample standard deviation across seeds, the shape of a multi-seed
// robustness row.
struct SeedStats {
  double mean = 0.0;
  double stddev = 0.0;
};

inline SeedStats mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_std: empty input");
  SeedStats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

}  // namespace dtgan
