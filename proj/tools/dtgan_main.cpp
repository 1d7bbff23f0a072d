// Command-line front end: preprocess, train, evaluate, export.
// Exit codes: 0 success, 2 usage/config error, 1 runtime failure.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dtgan/dtgan.hpp"

namespace fs = std::filesystem;

namespace {

using dtgan::RunConfig;
using dtgan::UsageError;

// All scene directories directly under the data root, name-sorted.
std::vector<std::string> scene_subdirs(const std::string& root) {
  if (!fs::is_directory(root))
    throw UsageError("data directory not found: " + root);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> scenes_for(const RunConfig& rc) {
  if (rc.has("scenes")) return rc.scenes();
  return scene_subdirs(rc.data_root());
}

dtgan::DatasetSplit build_splits(const RunConfig& rc) {
  const auto root = rc.data_root();
  const auto names = scenes_for(rc);
  return dtgan::make_splits(dtgan::scan_scenes(root, names), rc.held_out(),
                            rc.obs_len(), rc.pred_len(), rc.min_ped(),
                            rc.skip(), rc.val_frac(), rc.seed());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& raw) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument("bad");
      out.push_back(static_cast<std::uint64_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--seeds: expected comma-separated non-negative "
                       "integers, got '" + raw + "'");
    }
  }
  if (out.empty()) throw UsageError("--seeds: empty seed list");
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- preprocess

int run_preprocess(const std::string& data_dir, const std::string& scene,
                   int slen, int min_ped, const std::string& out_path) {
  RunConfig rc;
  rc.set("data_root", data_dir);
  rc.set("held_out", scene);
  if (min_ped >= 0) rc.set("min_ped", std::to_string(min_ped));
  int pred = rc.pred_len();
  if (slen > 0) {
    if (slen <= rc.obs_len())
      throw UsageError("--slen must exceed the observation length " +
                       std::to_string(rc.obs_len()));
    pred = slen - rc.obs_len();
  }
  rc.set("pred_len", std::to_string(pred));

  const auto names = scene_subdirs(data_dir);
  if (names.empty()) {
    std::printf("scene %s\ntrain 0\nval 0\ntest 0\n", scene.c_str());
    return 0;
  }
  std::ostringstream joined;
  for (std::size_t i = 0; i < names.size(); ++i)
    joined << (i ? "," : "") << names[i];
  rc.set("scenes", joined.str());

  const auto split = build_splits(rc);
  std::printf("scene %s\ntrain %zu\nval %zu\ntest %zu\n", scene.c_str(),
              split.train.size(), split.val.size(), split.test.size());

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << "split,index,n_peds,obs_len,pred_len\n";
    auto dump = [&](const char* name,
                    const std::vector<dtgan::TrajectoryBatch>& ws) {
      for (std::size_t i = 0; i < ws.size(); ++i)
        out << name << ',' << i << ',' << ws[i].n_peds() << ','
            << ws[i].obs_len << ',' << ws[i].pred_len << '\n';
    };
    dump("train", split.train);
    dump("val", split.val);
    dump("test", split.test);
  }
  return 0;
}

// --------------------------------------------------------------------- train

int run_train(const std::string& config_path, const std::string& variant,
              long long seed, bool seed_given, const std::string& out_dir) {
  RunConfig rc = config_path.empty() ? RunConfig{}
                                     : RunConfig::parse_file(config_path);
  if (!variant.empty()) rc.set("variant", variant);
  if (seed_given) {
    if (seed < 0) throw UsageError("--seed must be non-negative");
    rc.set("seed", std::to_string(seed));
  }

  const auto gcfg = rc.generator_config();
  const auto dcfg = rc.discriminator_config();
  const auto tcfg = rc.train_config();
  const auto split = build_splits(rc);
  std::printf("split %s: train %zu  val %zu  test %zu\n", split.name.c_str(),
              split.train.size(), split.val.size(), split.test.size());

  fs::create_directories(out_dir);
  dtgan::ParameterStore gs, ds;
  dtgan::Generator gen(gcfg, gs, dtgan::mix_seed(tcfg.seed, 0x6E));
  dtgan::Discriminator disc(dcfg, ds, dtgan::mix_seed(tcfg.seed, 0xD1));

  const auto pre_log = (fs::path(out_dir) / "pretrain_log.csv").string();
  const auto adv_log = (fs::path(out_dir) / "adversarial_log.csv").string();
  const auto best_ckpt = (fs::path(out_dir) / "pretrain_best.ckpt").string();
  const auto final_ckpt = (fs::path(out_dir) / "final.ckpt").string();

  auto pre = dtgan::pretrain(gen, split.train, split.val, tcfg, pre_log,
                             best_ckpt, {&gs, &ds});
  if (!pre.epoch_train_loss.empty())
    std::printf("pretrain: %zu epochs, train loss %.6f -> %.6f, best val "
                "%.6f at epoch %d\n",
                pre.epoch_train_loss.size(), pre.epoch_train_loss.front(),
                pre.epoch_train_loss.back(), pre.best_val, pre.best_epoch);

  auto adv = dtgan::adversarial_train(gen, disc, split.train, tcfg, adv_log);
  if (!adv.rows.empty())
    std::printf("adversarial: %zu epochs, last d_loss %.6f g_loss %.6f\n",
                adv.epoch_train_loss.size(), adv.rows.back().d_loss,
                adv.rows.back().g_loss);

  dtgan::save_checkpoint(final_ckpt, tcfg.seed, {&gs, &ds});
  std::printf("wrote %s\n", final_ckpt.c_str());
  return 0;
}

// ------------------------------------------------------------------ evaluate

int run_evaluate(const std::string& config_path, const std::string& ckpt,
                 const std::string& scene, int k_adefde, int k_amdamv,
                 const std::string& seeds_raw, const std::string& out_path) {
  RunConfig rc = config_path.empty() ? RunConfig{}
                                     : RunConfig::parse_file(config_path);
  if (!scene.empty()) rc.set("held_out", scene);
  if (k_adefde > 0) rc.set("k_adefde", std::to_string(k_adefde));
  if (k_amdamv > 0) rc.set("k_amdamv", std::to_string(k_amdamv));
  const auto seeds = parse_seed_list(seeds_raw);

  const auto gcfg = rc.generator_config();
  const auto dcfg = rc.discriminator_config();
  const auto split = build_splits(rc);
  if (split.test.empty())
    throw UsageError("held-out scene '" + split.name +
                     "' produced no test windows");

  std::vector<double> ades, fdes, amds, amvs;
  std::ostringstream report;
  report << "seed,ade,fde,amd,amv\n";
  for (const auto s : seeds) {
    const auto r = dtgan::evaluate_checkpoint(ckpt, gcfg, dcfg, split.test,
                                              rc.k_adefde(), rc.k_amdamv(), s);
    ades.push_back(r.ade);
    fdes.push_back(r.fde);
    amds.push_back(r.amd);
    amvs.push_back(r.amv);
    char line[160];
    std::snprintf(line, sizeof line, "%" PRIu64 ",%.4f,%.4f,%.4f,%.4f\n", s,
                  r.ade, r.fde, r.amd, r.amv);
    report << line;
  }
  const auto a = dtgan::mean_std(ades), f = dtgan::mean_std(fdes),
             m = dtgan::mean_std(amds), v = dtgan::mean_std(amvs);
  char line[200];
  std::snprintf(line, sizeof line,
                "avg,%.4f±%.4f,%.4f±%.4f,%.4f±%.4f,%.4f±%.4f\n", a.mean,
                a.stddev, f.mean, f.stddev, m.mean, m.stddev, v.mean,
                v.stddev);
  report << line;

  std::fputs(report.str().c_str(), stdout);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << report.str();
  }
  return 0;
}

// -------------------------------------------------------------------- export

int run_export(const std::string& config_path, const std::string& ckpt,
               int batch_index, int samples, const std::string& out_path) {
  RunConfig rc = config_path.empty() ? RunConfig{}
                                     : RunConfig::parse_file(config_path);
  if (samples < 1) throw UsageError("--samples must be >= 1");

  const auto gcfg = rc.generator_config();
  const auto dcfg = rc.discriminator_config();
  const auto split = build_splits(rc);
  if (batch_index < 0 ||
      static_cast<std::size_t>(batch_index) >= split.test.size())
    throw UsageError("batch index " + std::to_string(batch_index) +
                     " out of range [0, " + std::to_string(split.test.size()) +
                     ")");
  const auto& b = split.test[static_cast<std::size_t>(batch_index)];

  dtgan::ParameterStore gs, ds;
  dtgan::Generator gen(gcfg, gs, 0);
  dtgan::Discriminator disc(dcfg, ds, 0);
  (void)disc;
  dtgan::load_checkpoint_into(ckpt, {&gs, &ds});

  const std::uint64_t seed =
      dtgan::mix_seed(rc.seed(), static_cast<std::uint64_t>(batch_index));
  const auto pred = gen.generate(b, seed, samples);

  // The gaussian head also reports each sample's distribution parameters;
  // sample k's forward pass is reproduced through its documented seed.
  const bool gauss = gcfg.head == dtgan::OutputHead::gaussian;
  std::vector<dtgan::GaussianParams> params;
  if (gauss) {
    params.reserve(static_cast<std::size_t>(samples));
    for (int k = 0; k < samples; ++k) {
      auto g = dtgan::build_graphs(b, seed + static_cast<std::uint64_t>(k));
      params.push_back(gen.gaussian_params(gen.forward(g)));
    }
  }

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << "scene,ped_id,sample_id,frame,kind,x,y";
  if (gauss) out << ",mu_x,mu_y,sigma_x,sigma_y,rho";
  out << '\n';

  const int N = b.n_peds(), To = b.obs_len, Tp = b.pred_len;
  std::size_t rows = 0;
  auto emit = [&](long long ped, int sample_id, int frame, const char* kind,
                  double x, double y, const double* gp) {
    out << split.name << ',' << ped << ',' << sample_id << ',' << frame << ','
        << kind << ',' << fmt17(x) << ',' << fmt17(y);
    if (gauss) {
      if (gp)
        out << ',' << fmt17(gp[0]) << ',' << fmt17(gp[1]) << ','
            << fmt17(gp[2]) << ',' << fmt17(gp[3]) << ',' << fmt17(gp[4]);
      else
        out << ",,,,,";
    }
    out << '\n';
    ++rows;
  };

  for (int i = 0; i < N; ++i) {
    const long long ped = b.ped_ids[static_cast<std::size_t>(i)];
    for (int t = 0; t < To; ++t)
      emit(ped, -1, t, "obs", b.abs_at(t, i, 0), b.abs_at(t, i, 1), nullptr);
    for (int t = 0; t < Tp; ++t)
      emit(ped, -1, To + t, "truth", b.abs_at(To + t, i, 0),
           b.abs_at(To + t, i, 1), nullptr);
    for (int k = 0; k < samples; ++k)
      for (int t = 0; t < Tp; ++t) {
        double gp[5];
        const double* gpp = nullptr;
        if (gauss) {
          const auto& p = params[static_cast<std::size_t>(k)];
          const auto m = static_cast<std::size_t>((t * N + i) * 2);
          gp[0] = p.mu[m];
          gp[1] = p.mu[m + 1];
          gp[2] = p.sigma[m];
          gp[3] = p.sigma[m + 1];
          gp[4] = p.rho[static_cast<std::size_t>(t * N + i)];
          gpp = gp;
        }
        emit(ped, k, To + t, "pred", pred.sample_at(k, t, i, 0),
             pred.sample_at(k, t, i, 1), gpp);
      }
  }
  std::printf("wrote %zu rows to %s\n", rows, out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dtgan: graph-attention trajectory prediction pipeline"};
  app.require_subcommand(1);
  std::function<int()> action;

  // preprocess
  auto* pre = app.add_subcommand(
      "preprocess", "Extract trajectory windows and report split sizes");
  std::string p_data, p_scene, p_out;
  int p_slen = -1, p_minped = -1;
  pre->add_option("--data-dir", p_data, "Root holding one directory per scene")
      ->required();
  pre->add_option("--scene", p_scene, "Held-out scene (test split source)")
      ->required();
  pre->add_option("--slen", p_slen,
                  "Total window length; prediction length becomes slen - 8");
  pre->add_option("--min-ped", p_minped,
                  "Window kept only when more than this many pedestrians "
                  "span it (default 3)");
  pre->add_option("--out", p_out, "Optional window-inventory CSV");
  pre->callback([&] {
    action = [&] {
      return run_preprocess(p_data, p_scene, p_slen, p_minped, p_out);
    };
  });

  // train
  auto* tr = app.add_subcommand("train",
                                "Pre-train, then adversarially train a model");
  std::string t_config, t_variant, t_outdir = "dtgan_run";
  long long t_seed = 0;
  auto* t_seed_opt =
      tr->add_option("--seed", t_seed, "Run seed (overrides config)");
  tr->add_option("--config", t_config, "Run configuration file");
  tr->add_option("--variant", t_variant,
                 "Loss variant: dtgan | dtgan-m | dtgan-g | dtgan-u");
  tr->add_option("--out-dir", t_outdir, "Logs and checkpoints directory");
  tr->callback([&] {
    action = [&] {
      return run_train(t_config, t_variant, t_seed, t_seed_opt->count() > 0,
                       t_outdir);
    };
  });

  // evaluate
  auto* ev = app.add_subcommand(
      "evaluate", "Best-of-K metrics over the held-out scene, multi-seed");
  std::string e_config, e_ckpt, e_scene, e_out = "eval_report.csv";
  std::string e_seeds = "3,42,43,123,222";
  int e_k20 = -1, e_k100 = -1;
  ev->add_option("--checkpoint", e_ckpt, "Checkpoint to score")->required();
  ev->add_option("--config", e_config, "Run configuration file");
  ev->add_option("--scene", e_scene, "Held-out scene (overrides config)");
  ev->add_option("--k-adefde", e_k20, "Samples for best-of-K ADE/FDE");
  ev->add_option("--k-amdamv", e_k100, "Samples for the distribution metrics");
  ev->add_option("--seeds", e_seeds, "Comma-separated evaluation seeds");
  ev->add_option("--out", e_out, "Report file (also printed)");
  ev->callback([&] {
    action = [&] {
      return run_evaluate(e_config, e_ckpt, e_scene, e_k20, e_k100, e_seeds,
                          e_out);
    };
  });

  // export
  auto* ex = app.add_subcommand(
      "export", "Write one window's observations, truth, and samples as CSV");
  std::string x_config, x_ckpt, x_out = "export.csv";
  int x_batch = 0, x_samples = 1;
  ex->add_option("--checkpoint", x_ckpt, "Checkpoint to sample from")
      ->required();
  ex->add_option("--config", x_config, "Run configuration file");
  ex->add_option("--batch-index", x_batch, "Test-split window index");
  ex->add_option("--samples", x_samples, "Prediction samples per pedestrian");
  ex->add_option("--out", x_out, "Output CSV path");
  ex->callback([&] {
    action = [&] {
      return run_export(x_config, x_ckpt, x_batch, x_samples, x_out);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "dtgan: %s\n", e.what());
    return 2;
  } catch (const dtgan::CheckpointMismatch& e) {
    std::fprintf(stderr, "dtgan: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "dtgan: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dtgan: %s\n", e.what());
    return 1;
  }
}
