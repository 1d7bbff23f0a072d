#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtgan/diff_array.hpp"
#include "dtgan/param_store.hpp"
#include "dtgan/rng.hpp"

namespace dtgan {

enum class DiscInputMode { future_only, obs_plus_future };

inline DiscInputMode disc_input_mode_from_string(const std::string& s) {
  if (s == "future_only") return DiscInputMode::future_only;
  if (s == "obs_plus_future") return DiscInputMode::obs_plus_future;
  throw std::invalid_argument("unknown discriminator input mode '" + s + "'");
}

struct DiscriminatorConfig {
  int input_dim = 2;
  int embed_dim = 8;   // F
  int hidden = 16;     // recurrent state dim
  DiscInputMode input_mode = DiscInputMode::obs_plus_future;

  void validate() const {
    if (hidden < 1) throw std::invalid_argument("DiscriminatorConfig: hidden must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("DiscriminatorConfig: embed_dim must be >= 1");
  }
};

// The critic: per-frame spatial embedding, an LSTM over time, then an affine
// hidden layer with ReLU and a linear scalar head. The final score is left
// unbounded on purpose — the Wasserstein objective wants a critic, not a
// classifier.
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, ParameterStore& store,
                std::uint64_t init_seed)
      : cfg_(cfg), store_(&store) {
    cfg_.validate();
    Rng rng(init_seed);
    const int F = cfg_.embed_dim, H = cfg_.hidden;
    add_param("discriminator.embed.w", {cfg_.input_dim, F}, rng, cfg_.input_dim);
    add_zero_param("discriminator.embed.b", {F});
    // Gate order along the 4H axis: input, forget, cell, output.
    add_param("discriminator.lstm.w_ih", {F, 4 * H}, rng, F);
    add_param("discriminator.lstm.w_hh", {H, 4 * H}, rng, H);
    add_zero_param("discriminator.lstm.b", {4 * H});
    add_param("discriminator.fc1.w", {H, H}, rng, H);
    add_zero_param("discriminator.fc1.b", {H});
    add_param("discriminator.fc2.w", {H, 1}, rng, H);
    add_zero_param("discriminator.fc2.b", {1});
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  ParameterStore& params() { return *store_; }

  // traj: [T x N x 2] relative displacements. Returns [N] scores.
  DiffArray score(const DiffArray& traj) const {
    if (traj.rank() != 3 || traj.dim(2) != cfg_.input_dim || traj.dim(0) < 1) {
      throw std::invalid_argument("Discriminator::score: want [T x N x " +
                                  std::to_string(cfg_.input_dim) + "], got " +
                                  shape_str(traj.shape()));
    }
    const int T = traj.dim(0), N = traj.dim(1), H = cfg_.hidden;
    auto flat = reshape(traj, {T * N, cfg_.input_dim});
    auto emb = add(matmul(flat, store_->get("discriminator.embed.w")),
                   store_->get("discriminator.embed.b"));
    auto emb3 = reshape(emb, {T, N, cfg_.embed_dim});

    auto h = DiffArray::zeros({N, H});
    auto c = DiffArray::zeros({N, H});
    for (int t = 0; t < T; ++t) {
      auto x_t = reshape(slice(emb3, 0, t, 1), {N, cfg_.embed_dim});
      auto gates = add(add(matmul(x_t, store_->get("discriminator.lstm.w_ih")),
                           matmul(h, store_->get("discriminator.lstm.w_hh"))),
                       store_->get("discriminator.lstm.b"));
      auto i_g = sigmoid(slice(gates, 1, 0, H));
      auto f_g = sigmoid(slice(gates, 1, H, H));
      auto g_g = tanh(slice(gates, 1, 2 * H, H));
      auto o_g = sigmoid(slice(gates, 1, 3 * H, H));
      c = add(mul(f_g, c), mul(i_g, g_g));
      h = mul(o_g, tanh(c));
    }
    auto hid = relu(add(matmul(h, store_->get("discriminator.fc1.w")),
                        store_->get("discriminator.fc1.b")));
    auto out = add(matmul(hid, store_->get("discriminator.fc2.w")),
                   store_->get("discriminator.fc2.b"));
    return reshape(out, {N});
  }

 private:
  void add_param(const std::string& name, Shape shape, Rng& rng, int fan_in) {
    const double s = std::sqrt(1.0 / fan_in);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(-s, s);
    store_->add(name, DiffArray::from(std::move(shape), std::move(v)));
  }
  void add_zero_param(const std::string& name, Shape shape) {
    store_->add(name, DiffArray::zeros(std::move(shape)));
  }

  DiscriminatorConfig cfg_;
  ParameterStore* store_;
};

}  // namespace dtgan
