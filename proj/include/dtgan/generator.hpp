#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtgan/diff_array.hpp"
#include "dtgan/graph.hpp"
#include "dtgan/metrics.hpp"
#include "dtgan/param_store.hpp"
#include "dtgan/rng.hpp"

namespace dtgan {

enum class OutputHead { point, gaussian };

inline OutputHead output_head_from_string(const std::string& s) {
  if (s == "point") return OutputHead::point;
  if (s == "gaussian") return OutputHead::gaussian;
  throw std::invalid_argument("unknown output head '" + s + "'");
}

struct GeneratorConfig {
  int input_dim = 2;       // v_i^t is a 2-D displacement
  int embed_dim = 8;       // F
  int obs_len = 8;         // T_o
  int pred_len = 12;       // T_p
  int tcn_layers = 2;
  int tcn_kernel = 3;
  int cnn_layers = 3;
  int decoder_kernel = 3;  // must be odd: shape-preserving padding
  OutputHead head = OutputHead::point;
  bool radius_channel = false;  // extra decoder channel for disk radii

  int out_channels() const {
    int c = head == OutputHead::gaussian ? 5 : 2;
    if (radius_channel) c += 1;
    return c;
  }

  void validate() const {
    if (embed_dim < 1) throw std::invalid_argument("GeneratorConfig: embed_dim must be >= 1");
    if (input_dim < 1) throw std::invalid_argument("GeneratorConfig: input_dim must be >= 1");
    if (obs_len < 1 || pred_len < 1)
      throw std::invalid_argument("GeneratorConfig: horizons must be >= 1");
    if (tcn_layers < 0 || cnn_layers < 1)
      throw std::invalid_argument("GeneratorConfig: bad layer counts");
    if (tcn_kernel < 1) throw std::invalid_argument("GeneratorConfig: tcn_kernel must be >= 1");
    if (decoder_kernel < 1 || decoder_kernel % 2 == 0)
      throw std::invalid_argument("GeneratorConfig: decoder_kernel must be odd");
  }
};

// Distribution parameters of the bivariate-Gaussian head, value level.
// sigma is exp-parameterized (always > 0), rho tanh-parameterized (|rho| < 1).
struct GaussianParams {
  int t_len = 0, n = 0;
  std::vector<double> mu;     // [T_p x N x 2]
  std::vector<double> sigma;  // [T_p x N x 2]
  std::vector<double> rho;    // [T_p x N]
};

// Draws one sample from the bivariate normal with the given per-axis sigmas
// and correlation, via the Cholesky-style construction.
inline void sample_bivariate(Rng& rng, double mu_x, double mu_y, double sig_x,
                             double sig_y, double rho, double& out_x,
                             double& out_y) {
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  out_x = mu_x + sig_x * z1;
  out_y = mu_y + sig_y * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
}

// The trajectory generator: spatial embedding, graph attention modulated by
// the random edge weights, a temporal convolution stack mapping the observed
// horizon onto the prediction horizon, and a convolutional decoder.
class Generator {
 public:
  Generator(GeneratorConfig cfg, ParameterStore& store, std::uint64_t init_seed)
      : cfg_(cfg), store_(&store) {
    cfg_.validate();
    Rng rng(init_seed);
    const int F = cfg_.embed_dim;
    add_param("generator.embed.w", {cfg_.input_dim, F}, rng, cfg_.input_dim);
    add_zero_param("generator.embed.b", {F});
    add_param("generator.gat.w", {F, F}, rng, F);
    add_param("generator.gat.a_src", {F, 1}, rng, F);
    add_param("generator.gat.a_dst", {F, 1}, rng, F);
    for (int l = 0; l < cfg_.tcn_layers; ++l) {
      add_param(tcn_name(l, "w"), {F, F, cfg_.tcn_kernel}, rng, F * cfg_.tcn_kernel);
      add_zero_param(tcn_name(l, "b"), {F});
    }
    for (int l = 0; l < cfg_.cnn_layers; ++l) {
      const int cin = l == 0 ? cfg_.obs_len : cfg_.pred_len;
      add_param(cnn_name(l, "w"), {cfg_.pred_len, cin, 3}, rng, cin * 3);
      add_zero_param(cnn_name(l, "b"), {cfg_.pred_len});
    }
    add_param("generator.decoder.w", {cfg_.out_channels(), F, cfg_.decoder_kernel},
              rng, F * cfg_.decoder_kernel);
    add_zero_param("generator.decoder.b", {cfg_.out_channels()});
  }

  const GeneratorConfig& config() const { return cfg_; }
  ParameterStore& params() { return *store_; }

  // h_i^t = W_emb^T v_i^t + b, the same affine map at every frame and node.
  DiffArray spatial_embed(const DiffArray& node_feats) const {
    if (node_feats.rank() != 3 || node_feats.dim(2) != cfg_.input_dim) {
      throw std::invalid_argument("spatial_embed: want [T x N x " +
                                  std::to_string(cfg_.input_dim) + "], got " +
                                  shape_str(node_feats.shape()));
    }
    const int T = node_feats.dim(0), N = node_feats.dim(1);
    auto flat = reshape(node_feats, {T * N, cfg_.input_dim});
    auto out = add(matmul(flat, store_->get("generator.embed.w")),
                   store_->get("generator.embed.b"));
    return reshape(out, {T, N, cfg_.embed_dim});
  }

  // One frame of graph attention. Attention logits use the shared linear map
  // W and the split attention vector (a_src, a_dst); the softmax runs over
  // each node's neighborhood (all j != i, diagonal masked), and the resulting
  // coefficients are modulated elementwise by the random edge weights before
  // aggregation. A residual keeps each node's own motion in the output, since
  // the zero graph diagonal would otherwise erase it.
  // Returns {attn_hat [N x N], h_out [N x F]}.
  std::pair<DiffArray, DiffArray> gat_attention(const DiffArray& emb,
                                                const DiffArray& adj) const {
    if (emb.rank() != 2 || emb.dim(1) != cfg_.embed_dim) {
      throw std::invalid_argument("gat_attention: want [N x " +
                                  std::to_string(cfg_.embed_dim) + "], got " +
                                  shape_str(emb.shape()));
    }
    const int N = emb.dim(0);
    if (N < 2) {
      throw std::invalid_argument(
          "gat_attention: need at least 2 nodes, got " + std::to_string(N));
    }
    if (adj.rank() != 2 || adj.dim(0) != N || adj.dim(1) != N) {
      throw std::invalid_argument("gat_attention: adjacency " +
                                  shape_str(adj.shape()) +
                                  " does not match " + std::to_string(N) +
                                  " nodes");
    }
    auto Wh = matmul(emb, store_->get("generator.gat.w"));       // [N x F]
    auto s_src = matmul(Wh, store_->get("generator.gat.a_src"));  // [N x 1]
    auto s_dst = matmul(Wh, store_->get("generator.gat.a_dst"));  // [N x 1]
    // logits[i][j] = leaky_relu(s_src[i] + s_dst[j])
    auto logits = leaky_relu(add(s_src, permute(s_dst, {1, 0})), 0.2);
    // Mask the diagonal so each softmax runs over j != i only.
    std::vector<double> mask(static_cast<std::size_t>(N * N), 0.0);
    for (int i = 0; i < N; ++i)
      mask[static_cast<std::size_t>(i * N + i)] = -1e30;
    auto alpha = softmax(add(logits, DiffArray::from({N, N}, mask)), 1);
    auto attn_hat = mul(alpha, adj);                      // zero diagonal again
    auto h_out = add(relu(matmul(attn_hat, Wh)), emb);    // residual
    return {attn_hat, h_out};
  }

  // Temporal stage. First the per-node causal convolution stack along the
  // time axis (feature channels, residual blocks, dilation doubling per
  // block), then the channel-mapping convolutions that treat time slots as
  // channels and map T_o of them onto T_p, convolving over the feature axis
  // with shape-preserving padding.
  DiffArray temporal_stack(const DiffArray& H) const {
    if (H.rank() != 3 || H.dim(0) != cfg_.obs_len || H.dim(2) != cfg_.embed_dim) {
      throw std::invalid_argument("temporal_stack: want [" +
                                  std::to_string(cfg_.obs_len) + " x N x " +
                                  std::to_string(cfg_.embed_dim) + "], got " +
                                  shape_str(H.shape()));
    }
    auto x = permute(H, {1, 2, 0});  // [N x F x T_o]
    int dilation = 1;
    for (int l = 0; l < cfg_.tcn_layers; ++l) {
      auto y = relu(conv1d(x, store_->get(tcn_name(l, "w")),
                           store_->get(tcn_name(l, "b")), dilation,
                           (cfg_.tcn_kernel - 1) * dilation, 0));
      x = add(y, x);
      dilation *= 2;
    }
    auto v = permute(x, {0, 2, 1});  // [N x T_o x F]: time as channels
    for (int l = 0; l < cfg_.cnn_layers; ++l) {
      auto y = relu(conv1d(v, store_->get(cnn_name(l, "w")),
                           store_->get(cnn_name(l, "b")), 1, 1, 1));
      v = l == 0 ? y : add(y, v);  // residual once channel counts agree
    }
    return permute(v, {1, 0, 2});  // [T_p x N x F]
  }

  // Decoder: one shape-preserving convolution over the time axis, feature
  // channels in, output channels out.
  DiffArray decode(const DiffArray& V) const {
    if (V.rank() != 3 || V.dim(0) != cfg_.pred_len || V.dim(2) != cfg_.embed_dim) {
      throw std::invalid_argument("decode: want [" +
                                  std::to_string(cfg_.pred_len) + " x N x " +
                                  std::to_string(cfg_.embed_dim) + "], got " +
                                  shape_str(V.shape()));
    }
    auto x = permute(V, {1, 2, 0});  // [N x F x T_p]
    const int pad = (cfg_.decoder_kernel - 1) / 2;
    auto y = conv1d(x, store_->get("generator.decoder.w"),
                    store_->get("generator.decoder.b"), 1, pad, pad);
    return permute(y, {2, 0, 1});  // [T_p x N x C]
  }

  // Full differentiable pass: raw decoder output [T_p x N x C].
  DiffArray forward(const GraphSequence& g) const {
    if (g.t_obs != cfg_.obs_len) {
      throw std::invalid_argument("Generator::forward: graph window " +
                                  std::to_string(g.t_obs) +
                                  " does not match configured " +
                                  std::to_string(cfg_.obs_len));
    }
    auto feats = DiffArray::from({g.t_obs, g.n, 2}, g.node_feats);
    auto emb = spatial_embed(feats);  // [T_o x N x F]
    std::vector<DiffArray> per_frame;
    per_frame.reserve(static_cast<std::size_t>(g.t_obs));
    for (int t = 0; t < g.t_obs; ++t) {
      auto emb_t = reshape(slice(emb, 0, t, 1), {g.n, cfg_.embed_dim});
      std::vector<double> adj_t(
          g.adj.begin() + static_cast<long>(t) * g.n * g.n,
          g.adj.begin() + static_cast<long>(t + 1) * g.n * g.n);
      auto [attn, h] = gat_attention(emb_t, DiffArray::from({g.n, g.n}, adj_t));
      (void)attn;
      per_frame.push_back(h);
    }
    auto H = stack0(per_frame);  // [T_o x N x F]
    return decode(temporal_stack(H));
  }

  // Interprets the first five decoder channels as bivariate-Gaussian
  // pre-activations: mean displacement, log sigma, atanh rho.
  GaussianParams gaussian_params(const DiffArray& raw) const {
    if (cfg_.head != OutputHead::gaussian) {
      throw std::invalid_argument("gaussian_params: generator head is not gaussian");
    }
    const int T = raw.dim(0), N = raw.dim(1);
    GaussianParams p;
    p.t_len = T;
    p.n = N;
    p.mu.resize(static_cast<std::size_t>(T * N * 2));
    p.sigma.resize(static_cast<std::size_t>(T * N * 2));
    p.rho.resize(static_cast<std::size_t>(T * N));
    const int C = raw.dim(2);
    const auto& v = raw.values();
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < N; ++i) {
        const auto base = static_cast<std::size_t>((t * N + i) * C);
        const auto out2 = static_cast<std::size_t>((t * N + i) * 2);
        p.mu[out2] = v[base];
        p.mu[out2 + 1] = v[base + 1];
        p.sigma[out2] = std::exp(v[base + 2]);
        p.sigma[out2 + 1] = std::exp(v[base + 3]);
        p.rho[static_cast<std::size_t>(t * N + i)] = std::tanh(v[base + 4]);
      }
    return p;
  }

  // K sampled futures in absolute coordinates. Each sample k draws a fresh
  // random-weight graph sequence with seed+k; the gaussian head additionally
  // samples one point per predicted distribution per frame, accumulating
  // displacements from the last observed position.
  PredictionSet generate(const TrajectoryBatch& batch, std::uint64_t seed,
                         int K) const {
    if (K < 1) {
      throw std::invalid_argument("Generator::generate: K must be >= 1, got " +
                                  std::to_string(K));
    }
    if (batch.pred_len != cfg_.pred_len || batch.obs_len != cfg_.obs_len) {
      throw std::invalid_argument(
          "Generator::generate: batch horizons (" +
          std::to_string(batch.obs_len) + ", " + std::to_string(batch.pred_len) +
          ") do not match configured (" + std::to_string(cfg_.obs_len) + ", " +
          std::to_string(cfg_.pred_len) + ")");
    }
    const int T = cfg_.pred_len, N = batch.n_peds();
    PredictionSet out;
    out.k = K;
    out.t_len = T;
    out.n = N;
    out.samples.resize(static_cast<std::size_t>(K * T * N * 2));
    out.truth.resize(static_cast<std::size_t>(T * N * 2));
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < N; ++i)
        for (int c = 0; c < 2; ++c)
          out.truth[static_cast<std::size_t>((t * N + i) * 2 + c)] =
              batch.abs_at(batch.obs_len + t, i, c);

    for (int k = 0; k < K; ++k) {
      auto g = build_graphs(batch, seed + static_cast<std::uint64_t>(k));
      auto raw = forward(g);
      std::vector<double> disp(static_cast<std::size_t>(T * N * 2));
      if (cfg_.head == OutputHead::point) {
        const int C = cfg_.out_channels();
        const auto& v = raw.values();
        for (int t = 0; t < T; ++t)
          for (int i = 0; i < N; ++i)
            for (int c = 0; c < 2; ++c)
              disp[static_cast<std::size_t>((t * N + i) * 2 + c)] =
                  v[static_cast<std::size_t>((t * N + i) * C + c)];
      } else {
        auto p = gaussian_params(raw);
        Rng srng(mix_seed(seed + static_cast<std::uint64_t>(k), 1));
        for (int t = 0; t < T; ++t)
          for (int i = 0; i < N; ++i) {
            const auto m = static_cast<std::size_t>((t * N + i) * 2);
            double sx, sy;
            sample_bivariate(srng, p.mu[m], p.mu[m + 1], p.sigma[m],
                             p.sigma[m + 1],
                             p.rho[static_cast<std::size_t>(t * N + i)], sx, sy);
            disp[m] = sx;
            disp[m + 1] = sy;
          }
      }
      // displacements -> absolute positions from the last observed frame
      for (int i = 0; i < N; ++i) {
        double px = batch.abs_at(batch.obs_len - 1, i, 0);
        double py = batch.abs_at(batch.obs_len - 1, i, 1);
        for (int t = 0; t < T; ++t) {
          px += disp[static_cast<std::size_t>((t * N + i) * 2)];
          py += disp[static_cast<std::size_t>((t * N + i) * 2 + 1)];
          out.samples[static_cast<std::size_t>(((k * T + t) * N + i) * 2)] = px;
          out.samples[static_cast<std::size_t>(((k * T + t) * N + i) * 2 + 1)] = py;
        }
      }
    }
    return out;
  }

 private:
  static std::string tcn_name(int l, const char* leaf) {
    return "generator.tcn" + std::to_string(l) + "." + leaf;
  }
  static std::string cnn_name(int l, const char* leaf) {
    return "generator.cnn" + std::to_string(l) + "." + leaf;
  }

  void add_param(const std::string& name, Shape shape, Rng& rng, int fan_in) {
    const double s = std::sqrt(1.0 / fan_in);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(-s, s);
    store_->add(name, DiffArray::from(std::move(shape), std::move(v)));
  }
  void add_zero_param(const std::string& name, Shape shape) {
    store_->add(name, DiffArray::zeros(std::move(shape)));
  }

  GeneratorConfig cfg_;
  ParameterStore* store_;
};

// In-graph cumulative sum turning per-frame displacements into absolute
// positions, starting from the (constant) last observed position.
inline DiffArray rel_to_abs_graph(const DiffArray& rel, const DiffArray& last_obs) {
  if (rel.rank() != 3 || rel.dim(2) != 2 || last_obs.rank() != 2 ||
      last_obs.dim(0) != rel.dim(1) || last_obs.dim(1) != 2) {
    throw std::invalid_argument("rel_to_abs_graph: want rel [T x N x 2] and last_obs [N x 2], got " +
                                shape_str(rel.shape()) + " and " +
                                shape_str(last_obs.shape()));
  }
  const int T = rel.dim(0), N = rel.dim(1);
  std::vector<DiffArray> frames;
  frames.reserve(static_cast<std::size_t>(T));
  DiffArray prev = last_obs;
  for (int t = 0; t < T; ++t) {
    prev = add(prev, reshape(slice(rel, 0, t, 1), {N, 2}));
    frames.push_back(prev);
  }
  return stack0(frames);  // [T x N x 2]
}

}  // namespace dtgan
