#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtgan/rng.hpp"

namespace dtgan {

struct TrackPoint {
  long long frame_id = 0;
  long long ped_id = 0;
  double x = 0.0;
  double y = 0.0;
};

// One extracted window: N pedestrians, each present in all slen consecutive
// frames. Arrays are row-major [slen x N x 2]; rel_disp holds the per-frame
// displacement with an all-zero first frame, so absolute positions can be
// rebuilt from abs_pos[0] by cumulative summation.
struct TrajectoryBatch {
  std::vector<long long> ped_ids;      // sorted ascending
  std::vector<double> abs_pos;         // [slen x N x 2]
  std::vector<double> rel_disp;        // [slen x N x 2]
  int slen = 0;
  int obs_len = 0;
  int pred_len = 0;

  int n_peds() const { return static_cast<int>(ped_ids.size()); }
  double abs_at(int t, int i, int c) const {
    return abs_pos[static_cast<std::size_t>((t * n_peds() + i) * 2 + c)];
  }
  double rel_at(int t, int i, int c) const {
    return rel_disp[static_cast<std::size_t>((t * n_peds() + i) * 2 + c)];
  }
};

// Parses "frame ped x y" whitespace-separated lines. Blank lines skipped;
// anything else malformed (wrong token count, non-numeric, fractional ids,
// negative frame) is an error naming the line. Result sorted by (frame, ped).
inline std::vector<TrackPoint> parse_raw(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    throw std::runtime_error("parse_raw: cannot open '" + path + "'");
  }
  std::vector<TrackPoint> points;
  std::string line;
  long long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    if (tokens.empty()) continue;  // blank line
    auto fail = [&](const std::string& why) {
      throw std::runtime_error("parse_raw: " + path + ":" +
                               std::to_string(line_no) + ": " + why + ": '" +
                               line + "'");
    };
    if (tokens.size() != 4) fail("expected 4 fields");
    double vals[4];
    for (int i = 0; i < 4; ++i) {
      try {
        std::size_t used = 0;
        vals[i] = std::stod(tokens[static_cast<std::size_t>(i)], &used);
        if (used != tokens[static_cast<std::size_t>(i)].size()) fail("bad number");
      } catch (const std::exception&) {
        fail("bad number");
      }
      if (!std::isfinite(vals[i])) fail("non-finite value");
    }
    if (vals[0] != std::floor(vals[0]) || vals[1] != std::floor(vals[1]))
      fail("frame and pedestrian ids must be integers");
    if (vals[0] < 0) fail("negative frame id");
    points.push_back(TrackPoint{static_cast<long long>(vals[0]),
                                static_cast<long long>(vals[1]), vals[2],
                                vals[3]});
  }
  std::sort(points.begin(), points.end(), [](const TrackPoint& a, const TrackPoint& b) {
    if (a.frame_id != b.frame_id) return a.frame_id < b.frame_id;
    return a.ped_id < b.ped_id;
  });
  return points;
}

// Slides a window of slen consecutive unique frame ids over the data,
// advancing by `skip` frames. Pedestrians observed in every frame of the
// window form one batch; a window survives only if it holds strictly more
// than min_ped of them. obs_len = -1 means "whole window observed"
// (pred_len 0), used by callers that split later.
inline std::vector<TrajectoryBatch> extract_sequences(
    const std::vector<TrackPoint>& points, int slen, int min_ped,
    int skip = 1, int obs_len = -1) {
  if (slen < 2) {
    throw std::invalid_argument("extract_sequences: slen must be >= 2, got " +
                                std::to_string(slen));
  }
  if (min_ped < 1) {
    throw std::invalid_argument("extract_sequences: minPed must be >= 1, got " +
                                std::to_string(min_ped));
  }
  if (skip < 1) {
    throw std::invalid_argument("extract_sequences: skip must be >= 1, got " +
                                std::to_string(skip));
  }
  if (obs_len == -1) obs_len = slen;
  if (obs_len < 1 || obs_len > slen) {
    throw std::invalid_argument("extract_sequences: obs_len " +
                                std::to_string(obs_len) +
                                " outside window of length " +
                                std::to_string(slen));
  }

  // Group by unique frame id; map is ordered so frames come out sorted.
  std::map<long long, std::map<long long, std::pair<double, double>>> by_frame;
  for (const auto& p : points)
    by_frame[p.frame_id][p.ped_id] = {p.x, p.y};

  std::vector<long long> frames;
  frames.reserve(by_frame.size());
  for (const auto& [fid, _] : by_frame) frames.push_back(fid);

  std::vector<TrajectoryBatch> batches;
  if (static_cast<int>(frames.size()) < slen) return batches;

  for (std::size_t start = 0; start + static_cast<std::size_t>(slen) <= frames.size();
       start += static_cast<std::size_t>(skip)) {
    // Pedestrians present in every frame of the window.
    std::vector<long long> candidates;
    for (const auto& [pid, _] : by_frame[frames[start]]) candidates.push_back(pid);
    std::vector<long long> present;
    for (long long pid : candidates) {
      bool everywhere = true;
      for (int t = 1; t < slen; ++t) {
        if (!by_frame[frames[start + static_cast<std::size_t>(t)]].count(pid)) {
          everywhere = false;
          break;
        }
      }
      if (everywhere) present.push_back(pid);
    }
    const int n = static_cast<int>(present.size());
    if (n <= min_ped) continue;  // window kept only when N > minPed

    TrajectoryBatch b;
    b.ped_ids = present;  // candidates came from an ordered map: sorted
    b.slen = slen;
    b.obs_len = obs_len;
    b.pred_len = slen - obs_len;
    b.abs_pos.resize(static_cast<std::size_t>(slen * n * 2));
    b.rel_disp.assign(static_cast<std::size_t>(slen * n * 2), 0.0);
    for (int t = 0; t < slen; ++t) {
      const auto& frame = by_frame[frames[start + static_cast<std::size_t>(t)]];
      for (int i = 0; i < n; ++i) {
        const auto& [px, py] = frame.at(present[static_cast<std::size_t>(i)]);
        const auto ix = static_cast<std::size_t>((t * n + i) * 2);
        b.abs_pos[ix] = px;
        b.abs_pos[ix + 1] = py;
        if (t > 0) {
          const auto prev = static_cast<std::size_t>(((t - 1) * n + i) * 2);
          b.rel_disp[ix] = px - b.abs_pos[prev];
          b.rel_disp[ix + 1] = py - b.abs_pos[prev + 1];
        }
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

struct SceneSpec {
  std::string name;
  std::vector<std::string> files;  // raw trajectory files of this scene
};

struct DatasetSplit {
  std::string name;  // the held-out scene
  std::vector<TrajectoryBatch> train;
  std::vector<TrajectoryBatch> val;
  std::vector<TrajectoryBatch> test;
};

// Leave-one-out assembly. Training and validation windows come from every
// scene except held_out; the held-out scene supplies the test windows.
// Validation takes a seeded floor(val_frac * n) sample per scene; the
// remaining windows keep their extraction order.
inline DatasetSplit make_splits(const std::vector<SceneSpec>& scenes,
                                const std::string& held_out, int obs_len = 8,
                                int pred_len = 12, int min_ped = 3,
                                int skip = 1, double val_frac = 0.2,
                                std::uint64_t seed = 42) {
  if (obs_len < 1 || pred_len < 1) {
    throw std::invalid_argument("make_splits: need obs_len >= 1 and pred_len >= 1");
  }
  if (val_frac < 0.0 || val_frac >= 1.0) {
    throw std::invalid_argument("make_splits: val_frac outside [0, 1)");
  }
  bool found = false;
  for (const auto& s : scenes)
    if (s.name == held_out) found = true;
  if (!found) {
    throw std::invalid_argument("make_splits: unknown held-out scene '" +
                                held_out + "'");
  }
  const int slen = obs_len + pred_len;

  DatasetSplit split;
  split.name = held_out;
  for (const auto& scene : scenes) {
    // Files are processed independently (windows never straddle files) in
    // name order so directory listing order cannot change the result.
    std::vector<std::string> files = scene.files;
    std::sort(files.begin(), files.end());
    std::vector<TrajectoryBatch> windows;
    for (const auto& file : files) {
      auto batches = extract_sequences(parse_raw(file), slen, min_ped, skip, obs_len);
      for (auto& b : batches) windows.push_back(std::move(b));
    }
    if (scene.name == held_out) {
      for (auto& b : windows) split.test.push_back(std::move(b));
      continue;
    }
    // Seeded validation pick, one sub-stream per scene name.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : scene.name) h = (h ^ c) * 1099511628211ULL;
    Rng rng(mix_seed(seed, h));
    std::vector<std::size_t> idx(windows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    const auto n_val = static_cast<std::size_t>(
        val_frac * static_cast<double>(windows.size()));
    std::set<std::size_t> val_set(idx.begin(), idx.begin() + static_cast<long>(n_val));
    for (std::size_t i = 0; i < windows.size(); ++i) {
      if (val_set.count(i))
        split.val.push_back(std::move(windows[i]));
      else
        split.train.push_back(std::move(windows[i]));
    }
  }
  return split;
}

}  // namespace dtgan
