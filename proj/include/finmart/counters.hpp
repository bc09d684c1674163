#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace finmart {

// Result of a path-statistic counter. The witness chain, when recorded,
// satisfies i1 < j1 <= i2 < j2 <= ... with the defining inequality of the
// counted statistic holding on every pair.
struct CounterResult {
  std::size_t count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> witness;
};

// Number of eps-fluctuations of the prefix X_0..X_{N-1}: the maximal k
// admitting a chain i1<j1<=i2<j2<=...<=ik<jk<N with |X_{i_l}-X_{j_l}| >= eps.
//
// Greedy: grow a window from the current anchor and cut at the first index
// where the window's range reaches eps; the cut index becomes the next
// anchor (the definition permits j_l = i_{l+1}). Cutting as early as
// possible is maximal; the test suite certifies this against exhaustive
// chain search.
inline CounterResult count_fluctuations(std::span<const double> path, double eps, std::size_t N) {
  if (!(eps > 0.0)) throw std::invalid_argument("count_fluctuations: eps must be > 0");
  if (N > path.size()) throw std::invalid_argument("count_fluctuations: N beyond path length");
  CounterResult res;
  if (N < 2) return res;
  std::size_t lo_idx = 0, hi_idx = 0;  // argmin/argmax of the current window
  for (std::size_t t = 1; t < N; ++t) {
    if (path[t] < path[lo_idx]) lo_idx = t;
    if (path[t] > path[hi_idx]) hi_idx = t;
    if (path[hi_idx] - path[lo_idx] >= eps) {
      // X_t is the extreme that completed the pair; partner is the opposite one.
      std::size_t partner = (t == lo_idx) ? hi_idx : lo_idx;
      res.witness.emplace_back(partner < t ? partner : t, partner < t ? t : partner);
      ++res.count;
      lo_idx = hi_idx = t;  // new window starts at the cut index
    }
  }
  return res;
}

// Downcrossings of [alpha, beta] before N: maximal chain with
// beta <= X_{i_l} and X_{j_l} <= alpha.
inline CounterResult count_downcrossings(std::span<const double> path, double alpha, double beta,
                                         std::size_t N) {
  if (!(alpha < beta)) throw std::invalid_argument("count_downcrossings: need alpha < beta");
  if (N > path.size()) throw std::invalid_argument("count_downcrossings: N beyond path length");
  CounterResult res;
  bool armed = false;  // have seen X >= beta, waiting for X <= alpha
  std::size_t anchor = 0;
  for (std::size_t t = 0; t < N; ++t) {
    if (!armed) {
      if (path[t] >= beta) {
        armed = true;
        anchor = t;
      }
    } else if (path[t] <= alpha) {
      res.witness.emplace_back(anchor, t);
      ++res.count;
      armed = false;
    }
  }
  return res;
}

// Dual statistic: X_{i_l} <= alpha and X_{j_l} >= beta.
inline CounterResult count_upcrossings(std::span<const double> path, double alpha, double beta,
                                       std::size_t N) {
  if (!(alpha < beta)) throw std::invalid_argument("count_upcrossings: need alpha < beta");
  if (N > path.size()) throw std::invalid_argument("count_upcrossings: N beyond path length");
  CounterResult res;
  bool armed = false;
  std::size_t anchor = 0;
  for (std::size_t t = 0; t < N; ++t) {
    if (!armed) {
      if (path[t] <= alpha) {
        armed = true;
        anchor = t;
      }
    } else if (path[t] >= beta) {
      res.witness.emplace_back(anchor, t);
      ++res.count;
      armed = false;
    }
  }
  return res;
}

// Set-fluctuations over a family of scalar tracks (one per anchor point,
// typically track[z][n] = G(d(x_n, z))). A pair (i, j) is admissible when
// SOME track moves by at least eps between i and j. Same greedy window
// structure as count_fluctuations, with per-track extremes.
inline CounterResult count_set_fluctuations_tracks(const std::vector<std::vector<double>>& tracks,
                                                   double eps, std::size_t N) {
  if (tracks.empty()) throw std::invalid_argument("count_set_fluctuations: empty anchor set");
  if (!(eps > 0.0)) throw std::invalid_argument("count_set_fluctuations: eps must be > 0");
  for (const auto& tr : tracks)
    if (N > tr.size()) throw std::invalid_argument("count_set_fluctuations: N beyond track length");
  CounterResult res;
  if (N < 2) return res;
  const std::size_t Z = tracks.size();
  std::vector<std::size_t> lo(Z, 0), hi(Z, 0);
  auto reset = [&](std::size_t t) {
    for (std::size_t z = 0; z < Z; ++z) lo[z] = hi[z] = t;
  };
  for (std::size_t t = 1; t < N; ++t) {
    bool cut = false;
    for (std::size_t z = 0; z < Z && !cut; ++z) {
      const auto& tr = tracks[z];
      if (tr[t] < tr[lo[z]]) lo[z] = t;
      if (tr[t] > tr[hi[z]]) hi[z] = t;
      if (tr[hi[z]] - tr[lo[z]] >= eps) {
        std::size_t partner = (t == lo[z]) ? hi[z] : lo[z];
        res.witness.emplace_back(partner < t ? partner : t, partner < t ? t : partner);
        ++res.count;
        cut = true;
      }
    }
    if (cut) reset(t);
  }
  return res;
}

}  // namespace finmart
