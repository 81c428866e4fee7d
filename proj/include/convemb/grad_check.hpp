#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "convemb/rng.hpp"

namespace convemb {

// One contiguous block of parameters paired with its analytic gradient.
struct ParamSlab {
  double* data = nullptr;
  const double* analytic_grad = nullptr;
  std::size_t size = 0;
};

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t checked = 0;
  std::size_t skipped = 0;   // coordinates flagged as non-smooth and excluded
  std::size_t worst_slab = 0;
  std::size_t worst_index = 0;
};

struct FiniteDiffOptions {
  double h = 1e-5;
  double tol = 1e-4;
  std::size_t max_coords = 0;   // 0 = check every coordinate
  std::uint64_t seed = 1;
  // a coordinate is unreliable when forward and backward one-sided slopes
  // disagree by more than this (relative), e.g. at a hinge kink
  double kink_tol = 1e-3;
};

// Central-difference check of analytic gradients. loss_fn must be a
// deterministic function of the slab contents; it is re-evaluated with each
// sampled coordinate perturbed by +/- h.
inline FiniteDiffReport finite_diff_check(const std::function<double()>& loss_fn,
                                          std::span<const ParamSlab> slabs,
                                          const FiniteDiffOptions& opt = {}) {
  std::size_t total = 0;
  for (const ParamSlab& s : slabs) total += s.size;

  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opt.max_coords > 0 && opt.max_coords < total) {
    Rng rng(opt.seed);
    rng.shuffle(coords);
    coords.resize(opt.max_coords);
  }

  const double f0 = loss_fn();
  FiniteDiffReport rep;
  for (std::size_t flat : coords) {
    std::size_t slab_idx = 0, off = flat;
    while (off >= slabs[slab_idx].size) {
      off -= slabs[slab_idx].size;
      ++slab_idx;
    }
    double* p = slabs[slab_idx].data + off;
    const double analytic = slabs[slab_idx].analytic_grad[off];

    const double saved = *p;
    const double hi = saved + opt.h, lo = saved - opt.h;
    *p = hi;
    const double f_plus = loss_fn();
    *p = lo;
    const double f_minus = loss_fn();
    *p = saved;

    const double numeric = (f_plus - f_minus) / (hi - lo);
    const double fwd = (f_plus - f0) / (hi - saved);
    const double bwd = (f0 - f_minus) / (saved - lo);
    if (std::abs(fwd - bwd) > opt.kink_tol * std::max(1.0, std::abs(numeric))) {
      ++rep.skipped;
      continue;
    }

    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    const double rel = std::abs(numeric - analytic) / denom;
    ++rep.checked;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_slab = slab_idx;
      rep.worst_index = off;
    }
  }
  rep.pass = rep.max_rel_err < opt.tol;
  return rep;
}

}  // namespace convemb
