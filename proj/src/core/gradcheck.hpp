#pragma once

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace dman {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;

  bool passed(double tolerance) const { return max_rel_err <= tolerance; }
};

// Central finite differences against the analytic backward pass for every op
// family and for the full joint loss on a fixed 4-node toy graph. All inputs
// are fixed-seed and constructed away from hinge/rectifier kinks. step is
// the finite-difference h.
//
// The error metric per partial derivative is |a-f| / max(|a|, |f|), with
// pairs below 1e-7 in both magnitudes counted as exact agreement.
GradCheckReport run_gradient_checks(double step = 1e-5);

}  // namespace dman
