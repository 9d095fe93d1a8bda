#pragma once

#include <cstddef>
#include <span>

#include "samlab/feature_model.hpp"

namespace samlab {

/// Closed-form analysis of the synthetic feature model. All functions are
/// pure; the non-robust weights are pinned to 1 throughout (the optimal
/// classifier weights them equally), so everything below is one-dimensional
/// in the robust-feature weight w1.

/// Standard normal CDF via the complementary error function; absolute error
/// well below 1e-12 over the full double range.
double phi(double z);

/// Exact expected 0-1 accuracy of sign(w . x) with w = (w1, 1, ..., 1):
///   p * Phi((w1 + eta*n)/sqrt(n)) + (1-p) * Phi((-w1 + eta*n)/sqrt(n)).
double clean_accuracy(double w1, const FeatureModelSpec& spec);

/// Worst-case accuracy under an l-inf attack of size eps_at on the
/// non-robust coordinates (the robust coordinate cannot be flipped): equals
/// clean_accuracy with eta replaced by eta - eps_at. Requires
/// 0 <= eps_at < eta.
double adv_accuracy(double w1, const FeatureModelSpec& spec, double eps_at);

/// clean_accuracy(w1 - eps) - clean_accuracy(w1 + eps), evaluated through
/// upper normal tails so the sign stays meaningful even where the accuracy
/// itself is flat to machine precision (large w1 against a weak Gaussian
/// block). The equal-heights solver roots this function.
double equal_heights_gap(double w1, const FeatureModelSpec& spec, double eps);

struct WrResult {
  double w1 = 0.0;  // optimal robust-feature weight
  double wr = 0.0;  // robust feature weight w1 / n
};

/// Standard training optimum: w1 = ln(p/(1-p)) / (2*eta).
WrResult wr_standard(const FeatureModelSpec& spec);

/// Adversarial-training optimum for perturbation bound eps_at < eta:
/// w1 = ln(p/(1-p)) / (2*(eta - eps_at)).
WrResult wr_at(const FeatureModelSpec& spec, double eps_at);

struct SamSolve {
  double w1 = 0.0;
  double wr = 0.0;
  double residual = 0.0;  // |u(w1 - eps) - u(w1 + eps)| at the solution
  int iterations = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  bool bracket_extended = false;
};

/// Weight-perturbed training optimum: solves the equal-heights condition
/// u(w - eps) = u(w + eps) by bisection on [w1*, w1* + eps], where u is
/// clean_accuracy. The bracket is valid because u is unimodal with its peak
/// at w1*; if the upper end ever fails the sign condition the bracket is
/// extended geometrically and flagged. eps_sam = 0 returns the standard
/// optimum.
SamSolve wr_sam_numeric(const FeatureModelSpec& spec, double eps_sam);

/// Small-eps expansion of the weight-perturbed optimum in the form
/// wr_standard * (1 + (2/3) eps^2). The numeric solver is the ground truth;
/// the quadratic coefficient here follows the closed-form derivation, whose
/// accuracy against the solver is itself measured by the tests.
double wr_sam_approx(const FeatureModelSpec& spec, double eps_sam);

struct EpsRelation {
  double eps_at_approx = 0.0;  // 2*eta / (2 + 3/eps_sam^2)
  double eps_at_exact = 0.0;   // inverts wr_at at the numeric solution
};

/// Perturbation budget the input-space method needs to reach the same
/// robust feature weight as weight perturbation with eps_sam > 0.
EpsRelation eps_at_equivalent(const FeatureModelSpec& spec, double eps_sam);

/// Robust feature weight of an explicit weight vector:
/// w[0] / (w[1] + ... + w[d-1]). Requires length >= 2 and a denominator
/// bounded away from zero.
double estimate_wr(std::span<const double> weights);

/// All derived quantities for one (spec, eps) pair, as emitted by the
/// theory task. The adversarial columns require eps < eta and are flagged
/// absent otherwise; the weight-perturbation columns exist for any eps >= 0.
struct TheoryReport {
  FeatureModelSpec spec;
  double eps = 0.0;
  double w1_star = 0.0;
  double wr_star = 0.0;
  bool has_at = false;
  double w1_at = 0.0;
  double wr_at = 0.0;
  double w1_sam = 0.0;
  double wr_sam_numeric = 0.0;
  double wr_sam_approx = 0.0;
  double eps_at_equiv = 0.0;
  double eps_at_exact = 0.0;
  SamSolve solver;
};

/// Computes a full report for eps >= 0.
TheoryReport make_theory_report(const FeatureModelSpec& spec, double eps);

}  // namespace samlab
