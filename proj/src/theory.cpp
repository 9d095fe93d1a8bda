#include "samlab/theory.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace samlab {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double log_odds(double p) { return std::log(p) - std::log(1.0 - p); }

}  // namespace

void FeatureModelSpec::validate() const {
  require(p > 0.5 && p < 1.0, "feature model: p must lie in (0.5, 1)");
  require(eta > 0.0 && std::isfinite(eta), "feature model: eta must be positive");
  require(n >= 1, "feature model: n must be at least 1");
}

double phi(double z) {
  if (!std::isfinite(z)) throw std::invalid_argument("phi: argument must be finite");
  return 0.5 * std::erfc(-z * kInvSqrt2);
}

double clean_accuracy(double w1, const FeatureModelSpec& spec) {
  spec.validate();
  const double root_n = std::sqrt(static_cast<double>(spec.n));
  const double shift = spec.eta * static_cast<double>(spec.n);
  return spec.p * phi((w1 + shift) / root_n) + (1.0 - spec.p) * phi((-w1 + shift) / root_n);
}

double adv_accuracy(double w1, const FeatureModelSpec& spec, double eps_at) {
  spec.validate();
  if (eps_at < 0.0 || eps_at >= spec.eta) {
    std::ostringstream msg;
    msg << "adv_accuracy: eps_at must lie in [0, eta); got eps_at=" << eps_at
        << " with eta=" << spec.eta;
    throw std::invalid_argument(msg.str());
  }
  FeatureModelSpec attacked = spec;
  attacked.eta = spec.eta - eps_at;
  return clean_accuracy(w1, attacked);
}

namespace {

// Upper normal tail with full relative precision deep into the tail.
double upper_tail(double z) { return 0.5 * std::erfc(z * kInvSqrt2); }

}  // namespace

double equal_heights_gap(double w1, const FeatureModelSpec& spec, double eps) {
  spec.validate();
  require(eps >= 0.0 && std::isfinite(eps), "equal_heights_gap: eps must be >= 0");
  const double root_n = std::sqrt(static_cast<double>(spec.n));
  const double shift = spec.eta * static_cast<double>(spec.n);
  // u(w-eps) - u(w+eps) with each Phi difference rewritten as a difference
  // of upper tails, which cancels the order-1 constant before rounding:
  //   p [Q((w+eps+s)/r) - Q((w-eps+s)/r)] ... with Q the upper tail.
  const double a_lo = (w1 - eps + shift) / root_n;
  const double a_hi = (w1 + eps + shift) / root_n;
  const double b_lo = (w1 - eps - shift) / root_n;
  const double b_hi = (w1 + eps - shift) / root_n;
  return spec.p * (upper_tail(a_hi) - upper_tail(a_lo)) +
         (1.0 - spec.p) * (upper_tail(b_lo) - upper_tail(b_hi));
}

WrResult wr_standard(const FeatureModelSpec& spec) {
  spec.validate();
  WrResult result;
  result.w1 = log_odds(spec.p) / (2.0 * spec.eta);
  result.wr = result.w1 / static_cast<double>(spec.n);
  return result;
}

WrResult wr_at(const FeatureModelSpec& spec, double eps_at) {
  spec.validate();
  if (eps_at < 0.0 || eps_at >= spec.eta) {
    std::ostringstream msg;
    msg << "wr_at: eps_at must lie in [0, eta); got eps_at=" << eps_at << " with eta=" << spec.eta;
    throw std::invalid_argument(msg.str());
  }
  WrResult result;
  result.w1 = log_odds(spec.p) / (2.0 * (spec.eta - eps_at));
  result.wr = result.w1 / static_cast<double>(spec.n);
  return result;
}

SamSolve wr_sam_numeric(const FeatureModelSpec& spec, double eps_sam) {
  spec.validate();
  require(eps_sam >= 0.0 && std::isfinite(eps_sam), "wr_sam_numeric: eps_sam must be >= 0");

  const WrResult standard = wr_standard(spec);
  SamSolve solve;
  if (eps_sam == 0.0) {
    solve.w1 = standard.w1;
    solve.wr = standard.wr;
    solve.bracket_lo = solve.bracket_hi = standard.w1;
    return solve;
  }

  const auto gap = [&](double w) { return equal_heights_gap(w, spec, eps_sam); };

  double lo = standard.w1;
  double hi = standard.w1 + eps_sam;
  double g_lo = gap(lo);
  double g_hi = gap(hi);
  // u peaks strictly at w1*, so gap(w1*) < 0 and gap(w1* + eps) > 0 hold for
  // every valid spec; extend geometrically if the upper sign check ever
  // fails.
  int extensions = 0;
  while (g_hi <= 0.0 && extensions < 60) {
    hi = standard.w1 + std::ldexp(eps_sam, ++extensions);
    g_hi = gap(hi);
    solve.bracket_extended = true;
  }
  if (g_lo >= 0.0 || g_hi <= 0.0) {
    std::ostringstream msg;
    msg << "wr_sam_numeric: bracket sign condition violated: gap(" << lo << ")=" << g_lo
        << ", gap(" << hi << ")=" << g_hi;
    throw std::runtime_error(msg.str());
  }
  solve.bracket_lo = lo;
  solve.bracket_hi = hi;

  double mid = lo;
  double g_mid = g_lo;
  const double width_tol = 1e-13 * std::max(1.0, std::abs(hi));
  int iter = 0;
  while (iter < 300 && (hi - lo) > width_tol) {
    mid = 0.5 * (lo + hi);
    g_mid = gap(mid);
    if (g_mid == 0.0) break;
    if (g_mid < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    ++iter;
  }

  solve.w1 = mid;
  solve.wr = mid / static_cast<double>(spec.n);
  solve.residual = std::abs(g_mid);
  solve.iterations = iter;
  return solve;
}

double wr_sam_approx(const FeatureModelSpec& spec, double eps_sam) {
  spec.validate();
  require(eps_sam >= 0.0 && std::isfinite(eps_sam), "wr_sam_approx: eps_sam must be >= 0");
  return wr_standard(spec).wr * (1.0 + (2.0 / 3.0) * eps_sam * eps_sam);
}

EpsRelation eps_at_equivalent(const FeatureModelSpec& spec, double eps_sam) {
  spec.validate();
  if (!(eps_sam > 0.0) || !std::isfinite(eps_sam)) {
    throw std::invalid_argument("eps_at_equivalent: eps_sam must be positive");
  }
  EpsRelation relation;
  relation.eps_at_approx = 2.0 * spec.eta / (2.0 + 3.0 / (eps_sam * eps_sam));
  // Exact match: wr_at(eps) = wr_star * eta / (eta - eps), inverted at the
  // numeric solution.
  const double wr_star = wr_standard(spec).wr;
  const double wr_sam = wr_sam_numeric(spec, eps_sam).wr;
  relation.eps_at_exact = spec.eta * (1.0 - wr_star / wr_sam);
  return relation;
}

double estimate_wr(std::span<const double> weights) {
  if (weights.size() < 2) {
    throw std::invalid_argument("estimate_wr: need at least 2 weights");
  }
  double denom = 0.0;
  for (std::size_t i = 1; i < weights.size(); ++i) denom += weights[i];
  if (std::abs(denom) < 1e-12) {
    throw std::runtime_error("estimate_wr: non-robust weight sum is too close to zero");
  }
  return weights[0] / denom;
}

TheoryReport make_theory_report(const FeatureModelSpec& spec, double eps) {
  spec.validate();
  require(eps >= 0.0 && std::isfinite(eps), "theory report: eps must be >= 0");

  TheoryReport report;
  report.spec = spec;
  report.eps = eps;
  const WrResult standard = wr_standard(spec);
  report.w1_star = standard.w1;
  report.wr_star = standard.wr;
  if (eps < spec.eta) {
    const WrResult at = wr_at(spec, eps);
    report.has_at = true;
    report.w1_at = at.w1;
    report.wr_at = at.wr;
  }
  report.solver = wr_sam_numeric(spec, eps);
  report.w1_sam = report.solver.w1;
  report.wr_sam_numeric = report.solver.wr;
  report.wr_sam_approx = wr_sam_approx(spec, eps);
  if (eps > 0.0) {
    const EpsRelation relation = eps_at_equivalent(spec, eps);
    report.eps_at_equiv = relation.eps_at_approx;
    report.eps_at_exact = relation.eps_at_exact;
  }
  return report;
}

}  // namespace samlab
