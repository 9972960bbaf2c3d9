#include "rsg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rsg::stats {
namespace {

constexpr double kBetaTolerance = 1e-12;
constexpr int kBetaMaxIterations = 300;
constexpr double kTiny = 1e-300;

double sum_range(const double* xs, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xs[i];
    return s;
  }
  const std::size_t half = n / 2;
  return sum_range(xs, half) + sum_range(xs + half, n - half);
}

// Continued fraction for I_x(a, b); converges quickly for x < (a+1)/(a+b+2).
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kBetaMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kBetaTolerance) return h;
  }
  throw StatsError(StatsErrorKind::no_convergence,
                   "incomplete beta: continued fraction did not converge (a=" +
                       std::to_string(a) + ", b=" + std::to_string(b) +
                       ", x=" + std::to_string(x) + ")");
}

// I_x(a, b) with y = 1 - x passed separately so callers can supply it without
// cancellation.
double incomplete_beta(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log(y);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

}  // namespace

const char* to_string(StatsErrorKind kind) {
  switch (kind) {
    case StatsErrorKind::empty_input: return "empty input";
    case StatsErrorKind::insufficient_samples: return "insufficient samples";
    case StatsErrorKind::zero_variance: return "zero variance";
    case StatsErrorKind::length_mismatch: return "length mismatch";
    case StatsErrorKind::degenerate_predictor: return "degenerate predictor";
    case StatsErrorKind::no_convergence: return "no convergence";
    case StatsErrorKind::domain: return "domain error";
  }
  return "unknown";
}

double pairwise_sum(std::span<const double> xs) { return sum_range(xs.data(), xs.size()); }

Descriptive descriptive(std::span<const double> samples) {
  if (samples.empty()) {
    throw StatsError(StatsErrorKind::empty_input, "descriptive: empty input");
  }
  Descriptive out;
  out.n = samples.size();
  out.mean = pairwise_sum(samples) / static_cast<double>(out.n);
  if (out.n >= 2) {
    std::vector<double> sq(samples.size());
    for (std::size_t i = 0; i < sq.size(); ++i) {
      const double dev = samples[i] - out.mean;
      sq[i] = dev * dev;
    }
    out.sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(out.n - 1));
  }
  return out;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    throw StatsError(StatsErrorKind::domain, "incomplete beta: argument out of domain");
  }
  return incomplete_beta(a, b, x, 1.0 - x);
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0) || std::isnan(t)) {
    throw StatsError(StatsErrorKind::domain, "student t: invalid arguments");
  }
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  return std::clamp(incomplete_beta(0.5 * df, 0.5, x, y), 0.0, 1.0);
}

TTestResult t_test_one_sample(std::span<const double> samples, double mu0) {
  if (samples.size() < 2) {
    throw StatsError(StatsErrorKind::insufficient_samples,
                     "t-test: need at least 2 samples, got " +
                         std::to_string(samples.size()));
  }
  const Descriptive d = descriptive(samples);
  if (!(*d.sd > 0.0)) {
    throw StatsError(StatsErrorKind::zero_variance, "t-test: zero variance");
  }
  TTestResult r;
  r.n = d.n;
  r.mu0 = mu0;
  r.mean = d.mean;
  r.sd = *d.sd;
  r.df = static_cast<long>(d.n) - 1;
  r.t = (d.mean - mu0) * std::sqrt(static_cast<double>(d.n)) / r.sd;
  r.p_two_sided = student_t_two_sided_p(r.t, static_cast<double>(r.df));
  return r;
}

OlsFit ols(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw StatsError(StatsErrorKind::length_mismatch,
                     "ols: length mismatch (" + std::to_string(xs.size()) + " vs " +
                         std::to_string(ys.size()) + ")");
  }
  const std::size_t n = xs.size();
  if (n < 3) {
    throw StatsError(StatsErrorKind::insufficient_samples,
                     "ols: need at least 3 points, got " + std::to_string(n));
  }
  const double nd = static_cast<double>(n);
  const double x_mean = pairwise_sum(xs) / nd;
  const double y_mean = pairwise_sum(ys) / nd;

  std::vector<double> sxx(n), sxy(n), syy(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - x_mean;
    const double dy = ys[i] - y_mean;
    sxx[i] = dx * dx;
    sxy[i] = dx * dy;
    syy[i] = dy * dy;
  }
  const double s_xx = pairwise_sum(sxx);
  const double s_xy = pairwise_sum(sxy);
  const double ss_tot = pairwise_sum(syy);
  if (!(s_xx > 0.0)) {
    throw StatsError(StatsErrorKind::degenerate_predictor, "ols: predictor has zero variance");
  }

  OlsFit fit;
  fit.n = n;
  fit.slope = s_xy / s_xx;
  fit.intercept = y_mean - fit.slope * x_mean;
  if (ss_tot > 0.0) {
    std::vector<double> res(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
      res[i] = e * e;
    }
    fit.r2 = std::clamp(1.0 - pairwise_sum(res) / ss_tot, 0.0, 1.0);
  } else {
    fit.r2 = 0.0;
    fit.degenerate_response = true;
  }
  return fit;
}

}  // namespace rsg::stats
