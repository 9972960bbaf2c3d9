#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace rsg::stats {

enum class StatsErrorKind {
  empty_input,
  insufficient_samples,
  zero_variance,
  length_mismatch,
  degenerate_predictor,
  no_convergence,
  domain,
};

const char* to_string(StatsErrorKind kind);

class StatsError : public std::runtime_error {
 public:
  StatsError(StatsErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  StatsErrorKind kind() const noexcept { return kind_; }

 private:
  StatsErrorKind kind_;
};

/// Cascade summation in ascending index order. Bit-identical for identical
/// input sequences.
double pairwise_sum(std::span<const double> xs);

struct Descriptive {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> sd;  // n - 1 denominator; absent for n == 1
};

Descriptive descriptive(std::span<const double> samples);

/// I_x(a, b) by modified Lentz continued fraction (tolerance 1e-12, at most 300
/// iterations). Throws StatsError{no_convergence} rather than returning an
/// unconverged value.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of
/// freedom, as I_{df/(df+t^2)}(df/2, 1/2). Underflows to 0 for extreme |t|.
double student_t_two_sided_p(double t, double df);

struct TTestResult {
  std::size_t n = 0;
  double mu0 = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double t = 0.0;
  long df = 0;
  double p_two_sided = 1.0;
};

TTestResult t_test_one_sample(std::span<const double> samples, double mu0);

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
  // SS_tot == 0: r2 is reported as 0 and this is set.
  bool degenerate_response = false;
};

/// Simple linear regression ys ~ intercept + slope * xs. Requires n >= 3 and
/// non-zero variance in xs.
OlsFit ols(std::span<const double> xs, std::span<const double> ys);

}  // namespace rsg::stats
