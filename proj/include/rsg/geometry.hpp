#pragma once

// Closed-form geometry of a residual-stream state under final normalization.
//
// The normalization is taken as x / ||x||; any learned per-dimension gain (and
// the sqrt(d) factor of RMSNorm) is assumed folded into the unembedding rows,
// so directions, cosines and ratios are identical to the RMSNorm ones.
//
// All arithmetic is double precision. Inputs shorter than kZeroNorm in L2 norm
// where a direction is required raise DomainError.

#include <span>
#include <stdexcept>
#include <vector>

namespace rsg::geom {

using Vec = std::vector<double>;
using ConstVec = std::span<const double>;

/// Norms below this are treated as the zero vector.
inline constexpr double kZeroNorm = 1e-30;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Thrown when two operands have different lengths.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Pairwise (cascade) summed inner product; the reduction order depends only
/// on the length, never on thread count or call site.
double dot(ConstVec a, ConstVec b);
double norm(ConstVec x);

Vec normalize_direction(ConstVec x);

/// Logit-lens value <x/||x||, w>.
double logit(ConstVec x, ConstVec w);

/// x_new - x_base.
Vec interference(ConstVec x_base, ConstVec x_new);

/// ||x_base|| / ||x_new||; below 1 means the state grew under conflict.
double norm_ratio(ConstVec x_base, ConstVec x_new);

/// Cosine similarity, clamped to [-1, 1].
double cosine(ConstVec a, ConstVec b);

/// v with its component along x removed: v - x_hat <x_hat, v>.
Vec tangent_project(ConstVec x, ConstVec v);

/// First-order change of logit(x, w) under x -> x + delta, split into the
/// alignment term <delta, w>/||x|| and the norm-correction term
/// <x_hat, delta><x_hat, w>/||x||. total == term_a - term_b.
struct LogitDeltaDecomposition {
  double total = 0.0;
  double term_a = 0.0;
  double term_b = 0.0;
};

LogitDeltaDecomposition linearized_logit_delta(ConstVec x_base, ConstVec delta,
                                               ConstVec w);

/// l_base / sqrt(1 + r^2) with r = beta ||w_wrong|| / ||x_base||. Exact when
/// the injected direction is orthogonal to both x_base and w_correct.
double dilution_predict(double l_base, double r);

}  // namespace rsg::geom
