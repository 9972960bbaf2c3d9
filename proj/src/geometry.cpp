#include "rsg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rsg::geom {
namespace {

constexpr std::size_t kLeafSize = 16;

double dot_range(const double* a, const double* b, std::size_t n) {
  if (n <= kLeafSize) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  }
  const std::size_t half = n / 2;
  return dot_range(a, b, half) + dot_range(a + half, b + half, n - half);
}

void require_same_size(ConstVec a, ConstVec b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": dimension mismatch (" +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

double nonzero_norm(ConstVec x, const char* op) {
  const double n = norm(x);
  if (!(n >= kZeroNorm)) {
    throw DomainError(std::string(op) + ": zero vector");
  }
  return n;
}

}  // namespace

double dot(ConstVec a, ConstVec b) {
  require_same_size(a, b, "dot");
  return dot_range(a.data(), b.data(), a.size());
}

double norm(ConstVec x) { return std::sqrt(dot_range(x.data(), x.data(), x.size())); }

Vec normalize_direction(ConstVec x) {
  const double n = nonzero_norm(x, "normalize_direction");
  Vec out(x.begin(), x.end());
  for (double& v : out) v /= n;
  return out;
}

double logit(ConstVec x, ConstVec w) {
  require_same_size(x, w, "logit");
  const double n = nonzero_norm(x, "logit");
  return dot(x, w) / n;
}

Vec interference(ConstVec x_base, ConstVec x_new) {
  require_same_size(x_base, x_new, "interference");
  Vec out(x_new.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x_new[i] - x_base[i];
  return out;
}

double norm_ratio(ConstVec x_base, ConstVec x_new) {
  require_same_size(x_base, x_new, "norm_ratio");
  const double denom = nonzero_norm(x_new, "norm_ratio");
  return norm(x_base) / denom;
}

double cosine(ConstVec a, ConstVec b) {
  require_same_size(a, b, "cosine");
  const double na = nonzero_norm(a, "cosine");
  const double nb = nonzero_norm(b, "cosine");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vec tangent_project(ConstVec x, ConstVec v) {
  require_same_size(x, v, "tangent_project");
  const Vec x_hat = normalize_direction(x);
  const double along = dot(x_hat, v);
  Vec out(v.begin(), v.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= x_hat[i] * along;
  return out;
}

LogitDeltaDecomposition linearized_logit_delta(ConstVec x_base, ConstVec delta,
                                               ConstVec w) {
  require_same_size(x_base, delta, "linearized_logit_delta");
  require_same_size(x_base, w, "linearized_logit_delta");
  const double n = nonzero_norm(x_base, "linearized_logit_delta");
  const Vec x_hat = normalize_direction(x_base);

  LogitDeltaDecomposition out;
  out.term_a = dot(delta, w) / n;
  out.term_b = dot(x_hat, delta) * dot(x_hat, w) / n;
  out.total = out.term_a - out.term_b;
  return out;
}

double dilution_predict(double l_base, double r) {
  if (!(r >= 0.0)) throw DomainError("dilution_predict: r must be non-negative");
  return l_base / std::hypot(1.0, r);
}

}  // namespace rsg::geom
