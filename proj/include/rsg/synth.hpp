#pragma once

// Synthetic dumps with exactly controlled geometry, plus the two closed-form
// sweeps (dilution law, linearization order of accuracy).
//
// Every trial draws an orthonormal frame (u, v) by Gram-Schmidt on seeded
// Gaussian vectors: w_correct = u, w_adversarial = v, x_base = alpha * u at
// every layer. The interference vector depends on the mode:
//
//   dilution      Delta = beta * v                     (orthogonal to x_base and u)
//   rotation      x_new = alpha (cos psi u + sin psi v), ||Delta|| = beta
//   antiparallel  Delta = -beta * x_base / ||x_base||  (pure radial shrink)
//   general       Delta = beta (cos theta u + sin theta v)
//
// With sigma_noise > 0, independent N(0, sigma^2) noise is added per component
// and per layer to x_base and to Delta. Randomness for trial i is derived from
// (seed, i) only, so output does not depend on thread count.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsg/dumpstore.hpp"
#include "rsg/geometry.hpp"

namespace rsg::synth {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { dilution, rotation, antiparallel, general };

const char* to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

/// Closed interval; lo == hi means a fixed value. Draws are uniform.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  static Range fixed(double v) { return {v, v}; }
};

struct SyntheticConfig {
  std::size_t d = 64;
  std::size_t n_layers = 8;
  std::size_t n_trials = 10;
  double alpha = 10.0;
  Range beta = Range::fixed(2.0);
  Range theta_deg = Range::fixed(90.0);  // general mode only
  double sigma_noise = 0.0;
  Mode mode = Mode::dilution;
  std::uint64_t seed = 0;
};

/// Throws ConfigError describing the first problem.
void validate(const SyntheticConfig& cfg);

nlohmann::json to_json(const SyntheticConfig& cfg);

/// Closed-form geometry of one noise-free trial; stored in each trial's
/// attributes under "ground_truth".
struct GroundTruth {
  double beta = 0.0;
  double theta_deg = 0.0;
  double gamma = 1.0;
  std::optional<double> cos_delta_wcorrect;  // absent when Delta == 0
  std::optional<double> cos_delta_wadversarial;
  double l_base = 1.0;
  double l_new = 1.0;
  // (<x_new, v> - <x_new, u>) / ||x_new||; positive means the conflict state
  // prefers the adversarial option.
  double flip_margin = 0.0;
};

GroundTruth ground_truth(const SyntheticConfig& cfg, double beta, double theta_deg);

DumpSet gen_dump(const SyntheticConfig& cfg, unsigned threads = 1);

/// Seeded orthonormal pair of dimension d for stream `stream` of `seed`.
struct Frame {
  geom::Vec u;
  geom::Vec v;
};
Frame draw_frame(std::size_t d, std::uint64_t seed, std::uint64_t stream);

struct BetaSweepRow {
  double beta = 0.0;
  double l_exact = 0.0;
  double l_predicted = 0.0;
  double abs_err = 0.0;
};

/// Dilution law vs exact logits. x_base = alpha * u, w_correct = u, and
/// w_wrong is a unit vector with cos(x_base, w_wrong) = wrong_overlap (0 for
/// the orthogonal case the law assumes).
std::vector<BetaSweepRow> beta_sweep(const SyntheticConfig& cfg, std::span<const double> betas,
                                     double wrong_overlap = 0.0);

struct ConvergenceRow {
  double scale = 0.0;
  double abs_err = 0.0;
  std::optional<double> ratio;  // abs_err / previous abs_err
};

/// |logit(x + s ||x|| dir) - logit(x) - linearized(x, s ||x|| dir).total| for
/// each scale s (non-negative, strictly descending).
std::vector<ConvergenceRow> linearization_errors(geom::ConstVec x, geom::ConstVec w,
                                                 geom::ConstVec direction,
                                                 std::span<const double> scales);

/// linearization_errors with independent Gaussian x and w and a random unit
/// direction tangent to x.
std::vector<ConvergenceRow> linearization_convergence(std::size_t d, std::uint64_t seed,
                                                      std::span<const double> scales);

std::string beta_sweep_csv(std::span<const BetaSweepRow> rows);
std::string convergence_csv(std::span<const ConvergenceRow> rows);

}  // namespace rsg::synth
