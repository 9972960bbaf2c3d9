#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "rsg/dumpstore.hpp"
#include "rsg/geometry.hpp"

namespace rsg::test {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "rsg-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline geom::Vec gaussian(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  geom::Vec v(d);
  for (double& x : v) x = n(rng);
  return v;
}

inline std::vector<float> to_f32(const geom::Vec& v) { return {v.begin(), v.end()}; }

inline geom::Vec to_f64(std::span<const float> v) { return {v.begin(), v.end()}; }

// Hand-built trial: every layer uses the same base/conflict pair.
inline Trial make_trial(const std::string& id, const geom::Vec& base, const geom::Vec& conflict,
                        const geom::Vec& w_correct, const geom::Vec& w_adv, std::size_t n_layers,
                        std::vector<float> logits_base = {2.0f, 1.0f},
                        std::vector<float> logits_conflict = {1.0f, 2.0f}) {
  Trial t;
  t.meta.trial_id = id;
  t.meta.question_id = "q-" + id;
  t.meta.prior_id = "p0";
  t.meta.option_labels = {"A", "B"};
  t.meta.correct_index = 0;
  t.meta.adversarial_index = 1;
  t.meta.blobs = default_blob_names(id);
  for (std::size_t l = 0; l < n_layers; ++l) {
    t.base_states.insert(t.base_states.end(), base.begin(), base.end());
    t.conflict_states.insert(t.conflict_states.end(), conflict.begin(), conflict.end());
  }
  t.w_correct = to_f32(w_correct);
  t.w_adversarial = to_f32(w_adv);
  t.final_logits_base = std::move(logits_base);
  t.final_logits_conflict = std::move(logits_conflict);
  return t;
}

inline DumpSet make_dump(std::vector<Trial> trials) {
  DumpSet d;
  d.model_name = "hand";
  d.d_model = 2;
  d.n_layers = 1;
  if (!trials.empty()) {
    d.d_model = trials.front().d_model();
    d.n_layers = trials.front().n_layers();
  }
  d.trials = std::move(trials);
  return d;
}

// Random valid dump: varied sizes, option counts, ids, attributes and float
// payloads (including subnormals, signed zeros and extreme magnitudes).
inline DumpSet random_dump(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(2, 12), layers(1, 6), trials(0, 5), k(2, 5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  DumpSet dump;
  dump.model_name = "fuzz-" + std::to_string(rng() % 1000);
  dump.d_model = dim(rng);
  dump.n_layers = layers(rng);
  dump.attributes = {{"seed", rng() % 100000}, {"note", "fuzz \u00e9\"quoted\""}};
  auto value = [&](bool nonzero) {
    const double pick = unit(rng);
    float v;
    if (pick < -0.8) v = std::ldexp(1.0f, -140);  // subnormal
    else if (pick < -0.6) v = static_cast<float>(unit(rng) * 3e38);
    else if (pick < -0.5 && !nonzero) v = -0.0f;
    else v = static_cast<float>(unit(rng) * 100.0);
    return v;
  };
  const std::size_t n = trials(rng);
  for (std::size_t i = 0; i < n; ++i) {
    Trial t;
    t.meta.trial_id = "trial-" + std::to_string(i);
    t.meta.question_id = "q" + std::to_string(rng() % 50);
    t.meta.prior_id = "prior" + std::to_string(rng() % 5);
    const std::size_t kk = k(rng);
    for (std::size_t j = 0; j < kk; ++j) t.meta.option_labels.push_back(std::string(1, char('A' + j)));
    t.meta.correct_index = static_cast<int>(rng() % kk);
    t.meta.adversarial_index = static_cast<int>((t.meta.correct_index + 1 + rng() % (kk - 1)) % kk);
    t.meta.blobs = default_blob_names(t.meta.trial_id);
    if (rng() % 3 == 0) t.meta.blobs.w_correct = "custom_" + std::to_string(i) + ".wc";
    t.meta.attributes = {{"i", i}, {"x", unit(rng)}};
    for (std::size_t r = 0; r < dump.n_layers; ++r) {
      // First component is kept away from zero so no state row is zero.
      for (auto* m : {&t.base_states, &t.conflict_states}) {
        m->push_back(static_cast<float>(1.0 + std::abs(unit(rng))));
        for (std::size_t c = 1; c < dump.d_model; ++c) m->push_back(value(false));
      }
    }
    for (auto* w : {&t.w_correct, &t.w_adversarial}) {
      w->push_back(static_cast<float>(0.5 + std::abs(unit(rng))));
      for (std::size_t c = 1; c < dump.d_model; ++c) w->push_back(value(false));
    }
    for (std::size_t j = 0; j < kk; ++j) {
      t.final_logits_base.push_back(value(false));
      t.final_logits_conflict.push_back(value(false));
    }
    dump.trials.push_back(std::move(t));
  }
  return dump;
}

}  // namespace rsg::test
