#pragma once

// RSGD v1 activation dump format.
//
// A dump is a directory:
//
//   <dir>/manifest.json        UTF-8 JSON, see DumpManifest / TrialMeta
//   <dir>/blobs/<name>.f32     raw float32, little-endian, row-major
//
// Per trial the manifest names six blobs:
//   base_states, conflict_states   [n_layers x d_model], layer-major
//   w_correct, w_adversarial       [d_model]
//   final_logits_base/_conflict    [k] (k = number of option labels)
//
// Row L of a state matrix is the final-token residual state after layer L,
// taken before the final normalization. Unembedding rows carry the final
// normalization gain already folded in.

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rsg {

inline constexpr std::string_view kFormatVersion = "rsgd-1";
inline constexpr std::string_view kDtype = "f32le";
inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kBlobDir = "blobs";

class DumpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BlobNames {
  std::string base_states;
  std::string conflict_states;
  std::string w_correct;
  std::string w_adversarial;
  std::string final_logits_base;
  std::string final_logits_conflict;

  bool operator==(const BlobNames&) const = default;
};

/// "<trial_id>.base_states", "<trial_id>.w_correct", ...
BlobNames default_blob_names(std::string_view trial_id);

struct TrialMeta {
  std::string trial_id;
  std::string question_id;
  std::string prior_id;
  std::vector<std::string> option_labels;
  int correct_index = 0;
  int adversarial_index = 1;
  BlobNames blobs;
  // Free-form per-trial metadata (the synthetic generator stores its ground
  // truth here). Round-trips through the manifest unchanged.
  nlohmann::json attributes = nlohmann::json::object();

  bool operator==(const TrialMeta&) const = default;
};

struct Trial {
  TrialMeta meta;
  std::vector<float> base_states;
  std::vector<float> conflict_states;
  std::vector<float> w_correct;
  std::vector<float> w_adversarial;
  std::vector<float> final_logits_base;
  std::vector<float> final_logits_conflict;

  std::size_t d_model() const { return w_correct.size(); }
  std::size_t n_layers() const {
    return w_correct.empty() ? 0 : base_states.size() / w_correct.size();
  }
  std::span<const float> base_row(std::size_t layer) const;
  std::span<const float> conflict_row(std::size_t layer) const;
};

struct DumpSet {
  std::string model_name;
  std::size_t d_model = 0;
  std::size_t n_layers = 0;
  nlohmann::json attributes = nlohmann::json::object();
  std::vector<Trial> trials;
};

/// True when metadata is equal and every float array matches bit for bit.
bool bit_identical(const DumpSet& a, const DumpSet& b);

struct Violation {
  std::string trial_id;  // empty for dump-level problems
  std::string message;
};

using ValidationReport = std::vector<Violation>;

std::string to_string(const Violation& v);

/// Every invariant violation of an in-memory dump (does not stop at the first).
ValidationReport validate(const DumpSet& dump);

/// Writes `dump` to directory `path` via a sibling staging directory that is
/// renamed into place. Throws DumpError without touching `path` if the dump
/// is invalid. An existing `path` is replaced only if it is empty or holds a
/// previous dump (has a manifest).
void write_dump(const DumpSet& dump, const std::filesystem::path& path);

/// Loads and re-validates a dump. Throws DumpError carrying the first
/// violation (and the total count) if validate_dump(path) would be non-empty.
DumpSet read_dump(const std::filesystem::path& path);

/// Every violation found on disk. Throws DumpError only if `path` is not a
/// readable directory.
ValidationReport validate_dump(const std::filesystem::path& path);

}  // namespace rsg
