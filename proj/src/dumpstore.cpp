#include "rsg/dumpstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>

#include "rsg/geometry.hpp"

namespace rsg {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kFloatBytes = 4;
static_assert(sizeof(float) == kFloatBytes);

class Sink {
 public:
  explicit Sink(ValidationReport& out) : out_(out) {}
  void add(std::string trial_id, std::string message) {
    out_.push_back({std::move(trial_id), std::move(message)});
  }

 private:
  ValidationReport& out_;
};

bool valid_blob_name(const std::string& name) {
  if (name.empty() || name.front() == '.') return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-' || c == '.';
  });
}

struct BlobSlot {
  const char* field;
  std::string BlobNames::*name;
  std::vector<float> Trial::*data;
};

constexpr BlobSlot kSlots[] = {
    {"base_states", &BlobNames::base_states, &Trial::base_states},
    {"conflict_states", &BlobNames::conflict_states, &Trial::conflict_states},
    {"w_correct", &BlobNames::w_correct, &Trial::w_correct},
    {"w_adversarial", &BlobNames::w_adversarial, &Trial::w_adversarial},
    {"final_logits_base", &BlobNames::final_logits_base, &Trial::final_logits_base},
    {"final_logits_conflict", &BlobNames::final_logits_conflict, &Trial::final_logits_conflict},
};

bool is_state_slot(const BlobSlot& s) {
  return s.data == &Trial::base_states || s.data == &Trial::conflict_states;
}

bool is_direction_slot(const BlobSlot& s) {
  return s.data == &Trial::w_correct || s.data == &Trial::w_adversarial;
}

std::size_t expected_count(const BlobSlot& s, const TrialMeta& meta, std::size_t n_layers,
                           std::size_t d_model) {
  if (is_state_slot(s)) return n_layers * d_model;
  if (is_direction_slot(s)) return d_model;
  return meta.option_labels.size();
}

void check_header(std::string_view version, std::string_view dtype, long long d_model,
                  long long n_layers, Sink& sink) {
  if (version != kFormatVersion) {
    sink.add("", "unsupported version '" + std::string(version) + "' (expected '" +
                     std::string(kFormatVersion) + "')");
  }
  if (dtype != kDtype) {
    sink.add("", "unsupported dtype '" + std::string(dtype) + "' (expected '" +
                     std::string(kDtype) + "')");
  }
  if (d_model < 2) sink.add("", "d_model must be >= 2, got " + std::to_string(d_model));
  if (n_layers < 1) sink.add("", "n_layers must be >= 1, got " + std::to_string(n_layers));
}

void check_meta(const TrialMeta& m, Sink& sink) {
  const std::string& id = m.trial_id;
  if (id.empty()) sink.add(id, "empty trial_id");
  const auto k = static_cast<long long>(m.option_labels.size());
  if (k < 2) sink.add(id, "need at least 2 option labels, got " + std::to_string(k));
  if (m.correct_index < 0 || m.correct_index >= k) {
    sink.add(id, "correct_index " + std::to_string(m.correct_index) + " out of range [0," +
                     std::to_string(k) + ")");
  }
  if (m.adversarial_index < 0 || m.adversarial_index >= k) {
    sink.add(id, "adversarial_index " + std::to_string(m.adversarial_index) +
                     " out of range [0," + std::to_string(k) + ")");
  } else if (m.adversarial_index == m.correct_index) {
    sink.add(id, "adversarial_index equals correct_index (" +
                     std::to_string(m.correct_index) + ")");
  }
  std::set<std::string> seen;
  for (const BlobSlot& s : kSlots) {
    const std::string& name = m.blobs.*s.name;
    if (!valid_blob_name(name)) {
      sink.add(id, std::string("invalid blob name '") + name + "' for " + s.field);
    } else if (!seen.insert(name).second) {
      sink.add(id, "blob '" + name + "' referenced twice");
    }
  }
}

void check_ids(const std::vector<const TrialMeta*>& metas, Sink& sink) {
  std::set<std::string> owned;
  for (const TrialMeta* m : metas) {
    std::set<std::string> mine;
    for (const BlobSlot& s : kSlots) mine.insert(m->blobs.*s.name);
    for (const std::string& name : mine) {
      if (!owned.insert(name).second) {
        sink.add(m->trial_id, "blob '" + name + "' shared with another trial");
      }
    }
  }
  for (std::size_t i = 1; i < metas.size(); ++i) {
    const std::string& prev = metas[i - 1]->trial_id;
    const std::string& cur = metas[i]->trial_id;
    if (cur == prev) {
      sink.add(cur, "duplicate trial_id");
    } else if (cur < prev) {
      sink.add(cur, "trial ids not sorted ascending ('" + cur + "' after '" + prev + "')");
    }
  }
}

// Values already known to have the right length. State rows and unembedding
// vectors must have norm >= geom::kZeroNorm, the threshold the analysis uses.
void check_values(const std::string& trial_id, const std::string& blob, std::span<const float> v,
                  const BlobSlot& slot, std::size_t d_model, Sink& sink) {
  const auto bad = std::find_if(v.begin(), v.end(), [](float x) { return !std::isfinite(x); });
  if (bad != v.end()) {
    sink.add(trial_id, "non-finite value in blob '" + blob + "' at element " +
                           std::to_string(std::distance(v.begin(), bad)));
    return;
  }
  const bool state = is_state_slot(slot);
  if ((!state && !is_direction_slot(slot)) || d_model == 0) return;
  for (std::size_t row = 0; row * d_model < v.size(); ++row) {
    double sq = 0.0;
    for (float x : v.subspan(row * d_model, d_model)) sq += static_cast<double>(x) * x;
    if (std::sqrt(sq) >= geom::kZeroNorm) continue;
    if (state) {
      sink.add(trial_id, "zero state row at layer " + std::to_string(row) + " in blob '" + blob + "'");
    } else {
      sink.add(trial_id, std::string("zero vector in blob '") + blob + "' (" + slot.field + ")");
    }
  }
}

fs::path blob_path(const fs::path& root, const std::string& name) {
  return root / kBlobDir / (name + ".f32");
}

std::vector<float> decode_le(const std::string& bytes) {
  std::vector<float> out(bytes.size() / kFloatBytes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + i * kFloatBytes, kFloatBytes);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

std::string encode_le(std::span<const float> v) {
  std::string out(v.size() * kFloatBytes, '\0');
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto u = std::bit_cast<std::uint32_t>(v[i]);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    std::memcpy(out.data() + i * kFloatBytes, &u, kFloatBytes);
  }
  return out;
}

std::optional<std::string> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

json meta_to_json(const TrialMeta& m) {
  json blobs = json::object();
  for (const BlobSlot& s : kSlots) blobs[s.field] = m.blobs.*s.name;
  return json{{"trial_id", m.trial_id},
              {"question_id", m.question_id},
              {"prior_id", m.prior_id},
              {"option_labels", m.option_labels},
              {"correct_index", m.correct_index},
              {"adversarial_index", m.adversarial_index},
              {"blobs", std::move(blobs)},
              {"attributes", m.attributes}};
}

// Field readers that report type problems as violations instead of throwing.
template <typename T>
std::optional<T> field(const json& obj, const char* key, const std::string& trial_id, Sink& sink) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    sink.add(trial_id, std::string("missing field '") + key + "'");
    return std::nullopt;
  }
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw std::invalid_argument("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw std::invalid_argument("");
    }
    return it->get<T>();
  } catch (const std::exception&) {
    sink.add(trial_id, std::string("field '") + key + "' has the wrong type");
    return std::nullopt;
  }
}

std::optional<TrialMeta> meta_from_json(const json& j, std::size_t index, Sink& sink) {
  if (!j.is_object()) {
    sink.add("#" + std::to_string(index), "trial entry is not an object");
    return std::nullopt;
  }
  TrialMeta m;
  const std::string label = j.contains("trial_id") && j["trial_id"].is_string()
                                ? j["trial_id"].get<std::string>()
                                : "#" + std::to_string(index);
  bool ok = true;
  auto take = [&](auto& dst, const json& obj, const char* key) {
    using T = std::decay_t<decltype(dst)>;
    if (auto v = field<T>(obj, key, label, sink)) {
      dst = std::move(*v);
    } else {
      ok = false;
    }
  };
  take(m.trial_id, j, "trial_id");
  take(m.question_id, j, "question_id");
  take(m.prior_id, j, "prior_id");
  take(m.option_labels, j, "option_labels");
  take(m.correct_index, j, "correct_index");
  take(m.adversarial_index, j, "adversarial_index");
  const auto blobs = j.find("blobs");
  if (blobs == j.end() || !blobs->is_object()) {
    sink.add(label, "missing object 'blobs'");
    ok = false;
  } else {
    for (const BlobSlot& s : kSlots) take(m.blobs.*s.name, *blobs, s.field);
  }
  if (const auto attrs = j.find("attributes"); attrs != j.end()) m.attributes = *attrs;
  if (!ok) return std::nullopt;
  return m;
}

struct Loaded {
  DumpSet dump;
  bool complete = false;
};

Loaded load(const fs::path& root, ValidationReport& report) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw DumpError("not a readable dump directory: " + root.string());
  }
  Sink sink(report);
  Loaded out;

  const auto text = slurp(root / kManifestName);
  if (!text) {
    sink.add("", "missing " + std::string(kManifestName));
    return out;
  }
  json manifest;
  try {
    manifest = json::parse(*text);
  } catch (const json::parse_error& e) {
    sink.add("", std::string("manifest parse error: ") + e.what());
    return out;
  }
  if (!manifest.is_object()) {
    sink.add("", "manifest is not a JSON object");
    return out;
  }

  const auto version = field<std::string>(manifest, "format_version", "", sink);
  const auto dtype = field<std::string>(manifest, "dtype", "", sink);
  const auto model = field<std::string>(manifest, "model_name", "", sink);
  const auto d_model = field<long long>(manifest, "d_model", "", sink);
  const auto n_layers = field<long long>(manifest, "n_layers", "", sink);
  const std::size_t before_header = report.size();
  check_header(version.value_or(std::string(kFormatVersion)), dtype.value_or(std::string(kDtype)),
               d_model.value_or(2), n_layers.value_or(1), sink);
  bool shape_known = d_model && n_layers && *d_model >= 2 && *n_layers >= 1;
  bool complete = version && dtype && model && shape_known && report.size() == before_header;

  DumpSet& dump = out.dump;
  if (model) dump.model_name = *model;
  if (shape_known) {
    dump.d_model = static_cast<std::size_t>(*d_model);
    dump.n_layers = static_cast<std::size_t>(*n_layers);
  }
  if (const auto attrs = manifest.find("attributes"); attrs != manifest.end()) {
    dump.attributes = *attrs;
  }

  const auto trials = manifest.find("trials");
  if (trials == manifest.end() || !trials->is_array()) {
    sink.add("", "missing array 'trials'");
    return out;
  }

  std::vector<const TrialMeta*> metas;
  dump.trials.reserve(trials->size());
  for (std::size_t i = 0; i < trials->size(); ++i) {
    auto meta = meta_from_json((*trials)[i], i, sink);
    if (!meta) {
      complete = false;
      continue;
    }
    check_meta(*meta, sink);
    Trial t;
    t.meta = std::move(*meta);
    dump.trials.push_back(std::move(t));
  }
  for (const Trial& t : dump.trials) metas.push_back(&t.meta);
  check_ids(metas, sink);

  if (!shape_known) return out;
  for (Trial& t : dump.trials) {
    for (const BlobSlot& s : kSlots) {
      const std::string& name = t.meta.blobs.*s.name;
      if (!valid_blob_name(name)) {
        complete = false;
        continue;
      }
      const fs::path p = blob_path(root, name);
      const auto bytes = slurp(p);
      if (!bytes) {
        sink.add(t.meta.trial_id, "missing blob '" + name + "'");
        complete = false;
        continue;
      }
      const std::size_t want = expected_count(s, t.meta, dump.n_layers, dump.d_model) * kFloatBytes;
      if (bytes->size() != want) {
        sink.add(t.meta.trial_id, "length mismatch for blob '" + name + "': expected " +
                                      std::to_string(want) + " bytes, found " +
                                      std::to_string(bytes->size()));
        complete = false;
        continue;
      }
      t.*s.data = decode_le(*bytes);
      check_values(t.meta.trial_id, name, t.*s.data, s, dump.d_model, sink);
    }
  }
  out.complete = complete;
  return out;
}

}  // namespace

BlobNames default_blob_names(std::string_view trial_id) {
  const std::string id(trial_id);
  return {id + ".base_states",   id + ".conflict_states",   id + ".w_correct",
          id + ".w_adversarial", id + ".final_logits_base", id + ".final_logits_conflict"};
}

std::span<const float> Trial::base_row(std::size_t layer) const {
  return std::span<const float>(base_states).subspan(layer * d_model(), d_model());
}

std::span<const float> Trial::conflict_row(std::size_t layer) const {
  return std::span<const float>(conflict_states).subspan(layer * d_model(), d_model());
}

bool bit_identical(const DumpSet& a, const DumpSet& b) {
  if (a.model_name != b.model_name || a.d_model != b.d_model || a.n_layers != b.n_layers ||
      a.attributes != b.attributes || a.trials.size() != b.trials.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    const Trial& x = a.trials[i];
    const Trial& y = b.trials[i];
    if (!(x.meta == y.meta)) return false;
    for (const BlobSlot& s : kSlots) {
      const auto& u = x.*s.data;
      const auto& v = y.*s.data;
      if (u.size() != v.size() ||
          (!u.empty() && std::memcmp(u.data(), v.data(), u.size() * kFloatBytes) != 0)) {
        return false;
      }
    }
  }
  return true;
}

std::string to_string(const Violation& v) {
  if (v.trial_id.empty()) return v.message;
  return "trial " + v.trial_id + ": " + v.message;
}

ValidationReport validate(const DumpSet& dump) {
  ValidationReport report;
  Sink sink(report);
  check_header(kFormatVersion, kDtype, static_cast<long long>(dump.d_model),
               static_cast<long long>(dump.n_layers), sink);
  std::vector<const TrialMeta*> metas;
  for (const Trial& t : dump.trials) {
    check_meta(t.meta, sink);
    metas.push_back(&t.meta);
    for (const BlobSlot& s : kSlots) {
      const auto& data = t.*s.data;
      const std::size_t want = expected_count(s, t.meta, dump.n_layers, dump.d_model);
      const std::string& name = t.meta.blobs.*s.name;
      if (data.size() != want) {
        sink.add(t.meta.trial_id, std::string("length mismatch for ") + s.field + " ('" + name +
                                      "'): expected " + std::to_string(want) +
                                      " elements, found " + std::to_string(data.size()));
        continue;
      }
      check_values(t.meta.trial_id, name, data, s, dump.d_model, sink);
    }
  }
  check_ids(metas, sink);
  return report;
}

void write_dump(const DumpSet& dump, const fs::path& path) {
  const ValidationReport problems = validate(dump);
  if (!problems.empty()) {
    std::string msg = "refusing to write invalid dump: " + to_string(problems.front());
    if (problems.size() > 1) msg += " (+" + std::to_string(problems.size() - 1) + " more)";
    throw DumpError(msg);
  }

  std::error_code ec;
  if (fs::exists(path, ec)) {
    const bool replaceable = fs::is_directory(path, ec) &&
                             (fs::is_empty(path, ec) || fs::exists(path / kManifestName, ec));
    if (!replaceable) {
      throw DumpError("refusing to overwrite non-dump path: " + path.string());
    }
  }

  fs::path staging = path;
  staging += ".staging";
  fs::remove_all(staging, ec);
  if (!fs::create_directories(staging / kBlobDir, ec) || ec) {
    throw DumpError("cannot create " + (staging / kBlobDir).string() + ": " + ec.message());
  }

  auto write_bytes = [&](const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::error_code ignored;
      fs::remove_all(staging, ignored);
      throw DumpError("write failed: " + p.string());
    }
  };

  json trials = json::array();
  for (const Trial& t : dump.trials) {
    for (const BlobSlot& s : kSlots) {
      write_bytes(blob_path(staging, t.meta.blobs.*s.name), encode_le(t.*s.data));
    }
    trials.push_back(meta_to_json(t.meta));
  }
  const json manifest{{"format_version", kFormatVersion},
                      {"model_name", dump.model_name},
                      {"d_model", dump.d_model},
                      {"n_layers", dump.n_layers},
                      {"dtype", kDtype},
                      {"attributes", dump.attributes},
                      {"trials", std::move(trials)}};
  write_bytes(staging / kManifestName, manifest.dump(2) + "\n");

  fs::remove_all(path, ec);
  fs::rename(staging, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove_all(staging, ignored);
    throw DumpError("cannot move dump into place at " + path.string() + ": " + ec.message());
  }
}

DumpSet read_dump(const fs::path& path) {
  ValidationReport report;
  Loaded loaded = load(path, report);
  if (!report.empty()) {
    std::string msg = path.string() + ": " + to_string(report.front());
    if (report.size() > 1) msg += " (+" + std::to_string(report.size() - 1) + " more)";
    throw DumpError(msg);
  }
  if (!loaded.complete) throw DumpError(path.string() + ": incomplete dump");
  return std::move(loaded.dump);
}

ValidationReport validate_dump(const fs::path& path) {
  ValidationReport report;
  load(path, report);
  return report;
}

}  // namespace rsg
