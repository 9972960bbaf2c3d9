#include <bit>
#include <cstring>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "rsg/dumpstore.hpp"
#include "support.hpp"

using namespace rsg;
using rsg::test::TempDir;
namespace fs = std::filesystem;

namespace {

DumpSet two_trial_dump() {
  std::mt19937_64 rng(41);
  std::vector<Trial> trials;
  for (const char* id : {"a", "b"}) {
    Trial t = test::make_trial(id, test::gaussian(rng, 8, 3.0), test::gaussian(rng, 8, 3.0),
                               test::gaussian(rng, 8), test::gaussian(rng, 8), 1);
    // Distinct rows per layer.
    t.base_states = test::to_f32(test::gaussian(rng, 32, 3.0));
    t.conflict_states = test::to_f32(test::gaussian(rng, 32, 3.0));
    trials.push_back(std::move(t));
  }
  return test::make_dump(std::move(trials));
}

nlohmann::json read_manifest(const fs::path& dir) {
  return nlohmann::json::parse(test::slurp(dir / "manifest.json"));
}

void write_manifest(const fs::path& dir, const nlohmann::json& j) {
  std::ofstream(dir / "manifest.json") << j.dump(2);
}

void truncate_blob(const fs::path& dir, const std::string& name, std::size_t drop) {
  const fs::path p = dir / "blobs" / (name + ".f32");
  fs::resize_file(p, fs::file_size(p) - drop);
}

bool mentions(const ValidationReport& r, const std::string& needle) {
  for (const Violation& v : r) {
    if (to_string(v).find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("write then read is bit-identical") {
  TempDir tmp;
  const DumpSet d = two_trial_dump();
  REQUIRE(d.n_layers == 4);
  write_dump(d, tmp / "dump");
  const DumpSet back = read_dump(tmp / "dump");
  CHECK(bit_identical(d, back));
  CHECK(validate_dump(tmp / "dump").empty());
}

TEST_CASE("on-disk layout") {
  TempDir tmp;
  const DumpSet d = two_trial_dump();
  write_dump(d, tmp / "dump");
  const nlohmann::json m = read_manifest(tmp / "dump");
  CHECK(m["format_version"] == "rsgd-1");
  CHECK(m["dtype"] == "f32le");
  CHECK(m["d_model"] == 8);
  CHECK(m["n_layers"] == 4);
  CHECK(m["trials"].size() == 2);
  CHECK(m["trials"][0]["blobs"]["base_states"] == "a.base_states");

  const fs::path blob = tmp / "dump" / "blobs" / "a.base_states.f32";
  CHECK(fs::file_size(blob) == 4 * 8 * 4);
  const std::string bytes = test::slurp(blob);
  // Little-endian float32, row-major.
  const auto u = std::bit_cast<std::uint32_t>(d.trials[0].base_states[9]);
  for (int b = 0; b < 4; ++b) {
    CHECK(static_cast<unsigned char>(bytes[9 * 4 + b]) == ((u >> (8 * b)) & 0xffu));
  }
  CHECK_FALSE(fs::exists(tmp / "dump.staging"));
}

TEST_CASE("empty trial list is a valid dump") {
  TempDir tmp;
  const DumpSet d = test::make_dump({});
  CHECK(validate(d).empty());
  write_dump(d, tmp / "empty");
  const DumpSet back = read_dump(tmp / "empty");
  CHECK(back.trials.empty());
  CHECK(bit_identical(d, back));
}

TEST_CASE("invalid dumps are rejected before anything is written") {
  TempDir tmp;
  DumpSet d = two_trial_dump();
  d.trials[1].base_states[3] = std::numeric_limits<float>::quiet_NaN();
  const ValidationReport r = validate(d);
  REQUIRE(r.size() == 1);
  CHECK(r[0].trial_id == "b");
  CHECK(r[0].message.find("non-finite value") != std::string::npos);
  CHECK_THROWS_WITH_AS(write_dump(d, tmp / "x"), doctest::Contains("non-finite value"), DumpError);
  CHECK_FALSE(fs::exists(tmp / "x"));
  CHECK_FALSE(fs::exists(tmp / "x.staging"));
}

TEST_CASE("in-memory validation covers every trial invariant") {
  DumpSet d = two_trial_dump();
  d.trials[0].meta.adversarial_index = 0;
  d.trials[1].conflict_states.assign(d.trials[1].conflict_states.size(), 0.0f);
  d.trials[1].final_logits_base.pop_back();
  const ValidationReport r = validate(d);
  CHECK(mentions(r, "adversarial_index equals correct_index"));
  CHECK(mentions(r, "zero state row at layer 0"));
  CHECK(mentions(r, "zero state row at layer 3"));
  CHECK(mentions(r, "final_logits_base"));

  DumpSet dup = two_trial_dump();
  dup.trials[1].meta.trial_id = "a";
  dup.trials[1].meta.blobs = default_blob_names("a2");
  CHECK(mentions(validate(dup), "duplicate trial_id"));

  DumpSet unsorted = two_trial_dump();
  std::swap(unsorted.trials[0], unsorted.trials[1]);
  CHECK(mentions(validate(unsorted), "not sorted"));

  DumpSet shared = two_trial_dump();
  shared.trials[1].meta.blobs.w_correct = shared.trials[0].meta.blobs.w_correct;
  CHECK(mentions(validate(shared), "shared with another trial"));

  DumpSet badname = two_trial_dump();
  badname.trials[0].meta.blobs.w_correct = "../escape";
  CHECK(mentions(validate(badname), "invalid blob name"));

  DumpSet tiny = two_trial_dump();
  tiny.trials[0].w_adversarial.assign(8, std::ldexp(1.0f, -140));
  std::fill(tiny.trials[1].base_states.begin() + 8, tiny.trials[1].base_states.begin() + 16, 0.0f);
  tiny.trials[1].base_states[8] = 1e-35f;
  const ValidationReport z = validate(tiny);
  CHECK(z.size() == 2);
  CHECK(mentions(z, "zero vector in blob 'a.w_adversarial'"));
  CHECK(mentions(z, "zero state row at layer 1"));

  DumpSet header = two_trial_dump();
  header.d_model = 1;
  CHECK(mentions(validate(header), "d_model must be >= 2"));
}

TEST_CASE("truncated blob names the blob") {
  TempDir tmp;
  write_dump(two_trial_dump(), tmp / "d");
  truncate_blob(tmp / "d", "b.w_correct", 4);
  const ValidationReport r = validate_dump(tmp / "d");
  REQUIRE(r.size() == 1);
  CHECK(r[0].trial_id == "b");
  CHECK(r[0].message.find("length mismatch") != std::string::npos);
  CHECK(r[0].message.find("b.w_correct") != std::string::npos);
  CHECK_THROWS_WITH_AS(read_dump(tmp / "d"), doctest::Contains("length mismatch"), DumpError);
}

TEST_CASE("unsupported version") {
  TempDir tmp;
  write_dump(two_trial_dump(), tmp / "d");
  nlohmann::json m = read_manifest(tmp / "d");
  m["format_version"] = "rsgd-2";
  write_manifest(tmp / "d", m);
  CHECK(mentions(validate_dump(tmp / "d"), "unsupported version"));
  CHECK_THROWS_WITH_AS(read_dump(tmp / "d"), doctest::Contains("unsupported version"), DumpError);
}

TEST_CASE("index collision gives exactly one violation naming the trial") {
  TempDir tmp;
  write_dump(two_trial_dump(), tmp / "d");
  nlohmann::json m = read_manifest(tmp / "d");
  m["trials"][1]["adversarial_index"] = 0;
  write_manifest(tmp / "d", m);
  const ValidationReport r = validate_dump(tmp / "d");
  REQUIRE(r.size() == 1);
  CHECK(r[0].trial_id == "b");
}

TEST_CASE("every violation is reported, not just the first") {
  TempDir tmp;
  write_dump(two_trial_dump(), tmp / "d");
  nlohmann::json m = read_manifest(tmp / "d");
  m["trials"][0]["adversarial_index"] = 0;
  write_manifest(tmp / "d", m);
  truncate_blob(tmp / "d", "b.base_states", 8);
  CHECK(validate_dump(tmp / "d").size() == 2);
  CHECK_THROWS_WITH_AS(read_dump(tmp / "d"), doctest::Contains("(+1 more)"), DumpError);
}

TEST_CASE("missing blob and non-finite bytes on disk") {
  TempDir tmp;
  write_dump(two_trial_dump(), tmp / "d");
  fs::remove(tmp / "d" / "blobs" / "a.w_adversarial.f32");
  {
    std::fstream f(tmp / "d" / "blobs" / "b.final_logits_conflict.f32",
                   std::ios::in | std::ios::out | std::ios::binary);
    const std::uint32_t inf = 0x7f800000u;
    const char bytes[4] = {char(inf & 0xff), char((inf >> 8) & 0xff), char((inf >> 16) & 0xff),
                           char(inf >> 24)};
    f.write(bytes, 4);
  }
  const ValidationReport r = validate_dump(tmp / "d");
  CHECK(r.size() == 2);
  CHECK(mentions(r, "missing blob"));
  CHECK(mentions(r, "non-finite value"));
}

TEST_CASE("malformed manifests are violations, not crashes") {
  TempDir tmp;
  write_dump(two_trial_dump(), tmp / "d");
  std::ofstream(tmp / "d" / "manifest.json") << "{ not json";
  CHECK_FALSE(validate_dump(tmp / "d").empty());

  write_dump(two_trial_dump(), tmp / "e");
  nlohmann::json m = read_manifest(tmp / "e");
  m["trials"][0]["correct_index"] = "zero";
  m["trials"][1].erase("blobs");
  write_manifest(tmp / "e", m);
  const ValidationReport r = validate_dump(tmp / "e");
  CHECK(mentions(r, "correct_index"));
  CHECK(mentions(r, "blobs"));

  fs::remove(tmp / "e" / "manifest.json");
  CHECK_FALSE(validate_dump(tmp / "e").empty());
  CHECK_THROWS_AS(validate_dump(tmp / "nowhere"), DumpError);
}

TEST_CASE("write_dump replaces an old dump but not other directories") {
  TempDir tmp;
  write_dump(two_trial_dump(), tmp / "d");
  DumpSet smaller = test::make_dump({});
  write_dump(smaller, tmp / "d");
  CHECK(read_dump(tmp / "d").trials.empty());
  CHECK_FALSE(fs::exists(tmp / "d" / "blobs" / "a.base_states.f32"));

  fs::create_directories(tmp / "precious");
  std::ofstream(tmp / "precious" / "notes.txt") << "keep";
  CHECK_THROWS_WITH_AS(write_dump(smaller, tmp / "precious"), doctest::Contains("refusing to overwrite"),
                       DumpError);
  CHECK(test::slurp(tmp / "precious" / "notes.txt") == "keep");
}

TEST_CASE("property: fuzzed round trips and validate/read agreement") {
  TempDir tmp;
  std::mt19937_64 rng(42);
  for (int i = 0; i < 60; ++i) {
    const DumpSet d = test::random_dump(rng);
    REQUIRE(validate(d).empty());
    const fs::path p = tmp / ("f" + std::to_string(i));
    write_dump(d, p);
    CHECK(validate_dump(p).empty());
    CHECK(bit_identical(d, read_dump(p)));
  }
  // Corrupt one blob per dump: validate and read must agree.
  for (int i = 0; i < 60; ++i) {
    const fs::path p = tmp / ("f" + std::to_string(i));
    const DumpSet d = read_dump(p);
    if (d.trials.empty()) continue;
    const Trial& t = d.trials[rng() % d.trials.size()];
    truncate_blob(p, t.meta.blobs.w_correct, 4);
    CHECK_FALSE(validate_dump(p).empty());
    CHECK_THROWS_AS(read_dump(p), DumpError);
  }
}
