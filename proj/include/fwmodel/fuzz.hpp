#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

#include "fwmodel/run.hpp"
#include "fwmodel/session.hpp"

namespace fwmodel {

using Bytes = std::vector<uint8_t>;

class Mutator {
 public:
  enum class Op : uint8_t { Flip1, Flip2, Flip4, ByteSet, ByteAdd, WordOverwrite, Splice, Havoc };
  static constexpr int kOpCount = 8;

  explicit Mutator(uint64_t seed, size_t max_length = 4096) : rng_(seed), max_length_(max_length) {}

  Bytes mutate(const Bytes& input, const std::vector<Bytes>& queue);
  void apply(Op op, Bytes& data, const std::vector<Bytes>& queue);

 private:
  uint64_t below(uint64_t n) { return n ? rng_() % n : 0; }

  std::mt19937_64 rng_;
  size_t max_length_;
};

// (verdict, fault kind, pc). Hangs use the pc where the run was stopped.
using BucketKey = std::tuple<Verdict, FaultKind, uint32_t>;

struct Bucket {
  Bytes input;
  FuzzRunReport report;
  uint64_t found_at_exec = 0;
};

struct FuzzLimits {
  uint64_t execs = 10000;
  bool learn = true;           // explore on misses; false freezes the model
  size_t max_input = 4096;
  int children_per_entry = 32;
};

struct FuzzStats {
  uint64_t execs = 0;
  size_t queue_size = 0;
  size_t edges = 0;
  uint64_t coverage_hash = 0;
  std::map<Verdict, uint64_t> verdicts;
  std::optional<uint64_t> first_crash_exec;
  size_t rounds = 0;
};

struct FuzzResult {
  std::vector<Bytes> queue;
  std::map<BucketKey, Bucket> crashes;
  std::map<BucketKey, Bucket> hangs;
  std::vector<uint8_t> virgin;  // union edge map, 0/1 per slot
  FuzzStats stats;
};

// Throws std::invalid_argument when `seeds` is empty.
FuzzResult fuzz_loop(Session& session, const std::vector<Bytes>& seeds, uint64_t seed, const FuzzLimits& limits);

// Independent instances over a frozen copy of the session's model; the
// merged result does not depend on thread timing.
FuzzResult fuzz_parallel(const Session& session, const std::vector<Bytes>& seeds, uint64_t seed,
                         const FuzzLimits& limits, int jobs);

void write_artifacts(const FuzzResult& result, const std::filesystem::path& out_dir);

struct CoverageComparison {
  size_t blocks_a = 0;
  size_t blocks_b = 0;
  double ratio = 0.0;
};

// nullopt selects the stub model (all MMIO reads 0, no interrupts). Runs
// use run-mode input semantics.
CoverageComparison coverage_compare(const Firmware& fw, const std::optional<InstantiatedModel>& model_a,
                                    const std::optional<InstantiatedModel>& model_b, const std::vector<Bytes>& inputs,
                                    const RunConfig& cfg);

std::vector<Bytes> read_input_dir(const std::filesystem::path& dir);

}  // namespace fwmodel
