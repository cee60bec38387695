#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fwmodel/emulator.hpp"
#include "fwmodel/model.hpp"

namespace fwmodel {

inline constexpr int kCandidateCount = 33;
inline constexpr uint64_t kWorkerBlockBudget = 20000;
inline constexpr uint64_t kWorkerStallBlocks = 2000;

// Candidate i is 1 << i for i < 32, then 0.
inline uint32_t candidate_value(int i) { return i < 32 ? 1u << i : 0u; }

enum class Outcome : uint8_t { RanToFramePop, Crashed, Stalled, BudgetExhausted };
std::string_view to_string(Outcome o);

struct CandidateResult {
  uint32_t candidate_value = 0;
  Outcome outcome = Outcome::RanToFramePop;
  Fault fault{};                 // Crashed only
  uint64_t dr_access_count = 0;
  bool sr_dependent_failure = false;
  uint64_t blocks = 0;

  bool operator==(const CandidateResult& o) const {
    return candidate_value == o.candidate_value && outcome == o.outcome && dr_access_count == o.dr_access_count &&
           sr_dependent_failure == o.sr_dependent_failure && blocks == o.blocks;
  }
};

class NoQualifiedCandidate : public std::runtime_error {
 public:
  explicit NoQualifiedCandidate(const SRAccessContext& ctx);
  const SRAccessContext& context() const { return ctx_; }

 private:
  SRAccessContext ctx_;
};

struct WorkerLimits {
  uint64_t block_budget = kWorkerBlockBudget;
  uint64_t stall_blocks = kWorkerStallBlocks;
};

struct Ranking {
  std::vector<int> qualified;  // candidate indices, ascending
  int winner = -1;
  std::vector<int> tied;       // indices sharing the best count
  uint32_t chosen = 0;         // index into `tied`
};

// Runs one candidate from the paused emulator `snap` (which is parked on
// the SR read for `ctx`).
CandidateResult run_candidate(const Emulator& snap, const SRAccessContext& ctx, uint32_t value,
                              const WorkerLimits& limits = {});

// Draws from `rng` only when more than one candidate ties.
Ranking qualify_and_rank(const std::vector<CandidateResult>& results, const SRAccessContext& ctx,
                         std::mt19937_64& rng);

struct Exploration {
  SRAccessContext ctx;
  std::vector<CandidateResult> results;
  Ranking ranking;
  uint32_t winner_value = 0;
};

std::string format_exploration(const Exploration& e);

class Explorer {
 public:
  explicit Explorer(int threads = 1, WorkerLimits limits = {}) : threads_(threads), limits_(limits) {}

  // Evaluates all candidates and commits the winner (and any tie-break) to
  // `model`. Throws NoQualifiedCandidate.
  Exploration explore(const Emulator& snap, const SRAccessContext& ctx, InstantiatedModel& model,
                      std::mt19937_64& rng) const;

  std::vector<CandidateResult> evaluate(const Emulator& snap, const SRAccessContext& ctx) const;

  const WorkerLimits& limits() const { return limits_; }

 private:
  int threads_;
  WorkerLimits limits_;
};

}  // namespace fwmodel
