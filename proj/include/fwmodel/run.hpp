#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "fwmodel/emulator.hpp"

namespace fwmodel {

enum class Verdict : uint8_t { Ok, Crash, Hang, InputExhausted, ModelMiss };
std::string_view to_string(Verdict v);
std::optional<Verdict> verdict_from_string(std::string_view s);

inline constexpr uint64_t kHangBlocks = 100000;
inline constexpr uint64_t kInsnBudget = 2000000;

struct RunConfig {
  FiringStrategy strategy = FiringStrategy::round_robin();
  uint64_t hang_blocks = kHangBlocks;
  uint64_t insn_budget = kInsnBudget;
  // Fuzz mode stops at the first DR read past the end of the input; run
  // mode keeps going with zeros.
  bool stop_on_exhaustion = true;
};

struct FuzzRunReport {
  Verdict verdict = Verdict::Ok;
  Fault fault{};
  std::optional<SRAccessContext> miss;
  uint32_t pc = 0;  // where execution stopped
  uint64_t bb_executed = 0;
  uint64_t insn_executed = 0;
  uint64_t new_edges = 0;
  uint64_t dr_words = 0;
  size_t input_length = 0;
  uint64_t coverage_hash = 0;
  std::string markers;
  std::string input_ref;
  bool model_changed = false;

  std::string summary() const;
  std::string serialize() const;
};

// Return true when the miss was resolved and the read should be retried.
using MissHandler = std::function<bool(Emulator&, const SRAccessContext&)>;

// Drives `emu` to a verdict. Interrupts are delivered at block boundaries.
FuzzRunReport execute(Emulator& emu, const RunConfig& cfg, const MissHandler& on_miss = {});

// Pure run against a frozen model: a miss ends the run with ModelMiss.
FuzzRunReport run_once(const Firmware& fw, const InstantiatedModel& model, std::span<const uint8_t> input,
                       const RunConfig& cfg, CoverageMap* coverage = nullptr, BlockSet* blocks = nullptr);

// Every MMIO read returns 0, nothing is learned, no interrupts fire.
FuzzRunReport run_stub(const Firmware& fw, std::span<const uint8_t> input, const RunConfig& cfg,
                       CoverageMap* coverage = nullptr, BlockSet* blocks = nullptr);

}  // namespace fwmodel
