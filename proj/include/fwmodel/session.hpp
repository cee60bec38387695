#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fwmodel/explore.hpp"
#include "fwmodel/model.hpp"
#include "fwmodel/run.hpp"

namespace fwmodel {

inline constexpr int kStableAfterQuietRuns = 10;

struct SessionConfig {
  uint64_t seed = 0;
  RunConfig run;
  int explore_threads = 1;
  WorkerLimits worker;
  int stable_after = kStableAfterQuietRuns;
};

// A run that changed the model's structure.
struct RoundRecord {
  uint64_t run_index = 0;
  bool after_stable = false;
  std::vector<SRAccessContext> explored;
  std::vector<modelstore::Change> changes;
  size_t registers = 0;  // totals after the round
  size_t handlers = 0;
};

// Owns the evolving model of one firmware and runs inputs against it,
// exploring on every SR miss.
class Session {
 public:
  Session(Firmware fw, SessionConfig cfg, std::optional<InstantiatedModel> initial = std::nullopt);

  // With `learn` false the model is frozen and a miss ends the run.
  FuzzRunReport run(std::span<const uint8_t> input, bool learn = true, CoverageMap* coverage = nullptr,
                    BlockSet* blocks = nullptr);

  const Firmware& firmware() const { return fw_; }
  const InstantiatedModel& model() const { return model_; }
  const SessionConfig& config() const { return cfg_; }
  void set_stop_on_exhaustion(bool stop) { cfg_.run.stop_on_exhaustion = stop; }
  std::mt19937_64& rng() { return rng_; }

  uint64_t runs() const { return runs_; }
  bool stable() const { return stable_at_.has_value(); }
  std::optional<uint64_t> stable_at() const { return stable_at_; }
  const std::vector<RoundRecord>& rounds() const { return rounds_; }
  size_t rounds_after_stable() const;
  const std::vector<Exploration>& explorations() const { return explorations_; }
  // Set when exploration failed; the offending run ends with ModelMiss.
  const std::optional<SRAccessContext>& failure() const { return failure_; }

  // Called after each exploration with a snapshot of the emulator paused on
  // the read and the tie-break generator as it was before the exploration.
  std::function<void(const Emulator&, const Exploration&, const std::mt19937_64&)> observer;

  std::string round_log() const;
  std::string exploration_log() const;

 private:
  Firmware fw_;
  SessionConfig cfg_;
  InstantiatedModel model_;
  std::mt19937_64 rng_;
  Explorer explorer_;
  uint64_t runs_ = 0;
  uint64_t quiet_ = 0;
  std::optional<uint64_t> stable_at_;
  std::vector<RoundRecord> rounds_;
  std::vector<Exploration> explorations_;
  std::optional<SRAccessContext> failure_;
};

struct InstantiateOptions {
  uint64_t max_runs = 200;
  size_t input_length = 64;
};

// Alternates runs on seeded random inputs until the model is stable.
// The first run uses an empty input. Exhausted input reads as zeros.
void instantiate(Session& session, const InstantiateOptions& opts = {});

}  // namespace fwmodel
