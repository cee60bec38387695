#include "fwmodel/session.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace fwmodel {

Session::Session(Firmware fw, SessionConfig cfg, std::optional<InstantiatedModel> initial)
    : fw_(std::move(fw)), cfg_(std::move(cfg)), rng_(cfg_.seed), explorer_(cfg_.explore_threads, cfg_.worker) {
  if (initial) {
    model_ = std::move(*initial);
    if (model_.firmware_hash != fw_.hash)
      throw modelstore::ModelError(modelstore::ModelError::Kind::FirmwareMismatch, 0,
                                   "model was instantiated for a different firmware image");
  } else {
    model_.firmware_hash = fw_.hash;
    model_.session_seed = cfg_.seed;
  }
}

FuzzRunReport Session::run(std::span<const uint8_t> input, bool learn, CoverageMap* coverage, BlockSet* blocks) {
  Emulator emu(fw_, model_, cfg_.run.strategy);
  InputChannel ch(input);
  emu.input = &ch;
  emu.coverage = coverage;
  emu.blocks = blocks;

  std::vector<SRAccessContext> explored;
  MissHandler handler;
  if (learn) {
    handler = [&](Emulator& e, const SRAccessContext& ctx) {
      Exploration ex;
      std::optional<Emulator> paused;
      std::optional<std::mt19937_64> rng_before;
      if (observer) {
        paused.emplace(e.snapshot());
        rng_before = rng_;
      }
      try {
        ex = explorer_.explore(e, ctx, e.regs.model(), rng_);
      } catch (const NoQualifiedCandidate&) {
        failure_ = ctx;
        return false;
      }
      if (observer) observer(*paused, ex, *rng_before);
      explored.push_back(ctx);
      explorations_.push_back(std::move(ex));
      return true;
    };
  }

  const uint64_t rev0 = model_.revision;
  FuzzRunReport rep = execute(emu, cfg_.run, handler);
  ++runs_;
  if (!learn) return rep;

  InstantiatedModel after = std::move(emu.regs.model());
  rep.model_changed = after.revision != rev0;
  if (rep.model_changed) {
    RoundRecord rr;
    rr.run_index = runs_ - 1;
    rr.after_stable = stable();
    rr.explored = std::move(explored);
    rr.changes = modelstore::diff(model_, after);
    rr.registers = after.registers.size();
    rr.handlers = after.sr_handlers.size();
    rounds_.push_back(std::move(rr));
    quiet_ = 0;
  } else if (++quiet_ >= static_cast<uint64_t>(cfg_.stable_after) && !stable_at_) {
    stable_at_ = runs_;
  }
  model_ = std::move(after);
  return rep;
}

size_t Session::rounds_after_stable() const {
  return static_cast<size_t>(std::count_if(rounds_.begin(), rounds_.end(), [](const RoundRecord& r) { return r.after_stable; }));
}

std::string Session::round_log() const {
  std::string out;
  for (size_t i = 0; i < rounds_.size(); ++i) {
    const RoundRecord& r = rounds_[i];
    out += fmt::format("round {} run={} registers={} handlers={}{}\n", i + 1, r.run_index, r.registers, r.handlers,
                       r.after_stable ? " after_stable" : "");
    for (const auto& c : r.changes) out += "  " + modelstore::format_change(c) + "\n";
  }
  if (stable_at_) out += fmt::format("stable after run {}\n", *stable_at_);
  return out;
}

std::string Session::exploration_log() const {
  std::string out;
  for (const auto& e : explorations_) out += format_exploration(e) + "\n";
  return out;
}

void instantiate(Session& session, const InstantiateOptions& opts) {
  // Input bytes come from a stream separate from the tie-break generator.
  std::mt19937_64 inputs(session.config().seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<uint8_t> buf;
  const bool stop = session.config().run.stop_on_exhaustion;
  session.set_stop_on_exhaustion(false);
  for (uint64_t i = 0; i < opts.max_runs && !session.stable(); ++i) {
    if (i > 0) {
      buf.resize(opts.input_length);
      for (auto& b : buf) b = static_cast<uint8_t>(inputs());
    }
    session.run(buf);
    if (session.failure()) break;
  }
  session.set_stop_on_exhaustion(stop);
}

}  // namespace fwmodel
