#include "fwmodel/explore.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <thread>

namespace fwmodel {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::RanToFramePop: return "pop";
    case Outcome::Crashed: return "crash";
    case Outcome::Stalled: return "stall";
    case Outcome::BudgetExhausted: return "budget";
  }
  return "?";
}

NoQualifiedCandidate::NoQualifiedCandidate(const SRAccessContext& ctx)
    : std::runtime_error(fmt::format("no qualified candidate for SR read r=0x{:08x} cs=0x{:016x} bbl=0x{:08x} "
                                     "conf=0x{:016x}",
                                     ctx.r, ctx.cs, ctx.bbl, ctx.conf)),
      ctx_(ctx) {}

CandidateResult run_candidate(const Emulator& snap, const SRAccessContext& ctx, uint32_t value,
                              const WorkerLimits& limits) {
  Emulator w = snap.snapshot();
  w.mode = ExecMode::Worker;
  w.worker_ctx = ctx;
  w.worker_value = value;
  CoverageMap local;
  w.coverage = &local;

  CandidateResult res;
  res.candidate_value = value;
  const size_t anchor = w.machine.depth();
  const uint64_t dr0 = w.regs.dr_accesses();
  const uint64_t bb0 = w.machine.state().bb_count;
  uint64_t quiet = 0;

  for (;;) {
    const uint64_t before = w.machine.state().bb_count;
    w.progress = false;
    StepOutcome out = w.machine.step(w);
    const MachineState& s = w.machine.state();
    if (out.kind == StepKind::Halted) {
      res.outcome = Outcome::RanToFramePop;
      break;
    }
    if (out.kind == StepKind::Fault) {
      res.outcome = Outcome::Crashed;
      res.fault = out.fault;
      res.sr_dependent_failure = out.fault.taint == ctx.r;
      break;
    }
    if (w.machine.depth() < anchor) {
      res.outcome = Outcome::RanToFramePop;
      break;
    }
    if (s.bb_count != before) {
      quiet = w.progress ? 0 : quiet + (s.bb_count - before);
      if (quiet >= limits.stall_blocks) {
        res.outcome = Outcome::Stalled;
        res.sr_dependent_failure = s.last_branch_taint == ctx.r;
        break;
      }
      if (s.bb_count - bb0 >= limits.block_budget) {
        res.outcome = Outcome::BudgetExhausted;
        break;
      }
    }
  }
  res.dr_access_count = w.regs.dr_accesses() - dr0;
  res.blocks = w.machine.state().bb_count - bb0;
  return res;
}

Ranking qualify_and_rank(const std::vector<CandidateResult>& results, const SRAccessContext& ctx,
                         std::mt19937_64& rng) {
  Ranking rk;
  for (size_t i = 0; i < results.size(); ++i)
    if (results[i].outcome == Outcome::RanToFramePop || results[i].outcome == Outcome::BudgetExhausted)
      rk.qualified.push_back(static_cast<int>(i));
  if (rk.qualified.empty())
    for (size_t i = 0; i < results.size(); ++i)
      if (!results[i].sr_dependent_failure) rk.qualified.push_back(static_cast<int>(i));
  if (rk.qualified.empty()) throw NoQualifiedCandidate(ctx);

  uint64_t best = 0;
  for (int i : rk.qualified) best = std::max(best, results[i].dr_access_count);
  for (int i : rk.qualified)
    if (results[i].dr_access_count == best) rk.tied.push_back(i);
  if (rk.tied.size() > 1) rk.chosen = static_cast<uint32_t>(rng() % rk.tied.size());
  rk.winner = rk.tied[rk.chosen];
  return rk;
}

std::vector<CandidateResult> Explorer::evaluate(const Emulator& snap, const SRAccessContext& ctx) const {
  std::vector<CandidateResult> results(kCandidateCount);
  if (threads_ <= 1) {
    for (int i = 0; i < kCandidateCount; ++i) results[i] = run_candidate(snap, ctx, candidate_value(i), limits_);
    return results;
  }
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < kCandidateCount; i = next++) results[i] = run_candidate(snap, ctx, candidate_value(i), limits_);
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min(threads_, kCandidateCount); ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return results;
}

Exploration Explorer::explore(const Emulator& snap, const SRAccessContext& ctx, InstantiatedModel& model,
                              std::mt19937_64& rng) const {
  Exploration e;
  e.ctx = ctx;
  e.results = evaluate(snap, ctx);
  e.ranking = qualify_and_rank(e.results, ctx, rng);
  e.winner_value = e.results[e.ranking.winner].candidate_value;
  if (e.ranking.tied.size() > 1)
    model.tie_breaks.push_back(
        TieBreak{ctx, static_cast<uint32_t>(e.ranking.tied.size()), e.ranking.chosen, e.winner_value});
  model.sr_handlers.emplace(ctx, e.winner_value);
  ++model.revision;
  return e;
}

std::string format_exploration(const Exploration& e) {
  std::string out = fmt::format("explore r=0x{:08x} cs=0x{:016x} bbl=0x{:08x} conf=0x{:016x} winner=0x{:08x}",
                                e.ctx.r, e.ctx.cs, e.ctx.bbl, e.ctx.conf, e.winner_value);
  out += " qualified=";
  for (size_t i = 0; i < e.ranking.qualified.size(); ++i)
    out += fmt::format("{}{}", i ? "," : "", e.ranking.qualified[i]);
  out += " results=";
  for (size_t i = 0; i < e.results.size(); ++i) {
    const auto& r = e.results[i];
    out += fmt::format("{}{}:{}{}", i ? "," : "", to_string(r.outcome), r.dr_access_count,
                       r.sr_dependent_failure ? "*" : "");
  }
  return out;
}

}  // namespace fwmodel
