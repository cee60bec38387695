#include "fwmodel/run.hpp"

#include <fmt/format.h>

namespace fwmodel {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Ok: return "ok";
    case Verdict::Crash: return "crash";
    case Verdict::Hang: return "hang";
    case Verdict::InputExhausted: return "input_exhausted";
    case Verdict::ModelMiss: return "model_miss";
  }
  return "?";
}

std::optional<Verdict> verdict_from_string(std::string_view s) {
  for (auto v : {Verdict::Ok, Verdict::Crash, Verdict::Hang, Verdict::InputExhausted, Verdict::ModelMiss})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::string FuzzRunReport::summary() const {
  std::string out(to_string(verdict));
  if (verdict == Verdict::Crash)
    out += fmt::format(" {} pc=0x{:08x} addr=0x{:08x}", to_string(fault.kind), fault.pc, fault.addr);
  if (verdict == Verdict::ModelMiss && miss) out += fmt::format(" r=0x{:08x} bbl=0x{:08x}", miss->r, miss->bbl);
  out += fmt::format(" blocks={} insns={} dr_words={}", bb_executed, insn_executed, dr_words);
  return out;
}

std::string FuzzRunReport::serialize() const {
  std::string out;
  out += fmt::format("verdict {}\n", to_string(verdict));
  if (verdict == Verdict::Crash) {
    out += fmt::format("fault {}\n", to_string(fault.kind));
    out += fmt::format("pc 0x{:08x}\n", fault.pc);
    out += fmt::format("addr 0x{:08x}\n", fault.addr);
  }
  if (miss) out += fmt::format("miss 0x{:08x} 0x{:016x} 0x{:08x} 0x{:016x}\n", miss->r, miss->cs, miss->bbl, miss->conf);
  out += fmt::format("stop_pc 0x{:08x}\n", pc);
  out += fmt::format("bb_executed {}\n", bb_executed);
  out += fmt::format("insn_executed {}\n", insn_executed);
  out += fmt::format("new_edges {}\n", new_edges);
  out += fmt::format("dr_words {}\n", dr_words);
  out += fmt::format("input_length {}\n", input_length);
  out += fmt::format("coverage_hash 0x{:016x}\n", coverage_hash);
  if (!input_ref.empty()) out += fmt::format("input {}\n", input_ref);
  out += fmt::format("markers \"{}\"\n", markers);
  return out;
}

FuzzRunReport execute(Emulator& emu, const RunConfig& cfg, const MissHandler& on_miss) {
  FuzzRunReport rep;
  MachineState& s = emu.machine.state();
  const uint64_t bb0 = s.bb_count, insn0 = s.insn_count;
  uint64_t quiet = 0;
  CoverageMap scratch;
  const bool own_map = emu.coverage == nullptr;
  if (own_map) emu.coverage = &scratch;

  for (;;) {
    if (s.insn_count - insn0 >= cfg.insn_budget) {
      rep.verdict = Verdict::Hang;
      break;
    }
    const uint64_t before = s.bb_count;
    emu.progress = false;
    StepOutcome out = emu.machine.step(emu);
    if (out.kind == StepKind::Halted) {
      rep.verdict = Verdict::Ok;
      break;
    }
    if (out.kind == StepKind::Fault) {
      rep.fault = out.fault;
      rep.verdict = Verdict::Crash;
      break;
    }
    if (out.kind == StepKind::ModelMiss) {
      SRAccessContext ctx = *emu.last_miss;
      emu.last_miss.reset();
      if (on_miss && on_miss(emu, ctx)) continue;
      rep.miss = ctx;
      rep.verdict = Verdict::ModelMiss;
      break;
    }
    if (cfg.stop_on_exhaustion && emu.input && emu.input->exhausted()) {
      rep.verdict = Verdict::InputExhausted;
      break;
    }
    if (s.bb_count != before) {
      quiet = emu.progress ? 0 : quiet + (s.bb_count - before);
      if (quiet >= cfg.hang_blocks) {
        rep.verdict = Verdict::Hang;
        break;
      }
      StepOutcome irq = emu.deliver_interrupts();
      if (irq.kind == StepKind::Fault) {
        rep.fault = irq.fault;
        rep.verdict = Verdict::Crash;
        break;
      }
    }
  }

  rep.pc = rep.verdict == Verdict::Crash ? rep.fault.pc : s.pc();
  rep.bb_executed = s.bb_count - bb0;
  rep.insn_executed = s.insn_count - insn0;
  if (emu.input) {
    rep.dr_words = emu.input->words_consumed();
    rep.input_length = emu.input->size();
  }
  rep.coverage_hash = emu.coverage->hash();
  if (own_map) emu.coverage = nullptr;
  rep.markers = emu.debug_log;
  return rep;
}

FuzzRunReport run_once(const Firmware& fw, const InstantiatedModel& model, std::span<const uint8_t> input,
                       const RunConfig& cfg, CoverageMap* coverage, BlockSet* blocks) {
  Emulator emu(fw, model, cfg.strategy);
  InputChannel ch(input);
  emu.input = &ch;
  emu.coverage = coverage;
  emu.blocks = blocks;
  return execute(emu, cfg);
}

FuzzRunReport run_stub(const Firmware& fw, std::span<const uint8_t> input, const RunConfig& cfg,
                       CoverageMap* coverage, BlockSet* blocks) {
  Emulator emu(fw, InstantiatedModel{}, FiringStrategy::none(), ExecMode::Stub);
  InputChannel ch(input);
  emu.input = &ch;
  emu.coverage = coverage;
  emu.blocks = blocks;
  return execute(emu, cfg);
}

}  // namespace fwmodel
