#include "fwmodel/machine.hpp"

#include <fmt/format.h>

#include <array>
#include <cstring>

#include "fwmodel/hash.hpp"
#include "fwmodel/isa.hpp"

namespace fwmodel {

namespace {

constexpr std::array kSegments = {
    Segment{mem::kFlashBase, mem::kFlashBase + mem::kFlashSize - 1, kPermR | kPermX, SegmentKind::Flash},
    Segment{mem::kRamBase, mem::kRamBase + mem::kRamSize - 1, kPermR | kPermW, SegmentKind::Ram},
    Segment{mem::kMmioBase, mem::kMmioLimit, kPermR | kPermW, SegmentKind::Mmio},
    Segment{mem::kDebugPort, mem::kDebugPort + 3, kPermW, SegmentKind::Debug},
    Segment{mem::kScsBase, mem::kScsLimit, kPermR | kPermW, SegmentKind::Scs},
};

uint32_t read_le(const uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void write_le(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}

uint32_t flags_word(const MachineState& s) { return (s.z ? 1u : 0u) | (s.n ? 2u : 0u) | (s.c ? 4u : 0u); }

}  // namespace

std::span<const Segment> MemoryMap::segments() { return kSegments; }

Segment MemoryMap::lookup(uint32_t addr) {
  for (const auto& seg : kSegments)
    if (addr >= seg.base && addr <= seg.limit) return seg;
  return Segment{addr, addr, 0, SegmentKind::Unmapped};
}

std::string_view to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::MemPerm: return "MemPerm";
    case FaultKind::UndefInsn: return "UndefInsn";
    case FaultKind::BadVector: return "BadVector";
    case FaultKind::ShadowStack: return "ShadowStack";
    case FaultKind::IrqNesting: return "IrqNesting";
  }
  return "?";
}

std::optional<FaultKind> fault_kind_from_string(std::string_view s) {
  for (auto k : {FaultKind::MemPerm, FaultKind::UndefInsn, FaultKind::BadVector, FaultKind::ShadowStack,
                 FaultKind::IrqNesting})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

Machine Machine::load_firmware(std::span<const uint8_t> image) {
  if (image.size() > mem::kFlashSize)
    throw LoadError(LoadError::Kind::ImageTooLarge,
                    fmt::format("image is {} bytes, flash holds {}", image.size(), mem::kFlashSize));
  if (image.size() < 8)
    throw LoadError(LoadError::Kind::MalformedVectorTable, "image too short for a vector table");
  uint32_t reset = read_le(image.data() + 4);
  if (reset % 4 || reset >= mem::kFlashSize)
    throw LoadError(LoadError::Kind::MalformedVectorTable,
                    fmt::format("reset handler 0x{:08x} is not a word address in flash", reset));
  Machine m;
  m.s_.flash = std::make_shared<const std::vector<uint8_t>>(image.begin(), image.end());
  m.s_.ram.assign(mem::kRamSize, 0);
  m.s_.regs[isa::kSp] = read_le(image.data());
  m.s_.regs[isa::kPc] = reset;
  m.s_.block_start = reset;
  return m;
}

uint32_t Machine::fetch_flash(uint32_t addr) const {
  const auto& f = *s_.flash;
  uint32_t v = 0;
  for (uint32_t i = 0; i < 4; ++i) {
    uint32_t a = addr + i;
    uint8_t b = a < f.size() ? f[a] : 0xFF;  // erased flash
    v |= static_cast<uint32_t>(b) << (8 * i);
  }
  return v;
}

uint32_t Machine::vector(int index) const { return fetch_flash(static_cast<uint32_t>(index) * 4); }

uint64_t Machine::call_signature() const {
  Fnv1a h;
  for (const auto& f : s_.shadow_stack) h.u32(f.return_address);
  return h.value();
}

std::optional<int> Machine::next_pending() const {
  if (!s_.pending_irqs) return std::nullopt;
  for (int i = 0; i < kMaxIrqs; ++i)
    if (s_.pending_irqs & (1u << i)) return i;
  return std::nullopt;
}

AccessEvent Machine::event(uint32_t addr, AccessKind kind, uint32_t value, uint8_t width) const {
  AccessEvent ev;
  ev.address = addr;
  ev.kind = kind;
  ev.value = value;
  ev.width = width;
  ev.bbl = s_.block_start;
  ev.cs = call_signature();
  ev.frame_id = current_frame();
  ev.insn_count = s_.insn_count;
  ev.pc = s_.pc();
  return ev;
}

StepOutcome Machine::raise(FaultKind kind, uint32_t addr, uint32_t taint) {
  Fault f{kind, s_.pc(), addr, taint};
  s_.fault = f;
  return {StepKind::Fault, f};
}

Machine::Mem Machine::load(uint32_t addr, uint8_t width, uint32_t& value, uint32_t& taint, uint32_t base_taint,
                           Bus& bus) {
  taint = 0;
  if (width == 32 && addr % 4) {
    raise(FaultKind::MemPerm, addr, base_taint);
    return Mem::Fault;
  }
  Segment seg = MemoryMap::lookup(addr);
  if (!(seg.perms & kPermR)) {
    raise(FaultKind::MemPerm, addr, base_taint);
    return Mem::Fault;
  }
  uint32_t lane = (addr & 3) * 8;
  switch (seg.kind) {
    case SegmentKind::Flash: {
      uint32_t w = fetch_flash(addr & ~3u);
      value = width == 32 ? w : (w >> lane) & 0xFF;
      return Mem::Ok;
    }
    case SegmentKind::Ram: {
      const uint8_t* p = s_.ram.data() + (addr - mem::kRamBase);
      value = width == 32 ? read_le(p) : *p;
      return Mem::Ok;
    }
    case SegmentKind::Mmio: {
      auto v = bus.mmio_read(event(addr, AccessKind::Read, 0, width));
      if (!v) return Mem::Miss;
      value = width == 32 ? *v : (*v >> lane) & 0xFF;
      taint = addr & ~3u;
      return Mem::Ok;
    }
    case SegmentKind::Scs: {
      uint32_t w = bus.scs_read(addr & ~3u);
      value = width == 32 ? w : (w >> lane) & 0xFF;
      return Mem::Ok;
    }
    default:
      raise(FaultKind::MemPerm, addr, base_taint);
      return Mem::Fault;
  }
}

Machine::Mem Machine::store(uint32_t addr, uint8_t width, uint32_t value, uint32_t base_taint, Bus& bus) {
  if (width == 32 && addr % 4) {
    raise(FaultKind::MemPerm, addr, base_taint);
    return Mem::Fault;
  }
  Segment seg = MemoryMap::lookup(addr);
  if (!(seg.perms & kPermW)) {
    raise(FaultKind::MemPerm, addr, base_taint);
    return Mem::Fault;
  }
  uint32_t lane = (addr & 3) * 8;
  switch (seg.kind) {
    case SegmentKind::Ram: {
      uint8_t* p = s_.ram.data() + (addr - mem::kRamBase);
      if (width == 32) write_le(p, value);
      else *p = static_cast<uint8_t>(value);
      return Mem::Ok;
    }
    case SegmentKind::Mmio:
      bus.mmio_write(event(addr, AccessKind::Write, width == 32 ? value : value & 0xFF, width));
      return Mem::Ok;
    case SegmentKind::Scs:
      bus.scs_write(addr & ~3u, width == 32 ? value : (value & 0xFF) << lane);
      return Mem::Ok;
    case SegmentKind::Debug:
      bus.debug_write(static_cast<uint8_t>(value));
      return Mem::Ok;
    default:
      raise(FaultKind::MemPerm, addr, base_taint);
      return Mem::Fault;
  }
}

void Machine::end_block(Bus& bus) {
  ++s_.bb_count;
  uint32_t prev = s_.block_start;
  s_.block_start = s_.pc();
  bus.on_block(prev, s_.block_start);
}

StepOutcome Machine::step(Bus& bus) {
  if (s_.fault) return {StepKind::Fault, *s_.fault};
  if (s_.halted) return {StepKind::Halted, {}};
  if (s_.waiting) {
    // Idle: each wait step is an empty block until an interrupt arrives.
    end_block(bus);
    return {};
  }

  auto& r = s_.regs;
  auto& t = s_.taint;
  const uint32_t pc = r[isa::kPc];
  if (pc % 4 || pc >= mem::kFlashSize) return raise(FaultKind::MemPerm, pc);
  auto decoded = isa::decode(fetch_flash(pc));
  if (!decoded) return raise(FaultKind::UndefInsn, pc);
  const isa::Instruction in = *decoded;
  using isa::Op;

  const uint8_t rd = in.rd, rs = in.rs;
  const uint32_t simm = static_cast<uint32_t>(in.simm());
  uint32_t next = pc + 4;

  // Data-processing ops may not target the program counter.
  auto writes_rd = [&] {
    switch (in.op) {
      case Op::LDI: case Op::LUI: case Op::MOV: case Op::LDW: case Op::LDB: case Op::POP:
      case Op::ADD: case Op::SUB: case Op::AND: case Op::OR: case Op::XOR: case Op::SHL: case Op::SHR:
      case Op::ADDI: case Op::SUBI: case Op::ANDI: case Op::ORI: case Op::XORI: case Op::SHLI: case Op::SHRI:
        return true;
      default:
        return false;
    }
  };
  if (rd == isa::kPc && writes_rd()) return raise(FaultKind::UndefInsn, pc);

  auto read_reg = [&](uint8_t i) { return i == isa::kPc ? pc + 4 : r[i]; };
  auto alu_taint = [&](uint8_t a, uint8_t b) { return t[a] ? t[a] : t[b]; };

  auto compare = [&](uint32_t a, uint32_t b, uint32_t ta, uint32_t tb) {
    s_.z = a == b;
    s_.n = static_cast<int32_t>(a) < static_cast<int32_t>(b);
    s_.c = a >= b;
    s_.flags_taint = ta ? ta : tb;
    if (ta) bus.on_condition(ta);
    if (tb && tb != ta) bus.on_condition(tb);
  };

  switch (in.op) {
    case Op::NOP: break;
    case Op::HALT:
      s_.halted = true;
      ++s_.insn_count;
      return {StepKind::Halted, {}};
    case Op::LDI:
      r[rd] = in.imm;
      t[rd] = 0;
      break;
    case Op::LUI: r[rd] = (r[rd] & 0xFFFF) | (static_cast<uint32_t>(in.imm) << 16); break;
    case Op::MOV:
      r[rd] = read_reg(rs);
      t[rd] = t[rs];
      break;
    case Op::LDW:
    case Op::LDB: {
      uint32_t v = 0, taint = 0;
      Mem st = load(read_reg(rs) + simm, in.op == Op::LDW ? 32 : 8, v, taint, t[rs], bus);
      if (st == Mem::Fault) return {StepKind::Fault, *s_.fault};
      if (st == Mem::Miss) return {StepKind::ModelMiss, {}};
      r[rd] = v;
      t[rd] = taint;
      break;
    }
    case Op::STW:
    case Op::STB:
      if (store(read_reg(rs) + simm, in.op == Op::STW ? 32 : 8, r[rd], t[rs], bus) != Mem::Ok)
        return {StepKind::Fault, *s_.fault};
      break;
    case Op::ADD: r[rd] += r[rs]; t[rd] = alu_taint(rd, rs); break;
    case Op::SUB: r[rd] -= r[rs]; t[rd] = alu_taint(rd, rs); break;
    case Op::AND: r[rd] &= r[rs]; t[rd] = alu_taint(rd, rs); break;
    case Op::OR: r[rd] |= r[rs]; t[rd] = alu_taint(rd, rs); break;
    case Op::XOR: r[rd] ^= r[rs]; t[rd] = alu_taint(rd, rs); break;
    case Op::SHL: r[rd] <<= (r[rs] & 31); t[rd] = alu_taint(rd, rs); break;
    case Op::SHR: r[rd] >>= (r[rs] & 31); t[rd] = alu_taint(rd, rs); break;
    case Op::CMP: compare(r[rd], read_reg(rs), t[rd], t[rs]); break;
    case Op::ADDI: r[rd] += simm; break;
    case Op::SUBI: r[rd] -= simm; break;
    case Op::ANDI: r[rd] &= in.imm; break;
    case Op::ORI: r[rd] |= in.imm; break;
    case Op::XORI: r[rd] ^= in.imm; break;
    case Op::SHLI: r[rd] <<= in.imm; break;
    case Op::SHRI: r[rd] >>= in.imm; break;
    case Op::CMPI: compare(r[rd], simm, t[rd], 0); break;
    case Op::BEQ: case Op::BNE: case Op::BLT: case Op::BGE: case Op::BAL: {
      bool take = true;
      if (in.op == Op::BEQ) take = s_.z;
      else if (in.op == Op::BNE) take = !s_.z;
      else if (in.op == Op::BLT) take = s_.n;
      else if (in.op == Op::BGE) take = !s_.n;
      if (isa::is_conditional_branch(in.op)) {
        s_.last_branch_taint = s_.flags_taint;
        if (s_.flags_taint) bus.on_conditional_branch(s_.flags_taint, current_frame());
      }
      if (take) next = pc + 4 + simm * 4;
      break;
    }
    case Op::BL:
      r[isa::kLr] = pc + 4;
      t[isa::kLr] = 0;
      s_.shadow_stack.push_back(ShadowFrame{pc + 4, s_.next_frame_id++, false, {}});
      next = pc + 4 + simm * 4;
      break;
    case Op::RET: {
      if (s_.shadow_stack.empty() || s_.shadow_stack.back().interrupt ||
          s_.shadow_stack.back().return_address != r[isa::kLr])
        return raise(FaultKind::ShadowStack, r[isa::kLr], t[isa::kLr]);
      uint64_t id = s_.shadow_stack.back().frame_id;
      s_.shadow_stack.pop_back();
      next = r[isa::kLr];
      bus.on_frame_pop(id);
      break;
    }
    case Op::PUSH: {
      uint32_t sp = r[isa::kSp] - 4;
      if (store(sp, 32, read_reg(rd), t[isa::kSp], bus) != Mem::Ok) return {StepKind::Fault, *s_.fault};
      r[isa::kSp] = sp;
      break;
    }
    case Op::POP: {
      uint32_t v = 0, taint = 0;
      Mem st = load(r[isa::kSp], 32, v, taint, t[isa::kSp], bus);
      if (st == Mem::Fault) return {StepKind::Fault, *s_.fault};
      if (st == Mem::Miss) return {StepKind::ModelMiss, {}};
      r[rd] = v;
      t[rd] = 0;
      r[isa::kSp] += 4;
      break;
    }
    case Op::IRET: {
      if (s_.in_isr == 0) return raise(FaultKind::UndefInsn, pc);
      if (s_.shadow_stack.empty() || !s_.shadow_stack.back().interrupt)
        return raise(FaultKind::ShadowStack, pc);
      uint32_t sp = r[isa::kSp];
      std::array<uint32_t, 16> frame{};
      for (uint32_t i = 0; i < 16; ++i) {
        uint32_t v = 0, taint = 0;
        if (load(sp + 4 * i, 32, v, taint, 0, bus) != Mem::Ok) {
          if (!s_.fault) raise(FaultKind::MemPerm, sp + 4 * i);
          return {StepKind::Fault, *s_.fault};
        }
        frame[i] = v;
      }
      const ShadowFrame top = s_.shadow_stack.back();
      if (top.return_address != frame[14]) return raise(FaultKind::ShadowStack, frame[14]);
      for (int i = 0; i < 13; ++i) r[i] = frame[i];
      r[isa::kLr] = frame[13];
      next = frame[14];
      s_.z = frame[15] & 1;
      s_.n = frame[15] & 2;
      s_.c = frame[15] & 4;
      r[isa::kSp] = sp + kIsrFrameBytes;
      for (int i = 0; i < 16; ++i) t[i] = top.saved_taint[i];
      s_.flags_taint = top.saved_taint[16];
      s_.shadow_stack.pop_back();
      --s_.in_isr;
      bus.on_frame_pop(top.frame_id);
      break;
    }
    case Op::WFI:
      s_.waiting = true;
      break;
  }
  r[isa::kPc] = next;
  ++s_.insn_count;
  if (isa::ends_block(in.op)) end_block(bus);
  return {};
}

StepOutcome Machine::enter_interrupt(int irq, Bus& bus) {
  if (s_.fault) return {StepKind::Fault, *s_.fault};
  if (irq < 0 || irq >= kMaxIrqs) return raise(FaultKind::BadVector, static_cast<uint32_t>(irq));
  if (s_.in_isr >= kMaxIsrNesting) return raise(FaultKind::IrqNesting, static_cast<uint32_t>(irq));
  uint32_t handler = vector(2 + irq);
  if (handler % 4 || handler >= mem::kFlashSize || handler + 4 > s_.flash->size())
    return raise(FaultKind::BadVector, handler);

  auto& r = s_.regs;
  uint32_t sp = r[isa::kSp] - kIsrFrameBytes;
  std::array<uint32_t, 16> frame{};
  for (int i = 0; i < 13; ++i) frame[i] = r[i];
  frame[13] = r[isa::kLr];
  frame[14] = r[isa::kPc];
  frame[15] = flags_word(s_);
  for (uint32_t i = 0; i < 16; ++i) {
    uint32_t a = sp + 4 * i;
    if (a % 4 || a < mem::kRamBase || a - mem::kRamBase >= mem::kRamSize) return raise(FaultKind::MemPerm, a);
  }
  for (uint32_t i = 0; i < 16; ++i) write_le(s_.ram.data() + (sp + 4 * i - mem::kRamBase), frame[i]);

  ShadowFrame sf{r[isa::kPc], s_.next_frame_id++, true, {}};
  for (int i = 0; i < 16; ++i) sf.saved_taint[i] = s_.taint[i];
  sf.saved_taint[16] = s_.flags_taint;
  s_.shadow_stack.push_back(sf);

  r[isa::kSp] = sp;
  r[isa::kPc] = handler;
  s_.pending_irqs &= ~(1u << irq);
  s_.waiting = false;
  ++s_.in_isr;
  end_block(bus);
  return {};
}

}  // namespace fwmodel
