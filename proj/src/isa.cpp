#include "fwmodel/isa.hpp"

#include <fmt/format.h>

#include <array>

namespace fwmodel::isa {

namespace {

constexpr std::array kOps = {
    OpInfo{Op::NOP, "NOP", Form::None},       OpInfo{Op::HALT, "HALT", Form::None},
    OpInfo{Op::LDI, "LDI", Form::RegImm},     OpInfo{Op::LUI, "LUI", Form::RegImm},
    OpInfo{Op::MOV, "MOV", Form::RegReg},     OpInfo{Op::LDW, "LDW", Form::Mem},
    OpInfo{Op::LDB, "LDB", Form::Mem},        OpInfo{Op::STW, "STW", Form::Mem},
    OpInfo{Op::STB, "STB", Form::Mem},        OpInfo{Op::ADD, "ADD", Form::RegReg},
    OpInfo{Op::SUB, "SUB", Form::RegReg},     OpInfo{Op::AND, "AND", Form::RegReg},
    OpInfo{Op::OR, "OR", Form::RegReg},       OpInfo{Op::XOR, "XOR", Form::RegReg},
    OpInfo{Op::SHL, "SHL", Form::RegReg},     OpInfo{Op::SHR, "SHR", Form::RegReg},
    OpInfo{Op::CMP, "CMP", Form::RegReg},     OpInfo{Op::ADDI, "ADD", Form::RegSImm},
    OpInfo{Op::SUBI, "SUB", Form::RegSImm},   OpInfo{Op::ANDI, "AND", Form::RegUImm},
    OpInfo{Op::ORI, "OR", Form::RegUImm},     OpInfo{Op::XORI, "XOR", Form::RegUImm},
    OpInfo{Op::SHLI, "SHL", Form::RegShift},  OpInfo{Op::SHRI, "SHR", Form::RegShift},
    OpInfo{Op::CMPI, "CMP", Form::RegSImm},   OpInfo{Op::BEQ, "BEQ", Form::Branch},
    OpInfo{Op::BNE, "BNE", Form::Branch},     OpInfo{Op::BLT, "BLT", Form::Branch},
    OpInfo{Op::BGE, "BGE", Form::Branch},     OpInfo{Op::BAL, "BAL", Form::Branch},
    OpInfo{Op::BL, "BL", Form::Branch},       OpInfo{Op::RET, "RET", Form::None},
    OpInfo{Op::PUSH, "PUSH", Form::Reg},      OpInfo{Op::POP, "POP", Form::Reg},
    OpInfo{Op::IRET, "IRET", Form::None},     OpInfo{Op::WFI, "WFI", Form::None},
};

constexpr std::array<int8_t, 256> build_index() {
  std::array<int8_t, 256> idx{};
  for (auto& v : idx) v = -1;
  for (size_t i = 0; i < kOps.size(); ++i) idx[static_cast<uint8_t>(kOps[i].op)] = static_cast<int8_t>(i);
  return idx;
}

constexpr auto kIndex = build_index();

}  // namespace

std::span<const OpInfo> op_table() { return kOps; }

const OpInfo* find_op(uint8_t opcode) {
  int8_t i = kIndex[opcode];
  return i < 0 ? nullptr : &kOps[static_cast<size_t>(i)];
}

const OpInfo* find_op(Op op) { return find_op(static_cast<uint8_t>(op)); }

uint32_t encode(const Instruction& insn) {
  return (static_cast<uint32_t>(insn.op) << 24) | (static_cast<uint32_t>(insn.rd & 0xF) << 20) |
         (static_cast<uint32_t>(insn.rs & 0xF) << 16) | insn.imm;
}

std::optional<Instruction> decode(uint32_t word) {
  const OpInfo* info = find_op(static_cast<uint8_t>(word >> 24));
  if (!info) return std::nullopt;
  Instruction insn{info->op, static_cast<uint8_t>((word >> 20) & 0xF),
                   static_cast<uint8_t>((word >> 16) & 0xF), static_cast<uint16_t>(word & 0xFFFF)};
  bool uses_rd = false, uses_rs = false, uses_imm = false;
  switch (info->form) {
    case Form::None: break;
    case Form::RegImm:
    case Form::RegSImm:
    case Form::RegUImm:
      uses_rd = uses_imm = true;
      break;
    case Form::RegShift:
      uses_rd = uses_imm = true;
      if (insn.imm > 31) return std::nullopt;
      break;
    case Form::RegReg: uses_rd = uses_rs = true; break;
    case Form::Mem: uses_rd = uses_rs = uses_imm = true; break;
    case Form::Branch: uses_imm = true; break;
    case Form::Reg: uses_rd = true; break;
  }
  if ((!uses_rd && insn.rd) || (!uses_rs && insn.rs) || (!uses_imm && insn.imm)) return std::nullopt;
  return insn;
}

bool is_conditional_branch(Op op) {
  return op == Op::BEQ || op == Op::BNE || op == Op::BLT || op == Op::BGE;
}

bool ends_block(Op op) {
  switch (op) {
    case Op::BEQ:
    case Op::BNE:
    case Op::BLT:
    case Op::BGE:
    case Op::BAL:
    case Op::BL:
    case Op::RET:
    case Op::IRET:
    case Op::WFI:
      return true;
    default:
      return false;
  }
}

}  // namespace fwmodel::isa

namespace fwmodel::isa {

namespace {

std::string_view syntax(const OpInfo& o) {
  switch (o.form) {
    case Form::None: return "";
    case Form::RegImm: return "rd, imm16";
    case Form::RegReg: return "rd, rs";
    case Form::RegSImm: return "rd, #simm16";
    case Form::RegUImm: return "rd, #imm16";
    case Form::RegShift: return "rd, #0..31";
    case Form::Mem: return "rd, [rs, #simm16]";
    case Form::Branch: return "label";
    case Form::Reg: return "rd";
  }
  return "";
}

std::string_view effect(Op op) {
  switch (op) {
    case Op::NOP: return "no effect";
    case Op::HALT: return "stop; the run ends with verdict ok";
    case Op::LDI: return "rd = zero-extended imm16";
    case Op::LUI: return "rd = (imm16 << 16) | (rd & 0xffff)";
    case Op::MOV: return "rd = rs";
    case Op::LDW: return "rd = word at rs + simm16 (must be 4-aligned)";
    case Op::LDB: return "rd = zero-extended byte at rs + simm16";
    case Op::STW: return "word at rs + simm16 = rd (must be 4-aligned)";
    case Op::STB: return "byte at rs + simm16 = low byte of rd";
    case Op::ADD: return "rd = rd + rs";
    case Op::SUB: return "rd = rd - rs";
    case Op::AND: return "rd = rd & rs";
    case Op::OR: return "rd = rd | rs";
    case Op::XOR: return "rd = rd ^ rs";
    case Op::SHL: return "rd = rd << (rs & 31)";
    case Op::SHR: return "rd = rd >> (rs & 31), logical";
    case Op::CMP: return "set flags from rd - rs";
    case Op::ADDI: return "rd = rd + simm16";
    case Op::SUBI: return "rd = rd - simm16";
    case Op::ANDI: return "rd = rd & imm16";
    case Op::ORI: return "rd = rd | imm16";
    case Op::XORI: return "rd = rd ^ imm16";
    case Op::SHLI: return "rd = rd << imm";
    case Op::SHRI: return "rd = rd >> imm, logical";
    case Op::CMPI: return "set flags from rd - simm16";
    case Op::BEQ: return "branch if Z";
    case Op::BNE: return "branch if not Z";
    case Op::BLT: return "branch if N (signed less than)";
    case Op::BGE: return "branch if not N";
    case Op::BAL: return "branch always";
    case Op::BL: return "lr = pc + 4, push a call frame, branch";
    case Op::RET: return "pop the call frame, pc = lr (lr must match the frame)";
    case Op::PUSH: return "sp = sp - 4, word at sp = rd";
    case Op::POP: return "rd = word at sp, sp = sp + 4";
    case Op::IRET: return "return from an interrupt handler";
    case Op::WFI: return "idle until an interrupt is delivered";
  }
  return "";
}

}  // namespace

std::string reference_markdown() {
  std::string out = R"(# Instruction set reference

Generated by `fwmodel isa-doc`. Do not edit by hand.

## Encoding

Every instruction is one little-endian 32-bit word:

| bits  | 31..24 | 23..20 | 19..16 | 15..0 |
|-------|--------|--------|--------|-------|
| field | opcode | rd     | rs     | imm16 |

Fields an instruction does not use must be zero; any other word is
undecodable and faults with `UndefInsn`. Branch targets are encoded as a
signed word offset: target = pc + 4 + 4 * simm16.

Registers are `r0`..`r15`; `sp` is r13, `lr` is r14 and `pc` is r15.
Data-processing instructions may not name `pc` as destination. Reading `pc`
as a source yields the address of the next instruction.

Register-immediate ALU forms share the mnemonic of the register form and
are written with `#`, for example `ADD r1, #4`. AND, OR and XOR zero-extend
their immediate; ADD, SUB and CMP sign-extend it.

A 32-bit constant takes two instructions:

    LDI  r1, lo(0x40013800)
    LUI  r1, hi(0x40013800)

## Flags

CMP sets Z (equal), N (signed less than) and C (unsigned greater or equal).
No other instruction changes the flags.

## Opcodes

| opcode | mnemonic | operands | effect |
|--------|----------|----------|--------|
)";
  for (const OpInfo& o : op_table()) {
    std::string_view ops = syntax(o);
    out += fmt::format("| 0x{:02x} | {} | {} | {} |\n", static_cast<uint8_t>(o.op), o.mnemonic,
                       ops.empty() ? std::string("-") : fmt::format("`{}`", ops), effect(o.op));
  }
  out += R"(
## Memory map

| range                     | kind   | access                         |
|---------------------------|--------|--------------------------------|
| 0x00000000 - 0x000fffff   | flash  | read, execute                  |
| 0x20000000 - 0x2000ffff   | RAM    | read, write                    |
| 0x40000000 - 0x5fffffff   | MMIO   | read, write; served by the model |
| 0xe0000000                | debug  | byte writes append a marker    |
| 0xe000e000 - 0xe000efff   | SCS    | interrupt enable registers     |

Any other access, and any unaligned word access, faults with `MemPerm`.
Writes to `0xe000e100` enable the interrupts whose bits are set; writes to
`0xe000e180` disable them.

## Vector table

Word 0 of flash is the initial `sp`, word 1 the reset handler and words
2..33 the handlers for interrupts 0..31.

## Calls and interrupts

BL pushes a frame on a shadow stack; RET faults with `ShadowStack` when
`lr` does not match the frame. Non-leaf functions save `lr` with
`PUSH lr` and `POP lr`.

Entering an interrupt pushes r0..r12, lr, the return pc and the flags
(64 bytes) below `sp`. IRET restores them. Handlers may nest up to depth 8;
a deeper entry faults with `IrqNesting`.
)";
  return out;
}

}  // namespace fwmodel::isa
