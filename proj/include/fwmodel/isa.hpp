#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

// Minimal 32-bit instruction set used by the interpreter and the firmware
// corpus. Every instruction is one little-endian word:
//
//   31        24 23   20 19   16 15                0
//  +------------+-------+-------+-------------------+
//  |   opcode   |  rd   |  rs   |       imm16       |
//  +------------+-------+-------+-------------------+
//
// Fields an instruction does not use must be zero; any other word is
// undecodable.
namespace fwmodel::isa {

enum class Op : uint8_t {
  NOP = 0x00,
  HALT = 0x01,
  LDI = 0x10,
  LUI = 0x11,
  MOV = 0x12,
  LDW = 0x20,
  LDB = 0x21,
  STW = 0x22,
  STB = 0x23,
  // Register-register ALU forms: rd = rd <op> rs.
  ADD = 0x30,
  SUB = 0x31,
  AND = 0x32,
  OR = 0x33,
  XOR = 0x34,
  SHL = 0x35,
  SHR = 0x36,
  CMP = 0x37,
  // Register-immediate ALU forms share the mnemonic; written `#imm`.
  ADDI = 0x40,
  SUBI = 0x41,
  ANDI = 0x42,
  ORI = 0x43,
  XORI = 0x44,
  SHLI = 0x45,
  SHRI = 0x46,
  CMPI = 0x47,
  BEQ = 0x50,
  BNE = 0x51,
  BLT = 0x52,
  BGE = 0x53,
  BAL = 0x54,
  BL = 0x58,
  RET = 0x59,
  PUSH = 0x60,
  POP = 0x61,
  IRET = 0x70,
  WFI = 0x71,
};

// Operand layout, shared by the assembler, disassembler and decoder.
enum class Form : uint8_t {
  None,       // NOP
  RegImm,     // LDI r1, 0x1234          (imm unsigned)
  RegReg,     // ADD r1, r2
  RegSImm,    // ADD r1, #-4             (imm signed)
  RegUImm,    // AND r1, #0xff           (imm unsigned)
  RegShift,   // SHL r1, #3              (imm 0..31)
  Mem,        // LDW r1, [r2, #-8]       (imm signed)
  Branch,     // BEQ label               (imm signed word offset from pc+4)
  Reg,        // PUSH r1
};

struct OpInfo {
  Op op;
  std::string_view mnemonic;
  Form form;
};

std::span<const OpInfo> op_table();
const OpInfo* find_op(Op op);
const OpInfo* find_op(uint8_t opcode);

struct Instruction {
  Op op = Op::NOP;
  uint8_t rd = 0;
  uint8_t rs = 0;
  uint16_t imm = 0;

  int32_t simm() const { return static_cast<int16_t>(imm); }
  bool operator==(const Instruction&) const = default;
};

uint32_t encode(const Instruction& insn);
std::optional<Instruction> decode(uint32_t word);

bool is_conditional_branch(Op op);
// Branch/call/return family: instructions that end a basic block.
bool ends_block(Op op);

// Markdown reference: encoding, opcode table, memory map and semantics.
std::string reference_markdown();

inline constexpr int kSp = 13;
inline constexpr int kLr = 14;
inline constexpr int kPc = 15;

}  // namespace fwmodel::isa
