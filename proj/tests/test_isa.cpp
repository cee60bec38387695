#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fwmodel/isa.hpp"

using namespace fwmodel::isa;

namespace {

Instruction sample(const OpInfo& info, std::mt19937& rng) {
  Instruction insn{info.op, 0, 0, 0};
  auto reg = [&] { return static_cast<uint8_t>(rng() % 16); };
  auto imm = [&] { return static_cast<uint16_t>(rng()); };
  switch (info.form) {
    case Form::None: break;
    case Form::RegImm:
    case Form::RegSImm:
    case Form::RegUImm: insn.rd = reg(); insn.imm = imm(); break;
    case Form::RegShift: insn.rd = reg(); insn.imm = static_cast<uint16_t>(rng() % 32); break;
    case Form::RegReg: insn.rd = reg(); insn.rs = reg(); break;
    case Form::Mem: insn.rd = reg(); insn.rs = reg(); insn.imm = imm(); break;
    case Form::Branch: insn.imm = imm(); break;
    case Form::Reg: insn.rd = reg(); break;
  }
  return insn;
}

}  // namespace

TEST_CASE("opcode table has unique opcodes and mnemonics per form") {
  std::set<uint8_t> opcodes;
  std::set<std::pair<std::string_view, Form>> names;
  for (const auto& info : op_table()) {
    CHECK(opcodes.insert(static_cast<uint8_t>(info.op)).second);
    CHECK(names.insert({info.mnemonic, info.form}).second);
    REQUIRE(find_op(info.op) == &info);
  }
  CHECK(op_table().size() >= 30);
}

TEST_CASE("every mnemonic the instruction set needs is present") {
  std::set<std::string_view> names;
  for (const auto& info : op_table()) names.insert(info.mnemonic);
  for (auto m : {"LDI", "LUI", "LDW", "LDB", "STW", "STB", "MOV", "ADD", "SUB", "AND", "OR", "XOR", "SHL", "SHR",
                 "CMP", "BEQ", "BNE", "BLT", "BGE", "BAL", "BL", "RET", "PUSH", "POP", "IRET", "WFI", "NOP",
                 "HALT"})
    CHECK_MESSAGE(names.count(m) == 1, m);
}

TEST_CASE("encode and decode round trip") {
  std::mt19937 rng(7);
  for (const auto& info : op_table()) {
    for (int i = 0; i < 50; ++i) {
      Instruction insn = sample(info, rng);
      auto back = decode(encode(insn));
      REQUIRE(back.has_value());
      CHECK(*back == insn);
    }
  }
}

TEST_CASE("field layout") {
  CHECK(encode({Op::LDW, 3, 9, 0xFFF8}) == 0x2039FFF8u);
  CHECK(encode({Op::HALT, 0, 0, 0}) == 0x01000000u);
  CHECK(decode(0)->op == Op::NOP);
}

TEST_CASE("words with stray fields do not decode") {
  CHECK_FALSE(decode(0x00100000u).has_value());  // NOP with rd
  CHECK_FALSE(decode(0x01000001u).has_value());  // HALT with imm
  CHECK_FALSE(decode(encode({Op::SHL, 1, 0, 0}) | 32).has_value());
  CHECK_FALSE(decode(encode({Op::PUSH, 1, 0, 0}) | (2u << 16)).has_value());
  CHECK_FALSE(decode(0xFF000000u).has_value());
}

TEST_CASE("decode never accepts a word encode would not produce") {
  std::mt19937 rng(11);
  for (int i = 0; i < 200000; ++i) {
    uint32_t w = static_cast<uint32_t>(rng());
    if (auto insn = decode(w)) CHECK(encode(*insn) == w);
  }
}

TEST_CASE("block structure") {
  for (Op op : {Op::BEQ, Op::BNE, Op::BLT, Op::BGE}) CHECK(is_conditional_branch(op));
  for (Op op : {Op::BAL, Op::BL, Op::RET, Op::IRET, Op::ADD, Op::CMP}) CHECK_FALSE(is_conditional_branch(op));
  for (Op op : {Op::BEQ, Op::BAL, Op::BL, Op::RET, Op::IRET}) CHECK(ends_block(op));
  for (Op op : {Op::ADD, Op::LDW, Op::STW, Op::CMP, Op::NOP}) CHECK_FALSE(ends_block(op));
}

TEST_CASE("reference document lists every opcode and matches docs/isa.md") {
  const std::string md = reference_markdown();
  for (const auto& info : op_table()) {
    char code[8];
    std::snprintf(code, sizeof code, "0x%02x", static_cast<unsigned>(info.op));
    CHECK_MESSAGE(md.find(std::string("| ") + code + " | " + std::string(info.mnemonic)) != std::string::npos,
                  info.mnemonic);
  }
  std::ifstream in(std::string(FWMODEL_DOCS_DIR) + "/isa.md");
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK_MESSAGE(ss.str() == md, "docs/isa.md is stale; regenerate with `fwmodel isa-doc`");
}
