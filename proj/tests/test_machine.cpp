#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "fwmodel/assembler.hpp"
#include "fwmodel/machine.hpp"

using namespace fwmodel;

namespace {

// Answers MMIO reads from a table and records everything.
struct FakeBus : Bus {
  std::map<uint32_t, uint32_t> values;
  bool miss = false;
  std::vector<AccessEvent> accesses;
  std::map<uint32_t, uint32_t> scs;
  std::string debug;
  std::vector<uint32_t> conditions;
  std::vector<uint64_t> pops;
  std::vector<std::pair<uint32_t, uint32_t>> blocks;

  std::optional<uint32_t> mmio_read(const AccessEvent& ev) override {
    accesses.push_back(ev);
    if (miss) return std::nullopt;
    auto it = values.find(ev.address & ~3u);
    return it == values.end() ? 0 : it->second;
  }
  void mmio_write(const AccessEvent& ev) override { accesses.push_back(ev); }
  uint32_t scs_read(uint32_t addr) override { return scs[addr]; }
  void scs_write(uint32_t addr, uint32_t value) override { scs[addr] = value; }
  void debug_write(uint8_t b) override { debug += static_cast<char>(b); }
  void on_condition(uint32_t source) override { conditions.push_back(source); }
  void on_frame_pop(uint64_t id) override { pops.push_back(id); }
  void on_block(uint32_t prev, uint32_t cur) override { blocks.emplace_back(prev, cur); }
};

const char* kVectors = R"(
        .org 0
        .word 0x20010000, reset
        .word isr0, isr1, isr2, isr3, isr4, isr5, 0x00FFFFF0
)";

std::vector<uint8_t> program(const std::string& body) {
  return asmr::assemble(std::string(kVectors) + ".org 0x100\n" + body +
                        "\nisr0:\nisr1:\nisr2:\nisr3:\nisr4:\nisr5: IRET\n");
}

StepOutcome run(Machine& m, Bus& bus, int max_steps = 10000) {
  StepOutcome o;
  for (int i = 0; i < max_steps; ++i) {
    o = m.step(bus);
    if (o.kind != StepKind::Continued) return o;
  }
  return o;
}

}  // namespace

TEST_CASE("load_firmware follows the vector table") {
  std::vector<uint8_t> img(0x100, 0);
  img[0] = 0x00, img[1] = 0x00, img[2] = 0x01, img[3] = 0x20;
  img[4] = 0x88;
  Machine m = Machine::load_firmware(img);
  CHECK(m.state().pc() == 0x88);
  CHECK(m.state().sp() == 0x20010000);
  CHECK(m.state().bb_count == 0);
  CHECK(m.state().insn_count == 0);
  CHECK_FALSE(m.state().z);
}

TEST_CASE("load_firmware rejects bad images") {
  auto kind = [](std::vector<uint8_t> img) {
    try {
      Machine::load_firmware(img);
    } catch (const LoadError& e) {
      return e.kind();
    }
    FAIL("accepted");
    return LoadError::Kind::ImageTooLarge;
  };
  CHECK(kind({}) == LoadError::Kind::MalformedVectorTable);
  CHECK(kind({0, 0, 1, 0x20, 0, 0, 0, 0x40}) == LoadError::Kind::MalformedVectorTable);
  CHECK(kind({0, 0, 1, 0x20, 2, 0, 0, 0}) == LoadError::Kind::MalformedVectorTable);
  CHECK(kind(std::vector<uint8_t>(mem::kFlashSize + 4, 0)) == LoadError::Kind::ImageTooLarge);
}

TEST_CASE("memory map layout") {
  auto segs = MemoryMap::segments();
  for (size_t i = 1; i < segs.size(); ++i) CHECK(segs[i - 1].limit < segs[i].base);
  CHECK(MemoryMap::lookup(0x100).perms == (kPermR | kPermX));
  CHECK(MemoryMap::lookup(0x2000FFFC).perms == (kPermR | kPermW));
  CHECK(MemoryMap::lookup(0x20010000).kind == SegmentKind::Unmapped);
  CHECK(MemoryMap::lookup(0x5FFFFFFF).kind == SegmentKind::Mmio);
  CHECK(MemoryMap::lookup(0x60000000).kind == SegmentKind::Unmapped);
  CHECK(MemoryMap::lookup(0xE000E100).kind == SegmentKind::Scs);
  CHECK(MemoryMap::lookup(0xE0000000).kind == SegmentKind::Debug);
  CHECK(MemoryMap::lookup(0x10000000).perms == 0);
}

TEST_CASE("store to flash faults") {
  Machine m = Machine::load_firmware(program("reset: LDI r1, 0x100\nSTW r0, [r1]\nHALT"));
  FakeBus bus;
  auto o = run(m, bus);
  REQUIRE(o.kind == StepKind::Fault);
  CHECK(o.fault.kind == FaultKind::MemPerm);
  CHECK(o.fault.addr == 0x100);
  CHECK(m.step(bus).kind == StepKind::Fault);
}

TEST_CASE("RAM load and store") {
  Machine m = Machine::load_firmware(program(R"(
reset:  LDI r1, 0
        LUI r1, 0x2000
        LDI r2, 0xBEEF
        LUI r2, 0xDEAD
        STW r2, [r1]
        LDW r3, [r1]
        LDB r4, [r1, #1]
        HALT)"));
  FakeBus bus;
  CHECK(run(m, bus).kind == StepKind::Halted);
  CHECK(m.state().regs[3] == 0xDEADBEEF);
  CHECK(m.state().regs[4] == 0xBE);
}

TEST_CASE("unaligned word access and unmapped access fault") {
  FakeBus bus;
  Machine a = Machine::load_firmware(program("reset: LDI r1, 2\nLUI r1, 0x2000\nLDW r0, [r1]\nHALT"));
  auto o = run(a, bus);
  CHECK(o.kind == StepKind::Fault);
  CHECK(o.fault.addr == 0x20000002);
  Machine b = Machine::load_firmware(program("reset: LDI r1, 0\nLUI r1, 0x2001\nLDB r0, [r1]\nHALT"));
  o = run(b, bus);
  CHECK(o.fault.kind == FaultKind::MemPerm);
  CHECK(o.fault.addr == 0x20010000);
}

TEST_CASE("MMIO loads come from the bus with access details") {
  Machine m = Machine::load_firmware(program(R"(
reset:  LDI r1, 0
        LUI r1, 0x4000
        BL  f
        HALT
f:      LDW r0, [r1, #4]
        STB r0, [r1, #9]
        RET)"));
  FakeBus bus;
  bus.values[0x40000004] = 0x1234;
  CHECK(run(m, bus).kind == StepKind::Halted);
  REQUIRE(bus.accesses.size() == 2);
  CHECK(bus.accesses[0].kind == AccessKind::Read);
  CHECK(bus.accesses[0].address == 0x40000004);
  CHECK(bus.accesses[0].width == 32);
  CHECK(bus.accesses[0].frame_id != 0);
  CHECK(bus.accesses[1].kind == AccessKind::Write);
  CHECK(bus.accesses[1].address == 0x40000009);
  CHECK(bus.accesses[1].width == 8);
  CHECK(bus.accesses[1].value == 0x34);
  CHECK(m.state().regs[0] == 0x1234);
  CHECK(bus.pops.size() == 1);
}

TEST_CASE("a model miss does not retire the instruction") {
  Machine m = Machine::load_firmware(program("reset: LDI r1, 0\nLUI r1, 0x4000\nLDW r0, [r1]\nHALT"));
  FakeBus bus;
  bus.miss = true;
  auto o = run(m, bus);
  CHECK(o.kind == StepKind::ModelMiss);
  const uint32_t pc = m.state().pc();
  const uint64_t insns = m.state().insn_count;
  bus.miss = false;
  bus.values[0x40000000] = 7;
  CHECK(run(m, bus).kind == StepKind::Halted);
  CHECK(m.state().regs[0] == 7);
  CHECK(pc == 0x108);
  CHECK(m.state().insn_count == insns + 2);
}

TEST_CASE("debug port collects bytes and is not a peripheral access") {
  Machine m = Machine::load_firmware(program(R"(
reset:  LDI r12, 0
        LUI r12, 0xE000
        LDI r0, 'O'
        STB r0, [r12]
        LDI r0, 'K'
        STW r0, [r12]
        HALT)"));
  FakeBus bus;
  CHECK(run(m, bus).kind == StepKind::Halted);
  CHECK(bus.debug == "OK");
  CHECK(bus.accesses.empty());
}

TEST_CASE("undecodable word faults with UndefInsn") {
  Machine m = Machine::load_firmware(program("reset: NOP\n.word 0xFF000000"));
  FakeBus bus;
  auto o = run(m, bus);
  CHECK(o.fault.kind == FaultKind::UndefInsn);
  CHECK(o.fault.pc == 0x104);
}

TEST_CASE("shadow stack tracks calls and catches a forged return") {
  Machine m = Machine::load_firmware(program(R"(
reset:  BL  a
        HALT
a:      BL  b
        RET
b:      LDI r14, 0x100
        RET)"));
  FakeBus bus;
  size_t max_depth = 0;
  StepOutcome o;
  for (int i = 0; i < 100 && o.kind == StepKind::Continued; ++i) {
    o = m.step(bus);
    max_depth = std::max(max_depth, m.depth());
  }
  CHECK(max_depth == 2);
  CHECK(o.kind == StepKind::Fault);
  CHECK(o.fault.kind == FaultKind::ShadowStack);
}

TEST_CASE("return with an empty shadow stack faults") {
  Machine m = Machine::load_firmware(program("reset: RET"));
  FakeBus bus;
  CHECK(run(m, bus).fault.kind == FaultKind::ShadowStack);
}

TEST_CASE("basic blocks end at branches, calls and returns") {
  Machine m = Machine::load_firmware(program(R"(
reset:  LDI r0, 3
loop:   SUB r0, #1
        CMP r0, #0
        BNE loop
        BL  f
        HALT
f:      NOP
        RET)"));
  FakeBus bus;
  CHECK(run(m, bus).kind == StepKind::Halted);
  // three BNE, one BL, one RET
  CHECK(m.state().bb_count == 5);
  CHECK(bus.blocks.front() == std::pair<uint32_t, uint32_t>{0x100, 0x104});
  CHECK(m.state().insn_count == 1 + 3 * 3 + 1 + 2 + 1);
}

TEST_CASE("taint reaches conditions only from MMIO values") {
  Machine m = Machine::load_firmware(program(R"(
reset:  LDI r1, 0
        LUI r1, 0x4000
        LDW r2, [r1, #8]
        AND r2, #0x80
        CMP r2, #0
        LDI r3, 5
        CMP r3, #5
        LDW r4, [r1, #8]
        LDI r4, 1
        CMP r4, #1
        HALT)"));
  FakeBus bus;
  CHECK(run(m, bus).kind == StepKind::Halted);
  REQUIRE(bus.conditions.size() == 1);
  CHECK(bus.conditions[0] == 0x40000008);
}

TEST_CASE("interrupt entry and return") {
  Machine m = Machine::load_firmware(program(R"(
reset:  LDI r5, 0x55
        CMP r5, #0x55
        NOP
        HALT)"));
  FakeBus bus;
  m.step(bus);
  m.step(bus);
  const MachineState before = m.state();
  REQUIRE(m.enter_interrupt(5, bus).kind == StepKind::Continued);
  CHECK(m.state().in_isr == 1);
  CHECK(m.state().pc() == m.vector(7));
  CHECK(m.state().sp() == before.sp() - kIsrFrameBytes);
  m.state().z = false;
  m.state().regs[5] = 0;
  CHECK(m.step(bus).kind == StepKind::Continued);  // IRET
  CHECK(m.state().in_isr == 0);
  CHECK(m.state().pc() == before.pc());
  CHECK(m.state().regs[5] == 0x55);
  CHECK(m.state().z);
  CHECK(m.state().sp() == before.sp());
  CHECK(run(m, bus).kind == StepKind::Halted);
}

TEST_CASE("IRET outside a handler is undefined") {
  Machine m = Machine::load_firmware(program("reset: IRET"));
  FakeBus bus;
  CHECK(run(m, bus).fault.kind == FaultKind::UndefInsn);
}

TEST_CASE("bad vectors and nesting limit") {
  FakeBus bus;
  Machine m = Machine::load_firmware(program("reset: BAL reset"));
  CHECK(m.enter_interrupt(6, bus).fault.kind == FaultKind::BadVector);

  Machine n = Machine::load_firmware(program("reset: BAL reset"));
  for (int i = 0; i < kMaxIsrNesting; ++i) REQUIRE(n.enter_interrupt(0, bus).kind == StepKind::Continued);
  CHECK(n.state().in_isr == kMaxIsrNesting);
  CHECK(n.enter_interrupt(0, bus).fault.kind == FaultKind::IrqNesting);
}

TEST_CASE("dead-loop default handler never returns") {
  Machine m = Machine::load_firmware(asmr::assemble(R"(
        .word 0x20010000, reset, dead
reset:  BAL reset
dead:   BAL dead)"));
  FakeBus bus;
  REQUIRE(m.enter_interrupt(0, bus).kind == StepKind::Continued);
  for (int i = 0; i < 1000; ++i) REQUIRE(m.step(bus).kind == StepKind::Continued);
  CHECK(m.state().in_isr == 1);
  CHECK(m.state().pc() == 0x10);
}

TEST_CASE("WFI idles as empty blocks until an interrupt") {
  Machine m = Machine::load_firmware(program("reset: WFI\nHALT"));
  FakeBus bus;
  m.step(bus);
  CHECK(m.state().waiting);
  const uint64_t bb = m.state().bb_count;
  for (int i = 0; i < 10; ++i) m.step(bus);
  CHECK(m.state().bb_count == bb + 10);
  CHECK(m.state().pc() == 0x104);
  REQUIRE(m.enter_interrupt(1, bus).kind == StepKind::Continued);
  CHECK_FALSE(m.state().waiting);
  CHECK(run(m, bus).kind == StepKind::Halted);
}

TEST_CASE("pending interrupts are served lowest number first") {
  Machine m = Machine::load_firmware(program("reset: HALT"));
  m.state().pending_irqs = (1u << 9) | (1u << 3);
  CHECK(m.next_pending() == 3);
  FakeBus bus;
  m.enter_interrupt(3, bus);
  CHECK(m.next_pending() == 9);
}

TEST_CASE("a copied machine replays the identical trace") {
  Machine m = Machine::load_firmware(program(R"(
reset:  LDI r0, 50
        LDI r1, 0
        LUI r1, 0x4000
loop:   LDW r2, [r1]
        ADD r3, r2
        SUB r0, #1
        CMP r0, #0
        BNE loop
        HALT)"));
  FakeBus warm;
  for (int i = 0; i < 20; ++i) m.step(warm);
  const Machine snap = m;
  auto trace = [&](Machine copy) {
    FakeBus bus;
    bus.values[0x40000000] = 3;
    std::vector<uint32_t> pcs;
    while (copy.step(bus).kind == StepKind::Continued) pcs.push_back(copy.state().pc());
    return std::make_pair(pcs, copy.state().bb_count);
  };
  auto a = trace(snap);
  auto b = trace(snap);
  CHECK(a == b);
  CHECK(m.state().insn_count == snap.state().insn_count);
}

TEST_CASE("a snapshot taken inside a handler keeps the nesting depth") {
  Machine m = Machine::load_firmware(program("reset: BAL reset"));
  FakeBus bus;
  m.enter_interrupt(2, bus);
  Machine snap = m;
  CHECK(snap.state().in_isr == 1);
  CHECK(snap.step(bus).kind == StepKind::Continued);
  CHECK(snap.state().in_isr == 0);
  CHECK(m.state().in_isr == 1);
}
