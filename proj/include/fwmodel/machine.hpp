#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace fwmodel {

// Fixed Cortex-M-style layout.
namespace mem {
inline constexpr uint32_t kFlashBase = 0x00000000;
inline constexpr uint32_t kFlashSize = 0x00100000;
inline constexpr uint32_t kRamBase = 0x20000000;
inline constexpr uint32_t kRamSize = 0x00010000;
inline constexpr uint32_t kMmioBase = 0x40000000;
inline constexpr uint32_t kMmioLimit = 0x5FFFFFFF;
inline constexpr uint32_t kDebugPort = 0xE0000000;
inline constexpr uint32_t kScsBase = 0xE000E000;
inline constexpr uint32_t kScsLimit = 0xE000EFFF;

inline constexpr bool in_mmio(uint32_t a) { return a >= kMmioBase && a <= kMmioLimit; }
}  // namespace mem

enum Perm : uint8_t { kPermR = 1, kPermW = 2, kPermX = 4 };

enum class SegmentKind : uint8_t { Flash, Ram, Mmio, Scs, Debug, Unmapped };

struct Segment {
  uint32_t base;
  uint32_t limit;  // inclusive
  uint8_t perms;
  SegmentKind kind;
};

class MemoryMap {
 public:
  static std::span<const Segment> segments();
  // Unmapped addresses yield a Segment with kind Unmapped and no permissions.
  static Segment lookup(uint32_t addr);
};

enum class FaultKind : uint8_t { MemPerm, UndefInsn, BadVector, ShadowStack, IrqNesting };
std::string_view to_string(FaultKind kind);
std::optional<FaultKind> fault_kind_from_string(std::string_view s);

struct Fault {
  FaultKind kind = FaultKind::MemPerm;
  uint32_t pc = 0;
  uint32_t addr = 0;
  // MMIO taint source carried by the operand the faulting operation
  // consumed, 0 if untainted.
  uint32_t taint = 0;
};

enum class AccessKind : uint8_t { Read, Write };

struct AccessEvent {
  uint32_t address = 0;  // as issued by the instruction (not widened)
  AccessKind kind = AccessKind::Read;
  uint32_t value = 0;    // writes only
  uint8_t width = 32;    // 8 or 32
  uint32_t bbl = 0;      // start address of the current basic block
  uint64_t cs = 0;       // call-stack signature
  uint64_t frame_id = 0;
  uint64_t insn_count = 0;
  uint32_t pc = 0;
};

// Everything the interpreter cannot decide on its own is routed here.
class Bus {
 public:
  virtual ~Bus() = default;
  // nullopt means the model has no value yet; the instruction does not retire.
  virtual std::optional<uint32_t> mmio_read(const AccessEvent& ev) = 0;
  virtual void mmio_write(const AccessEvent& ev) = 0;
  virtual uint32_t scs_read(uint32_t addr) = 0;
  virtual void scs_write(uint32_t addr, uint32_t value) = 0;
  virtual void debug_write(uint8_t byte) = 0;
  // CMP consumed a value derived from an MMIO read of `source`.
  virtual void on_condition(uint32_t /*source*/) {}
  virtual void on_conditional_branch(uint32_t /*source*/, uint64_t /*frame_id*/) {}
  virtual void on_frame_pop(uint64_t /*frame_id*/) {}
  virtual void on_block(uint32_t /*prev*/, uint32_t /*cur*/) {}
};

struct ShadowFrame {
  uint32_t return_address = 0;
  uint64_t frame_id = 0;
  bool interrupt = false;
  std::array<uint32_t, 17> saved_taint{};  // interrupt frames: r0..r15 + flags
};

struct MachineState {
  std::array<uint32_t, 16> regs{};
  bool z = false, n = false, c = false;
  std::array<uint32_t, 16> taint{};
  uint32_t flags_taint = 0;
  uint32_t last_branch_taint = 0;

  std::shared_ptr<const std::vector<uint8_t>> flash;
  std::vector<uint8_t> ram;

  uint64_t bb_count = 0;
  uint64_t insn_count = 0;
  uint32_t block_start = 0;
  std::vector<ShadowFrame> shadow_stack;
  uint64_t next_frame_id = 1;
  uint32_t pending_irqs = 0;
  int in_isr = 0;
  bool waiting = false;
  bool halted = false;
  std::optional<Fault> fault;

  uint32_t pc() const { return regs[15]; }
  uint32_t sp() const { return regs[13]; }
};

enum class StepKind : uint8_t { Continued, Fault, Halted, ModelMiss };

struct StepOutcome {
  StepKind kind = StepKind::Continued;
  Fault fault{};
};

class LoadError : public std::runtime_error {
 public:
  enum class Kind { ImageTooLarge, MalformedVectorTable };
  LoadError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr int kMaxIrqs = 32;
inline constexpr int kMaxIsrNesting = 8;
// Hardware-stacked frame: r0..r12, lr, return pc, flags.
inline constexpr uint32_t kIsrFrameBytes = 64;

// Deterministic interpreter. Copying a Machine is a snapshot; flash is
// shared read-only between copies.
class Machine {
 public:
  // Vector table: word 0 initial SP, word 1 reset handler, words 2..33 IRQ 0..31.
  static Machine load_firmware(std::span<const uint8_t> image);

  StepOutcome step(Bus& bus);
  StepOutcome enter_interrupt(int irq, Bus& bus);

  MachineState& state() { return s_; }
  const MachineState& state() const { return s_; }

  uint32_t vector(int index) const;
  uint64_t call_signature() const;
  uint64_t current_frame() const { return s_.shadow_stack.empty() ? 0 : s_.shadow_stack.back().frame_id; }
  size_t depth() const { return s_.shadow_stack.size(); }

  // Lowest-numbered pending IRQ, if any.
  std::optional<int> next_pending() const;

 private:
  enum class Mem : uint8_t { Ok, Fault, Miss };

  Mem load(uint32_t addr, uint8_t width, uint32_t& value, uint32_t& taint, uint32_t base_taint, Bus& bus);
  Mem store(uint32_t addr, uint8_t width, uint32_t value, uint32_t base_taint, Bus& bus);
  uint32_t fetch_flash(uint32_t addr) const;
  AccessEvent event(uint32_t addr, AccessKind kind, uint32_t value, uint8_t width) const;
  StepOutcome raise(FaultKind kind, uint32_t addr, uint32_t taint = 0);
  void end_block(Bus& bus);

  MachineState s_;
};

}  // namespace fwmodel
