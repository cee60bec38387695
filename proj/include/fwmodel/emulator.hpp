#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fwmodel/irq.hpp"
#include "fwmodel/machine.hpp"
#include "fwmodel/model.hpp"
#include "fwmodel/regmodel.hpp"

namespace fwmodel {

// A loaded image plus its identity. Boot state is computed once and copied.
struct Firmware {
  std::vector<uint8_t> image;
  uint64_t hash = 0;
  Machine boot;

  static Firmware from_image(std::vector<uint8_t> image);
  static Firmware from_file(const std::string& path);
};

// Fuzz input delivered through DR reads, one 4-byte little-endian word
// per read, zero-padded at the tail.
class InputChannel {
 public:
  InputChannel() = default;
  explicit InputChannel(std::span<const uint8_t> bytes) : bytes_(bytes.begin(), bytes.end()) {}

  uint32_t next_word();
  bool exhausted() const { return exhausted_; }
  size_t cursor() const { return cursor_; }
  uint64_t words_consumed() const { return words_; }
  size_t size() const { return bytes_.size(); }

 private:
  std::vector<uint8_t> bytes_;
  size_t cursor_ = 0;
  uint64_t words_ = 0;
  bool exhausted_ = false;
};

inline constexpr size_t kCoverageMapSize = 1 << 16;

class CoverageMap {
 public:
  CoverageMap() : hits_(kCoverageMapSize, 0) {}

  static uint32_t edge_index(uint32_t prev, uint32_t cur);
  // Returns true the first time an edge is hit.
  bool record(uint32_t prev, uint32_t cur);
  void clear();
  // Digest of the (slot, hit count) pairs in slot order.
  uint64_t hash() const;
  size_t edges() const { return touched_.size(); }
  const std::vector<uint8_t>& bytes() const { return hits_; }
  // Nonzero slots in first-hit order.
  const std::vector<uint32_t>& touched() const { return touched_; }

 private:
  std::vector<uint8_t> hits_;
  std::vector<uint32_t> touched_;
};

// Distinct basic blocks reached, by start address.
class BlockSet {
 public:
  BlockSet() : seen_(mem::kFlashSize / 4, false) {}
  void insert(uint32_t addr);
  void merge(const BlockSet& other);
  size_t size() const { return count_; }

 private:
  std::vector<bool> seen_;
  size_t count_ = 0;
};

enum class ExecMode : uint8_t {
  Main,    // DR from input, SR from the handler table, misses surface
  Worker,  // explorer candidate run: SR from the candidate, no IRQs
  Stub,    // every MMIO read is 0, nothing is learned
};

struct ScsWrite {
  uint64_t bb_count;
  uint32_t address;
  uint32_t value;
};

// One execution instance: interpreter, register model and interrupt
// controller. Copying it is a snapshot. The input channel and coverage
// sinks are attached by pointer and are not part of the snapshot.
class Emulator : public Bus, public ValueSource {
 public:
  Emulator(const Firmware& fw, InstantiatedModel model, FiringStrategy strategy, ExecMode mode = ExecMode::Main);

  Machine machine;
  RegModel regs;
  IrqController irq;
  ExecMode mode;
  std::string debug_log;

  InputChannel* input = nullptr;
  CoverageMap* coverage = nullptr;
  BlockSet* blocks = nullptr;

  // Worker mode.
  SRAccessContext worker_ctx{};
  uint32_t worker_value = 0;
  std::vector<SRAccessContext> nested_reads;

  // Set by sr_value() on a table miss.
  std::optional<SRAccessContext> last_miss;
  // Raised on a new edge or DR input consumption; cleared by the caller.
  bool progress = false;
  // Every system-control write in order, for auditing the interrupt schedule.
  std::vector<ScsWrite> scs_writes;

  std::optional<uint32_t> mmio_read(const AccessEvent& ev) override;
  void mmio_write(const AccessEvent& ev) override;
  uint32_t scs_read(uint32_t addr) override;
  void scs_write(uint32_t addr, uint32_t value) override;
  void debug_write(uint8_t byte) override;
  void on_condition(uint32_t source) override;
  void on_conditional_branch(uint32_t source, uint64_t frame_id) override;
  void on_frame_pop(uint64_t frame_id) override;
  void on_block(uint32_t prev, uint32_t cur) override;

  uint32_t next_dr_word() override;
  std::optional<uint32_t> sr_value(const SRAccessContext& ctx) override;

  // Fire a scheduled interrupt if one is due. Main mode only.
  StepOutcome deliver_interrupts();

  // Snapshot with the run-local attachments detached.
  Emulator snapshot() const;
};

}  // namespace fwmodel
