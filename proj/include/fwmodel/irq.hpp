#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace fwmodel {

namespace scs {
inline constexpr uint32_t kIser = 0xE000E100;  // set-enable, write 1 to enable
inline constexpr uint32_t kIcer = 0xE000E180;  // clear-enable, write 1 to disable
}  // namespace scs

inline constexpr uint64_t kDefaultIrqInterval = 1000;

struct FiringStrategy {
  enum class Kind : uint8_t { RoundRobin, Scripted, None };

  Kind kind = Kind::RoundRobin;
  uint64_t interval = kDefaultIrqInterval;            // basic blocks
  std::vector<std::pair<uint64_t, int>> script;       // (bb_count, irq), sorted

  static FiringStrategy round_robin(uint64_t interval = kDefaultIrqInterval) {
    return {Kind::RoundRobin, interval, {}};
  }
  static FiringStrategy none() { return {Kind::None, 0, {}}; }
  // Lines of `bb_count irq`; '#' comments. Throws std::invalid_argument on
  // malformed or unsorted input.
  static FiringStrategy scripted(std::string_view text);
};

struct IrqState {
  uint32_t enabled = 0;
  int rr_cursor = 0;
  uint64_t interval = kDefaultIrqInterval;
  uint64_t last_fire_bb = 0;
  size_t script_pos = 0;
};

struct FiringRecord {
  uint64_t bb_count;
  int irq;
  uint32_t enabled_mask;  // enable set at the moment of firing

  bool operator==(const FiringRecord&) const = default;
};

struct EnableEvent {
  bool enable;
  uint32_t mask;
};

// Tracks the interrupt controller's enable registers and decides when to
// fire what. Everything else in the system-control space is a plain word.
class IrqController {
 public:
  IrqController() = default;
  explicit IrqController(FiringStrategy strategy) : strategy_(std::move(strategy)) {
    state_.interval = strategy_.interval;
  }

  void on_scs_write(uint32_t address, uint32_t value);
  uint32_t on_scs_read(uint32_t address) const;

  // Called at each basic-block boundary.
  std::optional<int> tick(uint64_t bb_count, bool deliverable);

  const IrqState& state() const { return state_; }
  const FiringStrategy& strategy() const { return strategy_; }
  const std::vector<FiringRecord>& firings() const { return firings_; }
  // Enable/disable writes that changed nothing are not recorded.
  std::vector<EnableEvent> take_enable_events() { return std::exchange(events_, {}); }

 private:
  FiringStrategy strategy_;
  IrqState state_;
  std::map<uint32_t, uint32_t> plain_;
  std::vector<FiringRecord> firings_;
  std::vector<EnableEvent> events_;
};

}  // namespace fwmodel
