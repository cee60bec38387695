#include "fwmodel/irq.hpp"

#include <sstream>
#include <stdexcept>
#include <string>

namespace fwmodel {

FiringStrategy FiringStrategy::scripted(std::string_view text) {
  FiringStrategy s{Kind::Scripted, 0, {}};
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    uint64_t bb;
    int irq;
    if (!(ls >> bb)) continue;
    if (!(ls >> irq) || irq < 0 || irq >= 32)
      throw std::invalid_argument("irq script line " + std::to_string(line_no) + ": expected 'bb_count irq'");
    std::string extra;
    if (ls >> extra) throw std::invalid_argument("irq script line " + std::to_string(line_no) + ": trailing text");
    if (!s.script.empty() && bb < s.script.back().first)
      throw std::invalid_argument("irq script line " + std::to_string(line_no) + ": entries must be sorted");
    s.script.emplace_back(bb, irq);
  }
  return s;
}

void IrqController::on_scs_write(uint32_t address, uint32_t value) {
  if (address == scs::kIser) {
    if (value & ~state_.enabled) events_.push_back({true, value});
    state_.enabled |= value;
  } else if (address == scs::kIcer) {
    if (value & state_.enabled) events_.push_back({false, value});
    state_.enabled &= ~value;
  } else {
    plain_[address] = value;
  }
}

uint32_t IrqController::on_scs_read(uint32_t address) const {
  if (address == scs::kIser || address == scs::kIcer) return state_.enabled;
  auto it = plain_.find(address);
  return it == plain_.end() ? 0 : it->second;
}

std::optional<int> IrqController::tick(uint64_t bb_count, bool deliverable) {
  if (!deliverable) return std::nullopt;
  switch (strategy_.kind) {
    case FiringStrategy::Kind::None:
      return std::nullopt;
    case FiringStrategy::Kind::RoundRobin: {
      if (state_.enabled == 0 || bb_count - state_.last_fire_bb < state_.interval) return std::nullopt;
      for (int i = 0; i < 32; ++i) {
        int irq = (state_.rr_cursor + i) % 32;
        if (state_.enabled & (1u << irq)) {
          state_.rr_cursor = (irq + 1) % 32;
          state_.last_fire_bb = bb_count;
          firings_.push_back({bb_count, irq, state_.enabled});
          return irq;
        }
      }
      return std::nullopt;
    }
    case FiringStrategy::Kind::Scripted: {
      while (state_.script_pos < strategy_.script.size() && strategy_.script[state_.script_pos].first <= bb_count) {
        int irq = strategy_.script[state_.script_pos++].second;
        if (state_.enabled & (1u << irq)) {
          state_.last_fire_bb = bb_count;
          firings_.push_back({bb_count, irq, state_.enabled});
          return irq;
        }
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace fwmodel
