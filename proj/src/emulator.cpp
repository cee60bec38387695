#include "fwmodel/emulator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "fwmodel/hash.hpp"

namespace fwmodel {

Firmware Firmware::from_image(std::vector<uint8_t> image) {
  Firmware fw;
  fw.boot = Machine::load_firmware(image);
  fw.hash = fnv1a(image);
  fw.image = std::move(image);
  return fw;
}

Firmware Firmware::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open image '{}'", path));
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_image(std::move(bytes));
}

uint32_t InputChannel::next_word() {
  if (cursor_ >= bytes_.size()) {
    exhausted_ = true;
    return 0;
  }
  uint32_t v = 0;
  for (size_t i = 0; i < 4 && cursor_ + i < bytes_.size(); ++i) v |= static_cast<uint32_t>(bytes_[cursor_ + i]) << (8 * i);
  cursor_ += 4;
  ++words_;
  return v;
}

uint32_t CoverageMap::edge_index(uint32_t prev, uint32_t cur) {
  auto mix = [](uint32_t x) { return (x >> 2) * 0x9E3779B1u; };
  return ((mix(cur) >> 16) ^ (mix(prev) >> 17)) & (kCoverageMapSize - 1);
}

bool CoverageMap::record(uint32_t prev, uint32_t cur) {
  const uint32_t i = edge_index(prev, cur);
  uint8_t& h = hits_[i];
  bool fresh = h == 0;
  if (fresh) touched_.push_back(i);
  if (h != 0xFF) ++h;
  return fresh;
}

void CoverageMap::clear() {
  for (uint32_t i : touched_) hits_[i] = 0;
  touched_.clear();
}

uint64_t CoverageMap::hash() const {
  std::vector<uint32_t> slots = touched_;
  std::sort(slots.begin(), slots.end());
  Fnv1a h;
  for (uint32_t i : slots) h.u32(i).byte(hits_[i]);
  return h.value();
}

void BlockSet::insert(uint32_t addr) {
  if (addr >= mem::kFlashSize) return;
  auto ref = seen_[addr / 4];
  if (!ref) {
    ref = true;
    ++count_;
  }
}

void BlockSet::merge(const BlockSet& other) {
  for (size_t i = 0; i < seen_.size(); ++i)
    if (other.seen_[i] && !seen_[i]) {
      seen_[i] = true;
      ++count_;
    }
}

Emulator::Emulator(const Firmware& fw, InstantiatedModel model, FiringStrategy strategy, ExecMode m)
    : machine(fw.boot), regs(std::move(model)), irq(std::move(strategy)), mode(m) {
  if (regs.model().firmware_hash == 0) regs.model().firmware_hash = fw.hash;
  regs.begin_run();
}

std::optional<uint32_t> Emulator::mmio_read(const AccessEvent& ev) {
  if (mode == ExecMode::Stub) return 0u;
  ReadResult r = regs.on_mmio_read(ev, *this);
  if (!r.value) last_miss = r.miss;
  return r.value;
}

void Emulator::mmio_write(const AccessEvent& ev) {
  if (mode == ExecMode::Stub) return;
  regs.on_mmio_write(ev);
}

uint32_t Emulator::scs_read(uint32_t addr) { return irq.on_scs_read(addr); }

void Emulator::scs_write(uint32_t addr, uint32_t value) {
  scs_writes.push_back({machine.state().bb_count, addr, value});
  irq.on_scs_write(addr, value);
  for (const EnableEvent& e : irq.take_enable_events()) {
    if (mode != ExecMode::Main) continue;
    if (regs.model().interrupt_log.insert(InterruptEvent{e.enable, e.mask}).second) ++regs.model().revision;
  }
}

void Emulator::debug_write(uint8_t byte) { debug_log.push_back(static_cast<char>(byte)); }

void Emulator::on_condition(uint32_t source) {
  if (mode != ExecMode::Stub) regs.on_condition(source);
}

void Emulator::on_conditional_branch(uint32_t source, uint64_t frame_id) {
  if (mode != ExecMode::Stub) regs.on_conditional_branch(source, frame_id);
}

void Emulator::on_frame_pop(uint64_t frame_id) { regs.on_frame_pop(frame_id); }

void Emulator::on_block(uint32_t prev, uint32_t cur) {
  if (coverage && coverage->record(prev, cur)) progress = true;
  if (blocks) blocks->insert(cur);
}

uint32_t Emulator::next_dr_word() {
  if (mode != ExecMode::Main || !input) return 0;
  uint32_t v = input->next_word();
  if (!input->exhausted()) progress = true;
  return v;
}

std::optional<uint32_t> Emulator::sr_value(const SRAccessContext& ctx) {
  if (mode == ExecMode::Worker && ctx == worker_ctx) return worker_value;
  const auto& table = regs.model().sr_handlers;
  if (auto it = table.find(ctx); it != table.end()) return it->second;
  if (mode == ExecMode::Worker) {
    nested_reads.push_back(ctx);
    return 0u;
  }
  return std::nullopt;
}

StepOutcome Emulator::deliver_interrupts() {
  if (mode != ExecMode::Main) return {};
  MachineState& s = machine.state();
  if (s.halted || s.fault) return {};
  if (auto n = irq.tick(s.bb_count, s.in_isr == 0)) return machine.enter_interrupt(*n, *this);
  return {};
}

Emulator Emulator::snapshot() const {
  Emulator copy = *this;
  copy.input = nullptr;
  copy.coverage = nullptr;
  copy.blocks = nullptr;
  return copy;
}

}  // namespace fwmodel
