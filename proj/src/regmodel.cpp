#include "fwmodel/regmodel.hpp"

#include "fwmodel/hash.hpp"

namespace fwmodel {

void RegModel::begin_run() {
  for (auto& [addr, rec] : model_.registers) rec.stored_value = 0;
  track_.clear();
  guards_.clear();
  last_register_ = 0;
  output_.clear();
}

RegisterRecord& RegModel::identify(uint32_t address) {
  auto [it, inserted] = model_.registers.try_emplace(address);
  if (inserted) {
    it->second.address = address;
    it->second.peripheral_id = assign_peripheral(address);
    ++model_.revision;
  }
  return it->second;
}

void RegModel::set_category(RegisterRecord& rec, Category c) {
  if (rec.category == c) return;
  rec.category = c;
  if (c == Category::CSR) rec.cr_bitmask = rec.rmw_bits;
  else rec.cr_bitmask = 0;
  ++model_.revision;
}

bool RegModel::guarded(uint64_t frame_id, uint32_t peripheral) const {
  auto it = guards_.find(frame_id);
  return it != guards_.end() && it->second.count(peripheral);
}

uint64_t RegModel::config_hash(uint32_t peripheral_id) const {
  Fnv1a h;
  for (auto it = model_.registers.lower_bound(peripheral_id);
       it != model_.registers.end() && it->first < peripheral_id + 0x400; ++it) {
    const RegisterRecord& r = it->second;
    // A zero word is the reset value, the same configuration as a register
    // not yet discovered.
    uint32_t v = r.category == Category::CR ? r.stored_value
                 : r.category == Category::CSR ? r.stored_value & r.cr_bitmask
                                               : 0;
    if (v) h.u32(r.address).u32(v);
  }
  return h.value();
}

SRAccessContext RegModel::context_for(const AccessEvent& ev) const {
  uint32_t addr = ev.address & ~3u;
  return SRAccessContext{addr, ev.cs, ev.bbl, config_hash(assign_peripheral(addr))};
}

void RegModel::categorize_read(const AccessEvent& ev, RegisterRecord& rec, const Track& tr) {
  if (rec.locked) return;
  if (rec.category == Category::Unknown) {
    if (guarded(ev.frame_id, rec.peripheral_id)) set_category(rec, Category::DR);
  } else if (rec.category == Category::DR) {
    // This read would be the kPollThreshold-th consecutive one from the same block.
    if (last_register_ == rec.address && tr.has_last && tr.last_kind == AccessKind::Read &&
        tr.poll_bbl == ev.bbl && tr.poll_run >= kPollThreshold - 1) {
      set_category(rec, Category::SR);
      rec.locked = true;
      ++model_.revision;
    }
  }
}

void RegModel::categorize_write(const AccessEvent& ev, RegisterRecord& rec, const Track& tr, uint32_t lane_mask,
                                uint32_t value) {
  bool rmw = tr.has_last && tr.last_kind == AccessKind::Read && tr.last_frame == ev.frame_id &&
             ev.insn_count - tr.last_insn <= kRmwWindow;
  uint32_t modified = rmw ? (value ^ tr.last_read_value) & lane_mask : 0;
  if (rmw) rec.rmw_bits |= modified;
  if (rec.locked) return;
  switch (rec.category) {
    case Category::Unknown:
      set_category(rec, rmw ? Category::CR : Category::DR);
      break;
    case Category::CSR:
      if (modified & ~rec.cr_bitmask) {
        rec.cr_bitmask |= modified;
        ++model_.revision;
      }
      break;
    default:
      break;
  }
}

ReadResult RegModel::on_mmio_read(const AccessEvent& ev, ValueSource& src) {
  const uint32_t addr = ev.address & ~3u;
  RegisterRecord& rec = identify(addr);
  Track& tr = track_[addr];
  categorize_read(ev, rec, tr);

  ReadResult res;
  res.category = rec.category;
  uint32_t value = 0;
  switch (rec.category) {
    case Category::Unknown:
    case Category::CR:
      value = rec.stored_value;
      break;
    case Category::DR:
      value = src.next_dr_word();
      break;
    case Category::SR:
    case Category::CSR: {
      SRAccessContext ctx = context_for(ev);
      auto v = src.sr_value(ctx);
      if (!v) {
        res.miss = ctx;
        return res;
      }
      value = rec.category == Category::SR ? *v
                                           : (rec.stored_value & rec.cr_bitmask) | (*v & ~rec.cr_bitmask);
      break;
    }
  }
  res.value = value;

  ++rec.reads;
  if (rec.category == Category::DR) ++dr_accesses_;
  bool consecutive = last_register_ == addr && tr.has_last && tr.last_kind == AccessKind::Read && tr.poll_bbl == ev.bbl;
  tr.poll_run = consecutive ? tr.poll_run + 1 : 1;
  tr.poll_bbl = ev.bbl;
  tr.has_last = true;
  tr.last_kind = AccessKind::Read;
  tr.last_insn = ev.insn_count;
  tr.last_frame = ev.frame_id;
  tr.last_read_value = value;
  tr.pending_condition = rec.category == Category::Unknown || rec.category == Category::CR;
  last_register_ = addr;
  return res;
}

Category RegModel::on_mmio_write(const AccessEvent& ev) {
  const uint32_t addr = ev.address & ~3u;
  RegisterRecord& rec = identify(addr);
  Track& tr = track_[addr];

  const uint32_t shift = ev.width == 8 ? (ev.address & 3) * 8 : 0;
  const uint32_t lane_mask = ev.width == 8 ? 0xFFu << shift : 0xFFFFFFFFu;
  const uint32_t value = ev.width == 8 ? (ev.value & 0xFF) << shift : ev.value;
  categorize_write(ev, rec, tr, lane_mask, value);

  switch (rec.category) {
    case Category::Unknown:
    case Category::CR:
      rec.stored_value = (rec.stored_value & ~lane_mask) | value;
      break;
    case Category::CSR: {
      uint32_t m = lane_mask & rec.cr_bitmask;
      rec.stored_value = (rec.stored_value & ~m) | (value & m);
      break;
    }
    case Category::DR:
      ++dr_accesses_;
      output_ += static_cast<char>(ev.value & 0xFF);
      break;
    case Category::SR:
      break;
  }

  ++rec.writes;
  tr.has_last = true;
  tr.last_kind = AccessKind::Write;
  tr.last_insn = ev.insn_count;
  tr.last_frame = ev.frame_id;
  tr.poll_run = 0;
  tr.pending_condition = false;
  last_register_ = addr;
  return rec.category;
}

void RegModel::on_condition(uint32_t source) {
  auto it = model_.registers.find(source);
  if (it == model_.registers.end()) return;
  RegisterRecord& rec = it->second;
  Track& tr = track_[source];
  if (!tr.pending_condition || rec.locked) return;
  if (rec.category == Category::Unknown) set_category(rec, Category::SR);
  else if (rec.category == Category::CR) set_category(rec, Category::CSR);
}

void RegModel::on_conditional_branch(uint32_t source, uint64_t frame_id) {
  auto it = model_.registers.find(source);
  if (it == model_.registers.end()) return;
  if (it->second.category == Category::SR || it->second.category == Category::CSR)
    guards_[frame_id].insert(it->second.peripheral_id);
}

void RegModel::on_frame_pop(uint64_t frame_id) { guards_.erase(frame_id); }

}  // namespace fwmodel
