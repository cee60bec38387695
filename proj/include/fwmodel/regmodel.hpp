#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "fwmodel/machine.hpp"
#include "fwmodel/model.hpp"

namespace fwmodel {

// Where register values come from when the abstract model cannot supply
// them itself. The main execution answers DR reads from fuzz input and SR
// reads from the handler table; explorer workers answer with candidates.
class ValueSource {
 public:
  virtual ~ValueSource() = default;
  virtual uint32_t next_dr_word() = 0;
  virtual std::optional<uint32_t> sr_value(const SRAccessContext& ctx) = 0;
};

struct ReadResult {
  std::optional<uint32_t> value;       // empty on a model miss
  std::optional<SRAccessContext> miss;
  Category category = Category::Unknown;
};

// Categorization tuning. Read-modify-write: same frame, at most
// kRmwWindow instructions between the read and the write-back.
inline constexpr uint64_t kRmwWindow = 32;
inline constexpr int kPollThreshold = 3;

inline uint32_t assign_peripheral(uint32_t address) { return address & ~0x3FFu; }

// Access-pattern register model over an InstantiatedModel. Holds the
// per-run tracking needed to recognize the patterns; that tracking is
// reset by begin_run() and never serialized.
class RegModel {
 public:
  RegModel() = default;
  explicit RegModel(InstantiatedModel model) : model_(std::move(model)) {}

  InstantiatedModel& model() { return model_; }
  const InstantiatedModel& model() const { return model_; }

  // Hardware reset: CR contents return to zero, pattern tracking cleared.
  void begin_run();

  ReadResult on_mmio_read(const AccessEvent& ev, ValueSource& src);
  Category on_mmio_write(const AccessEvent& ev);

  void on_condition(uint32_t source);
  void on_conditional_branch(uint32_t source, uint64_t frame_id);
  void on_frame_pop(uint64_t frame_id);

  uint64_t config_hash(uint32_t peripheral_id) const;
  SRAccessContext context_for(const AccessEvent& ev) const;

  // DR reads and writes seen since construction (explorer ranking).
  uint64_t dr_accesses() const { return dr_accesses_; }
  // Low bytes of DR writes this run.
  const std::string& output_log() const { return output_; }

 private:
  struct Track {
    bool has_last = false;
    AccessKind last_kind = AccessKind::Read;
    uint64_t last_insn = 0;
    uint64_t last_frame = 0;
    uint32_t last_read_value = 0;
    uint32_t poll_bbl = 0;
    int poll_run = 0;
    bool pending_condition = false;
  };

  RegisterRecord& identify(uint32_t address);
  void set_category(RegisterRecord& rec, Category c);
  bool guarded(uint64_t frame_id, uint32_t peripheral) const;
  void categorize_read(const AccessEvent& ev, RegisterRecord& rec, const Track& tr);
  void categorize_write(const AccessEvent& ev, RegisterRecord& rec, const Track& tr, uint32_t lane_mask,
                        uint32_t value);

  InstantiatedModel model_;
  std::map<uint32_t, Track> track_;
  // Frames in which a conditional branch on an SR of the peripheral executed.
  std::map<uint64_t, std::set<uint32_t>> guards_;
  uint32_t last_register_ = 0;
  uint64_t dr_accesses_ = 0;
  std::string output_;
};

}  // namespace fwmodel
