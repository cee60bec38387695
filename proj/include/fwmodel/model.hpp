#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace fwmodel {

enum class Category : uint8_t { Unknown, CR, SR, DR, CSR };

std::string_view to_string(Category c);
std::optional<Category> category_from_string(std::string_view s);

struct RegisterRecord {
  uint32_t address = 0;
  Category category = Category::Unknown;
  // CR semantics: a non-volatile word, zero after reset.
  uint32_t stored_value = 0;
  // CSR only: bits that behave as control bits.
  uint32_t cr_bitmask = 0;
  bool locked = false;
  uint32_t peripheral_id = 0;
  uint64_t reads = 0;
  uint64_t writes = 0;
  // Bits ever changed by read-modify-write sequences. Seeds cr_bitmask on a
  // CR -> CSR transition. Not serialized.
  uint32_t rmw_bits = 0;

  bool operator==(const RegisterRecord& o) const {
    return std::tie(address, category, stored_value, cr_bitmask, locked, peripheral_id, reads, writes) ==
           std::tie(o.address, o.category, o.stored_value, o.cr_bitmask, o.locked, o.peripheral_id, o.reads,
                    o.writes);
  }
};

// Context key for status-register read sites: register, call-stack
// signature, basic block, peripheral configuration hash.
struct SRAccessContext {
  uint32_t r = 0;
  uint64_t cs = 0;
  uint32_t bbl = 0;
  uint64_t conf = 0;

  bool operator==(const SRAccessContext&) const = default;
};

// Canonical handler order: (r, bbl, cs, conf).
struct ContextLess {
  bool operator()(const SRAccessContext& a, const SRAccessContext& b) const {
    return std::tie(a.r, a.bbl, a.cs, a.conf) < std::tie(b.r, b.bbl, b.cs, b.conf);
  }
};

using SRHandlerTable = std::map<SRAccessContext, uint32_t, ContextLess>;

// One seeded pick among equally ranked exploration candidates.
struct TieBreak {
  SRAccessContext ctx;
  uint32_t tied = 0;    // number of equally ranked candidates
  uint32_t chosen = 0;  // index into the tied list (ascending candidate order)
  uint32_t value = 0;

  bool operator==(const TieBreak&) const = default;
};

struct InterruptEvent {
  bool enable = true;
  uint32_t mask = 0;

  auto operator<=>(const InterruptEvent&) const = default;
};

struct InstantiatedModel {
  static constexpr int kFormatVersion = 1;

  uint64_t firmware_hash = 0;
  uint64_t session_seed = 0;
  std::map<uint32_t, RegisterRecord> registers;
  SRHandlerTable sr_handlers;
  std::set<InterruptEvent> interrupt_log;
  std::vector<TieBreak> tie_breaks;

  // Bumped on every structural change (new register, category or mask
  // change, new handler, new interrupt event). Not serialized.
  uint64_t revision = 0;
};

namespace modelstore {

class ModelError : public std::runtime_error {
 public:
  enum class Kind { Parse, VersionMismatch, InvariantViolation, FirmwareMismatch, Io };
  ModelError(Kind kind, int line, const std::string& msg) : std::runtime_error(msg), kind_(kind), line_(line) {}
  Kind kind() const { return kind_; }
  int line() const { return line_; }

 private:
  Kind kind_;
  int line_;
};

std::string serialize(const InstantiatedModel& model);
InstantiatedModel parse(std::string_view text);

void save(const InstantiatedModel& model, const std::string& path);
InstantiatedModel load(const std::string& path);

struct Change {
  enum class Kind { AddRegister, RemoveRegister, Recategorize, AddHandler, RemoveHandler, ChangeHandler };
  Kind kind;
  uint32_t address = 0;
  Category from = Category::Unknown;
  Category to = Category::Unknown;
  SRAccessContext ctx{};
  uint32_t old_value = 0;
  uint32_t new_value = 0;
};

// Changes turning `a` into `b`, registers first (by address), then handlers
// in canonical order. Throws FirmwareMismatch when the firmware hashes differ.
std::vector<Change> diff(const InstantiatedModel& a, const InstantiatedModel& b);
std::string format_change(const Change& c);

// Aligned table: address, category, lock, peripheral, reads, writes.
std::string render_table(const InstantiatedModel& model);

}  // namespace modelstore

}  // namespace fwmodel
