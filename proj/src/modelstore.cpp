#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <sstream>

#include "fwmodel/machine.hpp"
#include "fwmodel/model.hpp"

namespace fwmodel {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Unknown: return "UNKNOWN";
    case Category::CR: return "CR";
    case Category::SR: return "SR";
    case Category::DR: return "DR";
    case Category::CSR: return "CSR";
  }
  return "?";
}

std::optional<Category> category_from_string(std::string_view s) {
  for (auto c : {Category::Unknown, Category::CR, Category::SR, Category::DR, Category::CSR})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

namespace modelstore {

namespace {

std::string hex32(uint32_t v) { return fmt::format("0x{:08x}", v); }
std::string hex64(uint64_t v) { return fmt::format("0x{:016x}", v); }

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void parse_fail(int line, const std::string& msg) {
  throw ModelError(ModelError::Kind::Parse, line, fmt::format("line {}: {}", line, msg));
}

[[noreturn]] void invariant_fail(int line, const std::string& msg) {
  throw ModelError(ModelError::Kind::InvariantViolation, line, fmt::format("line {}: {}", line, msg));
}

template <typename T>
T parse_uint(std::string_view tok, int line) {
  int base = 10;
  if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
    tok.remove_prefix(2);
    base = 16;
  }
  T v{};
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, base);
  if (ec != std::errc() || p != tok.data() + tok.size()) parse_fail(line, fmt::format("bad number '{}'", tok));
  return v;
}

SRAccessContext parse_ctx(const std::vector<std::string_view>& f, int line) {
  return SRAccessContext{parse_uint<uint32_t>(f[0], line), parse_uint<uint64_t>(f[1], line),
                         parse_uint<uint32_t>(f[2], line), parse_uint<uint64_t>(f[3], line)};
}

std::string ctx_fields(const SRAccessContext& c) {
  return fmt::format("{} {} {} {}", hex32(c.r), hex64(c.cs), hex32(c.bbl), hex64(c.conf));
}

}  // namespace

std::string serialize(const InstantiatedModel& m) {
  std::string out;
  out += "[meta]\n";
  out += fmt::format("format_version {}\n", InstantiatedModel::kFormatVersion);
  out += fmt::format("firmware_hash {}\n", hex64(m.firmware_hash));
  out += fmt::format("session_seed {}\n", hex64(m.session_seed));
  out += "[registers]\n";
  for (const auto& [addr, r] : m.registers)
    out += fmt::format("{} {} {} {} {} {} {} {}\n", hex32(addr), to_string(r.category), r.locked ? 1 : 0,
                       hex32(r.peripheral_id), hex32(r.stored_value), hex32(r.cr_bitmask), r.reads, r.writes);
  out += "[sr_handlers]\n";
  for (const auto& [ctx, value] : m.sr_handlers) out += fmt::format("{} {}\n", ctx_fields(ctx), hex32(value));
  out += "[interrupts]\n";
  for (const auto& ev : m.interrupt_log)
    out += fmt::format("{} {}\n", ev.enable ? "enable" : "disable", hex32(ev.mask));
  out += "[tie_breaks]\n";
  for (const auto& tb : m.tie_breaks)
    out += fmt::format("{} {} {} {}\n", ctx_fields(tb.ctx), tb.tied, tb.chosen, hex32(tb.value));
  return out;
}

InstantiatedModel parse(std::string_view text) {
  InstantiatedModel m;
  std::string section;
  bool have_version = false;
  int line_no = 0;
  std::vector<std::pair<int, uint32_t>> handler_regs;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto f = fields(line);
    if (f.empty() || f[0][0] == '#') continue;
    if (f[0].front() == '[') {
      if (f.size() != 1 || f[0].back() != ']') parse_fail(line_no, "malformed section header");
      section = std::string(f[0].substr(1, f[0].size() - 2));
      if (section != "meta" && section != "registers" && section != "sr_handlers" && section != "interrupts" &&
          section != "tie_breaks")
        parse_fail(line_no, fmt::format("unknown section '{}'", section));
      continue;
    }
    if (section == "meta") {
      if (f.size() != 2) parse_fail(line_no, "meta entries are 'key value'");
      if (f[0] == "format_version") {
        int v = parse_uint<int>(f[1], line_no);
        if (v != InstantiatedModel::kFormatVersion)
          throw ModelError(ModelError::Kind::VersionMismatch, line_no,
                           fmt::format("unsupported format_version {}", v));
        have_version = true;
      } else if (f[0] == "firmware_hash") {
        m.firmware_hash = parse_uint<uint64_t>(f[1], line_no);
      } else if (f[0] == "session_seed") {
        m.session_seed = parse_uint<uint64_t>(f[1], line_no);
      } else {
        parse_fail(line_no, fmt::format("unknown meta key '{}'", f[0]));
      }
    } else if (section == "registers") {
      if (f.size() != 8) parse_fail(line_no, "register lines have 8 fields");
      RegisterRecord r;
      r.address = parse_uint<uint32_t>(f[0], line_no);
      auto cat = category_from_string(f[1]);
      if (!cat) parse_fail(line_no, fmt::format("unknown category '{}'", f[1]));
      r.category = *cat;
      if (f[2] != "0" && f[2] != "1") parse_fail(line_no, "locked flag must be 0 or 1");
      r.locked = f[2] == "1";
      r.peripheral_id = parse_uint<uint32_t>(f[3], line_no);
      r.stored_value = parse_uint<uint32_t>(f[4], line_no);
      r.cr_bitmask = parse_uint<uint32_t>(f[5], line_no);
      r.reads = parse_uint<uint64_t>(f[6], line_no);
      r.writes = parse_uint<uint64_t>(f[7], line_no);
      if (r.address % 4 || !mem::in_mmio(r.address))
        invariant_fail(line_no, fmt::format("register {} is not a word in the MMIO region", hex32(r.address)));
      if (r.peripheral_id != (r.address & ~0x3FFu))
        invariant_fail(line_no, fmt::format("register {} has wrong peripheral id", hex32(r.address)));
      if (r.cr_bitmask && r.category != Category::CSR)
        invariant_fail(line_no, fmt::format("register {} has cr_bitmask but is not CSR", hex32(r.address)));
      if (!m.registers.emplace(r.address, r).second)
        invariant_fail(line_no, fmt::format("duplicate register {}", hex32(r.address)));
    } else if (section == "sr_handlers") {
      if (f.size() != 5) parse_fail(line_no, "handler lines have 5 fields");
      SRAccessContext ctx = parse_ctx(f, line_no);
      uint32_t value = parse_uint<uint32_t>(f[4], line_no);
      if (!m.sr_handlers.emplace(ctx, value).second) invariant_fail(line_no, "duplicate handler context");
      handler_regs.emplace_back(line_no, ctx.r);
    } else if (section == "interrupts") {
      if (f.size() != 2 || (f[0] != "enable" && f[0] != "disable"))
        parse_fail(line_no, "interrupt lines are 'enable|disable mask'");
      m.interrupt_log.insert(InterruptEvent{f[0] == "enable", parse_uint<uint32_t>(f[1], line_no)});
    } else if (section == "tie_breaks") {
      if (f.size() != 7) parse_fail(line_no, "tie-break lines have 7 fields");
      TieBreak tb;
      tb.ctx = parse_ctx(f, line_no);
      tb.tied = parse_uint<uint32_t>(f[4], line_no);
      tb.chosen = parse_uint<uint32_t>(f[5], line_no);
      tb.value = parse_uint<uint32_t>(f[6], line_no);
      if (tb.tied == 0 || tb.chosen >= tb.tied) invariant_fail(line_no, "tie-break index out of range");
      m.tie_breaks.push_back(tb);
    } else {
      parse_fail(line_no, "entry outside of any section");
    }
  }
  if (!have_version) parse_fail(line_no, "missing format_version");
  for (const auto& [line, r] : handler_regs) {
    auto it = m.registers.find(r);
    if (it == m.registers.end())
      invariant_fail(line, fmt::format("handler references unknown register {}", hex32(r)));
    if (it->second.category != Category::SR && it->second.category != Category::CSR)
      invariant_fail(line, fmt::format("handler register {} is not SR or CSR", hex32(r)));
  }
  return m;
}

void save(const InstantiatedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError(ModelError::Kind::Io, 0, fmt::format("cannot write {}", path));
  out << serialize(model);
  if (!out) throw ModelError(ModelError::Kind::Io, 0, fmt::format("write failed: {}", path));
}

InstantiatedModel load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError(ModelError::Kind::Io, 0, fmt::format("cannot read {}", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<Change> diff(const InstantiatedModel& a, const InstantiatedModel& b) {
  if (a.firmware_hash != b.firmware_hash)
    throw ModelError(ModelError::Kind::FirmwareMismatch, 0,
                     fmt::format("models belong to different firmware ({} vs {})", hex64(a.firmware_hash),
                                 hex64(b.firmware_hash)));
  std::vector<Change> out;
  auto ia = a.registers.begin();
  auto ib = b.registers.begin();
  while (ia != a.registers.end() || ib != b.registers.end()) {
    if (ib == b.registers.end() || (ia != a.registers.end() && ia->first < ib->first)) {
      out.push_back({Change::Kind::RemoveRegister, ia->first, ia->second.category, Category::Unknown});
      ++ia;
    } else if (ia == a.registers.end() || ib->first < ia->first) {
      out.push_back({Change::Kind::AddRegister, ib->first, Category::Unknown, ib->second.category});
      ++ib;
    } else {
      if (ia->second.category != ib->second.category)
        out.push_back({Change::Kind::Recategorize, ia->first, ia->second.category, ib->second.category});
      ++ia;
      ++ib;
    }
  }
  ContextLess less;
  auto ha = a.sr_handlers.begin();
  auto hb = b.sr_handlers.begin();
  while (ha != a.sr_handlers.end() || hb != b.sr_handlers.end()) {
    Change c{};
    if (hb == b.sr_handlers.end() || (ha != a.sr_handlers.end() && less(ha->first, hb->first))) {
      c.kind = Change::Kind::RemoveHandler;
      c.ctx = ha->first;
      c.old_value = ha->second;
      ++ha;
    } else if (ha == a.sr_handlers.end() || less(hb->first, ha->first)) {
      c.kind = Change::Kind::AddHandler;
      c.ctx = hb->first;
      c.new_value = hb->second;
      ++hb;
    } else {
      bool changed = ha->second != hb->second;
      c.kind = Change::Kind::ChangeHandler;
      c.ctx = ha->first;
      c.old_value = ha->second;
      c.new_value = hb->second;
      ++ha;
      ++hb;
      if (!changed) continue;
    }
    c.address = c.ctx.r;
    out.push_back(c);
  }
  return out;
}

std::string format_change(const Change& c) {
  switch (c.kind) {
    case Change::Kind::AddRegister: return fmt::format("+reg {} {}", hex32(c.address), to_string(c.to));
    case Change::Kind::RemoveRegister: return fmt::format("-reg {} {}", hex32(c.address), to_string(c.from));
    case Change::Kind::Recategorize:
      return fmt::format("~reg {} {} -> {}", hex32(c.address), to_string(c.from), to_string(c.to));
    case Change::Kind::AddHandler: return fmt::format("+sr {} {}", ctx_fields(c.ctx), hex32(c.new_value));
    case Change::Kind::RemoveHandler: return fmt::format("-sr {} {}", ctx_fields(c.ctx), hex32(c.old_value));
    case Change::Kind::ChangeHandler:
      return fmt::format("~sr {} {} -> {}", ctx_fields(c.ctx), hex32(c.old_value), hex32(c.new_value));
  }
  return {};
}

std::string render_table(const InstantiatedModel& m) {
  std::string out = fmt::format("{:<12} {:<8} {:<6} {:<12} {:>10} {:>10}\n", "address", "category", "locked",
                                "peripheral", "reads", "writes");
  for (const auto& [addr, r] : m.registers)
    out += fmt::format("{:<12} {:<8} {:<6} {:<12} {:>10} {:>10}\n", hex32(addr), to_string(r.category),
                       r.locked ? "yes" : "no", hex32(r.peripheral_id), r.reads, r.writes);
  return out;
}

}  // namespace modelstore
}  // namespace fwmodel
