#include "fwmodel/assembler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <optional>
#include <variant>

#include "fwmodel/isa.hpp"

namespace fwmodel::asmr {

namespace {

using isa::Form;
using isa::Op;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

std::optional<int> parse_register(std::string_view tok) {
  std::string t = upper(trim(tok));
  if (t == "SP") return isa::kSp;
  if (t == "LR") return isa::kLr;
  if (t == "PC") return isa::kPc;
  if (t.size() >= 2 && t.size() <= 3 && t[0] == 'R' &&
      std::all_of(t.begin() + 1, t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    int n = std::stoi(t.substr(1));
    if (n <= 15) return n;
  }
  return std::nullopt;
}

// Split on top-level commas (commas inside [] or () stay put).
std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  int depth = 0;
  size_t start = 0;
  bool in_char = false;
  for (size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\'') in_char = !in_char;
    if (in_char) continue;
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  std::string_view last = trim(s.substr(start));
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

// Expression evaluation over symbols. `resolve` returns nullopt for
// unknown names; callers decide whether that is an error yet.
class ExprParser {
 public:
  using Lookup = std::map<std::string, int64_t>;

  ExprParser(std::string_view text, const Lookup& symbols, int line)
      : s_(text), symbols_(symbols), line_(line) {}

  // Returns nullopt when a referenced symbol is undefined; the name of
  // the first such symbol is kept in missing().
  std::optional<int64_t> evaluate() {
    pos_ = 0;
    auto v = expr();
    skip_ws();
    if (pos_ != s_.size()) fail(fmt::format("unexpected '{}' in expression", s_.substr(pos_)));
    if (!missing_.empty()) return std::nullopt;
    return v;
  }

  const std::string& missing() const { return missing_; }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw AsmError(AsmError::Kind::Syntax, line_, msg); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  int64_t expr() {
    int64_t v = term();
    for (;;) {
      skip_ws();
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
        char op = s_[pos_++];
        int64_t rhs = term();
        v = op == '+' ? v + rhs : v - rhs;
      } else {
        return v;
      }
    }
  }

  int64_t term() {
    skip_ws();
    if (pos_ >= s_.size()) fail("expected expression");
    char c = s_[pos_];
    if (c == '-') {
      ++pos_;
      return -term();
    }
    if (c == '(') {
      ++pos_;
      int64_t v = expr();
      skip_ws();
      if (pos_ >= s_.size() || s_[pos_] != ')') fail("missing ')'");
      ++pos_;
      return v;
    }
    if (c == '\'') {
      if (pos_ + 2 >= s_.size() || s_[pos_ + 2] != '\'') fail("bad character literal");
      int64_t v = static_cast<unsigned char>(s_[pos_ + 1]);
      pos_ += 3;
      return v;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) return number();
    if (is_ident_start(c)) {
      size_t start = pos_;
      while (pos_ < s_.size() && is_ident_char(s_[pos_])) ++pos_;
      std::string name(s_.substr(start, pos_ - start));
      skip_ws();
      std::string fn = upper(name);
      if ((fn == "LO" || fn == "HI") && pos_ < s_.size() && s_[pos_] == '(') {
        ++pos_;
        int64_t v = expr();
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != ')') fail("missing ')'");
        ++pos_;
        uint32_t u = static_cast<uint32_t>(v);
        return fn == "LO" ? (u & 0xFFFF) : (u >> 16);
      }
      auto it = symbols_.find(name);
      if (it == symbols_.end()) {
        if (missing_.empty()) missing_ = name;
        return 0;
      }
      return it->second;
    }
    fail(fmt::format("unexpected '{}' in expression", c));
  }

  int64_t number() {
    size_t start = pos_;
    int base = 10;
    if (s_.substr(pos_, 2) == "0x" || s_.substr(pos_, 2) == "0X") {
      base = 16;
      pos_ += 2;
      start = pos_;
    } else if (s_.substr(pos_, 2) == "0b" || s_.substr(pos_, 2) == "0B") {
      base = 2;
      pos_ += 2;
      start = pos_;
    }
    int64_t v = 0;
    while (pos_ < s_.size()) {
      char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s_[pos_])));
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else if (c == '_') { ++pos_; continue; }
      else break;
      if (d >= base) fail("bad digit in number");
      v = v * base + d;
      if (v > 0xFFFFFFFFLL) throw AsmError(AsmError::Kind::Range, line_, "numeric literal exceeds 32 bits");
      ++pos_;
    }
    if (pos_ == start) fail("malformed number");
    return v;
  }

  std::string_view s_;
  const Lookup& symbols_;
  int line_;
  size_t pos_ = 0;
  std::string missing_;
};

struct InsnItem {
  const isa::OpInfo* info;
  std::vector<std::string> operands;
};

struct WordItem {
  std::vector<std::string> exprs;
};

struct SpaceItem {
  uint32_t bytes;
};

struct Item {
  int line;
  uint32_t address;
  std::variant<InsnItem, WordItem, SpaceItem> body;
};

const isa::OpInfo* pick_op(std::string_view mnemonic, const std::vector<std::string_view>& ops) {
  std::string m = upper(mnemonic);
  const isa::OpInfo* reg_form = nullptr;
  const isa::OpInfo* imm_form = nullptr;
  for (const auto& info : isa::op_table()) {
    if (info.mnemonic != m) continue;
    if (info.form == Form::RegReg) reg_form = &info;
    else if (info.form == Form::RegSImm || info.form == Form::RegUImm || info.form == Form::RegShift) imm_form = &info;
    else return &info;
  }
  if (reg_form && imm_form) {
    bool second_is_reg = ops.size() == 2 && parse_register(ops[1]).has_value();
    return second_is_reg ? reg_form : imm_form;
  }
  return reg_form ? reg_form : imm_form;
}

struct Pass1 {
  std::vector<Item> items;
  ExprParser::Lookup symbols;
  std::map<std::string, uint32_t> labels;
  uint32_t end = 0;
};

void define(Pass1& p, const std::string& name, int64_t value, int line) {
  if (parse_register(name)) throw AsmError(AsmError::Kind::Syntax, line, fmt::format("'{}' is a register name", name));
  if (!p.symbols.emplace(name, value).second)
    throw AsmError(AsmError::Kind::Syntax, line, fmt::format("duplicate symbol '{}'", name));
}

Pass1 first_pass(std::string_view source) {
  Pass1 p;
  uint32_t pc = 0;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= source.size()) {
    size_t nl = source.find('\n', pos);
    std::string_view raw = source.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? source.size() + 1 : nl + 1;
    ++line_no;

    // Strip comment, honoring ';' inside character literals.
    bool in_char = false;
    for (size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '\'') in_char = !in_char;
      if (raw[i] == ';' && !in_char) {
        raw = raw.substr(0, i);
        break;
      }
    }
    std::string_view text = trim(raw);

    // Leading labels.
    for (;;) {
      size_t i = 0;
      while (i < text.size() && is_ident_char(text[i])) ++i;
      if (i > 0 && i < text.size() && text[i] == ':' && is_ident_start(text[0]) && text[0] != '.') {
        std::string name(text.substr(0, i));
        define(p, name, pc, line_no);
        p.labels[name] = pc;
        text = trim(text.substr(i + 1));
      } else {
        break;
      }
    }
    if (text.empty()) continue;

    size_t sp = 0;
    while (sp < text.size() && !std::isspace(static_cast<unsigned char>(text[sp]))) ++sp;
    std::string_view head = text.substr(0, sp);
    std::string_view rest = trim(text.substr(sp));
    auto ops = split_operands(rest);

    if (head[0] == '.') {
      std::string d = upper(head);
      if (d == ".EQU") {
        if (ops.size() != 2) throw AsmError(AsmError::Kind::Syntax, line_no, ".equ expects NAME, value");
        ExprParser ep(ops[1], p.symbols, line_no);
        auto v = ep.evaluate();
        if (!v) throw AsmError(AsmError::Kind::UnresolvedLabel, line_no, fmt::format("undefined symbol '{}'", ep.missing()));
        std::string name(ops[0]);
        if (name.empty() || !is_ident_start(name[0]))
          throw AsmError(AsmError::Kind::Syntax, line_no, fmt::format("bad symbol name '{}'", name));
        define(p, name, *v, line_no);
      } else if (d == ".ORG") {
        if (ops.size() != 1) throw AsmError(AsmError::Kind::Syntax, line_no, ".org expects one value");
        ExprParser ep(ops[0], p.symbols, line_no);
        auto v = ep.evaluate();
        if (!v) throw AsmError(AsmError::Kind::UnresolvedLabel, line_no, fmt::format("undefined symbol '{}'", ep.missing()));
        if (*v < pc) throw AsmError(AsmError::Kind::Range, line_no, ".org moves backwards");
        if (*v % 4) throw AsmError(AsmError::Kind::Range, line_no, ".org must be word aligned");
        if (*v > pc) p.items.push_back({line_no, pc, SpaceItem{static_cast<uint32_t>(*v - pc)}});
        pc = static_cast<uint32_t>(*v);
      } else if (d == ".WORD") {
        if (ops.empty()) throw AsmError(AsmError::Kind::Syntax, line_no, ".word expects values");
        WordItem w;
        for (auto o : ops) w.exprs.emplace_back(o);
        p.items.push_back({line_no, pc, w});
        pc += static_cast<uint32_t>(4 * ops.size());
      } else if (d == ".SPACE") {
        if (ops.size() != 1) throw AsmError(AsmError::Kind::Syntax, line_no, ".space expects one value");
        ExprParser ep(ops[0], p.symbols, line_no);
        auto v = ep.evaluate();
        if (!v) throw AsmError(AsmError::Kind::UnresolvedLabel, line_no, fmt::format("undefined symbol '{}'", ep.missing()));
        if (*v < 0 || *v % 4) throw AsmError(AsmError::Kind::Range, line_no, ".space size must be a multiple of 4");
        p.items.push_back({line_no, pc, SpaceItem{static_cast<uint32_t>(*v)}});
        pc += static_cast<uint32_t>(*v);
      } else {
        throw AsmError(AsmError::Kind::Syntax, line_no, fmt::format("unknown directive '{}'", head));
      }
      continue;
    }

    const isa::OpInfo* info = pick_op(head, ops);
    if (!info) throw AsmError(AsmError::Kind::Syntax, line_no, fmt::format("unknown mnemonic '{}'", head));
    InsnItem insn{info, {}};
    for (auto o : ops) insn.operands.emplace_back(o);
    p.items.push_back({line_no, pc, std::move(insn)});
    pc += 4;
  }
  p.end = pc;
  return p;
}

class Encoder {
 public:
  Encoder(const Pass1& p, const Item& item) : p_(p), item_(item) {}

  uint32_t encode(const InsnItem& insn) {
    isa::Instruction out{insn.info->op, 0, 0, 0};
    const auto& ops = insn.operands;
    auto want = [&](size_t n) {
      if (ops.size() != n)
        syntax(fmt::format("{} expects {} operand(s), got {}", insn.info->mnemonic, n, ops.size()));
    };
    switch (insn.info->form) {
      case Form::None: want(0); break;
      case Form::Reg:
        want(1);
        out.rd = reg(ops[0]);
        break;
      case Form::RegReg:
        want(2);
        out.rd = reg(ops[0]);
        out.rs = reg(ops[1]);
        break;
      case Form::RegImm:
        want(2);
        out.rd = reg(ops[0]);
        out.imm = static_cast<uint16_t>(value(strip_hash(ops[1]), 0, 0xFFFF));
        break;
      case Form::RegSImm:
        want(2);
        out.rd = reg(ops[0]);
        out.imm = static_cast<uint16_t>(value(strip_hash(ops[1]), -32768, 32767));
        break;
      case Form::RegUImm:
        want(2);
        out.rd = reg(ops[0]);
        out.imm = static_cast<uint16_t>(value(strip_hash(ops[1]), 0, 0xFFFF));
        break;
      case Form::RegShift:
        want(2);
        out.rd = reg(ops[0]);
        out.imm = static_cast<uint16_t>(value(strip_hash(ops[1]), 0, 31));
        break;
      case Form::Mem: {
        want(2);
        out.rd = reg(ops[0]);
        std::string_view m = trim(ops[1]);
        if (m.size() < 2 || m.front() != '[' || m.back() != ']') syntax("memory operand must be [reg] or [reg, #off]");
        auto inner = split_operands(m.substr(1, m.size() - 2));
        if (inner.empty() || inner.size() > 2) syntax("memory operand must be [reg] or [reg, #off]");
        out.rs = reg(inner[0]);
        if (inner.size() == 2) out.imm = static_cast<uint16_t>(value(strip_hash(inner[1]), -32768, 32767));
        break;
      }
      case Form::Branch: {
        want(1);
        int64_t target = value(strip_hash(ops[0]), 0, 0xFFFFFFFFLL);
        int64_t delta = target - (static_cast<int64_t>(item_.address) + 4);
        if (delta % 4) range(fmt::format("branch target 0x{:08x} is not word aligned", target));
        int64_t words = delta / 4;
        if (words < -32768 || words > 32767) range(fmt::format("branch target 0x{:08x} out of range", target));
        out.imm = static_cast<uint16_t>(words);
        break;
      }
    }
    return isa::encode(out);
  }

  uint32_t word(const std::string& e) { return static_cast<uint32_t>(value(e, -0x80000000LL, 0xFFFFFFFFLL)); }

 private:
  [[noreturn]] void syntax(const std::string& m) const { throw AsmError(AsmError::Kind::Syntax, item_.line, m); }
  [[noreturn]] void range(const std::string& m) const { throw AsmError(AsmError::Kind::Range, item_.line, m); }

  static std::string_view strip_hash(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '#') s.remove_prefix(1);
    return s;
  }

  uint8_t reg(std::string_view tok) const {
    auto r = parse_register(tok);
    if (!r) syntax(fmt::format("expected register, got '{}'", trim(tok)));
    return static_cast<uint8_t>(*r);
  }

  int64_t value(std::string_view text, int64_t lo, int64_t hi) const {
    if (parse_register(text)) syntax(fmt::format("expected immediate, got register '{}'", trim(text)));
    ExprParser ep(text, p_.symbols, item_.line);
    auto v = ep.evaluate();
    if (!v) throw AsmError(AsmError::Kind::UnresolvedLabel, item_.line, fmt::format("unresolved label '{}'", ep.missing()));
    if (*v < lo || *v > hi) range(fmt::format("value {} out of range [{}, {}]", *v, lo, hi));
    return *v;
  }

  const Pass1& p_;
  const Item& item_;
};

void put32(std::vector<uint8_t>& out, uint32_t addr, uint32_t v) {
  for (int i = 0; i < 4; ++i) out[addr + i] = static_cast<uint8_t>(v >> (8 * i));
}

std::string reg_name(int r) {
  if (r == isa::kSp) return "sp";
  if (r == isa::kLr) return "lr";
  if (r == isa::kPc) return "pc";
  return fmt::format("r{}", r);
}

}  // namespace

Assembled assemble_program(std::string_view source) {
  Pass1 p = first_pass(source);
  Assembled out;
  out.image.assign(p.end, 0);
  for (const Item& item : p.items) {
    Encoder enc(p, item);
    if (auto* insn = std::get_if<InsnItem>(&item.body)) {
      put32(out.image, item.address, enc.encode(*insn));
    } else if (auto* w = std::get_if<WordItem>(&item.body)) {
      uint32_t a = item.address;
      for (const auto& e : w->exprs) {
        put32(out.image, a, enc.word(e));
        a += 4;
      }
    }
  }
  out.labels = p.labels;
  return out;
}

std::string disassemble(std::span<const uint8_t> image, uint32_t origin) {
  if (image.size() % 4) throw std::invalid_argument("image length is not a multiple of 4");
  std::string out;
  for (size_t off = 0; off < image.size(); off += 4) {
    uint32_t word = image[off] | (image[off + 1] << 8) | (image[off + 2] << 16) |
                    (static_cast<uint32_t>(image[off + 3]) << 24);
    uint32_t pc = origin + static_cast<uint32_t>(off);
    auto insn = isa::decode(word);
    if (!insn) {
      out += fmt::format(".word 0x{:08x}\n", word);
      continue;
    }
    const auto* info = isa::find_op(insn->op);
    std::string m(info->mnemonic);
    switch (info->form) {
      case Form::None: out += m; break;
      case Form::Reg: out += fmt::format("{} {}", m, reg_name(insn->rd)); break;
      case Form::RegReg: out += fmt::format("{} {}, {}", m, reg_name(insn->rd), reg_name(insn->rs)); break;
      case Form::RegImm: out += fmt::format("{} {}, 0x{:x}", m, reg_name(insn->rd), insn->imm); break;
      case Form::RegSImm: out += fmt::format("{} {}, #{}", m, reg_name(insn->rd), insn->simm()); break;
      case Form::RegUImm: out += fmt::format("{} {}, #0x{:x}", m, reg_name(insn->rd), insn->imm); break;
      case Form::RegShift: out += fmt::format("{} {}, #{}", m, reg_name(insn->rd), insn->imm); break;
      case Form::Mem:
        if (insn->imm == 0)
          out += fmt::format("{} {}, [{}]", m, reg_name(insn->rd), reg_name(insn->rs));
        else
          out += fmt::format("{} {}, [{}, #{}]", m, reg_name(insn->rd), reg_name(insn->rs), insn->simm());
        break;
      case Form::Branch: {
        int64_t target = static_cast<int64_t>(pc) + 4 + 4LL * insn->simm();
        if (target < 0 || target > 0xFFFFFFFFLL) {
          out += fmt::format(".word 0x{:08x}\n", word);
          continue;
        }
        out += fmt::format("{} 0x{:08x}", m, target);
        break;
      }
    }
    out += '\n';
  }
  return out;
}

std::string format_label_map(const std::map<std::string, uint32_t>& labels) {
  std::vector<std::pair<uint32_t, std::string>> sorted;
  for (const auto& [name, addr] : labels) sorted.emplace_back(addr, name);
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& [addr, name] : sorted) out += fmt::format("0x{:08x} {}\n", addr, name);
  return out;
}

}  // namespace fwmodel::asmr
