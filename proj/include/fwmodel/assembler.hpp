#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fwmodel::asmr {

class AsmError : public std::runtime_error {
 public:
  enum class Kind { Syntax, UnresolvedLabel, Range };

  AsmError(Kind kind, int line, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind), line_(line) {}

  Kind kind() const { return kind_; }
  // 1-based source line, 0 when not attributable.
  int line() const { return line_; }

 private:
  Kind kind_;
  int line_;
};

struct Assembled {
  std::vector<uint8_t> image;
  // Labels only (not .equ constants), name -> address.
  std::map<std::string, uint32_t> labels;
};

// Two-pass assembly. Output starts at address 0; `.org` pads forward.
Assembled assemble_program(std::string_view source);

inline std::vector<uint8_t> assemble(std::string_view source) {
  return assemble_program(source).image;
}

// One line per word. Undecodable words become `.word 0x........`.
// Requires image.size() % 4 == 0.
std::string disassemble(std::span<const uint8_t> image, uint32_t origin = 0);

// Sidecar `address label` listing, sorted by address then name.
std::string format_label_map(const std::map<std::string, uint32_t>& labels);

}  // namespace fwmodel::asmr
