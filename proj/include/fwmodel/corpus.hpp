#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fwmodel/assembler.hpp"
#include "fwmodel/emulator.hpp"
#include "fwmodel/model.hpp"
#include "fwmodel/run.hpp"

namespace fwmodel::corpus {

enum class Conformance : uint8_t { Conforming, Type1, Type2, IrqMultiplexed };
std::string_view to_string(Conformance c);
std::optional<Conformance> conformance_from_string(std::string_view s);

struct Miscategorization {
  uint32_t address = 0;
  Category truth = Category::Unknown;
  Category got = Category::Unknown;

  bool operator==(const Miscategorization&) const = default;
};

struct FirmwareEntry {
  std::string name;
  std::filesystem::path source;
  Conformance conformance = Conformance::Conforming;
  std::string markers;
  std::map<uint32_t, Category> labels;
  std::vector<Miscategorization> expected_miscategorizations;
  std::optional<std::string> bug_site;  // label of the planted faulting store
  bool sr_gated = false;                // progress past reset needs SR modeling
  bool on_demand = false;               // initializes a peripheral only for rare inputs
  int peripherals = 0;
  std::optional<uint64_t> image_hash;
  double min_coverage_ratio = 5.0;
};

struct Manifest {
  uint64_t seed = 1;
  std::vector<FirmwareEntry> firmware;

  const FirmwareEntry& find(std::string_view name) const;
};

class ManifestError : public std::runtime_error {
 public:
  ManifestError(int line, const std::string& msg) : std::runtime_error(msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Relative source paths are resolved against `base_dir`.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
Manifest load_manifest(const std::filesystem::path& file);
// The manifest shipped next to the bundled firmware.
Manifest bundled_manifest();

struct Built {
  asmr::Assembled assembled;
  Firmware firmware;
};

// Throws asmr::AsmError or std::runtime_error when the source is unreadable.
Built build(const FirmwareEntry& entry);

struct CategoryCheck {
  size_t registers_read = 0;
  std::vector<Miscategorization> mismatches;
  std::vector<uint32_t> unlabeled;  // read registers missing from the labels
  size_t type1 = 0;                 // SR reported as DR
  size_t type2 = 0;                 // DR reported as CR
  double accuracy = 1.0;            // 1 - mismatches / registers_read
};

// Registers never read are not counted. Unlabeled read registers count as
// mismatches with truth Unknown.
CategoryCheck check_categories(const InstantiatedModel& model, const FirmwareEntry& entry);

struct PropertyFailure {
  std::string input;  // "zero", "random", "mutant 17"
  FuzzRunReport report;
};

struct CheckOptions {
  uint64_t seed = 1;
  size_t input_length = 4096;
  int mutants = 100;
  RunConfig run;
};

struct FirmwareCheck {
  std::string name;
  Conformance conformance = Conformance::Conforming;
  bool built = true;
  std::string build_error;
  bool hash_matches = true;
  InstantiatedModel model;
  size_t rounds = 0;
  bool stable = false;
  CategoryCheck categories;
  bool categories_as_expected = false;
  int property_runs = 0;
  std::vector<PropertyFailure> property_failures;
  bool property_holds = false;
  bool as_expected = false;  // everything matches the manifest's expectations
};

// Instantiates the model, compares categories with the labels and checks
// the marker sequence under zero, random and mutated inputs. Firmware with
// a planted bug only gets the zero input.
FirmwareCheck check_firmware(const FirmwareEntry& entry, const CheckOptions& opts);

std::string render_check_table(const std::vector<FirmwareCheck>& checks);

}  // namespace fwmodel::corpus
