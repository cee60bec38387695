#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fwmodel/corpus.hpp"
#include "fwmodel/fuzz.hpp"
#include "fwmodel/session.hpp"

namespace fwmodel::report {

// A session directory holds:
//   model.fwm     the instantiated model
//   session.txt   key/value summary of instantiation
//   rounds.log    per-round model changes
//   explore.log   one line per exploration
//   fuzz.txt      key/value fuzzing statistics (optional)
//   compare.txt   key/value coverage comparison (optional)
//   timing.txt    wall-clock seconds per step (optional, not reproducible)

inline constexpr std::string_view kModelFile = "model.fwm";
inline constexpr std::string_view kSessionFile = "session.txt";
inline constexpr std::string_view kRoundsFile = "rounds.log";
inline constexpr std::string_view kExploreFile = "explore.log";
inline constexpr std::string_view kFuzzFile = "fuzz.txt";
inline constexpr std::string_view kCompareFile = "compare.txt";
inline constexpr std::string_view kTimingFile = "timing.txt";

class MissingArtifacts : public std::runtime_error {
 public:
  MissingArtifacts(std::filesystem::path dir, std::vector<std::string> missing);
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const std::filesystem::path& file);
void write_key_values(const std::filesystem::path& file, const KeyValues& kv);

// Writes model.fwm, session.txt, rounds.log and explore.log.
void write_instantiation(const std::filesystem::path& dir, std::string_view name, const Session& session,
                         const std::optional<corpus::CategoryCheck>& categories);
void write_fuzz(const std::filesystem::path& dir, const FuzzResult& result, size_t rounds_after_stable);
void write_compare(const std::filesystem::path& dir, const CoverageComparison& cmp);
// Merges one entry into timing.txt.
void record_timing(const std::filesystem::path& dir, std::string_view step, double seconds, uint64_t execs = 0);

enum class Format { Text, Csv };

// Tables over one or more session directories, in argument order. Throws
// MissingArtifacts when a directory lacks model.fwm or session.txt.
std::string render(const std::vector<std::filesystem::path>& dirs, Format format);

}  // namespace fwmodel::report
