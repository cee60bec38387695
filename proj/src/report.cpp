#include "fwmodel/report.hpp"

#include <fmt/format.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace fwmodel::report {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", p.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", p.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string get(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  return it == kv.end() ? "-" : it->second;
}

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render_table(const Table& t, Format f) {
  std::string out;
  if (f == Format::Csv) {
    out += "# " + t.title + "\n";
    auto line = [&](const std::vector<std::string>& cells) {
      for (size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
      out += "\n";
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
    return out;
  }
  std::vector<size_t> width(t.header.size());
  for (size_t i = 0; i < t.header.size(); ++i) width[i] = t.header[i].size();
  for (const auto& r : t.rows)
    for (size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string l;
    for (size_t i = 0; i < cells.size(); ++i)
      l += i == 0 ? fmt::format("{:<{}}", cells[i], width[i]) : fmt::format("  {:>{}}", cells[i], width[i]);
    out += l + "\n";
  };
  out += t.title + "\n";
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

}  // namespace

MissingArtifacts::MissingArtifacts(fs::path dir, std::vector<std::string> missing)
    : std::runtime_error([&] {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        return fmt::format("'{}' is missing {}", dir.string(), list);
      }()),
      missing_(std::move(missing)) {}

KeyValues read_key_values(const fs::path& file) {
  KeyValues kv;
  std::istringstream in(read_text(file));
  std::string line;
  while (std::getline(in, line)) {
    auto sp = line.find(' ');
    if (line.empty() || line[0] == '#') continue;
    if (sp == std::string::npos) kv[line] = "";
    else kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return kv;
}

void write_key_values(const fs::path& file, const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " " + v + "\n";
  write_text(file, out);
}

void write_instantiation(const fs::path& dir, std::string_view name, const Session& session,
                         const std::optional<corpus::CategoryCheck>& categories) {
  fs::create_directories(dir);
  const InstantiatedModel& m = session.model();
  modelstore::save(m, (dir / kModelFile).string());
  write_text(dir / kRoundsFile, session.round_log());
  write_text(dir / kExploreFile, session.exploration_log());

  std::set<uint32_t> peripherals, sr_groups;
  size_t read = 0;
  for (const auto& [addr, r] : m.registers) {
    peripherals.insert(r.peripheral_id);
    if (r.category == Category::SR || r.category == Category::CSR) sr_groups.insert(r.peripheral_id);
    if (r.reads) ++read;
  }
  KeyValues kv;
  kv["firmware"] = std::string(name);
  kv["firmware_hash"] = fmt::format("0x{:016x}", session.firmware().hash);
  kv["seed"] = fmt::format("{}", session.config().seed);
  kv["runs"] = fmt::format("{}", session.runs());
  kv["rounds"] = fmt::format("{}", session.rounds().size());
  kv["stable_at"] = session.stable_at() ? fmt::format("{}", *session.stable_at()) : "never";
  kv["peripherals"] = fmt::format("{}", peripherals.size());
  kv["registers"] = fmt::format("{}", m.registers.size());
  kv["registers_read"] = fmt::format("{}", read);
  kv["sr_groups"] = fmt::format("{}", sr_groups.size());
  kv["handlers"] = fmt::format("{}", m.sr_handlers.size());
  kv["explorations"] = fmt::format("{}", session.explorations().size());
  if (session.failure())
    kv["failure"] = fmt::format("r=0x{:08x} cs=0x{:016x} bbl=0x{:08x} conf=0x{:016x}", session.failure()->r,
                                session.failure()->cs, session.failure()->bbl, session.failure()->conf);
  if (categories) {
    kv["accuracy"] = fmt::format("{:.4f}", categories->accuracy);
    kv["type1"] = fmt::format("{}", categories->type1);
    kv["type2"] = fmt::format("{}", categories->type2);
  }
  write_key_values(dir / kSessionFile, kv);
}

void write_fuzz(const fs::path& dir, const FuzzResult& result, size_t rounds_after_stable) {
  fs::create_directories(dir);
  KeyValues kv;
  kv["execs"] = fmt::format("{}", result.stats.execs);
  kv["edges"] = fmt::format("{}", result.stats.edges);
  kv["queue"] = fmt::format("{}", result.stats.queue_size);
  kv["crashes"] = fmt::format("{}", result.crashes.size());
  kv["hangs"] = fmt::format("{}", result.hangs.size());
  kv["coverage_hash"] = fmt::format("0x{:016x}", result.stats.coverage_hash);
  kv["first_crash_exec"] =
      result.stats.first_crash_exec ? fmt::format("{}", *result.stats.first_crash_exec) : "none";
  kv["rounds_after_stable"] = fmt::format("{}", rounds_after_stable);
  for (const auto& [v, n] : result.stats.verdicts) kv[fmt::format("verdict_{}", to_string(v))] = fmt::format("{}", n);
  write_key_values(dir / kFuzzFile, kv);
}

void write_compare(const fs::path& dir, const CoverageComparison& cmp) {
  fs::create_directories(dir);
  KeyValues kv;
  kv["blocks_a"] = fmt::format("{}", cmp.blocks_a);
  kv["blocks_b"] = fmt::format("{}", cmp.blocks_b);
  kv["ratio"] = fmt::format("{:.2f}", cmp.ratio);
  write_key_values(dir / kCompareFile, kv);
}

void record_timing(const fs::path& dir, std::string_view step, double seconds, uint64_t execs) {
  fs::create_directories(dir);
  const fs::path file = dir / kTimingFile;
  KeyValues kv = fs::exists(file) ? read_key_values(file) : KeyValues{};
  kv[fmt::format("{}_seconds", step)] = fmt::format("{:.3f}", seconds);
  if (execs && seconds > 0) kv[fmt::format("{}_execs_per_second", step)] = fmt::format("{:.0f}", execs / seconds);
  write_key_values(file, kv);
}

std::string render(const std::vector<fs::path>& dirs, Format format) {
  Table inst{"instantiation",
             {"firmware", "peripherals", "registers", "read", "accuracy", "sr_groups", "rounds", "runs", "stable_at",
              "seconds"},
             {}};
  Table fuzz{"fuzzing", {"firmware", "execs", "execs_per_s", "edges", "queue", "crashes", "hangs", "late_rounds"}, {}};
  Table cov{"coverage", {"firmware", "blocks_a", "blocks_b", "ratio"}, {}};
  Table prog{"rounds", {"firmware", "round", "run", "registers", "handlers", "after_stable"}, {}};

  for (const fs::path& dir : dirs) {
    std::vector<std::string> missing;
    for (auto f : {kModelFile, kSessionFile, kRoundsFile})
      if (!fs::is_regular_file(dir / f)) missing.emplace_back(f);
    if (!missing.empty()) throw MissingArtifacts(dir, std::move(missing));

    const KeyValues s = read_key_values(dir / kSessionFile);
    const KeyValues t = fs::exists(dir / kTimingFile) ? read_key_values(dir / kTimingFile) : KeyValues{};
    const std::string name = get(s, "firmware");
    std::string acc = get(s, "accuracy");
    if (acc != "-") acc = fmt::format("{:.1f}%", std::stod(acc) * 100.0);
    inst.rows.push_back({name, get(s, "peripherals"), get(s, "registers"), get(s, "registers_read"), acc,
                         get(s, "sr_groups"), get(s, "rounds"), get(s, "runs"), get(s, "stable_at"),
                         get(t, "instantiate_seconds")});

    if (fs::exists(dir / kFuzzFile)) {
      const KeyValues f = read_key_values(dir / kFuzzFile);
      fuzz.rows.push_back({name, get(f, "execs"), get(t, "fuzz_execs_per_second"), get(f, "edges"), get(f, "queue"),
                           get(f, "crashes"), get(f, "hangs"), get(f, "rounds_after_stable")});
    }
    if (fs::exists(dir / kCompareFile)) {
      const KeyValues c = read_key_values(dir / kCompareFile);
      cov.rows.push_back({name, get(c, "blocks_a"), get(c, "blocks_b"), get(c, "ratio")});
    }

    std::istringstream rounds(read_text(dir / kRoundsFile));
    std::string line;
    while (std::getline(rounds, line)) {
      unsigned n = 0, registers = 0, handlers = 0;
      unsigned long long run = 0;
      if (std::sscanf(line.c_str(), "round %u run=%llu registers=%u handlers=%u", &n, &run, &registers,
                      &handlers) != 4)
        continue;
      prog.rows.push_back({name, fmt::format("{}", n), fmt::format("{}", run), fmt::format("{}", registers),
                           fmt::format("{}", handlers),
                           line.find("after_stable") != std::string::npos ? "yes" : "no"});
    }
  }

  std::string out = render_table(inst, format);
  for (const Table* t : {&fuzz, &cov, &prog})
    if (!t->rows.empty()) out += "\n" + render_table(*t, format);
  return out;
}

}  // namespace fwmodel::report
