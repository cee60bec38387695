#include "fwmodel/corpus.hpp"

#include <fmt/format.h>

#include <fstream>
#include <random>
#include <sstream>

#include "fwmodel/fuzz.hpp"
#include "fwmodel/hash.hpp"
#include "fwmodel/machine.hpp"
#include "fwmodel/session.hpp"

namespace fwmodel::corpus {

namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", p.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

uint64_t parse_number(const std::string& tok, int line) {
  try {
    size_t used = 0;
    uint64_t v = std::stoull(tok, &used, 0);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ManifestError(line, fmt::format("line {}: bad number '{}'", line, tok));
  }
}

Category parse_category(const std::string& tok, int line) {
  auto c = category_from_string(tok);
  if (!c || *c == Category::Unknown) throw ManifestError(line, fmt::format("line {}: bad category '{}'", line, tok));
  return *c;
}

bool parse_flag(const std::string& tok, int line) {
  if (tok == "yes") return true;
  if (tok == "no") return false;
  throw ManifestError(line, fmt::format("line {}: expected yes or no, got '{}'", line, tok));
}

uint32_t mmio_address(const std::string& tok, int line) {
  uint64_t a = parse_number(tok, line);
  if (a > 0xFFFFFFFFull || !mem::in_mmio(static_cast<uint32_t>(a)))
    throw ManifestError(line, fmt::format("line {}: {} is outside the peripheral region", line, tok));
  return static_cast<uint32_t>(a);
}

}  // namespace

std::string_view to_string(Conformance c) {
  switch (c) {
    case Conformance::Conforming: return "conforming";
    case Conformance::Type1: return "type1_nonconforming";
    case Conformance::Type2: return "type2_nonconforming";
    case Conformance::IrqMultiplexed: return "irq_multiplexed";
  }
  return "?";
}

std::optional<Conformance> conformance_from_string(std::string_view s) {
  for (auto c : {Conformance::Conforming, Conformance::Type1, Conformance::Type2, Conformance::IrqMultiplexed})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

const FirmwareEntry& Manifest::find(std::string_view name) const {
  for (const auto& f : firmware)
    if (f.name == name) return f;
  throw std::out_of_range(fmt::format("no firmware named '{}' in the manifest", name));
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  Manifest m;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  FirmwareEntry* cur = nullptr;

  auto finish = [&](int at) {
    if (!cur) return;
    if (cur->source.empty()) throw ManifestError(at, fmt::format("[{}]: missing source", cur->name));
    if (cur->markers.empty()) throw ManifestError(at, fmt::format("[{}]: missing markers", cur->name));
  };

  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string key;
    if (!(ls >> key)) continue;

    if (key.front() == '[') {
      if (key.back() != ']' || key.size() < 3) throw ManifestError(line, fmt::format("line {}: bad section", line));
      finish(line);
      std::string name = key.substr(1, key.size() - 2);
      for (const auto& f : m.firmware)
        if (f.name == name) throw ManifestError(line, fmt::format("line {}: duplicate section [{}]", line, name));
      m.firmware.push_back(FirmwareEntry{});
      cur = &m.firmware.back();
      cur->name = std::move(name);
      continue;
    }

    std::vector<std::string> args;
    std::string tok;
    if (key == "markers") {
      std::string rest;
      std::getline(ls, rest);
      auto a = rest.find('"');
      auto b = rest.rfind('"');
      if (a == std::string::npos || b == a) throw ManifestError(line, fmt::format("line {}: markers need quotes", line));
      args.push_back(rest.substr(a + 1, b - a - 1));
    } else {
      while (ls >> tok) args.push_back(tok);
    }

    auto want = [&](size_t n) {
      if (args.size() != n)
        throw ManifestError(line, fmt::format("line {}: '{}' takes {} argument(s)", line, key, n));
    };

    if (!cur) {
      if (key != "seed") throw ManifestError(line, fmt::format("line {}: '{}' outside a section", line, key));
      want(1);
      m.seed = parse_number(args[0], line);
      continue;
    }

    if (key == "source") {
      want(1);
      cur->source = base_dir / args[0];
    } else if (key == "class") {
      want(1);
      auto c = conformance_from_string(args[0]);
      if (!c) throw ManifestError(line, fmt::format("line {}: unknown class '{}'", line, args[0]));
      cur->conformance = *c;
    } else if (key == "markers") {
      if (args[0].empty()) throw ManifestError(line, fmt::format("line {}: empty marker string", line));
      cur->markers = args[0];
    } else if (key == "label") {
      want(2);
      uint32_t a = mmio_address(args[0], line);
      if (!cur->labels.emplace(a, parse_category(args[1], line)).second)
        throw ManifestError(line, fmt::format("line {}: {} labeled twice", line, args[0]));
    } else if (key == "expect_miscat") {
      want(3);
      cur->expected_miscategorizations.push_back(
          {mmio_address(args[0], line), parse_category(args[1], line), parse_category(args[2], line)});
    } else if (key == "bug_site") {
      want(1);
      cur->bug_site = args[0];
    } else if (key == "sr_gated") {
      want(1);
      cur->sr_gated = parse_flag(args[0], line);
    } else if (key == "ondemand") {
      want(1);
      cur->on_demand = parse_flag(args[0], line);
    } else if (key == "peripherals") {
      want(1);
      cur->peripherals = static_cast<int>(parse_number(args[0], line));
    } else if (key == "image_hash") {
      want(1);
      cur->image_hash = parse_number(args[0], line);
    } else if (key == "min_ratio") {
      want(1);
      try {
        cur->min_coverage_ratio = std::stod(args[0]);
      } catch (const std::exception&) {
        throw ManifestError(line, fmt::format("line {}: bad ratio '{}'", line, args[0]));
      }
    } else {
      throw ManifestError(line, fmt::format("line {}: unknown key '{}'", line, key));
    }
  }
  finish(line);
  return m;
}

Manifest load_manifest(const std::filesystem::path& file) {
  return parse_manifest(read_text(file), file.parent_path());
}

Manifest bundled_manifest() { return load_manifest(std::filesystem::path(FWMODEL_CORPUS_DIR) / "manifest.txt"); }

Built build(const FirmwareEntry& entry) {
  asmr::Assembled a = asmr::assemble_program(read_text(entry.source));
  Firmware fw = Firmware::from_image(a.image);
  return Built{std::move(a), std::move(fw)};
}

CategoryCheck check_categories(const InstantiatedModel& model, const FirmwareEntry& entry) {
  CategoryCheck c;
  for (const auto& [addr, rec] : model.registers) {
    if (rec.reads == 0) continue;
    ++c.registers_read;
    auto it = entry.labels.find(addr);
    if (it == entry.labels.end()) {
      c.unlabeled.push_back(addr);
      c.mismatches.push_back({addr, Category::Unknown, rec.category});
      continue;
    }
    if (it->second == rec.category) continue;
    c.mismatches.push_back({addr, it->second, rec.category});
    if (it->second == Category::SR && rec.category == Category::DR) ++c.type1;
    if (it->second == Category::DR && rec.category == Category::CR) ++c.type2;
  }
  if (c.registers_read > 0)
    c.accuracy = 1.0 - static_cast<double>(c.mismatches.size()) / static_cast<double>(c.registers_read);
  return c;
}

FirmwareCheck check_firmware(const FirmwareEntry& entry, const CheckOptions& opts) {
  FirmwareCheck fc;
  fc.name = entry.name;
  fc.conformance = entry.conformance;

  std::optional<Built> built;
  try {
    built = build(entry);
  } catch (const std::exception& e) {
    fc.built = false;
    fc.build_error = e.what();
    return fc;
  }
  if (entry.image_hash) fc.hash_matches = *entry.image_hash == built->firmware.hash;

  SessionConfig cfg;
  cfg.seed = opts.seed;
  cfg.run = opts.run;
  cfg.run.stop_on_exhaustion = false;
  Session session(built->firmware, cfg);
  instantiate(session);
  fc.stable = session.stable();
  fc.rounds = session.rounds().size();

  auto property = [&](const std::string& name, const Bytes& input) {
    FuzzRunReport rep = session.run(input);
    ++fc.property_runs;
    if (rep.verdict != Verdict::Ok || rep.markers != entry.markers) fc.property_failures.push_back({name, rep});
  };

  property("zero", Bytes(opts.input_length, 0));
  if (!entry.bug_site) {
    std::mt19937_64 rng(opts.seed ^ fnv1a(std::span<const uint8_t>(
                                        reinterpret_cast<const uint8_t*>(entry.name.data()), entry.name.size())));
    Bytes random(opts.input_length);
    for (auto& b : random) b = static_cast<uint8_t>(rng());
    property("random", random);
    Mutator mut(rng(), opts.input_length);
    const std::vector<Bytes> pool{random};
    for (int i = 0; i < opts.mutants; ++i) property(fmt::format("mutant {}", i), mut.mutate(random, pool));
  }

  fc.model = session.model();
  fc.categories = check_categories(fc.model, entry);
  switch (entry.conformance) {
    case Conformance::Conforming:
    case Conformance::IrqMultiplexed:
      fc.categories_as_expected = fc.categories.mismatches.empty();
      break;
    case Conformance::Type1:
    case Conformance::Type2:
      fc.categories_as_expected = fc.categories.mismatches == entry.expected_miscategorizations;
      break;
  }
  fc.property_holds = fc.stable && !session.failure() && fc.property_failures.empty();
  const bool property_expected = entry.conformance != Conformance::IrqMultiplexed;
  fc.as_expected = fc.hash_matches && fc.categories_as_expected && fc.property_holds == property_expected;
  return fc;
}

std::string render_check_table(const std::vector<FirmwareCheck>& checks) {
  std::string out = fmt::format("{:<16} {:<20} {:>4} {:>4} {:>8} {:>6} {:>6} {:>9} {}\n", "firmware", "class",
                                "read", "miss", "accuracy", "rounds", "runs", "property", "result");
  for (const auto& c : checks) {
    if (!c.built) {
      out += fmt::format("{:<16} {:<20} build failed: {}\n", c.name, to_string(c.conformance), c.build_error);
      continue;
    }
    out += fmt::format("{:<16} {:<20} {:>4} {:>4} {:>7.1f}% {:>6} {:>6} {:>9} {}\n", c.name, to_string(c.conformance),
                       c.categories.registers_read, c.categories.mismatches.size(), c.categories.accuracy * 100.0,
                       c.rounds, c.property_runs, c.property_holds ? "holds" : "fails",
                       c.as_expected ? "as expected" : "DEVIATION");
    if (!c.hash_matches) out += "    image hash differs from the manifest\n";
    for (const auto& m : c.categories.mismatches)
      out += fmt::format("    0x{:08x} labeled {} got {}\n", m.address, to_string(m.truth), to_string(m.got));
    if (!c.property_failures.empty()) {
      const auto& f = c.property_failures.front();
      out += fmt::format("    {} of {} runs failed, first: {} input: {} markers={}\n", c.property_failures.size(),
                         c.property_runs, f.input, f.report.summary(), f.report.markers);
    }
  }
  return out;
}

}  // namespace fwmodel::corpus
