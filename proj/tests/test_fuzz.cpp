#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fwmodel/assembler.hpp"
#include "fwmodel/corpus.hpp"
#include "fwmodel/fuzz.hpp"
#include "fwmodel/session.hpp"

using namespace fwmodel;
namespace fs = std::filesystem;

namespace {

// Two DRs at 0x40000000 and 0x40000004 (both written first). Prints the low
// byte of four words read from the first one.
const char* kEcho = R"(
        .word 0x20010000, reset
reset:  LDI r1, 0
        LUI r1, 0x4000
        LDI r12, 0
        LUI r12, 0xE000
        STW r0, [r1]
        LDI r4, 4
loop:   LDW r0, [r1]
        STW r0, [r1, #4]
        STB r0, [r12]
        SUB r4, #1
        CMP r4, #0
        BNE loop
        HALT
)";

struct Instantiated {
  corpus::Built built;
  InstantiatedModel model;
  std::map<std::string, uint32_t> labels;
};

Instantiated instantiated(const std::string& name) {
  auto built = corpus::build(corpus::bundled_manifest().find(name));
  SessionConfig cfg;
  cfg.seed = 1;
  Session s(built.firmware, cfg);
  instantiate(s);
  REQUIRE(s.stable());
  auto labels = built.assembled.labels;
  return {std::move(built), s.model(), std::move(labels)};
}

Bytes words(std::initializer_list<uint32_t> ws) {
  Bytes b;
  for (uint32_t w : ws)
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(w >> (8 * i)));
  return b;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("fwmodel_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("input channel hands out little-endian words and pads the tail") {
  Bytes in{1, 2, 3, 4, 5, 6};
  InputChannel ch(in);
  CHECK(ch.next_word() == 0x04030201u);
  CHECK(ch.next_word() == 0x0605u);
  CHECK_FALSE(ch.exhausted());
  CHECK(ch.next_word() == 0u);
  CHECK(ch.exhausted());
  CHECK(ch.words_consumed() == 2);
}

TEST_CASE("DR reads deliver the input unfiltered and in order") {
  const Firmware fw = Firmware::from_image(asmr::assemble(kEcho));
  RunConfig cfg;
  cfg.stop_on_exhaustion = false;
  Session s(fw, SessionConfig{0, cfg});
  auto rep = s.run(words({'w', 'x', 0xFFFFFF00u | 'y', 'z'}));
  CHECK(rep.verdict == Verdict::Ok);
  CHECK(rep.markers == "wxyz");
  CHECK(rep.dr_words == 4);

  auto short_rep = s.run(words({'a'}));
  CHECK(short_rep.verdict == Verdict::Ok);
  CHECK(short_rep.markers == std::string("a\0\0\0", 4));

  RunConfig fuzz_cfg;
  auto exhausted = run_once(fw, s.model(), words({'a'}), fuzz_cfg);
  CHECK(exhausted.verdict == Verdict::InputExhausted);
}

TEST_CASE("input conservation over random inputs") {
  auto inst = instantiated("usart_rx");
  std::mt19937 rng(8);
  RunConfig cfg;
  for (int i = 0; i < 200; ++i) {
    Bytes in(rng() % 80);
    for (auto& b : in) b = static_cast<uint8_t>(rng());
    auto rep = run_once(inst.built.firmware, inst.model, in, cfg);
    CHECK(rep.dr_words * 4 <= in.size() + 4);
    CHECK(rep.verdict != Verdict::Crash);
    CHECK(rep.verdict != Verdict::Hang);
  }
}

TEST_CASE("mutator is seeded and bounded") {
  Bytes base(64, 0x11);
  std::vector<Bytes> queue{base, Bytes(100, 0x22)};
  Mutator a(42, 128), b(42, 128);
  int changed = 0;
  for (int i = 0; i < 2000; ++i) {
    Bytes x = a.mutate(base, queue);
    CHECK(x == b.mutate(base, queue));
    CHECK(x.size() <= 128);
    changed += x != base;
  }
  CHECK(changed > 1800);
}

TEST_CASE("every mutation operator works on empty and tiny inputs") {
  Mutator m(1, 16);
  for (int op = 0; op < Mutator::kOpCount; ++op) {
    for (size_t len : {0u, 1u, 3u, 16u}) {
      Bytes d(len, 0xAA);
      m.apply(static_cast<Mutator::Op>(op), d, {Bytes(40, 1)});
      CHECK(d.size() <= 16);
    }
  }
}

TEST_CASE("stub model hangs in the first status poll") {
  auto built = corpus::build(corpus::bundled_manifest().find("usart_rx"));
  RunConfig cfg;
  cfg.stop_on_exhaustion = false;
  auto rep = run_stub(built.firmware, Bytes(4096, 0), cfg);
  CHECK(rep.verdict == Verdict::Hang);
  CHECK(rep.pc >= built.assembled.labels.at("hsi_wait"));
  CHECK(rep.pc < built.assembled.labels.at("clock_enable_usart"));
  CHECK(rep.markers == "B");
}

TEST_CASE("zero input with the instantiated model completes every marker") {
  auto inst = instantiated("usart_rx");
  RunConfig cfg;
  cfg.stop_on_exhaustion = false;
  auto rep = run_once(inst.built.firmware, inst.model, Bytes(4096, 0), cfg);
  CHECK(rep.verdict == Verdict::Ok);
  CHECK(rep.markers == "BCIRD");
}

TEST_CASE("crafted frame reaches the planted store and faults there") {
  auto inst = instantiated("plc_modbus");
  RunConfig cfg;
  cfg.stop_on_exhaustion = false;
  // The write path is rare under random input, so the session keeps learning.
  Session s(inst.built.firmware, SessionConfig{1, cfg}, inst.model);
  auto ok = s.run(words({1, 0x10, 16}));
  CHECK(ok.verdict == Verdict::Ok);
  for (uint32_t count : {17u, 20u, 32u}) {
    auto rep = s.run(words({1, 0x10, count}));
    CHECK(rep.verdict == Verdict::Crash);
    CHECK(rep.fault.kind == FaultKind::MemPerm);
    CHECK(rep.fault.pc == inst.labels.at("bug_site"));
    CHECK(rep.fault.addr == 0x20010000u);
  }
  auto rejected = s.run(words({1, 0x10, 33}));
  CHECK(rejected.verdict == Verdict::Ok);
}

TEST_CASE("coverage hash is identical across reruns") {
  auto inst = instantiated("spi_xfer");
  std::mt19937 rng(2);
  RunConfig cfg;
  for (int i = 0; i < 20; ++i) {
    Bytes in(256);
    for (auto& b : in) b = static_cast<uint8_t>(rng());
    CoverageMap a, b;
    auto ra = run_once(inst.built.firmware, inst.model, in, cfg, &a);
    auto rb = run_once(inst.built.firmware, inst.model, in, cfg, &b);
    CHECK(a.hash() == b.hash());
    CHECK(a.bytes() == b.bytes());
    CHECK(ra.coverage_hash == rb.coverage_hash);
    CHECK(ra.verdict == rb.verdict);
  }
}

TEST_CASE("coverage map clear forgets everything") {
  CoverageMap m;
  const uint64_t empty = m.hash();
  CHECK(m.record(0x100, 0x200));
  CHECK_FALSE(m.record(0x100, 0x200));
  CHECK(m.edges() == 1);
  CHECK(m.hash() != empty);
  m.clear();
  CHECK(m.edges() == 0);
  CHECK(m.hash() == empty);
  CHECK(std::count(m.bytes().begin(), m.bytes().end(), 0) == static_cast<long>(kCoverageMapSize));
}

TEST_CASE("fuzz loop rejects an empty seed set") {
  auto built = corpus::build(corpus::bundled_manifest().find("gpio_out"));
  Session s(built.firmware, SessionConfig{});
  CHECK_THROWS_AS(fuzz_loop(s, {}, 1, FuzzLimits{}), std::invalid_argument);
  CHECK_THROWS_AS(fuzz_parallel(s, {}, 1, FuzzLimits{}, 2), std::invalid_argument);
}

TEST_CASE("fuzz loop is deterministic for a fixed seed") {
  auto inst = instantiated("i2c_master");
  auto once = [&] {
    Session s(inst.built.firmware, SessionConfig{1, {}}, inst.model);
    FuzzLimits lim;
    lim.execs = 3000;
    return fuzz_loop(s, {Bytes(64, 0)}, 77, lim);
  };
  auto a = once(), b = once();
  CHECK(a.queue == b.queue);
  CHECK(a.virgin == b.virgin);
  CHECK(a.stats.coverage_hash == b.stats.coverage_hash);
  CHECK(a.stats.verdicts == b.stats.verdicts);
  CHECK(a.stats.execs == 3000);
}

TEST_CASE("queue entries beyond the seeds each added new coverage") {
  auto inst = instantiated("spi_xfer");
  Session s(inst.built.firmware, SessionConfig{1, {}}, inst.model);
  FuzzLimits lim;
  lim.execs = 2000;
  lim.learn = false;
  auto res = fuzz_loop(s, {Bytes(32, 0)}, 5, lim);
  // Replay in queue order; each entry must light up an unseen edge.
  std::vector<uint8_t> seen(kCoverageMapSize, 0);
  for (size_t i = 0; i < res.queue.size(); ++i) {
    CoverageMap m;
    s.run(res.queue[i], false, &m);
    size_t fresh = 0;
    for (uint32_t slot : m.touched()) fresh += !seen[slot], seen[slot] = 1;
    if (i > 0) CHECK(fresh > 0);
  }
  CHECK(seen == res.virgin);
}

TEST_CASE("parallel fuzzing merges independently of timing") {
  auto inst = instantiated("i2c_master");
  Session s(inst.built.firmware, SessionConfig{1, {}}, inst.model);
  FuzzLimits lim;
  lim.execs = 4000;
  auto a = fuzz_parallel(s, {Bytes(64, 0), Bytes(64, 0xFF)}, 9, lim, 4);
  auto b = fuzz_parallel(s, {Bytes(64, 0), Bytes(64, 0xFF)}, 9, lim, 4);
  CHECK(a.queue == b.queue);
  CHECK(a.stats.coverage_hash == b.stats.coverage_hash);
  CHECK(a.stats.execs == 4000);
  CHECK(s.model().sr_handlers == inst.model.sr_handlers);
}

TEST_CASE("planted bug is found and bucketed at the store") {
  auto inst = instantiated("plc_modbus");
  Session s(inst.built.firmware, SessionConfig{1, {}}, inst.model);
  std::mt19937_64 rng(3);
  std::vector<Bytes> seeds(4, Bytes(256));
  for (auto& sd : seeds)
    for (auto& b : sd) b = static_cast<uint8_t>(rng());
  FuzzLimits lim;
  lim.execs = 100000;
  auto res = fuzz_loop(s, seeds, 1, lim);
  REQUIRE(res.crashes.size() >= 1);
  for (const auto& [key, b] : res.crashes) {
    CHECK(std::get<2>(key) == inst.labels.at("bug_site"));
    CHECK(b.report.fault.kind == FaultKind::MemPerm);
  }
  REQUIRE(res.stats.first_crash_exec);

  auto dir = temp_dir("artifacts");
  write_artifacts(res, dir);
  const auto stem = fmt::format("MemPerm_{:08x}", inst.labels.at("bug_site"));
  CHECK(fs::exists(dir / "crashes" / (stem + ".bin")));
  CHECK(fs::exists(dir / "crashes" / (stem + ".report")));
  auto replay = read_input_dir(dir / "crashes");
  REQUIRE(replay.size() == 2);
  auto rep = s.run(replay[0], false);
  CHECK(rep.verdict == Verdict::Crash);
  CHECK(read_input_dir(dir / "queue").size() == res.queue.size());
  fs::remove_all(dir);
}

TEST_CASE("coverage comparison") {
  auto inst = instantiated("usart_rx");
  RunConfig cfg;
  std::vector<Bytes> inputs{Bytes(4096, 0)};
  auto same = coverage_compare(inst.built.firmware, inst.model, inst.model, inputs, cfg);
  CHECK(same.blocks_a == same.blocks_b);
  CHECK(same.ratio == doctest::Approx(1.0));
  auto stub = coverage_compare(inst.built.firmware, std::nullopt, inst.model, inputs, cfg);
  CHECK(stub.blocks_a > 0);
  CHECK(stub.ratio >= 5.0);
}

TEST_CASE("read_input_dir sorts by name and rejects files") {
  auto dir = temp_dir("inputs");
  for (const char* n : {"b", "a", "c"}) {
    std::ofstream(dir / n) << n;
  }
  auto in = read_input_dir(dir);
  REQUIRE(in.size() == 3);
  CHECK(in[0] == Bytes{'a'});
  CHECK(in[2] == Bytes{'c'});
  CHECK_THROWS(read_input_dir(dir / "a"));
  fs::remove_all(dir);
}

TEST_CASE("verdict strings") {
  for (auto v : {Verdict::Ok, Verdict::Crash, Verdict::Hang, Verdict::InputExhausted, Verdict::ModelMiss})
    CHECK(verdict_from_string(to_string(v)) == v);
}
