#include <set>

#include "doctest.h"
#include "fwmodel/assembler.hpp"
#include "fwmodel/corpus.hpp"
#include "fwmodel/explore.hpp"
#include "fwmodel/session.hpp"

using namespace fwmodel;

namespace {

CandidateResult result(Outcome o, uint64_t dr, bool dependent = false) {
  CandidateResult r;
  r.outcome = o;
  r.dr_access_count = dr;
  r.sr_dependent_failure = dependent;
  return r;
}

std::vector<CandidateResult> all(Outcome o, bool dependent) {
  std::vector<CandidateResult> v;
  for (int i = 0; i < kCandidateCount; ++i) {
    v.push_back(result(o, 0, dependent));
    v.back().candidate_value = candidate_value(i);
  }
  return v;
}

// Peripheral at 0x40000000: SR at +0, CR at +4, DR at +8. `wait` polls SR
// bit 4 and then reads the DR. It is called four times from one site; the
// CR changes after the second call.
const char* kTwoConfigs = R"(
        .word 0x20010000, reset
reset:  LDI r1, 0
        LUI r1, 0x4000
        LDI r4, 4
loop:   BL  wait
        CMP r4, #3
        BNE skip
        LDW r2, [r1, #4]
        OR  r2, #1
        STW r2, [r1, #4]
skip:   SUB r4, #1
        CMP r4, #0
        BNE loop
        HALT
wait:   LDW r2, [r1]
        AND r2, #0x10
        CMP r2, #0
        BEQ wait
        LDW r3, [r1, #8]
        RET
)";

SessionConfig run_mode() {
  SessionConfig cfg;
  cfg.run.stop_on_exhaustion = false;
  return cfg;
}

Firmware firmware(const char* src) { return Firmware::from_image(asmr::assemble(src)); }

Firmware corpus_firmware(const std::string& name) {
  return corpus::build(corpus::bundled_manifest().find(name)).firmware;
}

}  // namespace

TEST_CASE("thirty-three candidates: one-hot then zero") {
  std::set<uint32_t> seen;
  for (int i = 0; i < kCandidateCount; ++i) {
    uint32_t v = candidate_value(i);
    CHECK((v == 0 || (v & (v - 1)) == 0));
    seen.insert(v);
  }
  CHECK(seen.size() == 33);
  CHECK(candidate_value(32) == 0u);
}

TEST_CASE("a unique survivor wins") {
  auto results = all(Outcome::Stalled, true);
  results[5] = result(Outcome::RanToFramePop, 2);
  std::mt19937_64 rng(1);
  const auto before = rng;
  auto rk = qualify_and_rank(results, {}, rng);
  CHECK(rk.qualified == std::vector<int>{5});
  CHECK(rk.winner == 5);
  CHECK(rng == before);
}

TEST_CASE("budget exhaustion qualifies, crashes do not when others survive") {
  auto results = all(Outcome::Crashed, false);
  results[1] = result(Outcome::BudgetExhausted, 0);
  results[2] = result(Outcome::RanToFramePop, 3);
  std::mt19937_64 rng(1);
  auto rk = qualify_and_rank(results, {}, rng);
  CHECK(rk.qualified == std::vector<int>{1, 2});
  CHECK(rk.winner == 2);
}

TEST_CASE("failures caused by other factors qualify when nothing survives") {
  auto results = all(Outcome::Crashed, false);
  results[7].sr_dependent_failure = true;
  results[9].dr_access_count = 4;
  std::mt19937_64 rng(1);
  auto rk = qualify_and_rank(results, {}, rng);
  CHECK(rk.qualified.size() == 32);
  CHECK(std::find(rk.qualified.begin(), rk.qualified.end(), 7) == rk.qualified.end());
  CHECK(rk.winner == 9);
}

TEST_CASE("all SR-dependent failures leave no candidate") {
  std::mt19937_64 rng(1);
  SRAccessContext ctx{0x40000000, 1, 2, 3};
  try {
    qualify_and_rank(all(Outcome::Stalled, true), ctx, rng);
    FAIL("expected NoQualifiedCandidate");
  } catch (const NoQualifiedCandidate& e) {
    CHECK(e.context() == ctx);
  }
}

TEST_CASE("ties are broken by a seeded draw, identically on rerun") {
  auto results = all(Outcome::Stalled, true);
  results[3] = result(Outcome::RanToFramePop, 1);
  results[20] = result(Outcome::RanToFramePop, 1);
  results[30] = result(Outcome::RanToFramePop, 0);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 a(seed), b(seed), oracle(seed);
    auto ra = qualify_and_rank(results, {}, a);
    auto rb = qualify_and_rank(results, {}, b);
    CHECK(ra.winner == rb.winner);
    CHECK(ra.tied == std::vector<int>{3, 20});
    CHECK(ra.winner == ra.tied[oracle() % 2]);
  }
}

TEST_CASE("explore picks the flag that unlocks the data read") {
  Session s(firmware(kTwoConfigs), run_mode());
  auto rep = s.run({});
  CHECK(rep.verdict == Verdict::Ok);
  REQUIRE(s.explorations().size() == 2);
  for (const auto& e : s.explorations()) {
    CHECK(e.winner_value == 0x10u);
    CHECK(e.results.size() == 33);
    CHECK(e.ranking.qualified == std::vector<int>{4});
    CHECK(e.results[4].outcome == Outcome::RanToFramePop);
    CHECK(e.results[4].dr_access_count == 1);
  }
}

TEST_CASE("lookup: same four-tuple is reused, a new configuration misses") {
  Session s(firmware(kTwoConfigs), run_mode());
  s.run({});
  REQUIRE(s.model().sr_handlers.size() == 2);
  auto it = s.model().sr_handlers.begin();
  const SRAccessContext a = it->first, b = std::next(it)->first;
  CHECK(a.r == b.r);
  CHECK(a.bbl == b.bbl);
  CHECK(a.cs == b.cs);
  CHECK(a.conf != b.conf);
  s.run({});
  CHECK(s.explorations().size() == 2);
}

TEST_CASE("firmware without MMIO has no rounds") {
  Session s(firmware(".word 0x20010000, reset\nreset: LDI r0, 1\nHALT\n"), SessionConfig{});
  instantiate(s);
  CHECK(s.rounds().empty());
  CHECK(s.stable());
  CHECK(s.model().registers.empty());
}

TEST_CASE("workers stop at the frame pop and leave the snapshot untouched") {
  const Firmware fw = firmware(kTwoConfigs);
  Session s(fw, run_mode());
  std::vector<std::pair<Emulator, Exploration>> seen;
  s.observer = [&](const Emulator& e, const Exploration& ex, const std::mt19937_64&) { seen.emplace_back(e, ex); };
  s.run({});
  REQUIRE(seen.size() == 2);
  const Emulator& snap = seen[0].first;
  const uint64_t insns = snap.machine.state().insn_count;
  const size_t depth = snap.machine.depth();
  const size_t regs = snap.regs.model().registers.size();
  for (int i = 0; i < kCandidateCount; ++i) {
    auto r = run_candidate(snap, seen[0].second.ctx, candidate_value(i));
    CHECK(r.blocks <= kWorkerBlockBudget);
    if (i == 4) {
      CHECK(r.outcome == Outcome::RanToFramePop);
      CHECK(r.blocks == 2);
    } else {
      CHECK(r.outcome == Outcome::Stalled);
      CHECK(r.sr_dependent_failure);
    }
  }
  CHECK(snap.machine.state().insn_count == insns);
  CHECK(snap.machine.depth() == depth);
  CHECK(snap.regs.model().registers.size() == regs);
  CHECK(snap.input == nullptr);
}

TEST_CASE("sequential oracle agrees with the threaded engine on the corpus") {
  for (const char* name : {"usart_rx", "i2c_master", "adc_conv", "ondemand_cmd"}) {
    CAPTURE(name);
    SessionConfig cfg;
    cfg.seed = 1;
    cfg.explore_threads = 4;
    Session s(corpus_firmware(name), cfg);
    int checked = 0;
    s.observer = [&](const Emulator& snap, const Exploration& ex, const std::mt19937_64& rng_before) {
      std::vector<CandidateResult> seq;
      for (int i = 0; i < kCandidateCount; ++i) seq.push_back(run_candidate(snap, ex.ctx, candidate_value(i)));
      CHECK(seq == ex.results);
      std::mt19937_64 rng = rng_before;
      auto rk = qualify_and_rank(seq, ex.ctx, rng);
      CHECK(rk.qualified == ex.ranking.qualified);
      CHECK(rk.winner == ex.ranking.winner);
      ++checked;
    };
    instantiate(s);
    CHECK(checked > 0);
    CHECK(checked == static_cast<int>(s.explorations().size()));
  }
}

TEST_CASE("usart waits resolve to the receive and transmit flags") {
  const auto built = corpus::build(corpus::bundled_manifest().find("usart_rx"));
  const auto& labels = built.assembled.labels;
  Session s(built.firmware, SessionConfig{});
  instantiate(s);
  auto in = [&](uint32_t a, const char* from, const char* to) { return a >= labels.at(from) && a < labels.at(to); };
  int rx = 0, tx = 0;
  for (const auto& e : s.explorations()) {
    if (e.ctx.r != 0x40013800 || e.ranking.qualified.size() != 1) continue;
    if (in(e.ctx.bbl, "usart_getc", "default_handler")) {
      CHECK(e.winner_value == 0x20u);
      ++rx;
    }
    if (in(e.ctx.bbl, "usart_putc", "usart_getc")) {
      CHECK(e.winner_value == 0x80u);
      ++tx;
    }
  }
  CHECK(rx > 0);
  CHECK(tx > 0);
}

TEST_CASE("handler table only grows") {
  Session s(corpus_firmware("spi_xfer"), SessionConfig{});
  SRHandlerTable prev;
  for (int i = 0; i < 30; ++i) {
    std::vector<uint8_t> in(64, static_cast<uint8_t>(i * 37));
    s.run(in);
    for (const auto& [ctx, v] : prev) {
      auto it = s.model().sr_handlers.find(ctx);
      REQUIRE(it != s.model().sr_handlers.end());
      CHECK(it->second == v);
    }
    prev = s.model().sr_handlers;
  }
}

TEST_CASE("threads do not change the evaluation") {
  Session s(corpus_firmware("spi_xfer"), run_mode());
  std::optional<std::pair<Emulator, SRAccessContext>> first;
  s.observer = [&](const Emulator& e, const Exploration& ex, const std::mt19937_64&) {
    if (!first) first.emplace(e, ex.ctx);
  };
  s.run({});
  REQUIRE(first);
  CHECK(Explorer(1).evaluate(first->first, first->second) == Explorer(8).evaluate(first->first, first->second));
}
