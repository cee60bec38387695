#include "fwmodel/fuzz.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

#include "fwmodel/hash.hpp"

namespace fwmodel {

namespace {

constexpr uint32_t kInteresting[] = {0, 1, 0x7F, 0x80, 0xFF, 0x100, 0x7FFF, 0x8000, 0xFFFF, 0x7FFFFFFF, 0x80000000,
                                     0xFFFFFFFF};

uint64_t splitmix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void write_file(const std::filesystem::path& p, const void* data, size_t n) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", p.string()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

}  // namespace

void Mutator::apply(Op op, Bytes& d, const std::vector<Bytes>& queue) {
  if (d.empty() && op != Op::Splice) {
    for (int i = 0; i < 4; ++i) d.push_back(static_cast<uint8_t>(rng_()));
    return;
  }
  switch (op) {
    case Op::Flip1:
    case Op::Flip2:
    case Op::Flip4: {
      int width = op == Op::Flip1 ? 1 : op == Op::Flip2 ? 2 : 4;
      uint64_t bit = below(d.size() * 8);
      for (int i = 0; i < width && bit + i < d.size() * 8; ++i) d[(bit + i) / 8] ^= 1u << ((bit + i) % 8);
      break;
    }
    case Op::ByteSet:
      d[below(d.size())] = static_cast<uint8_t>(rng_());
      break;
    case Op::ByteAdd: {
      int delta = static_cast<int>(below(35)) + 1;
      uint8_t& b = d[below(d.size())];
      b = static_cast<uint8_t>(below(2) ? b + delta : b - delta);
      break;
    }
    case Op::WordOverwrite: {
      uint32_t w = below(2) ? kInteresting[below(std::size(kInteresting))] : static_cast<uint32_t>(rng_());
      size_t at = below((d.size() + 3) / 4) * 4;
      for (size_t i = 0; i < 4 && at + i < d.size(); ++i) d[at + i] = static_cast<uint8_t>(w >> (8 * i));
      break;
    }
    case Op::Splice: {
      if (queue.empty()) break;
      const Bytes& other = queue[below(queue.size())];
      size_t cut_a = below(d.size() + 1);
      size_t cut_b = below(other.size() + 1);
      d.resize(cut_a);
      d.insert(d.end(), other.begin() + static_cast<std::ptrdiff_t>(cut_b), other.end());
      break;
    }
    case Op::Havoc: {
      int n = 2 + static_cast<int>(below(7));
      for (int i = 0; i < n; ++i) {
        switch (below(8)) {
          case 6:  // grow by a word
            for (int k = 0; k < 4; ++k) d.push_back(static_cast<uint8_t>(rng_()));
            break;
          case 7:  // shrink by a word
            if (d.size() > 4) d.resize(d.size() - 4);
            break;
          default:
            apply(static_cast<Op>(below(6)), d, queue);
        }
      }
      break;
    }
  }
  if (d.size() > max_length_) d.resize(max_length_);
}

Bytes Mutator::mutate(const Bytes& input, const std::vector<Bytes>& queue) {
  Bytes d = input;
  apply(static_cast<Op>(below(kOpCount)), d, queue);
  return d;
}

FuzzResult fuzz_loop(Session& session, const std::vector<Bytes>& seeds, uint64_t seed, const FuzzLimits& limits) {
  if (seeds.empty()) throw std::invalid_argument("fuzzing needs at least one seed input");
  FuzzResult res;
  res.virgin.assign(kCoverageMapSize, 0);
  Mutator mut(seed, limits.max_input);
  CoverageMap map;

  auto exec = [&](const Bytes& input, bool is_seed) {
    map.clear();
    FuzzRunReport rep = session.run(input, limits.learn, &map);
    uint64_t fresh = 0;
    for (uint32_t i : map.touched())
      if (!res.virgin[i]) {
        res.virgin[i] = 1;
        ++fresh;
      }
    rep.new_edges = fresh;
    const uint64_t n = ++res.stats.execs;
    ++res.stats.verdicts[rep.verdict];
    if (fresh > 0 || is_seed) res.queue.push_back(input);
    if (rep.verdict == Verdict::Crash) {
      if (!res.stats.first_crash_exec) res.stats.first_crash_exec = n;
      res.crashes.try_emplace(BucketKey{rep.verdict, rep.fault.kind, rep.fault.pc}, Bucket{input, rep, n});
    } else if (rep.verdict == Verdict::Hang) {
      res.hangs.try_emplace(BucketKey{rep.verdict, FaultKind::MemPerm, rep.pc}, Bucket{input, rep, n});
    }
  };

  for (const Bytes& s : seeds) {
    if (res.stats.execs >= limits.execs) break;
    exec(s, true);
  }
  for (size_t cursor = 0; res.stats.execs < limits.execs; cursor = (cursor + 1) % res.queue.size()) {
    const Bytes parent = res.queue[cursor];
    for (int c = 0; c < limits.children_per_entry && res.stats.execs < limits.execs; ++c)
      exec(mut.mutate(parent, res.queue), false);
  }

  res.stats.queue_size = res.queue.size();
  res.stats.edges = static_cast<size_t>(std::count(res.virgin.begin(), res.virgin.end(), 1));
  res.stats.coverage_hash = fnv1a(res.virgin);
  res.stats.rounds = session.rounds().size();
  return res;
}

FuzzResult fuzz_parallel(const Session& session, const std::vector<Bytes>& seeds, uint64_t seed,
                         const FuzzLimits& limits, int jobs) {
  if (seeds.empty()) throw std::invalid_argument("fuzzing needs at least one seed input");
  jobs = std::max(jobs, 1);
  std::vector<FuzzResult> parts(static_cast<size_t>(jobs));
  FuzzLimits frozen = limits;
  frozen.learn = false;
  frozen.execs = limits.execs / static_cast<uint64_t>(jobs);

  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      Session local(session.firmware(), session.config(), session.model());
      parts[static_cast<size_t>(j)] = fuzz_loop(local, seeds, splitmix(seed + static_cast<uint64_t>(j)), frozen);
    });
  for (auto& t : pool) t.join();

  FuzzResult merged;
  merged.virgin.assign(kCoverageMapSize, 0);
  std::set<Bytes> queue;
  for (const FuzzResult& p : parts) {
    queue.insert(p.queue.begin(), p.queue.end());
    for (size_t i = 0; i < kCoverageMapSize; ++i) merged.virgin[i] |= p.virgin[i];
    for (const auto& [k, b] : p.crashes) {
      auto [it, fresh] = merged.crashes.try_emplace(k, b);
      if (!fresh && b.input < it->second.input) it->second = b;
    }
    for (const auto& [k, b] : p.hangs) {
      auto [it, fresh] = merged.hangs.try_emplace(k, b);
      if (!fresh && b.input < it->second.input) it->second = b;
    }
    merged.stats.execs += p.stats.execs;
    for (const auto& [v, n] : p.stats.verdicts) merged.stats.verdicts[v] += n;
  }
  merged.queue.assign(queue.begin(), queue.end());
  merged.stats.queue_size = merged.queue.size();
  merged.stats.edges = static_cast<size_t>(std::count(merged.virgin.begin(), merged.virgin.end(), 1));
  merged.stats.coverage_hash = fnv1a(merged.virgin);
  return merged;
}

void write_artifacts(const FuzzResult& result, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "queue");
  fs::create_directories(out_dir / "crashes");
  fs::create_directories(out_dir / "hangs");
  for (size_t i = 0; i < result.queue.size(); ++i)
    write_file(out_dir / "queue" / fmt::format("id_{:06}.bin", i), result.queue[i].data(), result.queue[i].size());
  auto dump = [&](const std::map<BucketKey, Bucket>& buckets, const fs::path& dir) {
    for (const auto& [key, b] : buckets) {
      const auto& [verdict, kind, pc] = key;
      std::string stem = verdict == Verdict::Crash ? fmt::format("{}_{:08x}", to_string(kind), pc)
                                                   : fmt::format("hang_{:08x}", pc);
      write_file(dir / (stem + ".bin"), b.input.data(), b.input.size());
      FuzzRunReport rep = b.report;
      rep.input_ref = stem + ".bin";
      std::string text = rep.serialize() + fmt::format("found_at_exec {}\n", b.found_at_exec);
      write_file(dir / (stem + ".report"), text.data(), text.size());
    }
  };
  dump(result.crashes, out_dir / "crashes");
  dump(result.hangs, out_dir / "hangs");
}

CoverageComparison coverage_compare(const Firmware& fw, const std::optional<InstantiatedModel>& model_a,
                                    const std::optional<InstantiatedModel>& model_b, const std::vector<Bytes>& inputs,
                                    const RunConfig& cfg) {
  RunConfig rc = cfg;
  rc.stop_on_exhaustion = false;
  auto cover = [&](const std::optional<InstantiatedModel>& m) {
    BlockSet blocks;
    for (const Bytes& in : inputs) {
      if (m) run_once(fw, *m, in, rc, nullptr, &blocks);
      else run_stub(fw, in, rc, nullptr, &blocks);
    }
    return blocks.size();
  };
  CoverageComparison c;
  c.blocks_a = cover(model_a);
  c.blocks_b = cover(model_b);
  c.ratio = c.blocks_a ? static_cast<double>(c.blocks_b) / static_cast<double>(c.blocks_a) : 0.0;
  return c;
}

std::vector<Bytes> read_input_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error(fmt::format("'{}' is not a directory", dir.string()));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Bytes> out;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    out.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

}  // namespace fwmodel
