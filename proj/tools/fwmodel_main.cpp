#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fwmodel/assembler.hpp"
#include "fwmodel/corpus.hpp"
#include "fwmodel/fuzz.hpp"
#include "fwmodel/isa.hpp"
#include "fwmodel/report.hpp"
#include "fwmodel/session.hpp"

namespace fs = std::filesystem;
using namespace fwmodel;

namespace {

constexpr int kOk = 0;
constexpr int kDeviation = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError(fmt::format("cannot read '{}'", p.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw UsageError(fmt::format("cannot write '{}'", p.string()));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

// Assembly sources are accepted wherever an image is expected.
Firmware load_image(const fs::path& p) {
  if (p.extension() == ".s") {
    const std::string src = read_text(p);
    try {
      return Firmware::from_image(asmr::assemble(src));
    } catch (const asmr::AsmError& e) {
      throw UsageError(fmt::format("{}:{}: {}", p.string(), e.line(), e.what()));
    }
  }
  if (!fs::is_regular_file(p)) throw UsageError(fmt::format("cannot read '{}'", p.string()));
  return Firmware::from_file(p.string());
}

InstantiatedModel load_model(const fs::path& p) {
  try {
    return modelstore::load(p.string());
  } catch (const modelstore::ModelError& e) {
    throw UsageError(fmt::format("{}: {}", p.string(), e.what()));
  }
}

struct IrqFlags {
  uint64_t interval = kDefaultIrqInterval;
  std::string script;
  bool none = false;

  void add(CLI::App* app) {
    app->add_option("--irq-interval", interval, "Basic blocks between round-robin interrupts")
        ->check(CLI::PositiveNumber);
    app->add_option("--irq-script", script, "File of `bb_count irq` lines replacing round-robin firing");
    app->add_flag("--no-irq", none, "Never fire interrupts");
  }

  FiringStrategy strategy() const {
    if (none) return FiringStrategy::none();
    if (!script.empty()) {
      try {
        return FiringStrategy::scripted(read_text(script));
      } catch (const std::invalid_argument& e) {
        throw UsageError(fmt::format("{}: {}", script, e.what()));
      }
    }
    return FiringStrategy::round_robin(interval);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<corpus::FirmwareEntry> bundled_entry(const std::string& name) {
  if (name.empty()) return std::nullopt;
  try {
    return corpus::bundled_manifest().find(name);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

int cmd_asm(const fs::path& in, fs::path out, fs::path labels) {
  const std::string src = read_text(in);
  asmr::Assembled a;
  try {
    a = asmr::assemble_program(src);
  } catch (const asmr::AsmError& e) {
    std::cerr << fmt::format("{}:{}: {}\n", in.string(), e.line(), e.what());
    return kUsage;
  }
  if (out.empty()) out = fs::path(in).replace_extension(".bin");
  if (labels.empty()) labels = fs::path(out).replace_extension(".labels");
  write_bytes(out, std::string_view(reinterpret_cast<const char*>(a.image.data()), a.image.size()));
  write_bytes(labels, asmr::format_label_map(a.labels));
  return kOk;
}

int cmd_disasm(const fs::path& image) {
  const std::string bytes = read_text(image);
  if (bytes.size() % 4) throw UsageError(fmt::format("'{}' is not a whole number of words", image.string()));
  std::cout << asmr::disassemble(std::span(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()));
  return kOk;
}

int cmd_run(const fs::path& image, const fs::path& model_path, bool stub, const fs::path& input_path,
            const IrqFlags& irq) {
  Firmware fw = load_image(image);
  Bytes input;
  if (!input_path.empty()) {
    std::string s = read_text(input_path);
    input.assign(s.begin(), s.end());
  }
  RunConfig rc;
  rc.strategy = irq.strategy();
  rc.stop_on_exhaustion = false;
  FuzzRunReport rep;
  if (stub) {
    rep = run_stub(fw, input, rc);
  } else if (!model_path.empty()) {
    InstantiatedModel m = load_model(model_path);
    if (m.firmware_hash != fw.hash) throw UsageError("model belongs to a different firmware image");
    rep = run_once(fw, m, input, rc);
  } else {
    SessionConfig cfg;
    cfg.run = rc;
    Session s(fw, cfg);
    rep = s.run(input);
  }
  std::cout << rep.serialize();
  return rep.verdict == Verdict::Ok ? kOk : kDeviation;
}

int cmd_instantiate(const fs::path& image, uint64_t seed, const fs::path& out, std::string name, int threads,
                    uint64_t max_runs, const IrqFlags& irq) {
  Firmware fw = load_image(image);
  if (name.empty()) name = image.stem().string();
  SessionConfig cfg;
  cfg.seed = seed;
  cfg.run.strategy = irq.strategy();
  cfg.explore_threads = threads;
  Session session(fw, cfg);
  auto t0 = std::chrono::steady_clock::now();
  InstantiateOptions opts;
  opts.max_runs = max_runs;
  instantiate(session, opts);
  const double secs = seconds_since(t0);

  std::optional<corpus::CategoryCheck> cats;
  if (auto entry = bundled_entry(name)) cats = corpus::check_categories(session.model(), *entry);
  report::write_instantiation(out, name, session, cats);
  report::record_timing(out, "instantiate", secs, session.runs());

  std::cout << session.round_log();
  if (session.failure()) {
    const SRAccessContext& c = *session.failure();
    std::cerr << fmt::format("no qualified candidate for r=0x{:08x} cs=0x{:016x} bbl=0x{:08x} conf=0x{:016x}\n", c.r,
                             c.cs, c.bbl, c.conf);
    return kDeviation;
  }
  if (!session.stable()) {
    std::cerr << fmt::format("model not stable after {} runs\n", session.runs());
    return kDeviation;
  }
  return kOk;
}

int cmd_fuzz(const fs::path& image, const fs::path& model_path, const fs::path& seeds_dir, const fs::path& out,
             uint64_t seed, uint64_t execs, int jobs, size_t max_input, bool freeze, const IrqFlags& irq) {
  Firmware fw = load_image(image);
  std::optional<InstantiatedModel> model;
  if (!model_path.empty()) model = load_model(model_path);
  std::vector<Bytes> seeds = seeds_dir.empty() ? std::vector<Bytes>{Bytes(64, 0)} : read_input_dir(seeds_dir);
  if (seeds.empty()) throw UsageError(fmt::format("no seed inputs in '{}'", seeds_dir.string()));

  SessionConfig cfg;
  cfg.seed = model ? model->session_seed : seed;
  cfg.run.strategy = irq.strategy();
  std::optional<Session> session;
  try {
    session.emplace(fw, cfg, model);
  } catch (const modelstore::ModelError& e) {
    throw UsageError(e.what());
  }

  FuzzLimits limits;
  limits.execs = execs;
  limits.max_input = max_input;
  limits.learn = !freeze;
  auto t0 = std::chrono::steady_clock::now();
  FuzzResult res = jobs > 1 ? fuzz_parallel(*session, seeds, seed, limits, jobs)
                            : fuzz_loop(*session, seeds, seed, limits);
  const double secs = seconds_since(t0);

  fs::create_directories(out);
  write_artifacts(res, out);
  report::write_fuzz(out, res, session->rounds_after_stable());
  report::record_timing(out, "fuzz", secs, res.stats.execs);
  modelstore::save(session->model(), (out / report::kModelFile).string());
  if (!fs::exists(out / report::kSessionFile)) {
    report::write_instantiation(out, image.stem().string(), *session, std::nullopt);
  }

  std::cout << fmt::format("execs {}\nedges {}\nqueue {}\ncrashes {}\nhangs {}\ncoverage_hash 0x{:016x}\n",
                           res.stats.execs, res.stats.edges, res.stats.queue_size, res.crashes.size(),
                           res.hangs.size(), res.stats.coverage_hash);
  for (const auto& [key, b] : res.crashes)
    std::cout << fmt::format("crash {} pc=0x{:08x} found_at_exec {}\n", to_string(std::get<1>(key)), std::get<2>(key),
                             b.found_at_exec);
  return kOk;
}

std::optional<InstantiatedModel> model_or_stub(const std::string& arg) {
  if (arg == "stub") return std::nullopt;
  return load_model(arg);
}

int cmd_compare(const fs::path& image, const std::string& a, const std::string& b, const fs::path& inputs,
                const fs::path& out, const IrqFlags& irq) {
  Firmware fw = load_image(image);
  std::vector<Bytes> in = inputs.empty() ? std::vector<Bytes>{Bytes(4096, 0)} : read_input_dir(inputs);
  RunConfig rc;
  rc.strategy = irq.strategy();
  CoverageComparison c = coverage_compare(fw, model_or_stub(a), model_or_stub(b), in, rc);
  std::cout << fmt::format("blocks_a {}\nblocks_b {}\nratio {:.2f}\n", c.blocks_a, c.blocks_b, c.ratio);
  if (!out.empty()) report::write_compare(out, c);
  return kOk;
}

int cmd_corpus_check(const fs::path& manifest_path, const std::vector<std::string>& only, std::optional<uint64_t> seed,
                     int mutants) {
  corpus::Manifest m = manifest_path.empty() ? corpus::bundled_manifest() : corpus::load_manifest(manifest_path);
  corpus::CheckOptions opts;
  opts.seed = seed.value_or(m.seed);
  opts.mutants = mutants;
  std::vector<corpus::FirmwareCheck> checks;
  for (const auto& e : m.firmware) {
    if (!only.empty() && std::find(only.begin(), only.end(), e.name) == only.end()) continue;
    checks.push_back(corpus::check_firmware(e, opts));
  }
  std::cout << corpus::render_check_table(checks);
  bool ok = std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.as_expected; });
  return ok ? kOk : kDeviation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peripheral model instantiation and fuzzing for a small firmware ISA"};
  app.require_subcommand(1);
  int code = kOk;

  fs::path in, out, labels, image, model, input, seeds, inputs, manifest;
  std::string name, model_a = "stub", model_b;
  uint64_t seed = 1, execs = 10000, max_runs = 200;
  int jobs = 1, threads = 1, mutants = 100;
  size_t max_input = 4096;
  bool stub = false, freeze = false, csv = false;
  std::vector<std::string> only;
  std::vector<fs::path> dirs;
  std::optional<uint64_t> check_seed;
  IrqFlags irq;

  auto* c_asm = app.add_subcommand("asm", "Assemble a source file into a flash image");
  c_asm->add_option("source", in, "Assembly source")->required();
  c_asm->add_option("-o,--output", out, "Image path (default: source with .bin)");
  c_asm->add_option("--labels", labels, "Label listing path (default: image with .labels)");

  auto* c_dis = app.add_subcommand("disasm", "Disassemble a flash image");
  c_dis->add_option("image", image, "Flash image")->required();

  auto* c_run = app.add_subcommand("run", "Run one input and print the run report");
  c_run->add_option("--image", image, "Flash image or assembly source")->required();
  c_run->add_option("--model", model, "Frozen model; without it a fresh model is learned during the run");
  c_run->add_flag("--stub", stub, "All peripheral reads return 0 and no interrupts fire");
  c_run->add_option("--input", input, "Input bytes consumed by data-register reads");
  irq.add(c_run);

  auto* c_inst = app.add_subcommand("instantiate", "Learn a peripheral model until it is stable");
  c_inst->add_option("--image", image, "Flash image or assembly source")->required();
  c_inst->add_option("--seed", seed, "Session seed");
  c_inst->add_option("--out", out, "Session directory")->required();
  c_inst->add_option("--name", name, "Firmware name (default: image stem); corpus names add accuracy");
  c_inst->add_option("--threads", threads, "Exploration threads")->check(CLI::PositiveNumber);
  c_inst->add_option("--max-runs", max_runs, "Give up after this many runs")->check(CLI::PositiveNumber);
  irq.add(c_inst);

  auto* c_fuzz = app.add_subcommand("fuzz", "Coverage-guided fuzzing against a model");
  c_fuzz->add_option("--image", image, "Flash image or assembly source")->required();
  c_fuzz->add_option("--model", model, "Starting model (default: empty)");
  c_fuzz->add_option("--seeds", seeds, "Directory of seed inputs (default: one zero-filled 64-byte input)");
  c_fuzz->add_option("--out", out, "Output directory")->required();
  c_fuzz->add_option("--seed", seed, "Mutation seed");
  c_fuzz->add_option("--execs", execs, "Executions")->check(CLI::PositiveNumber);
  c_fuzz->add_option("--jobs", jobs, "Independent instances; more than one freezes the model")
      ->check(CLI::PositiveNumber);
  c_fuzz->add_option("--max-input", max_input, "Largest input in bytes")->check(CLI::PositiveNumber);
  c_fuzz->add_flag("--freeze", freeze, "Do not learn; a model miss ends the run");
  irq.add(c_fuzz);

  auto* c_cmp = app.add_subcommand("compare", "Block coverage of two models over the same inputs");
  c_cmp->add_option("--image", image, "Flash image or assembly source")->required();
  c_cmp->add_option("--model-a", model_a, "Model file or `stub` (default: stub)");
  c_cmp->add_option("--model-b", model_b, "Model file or `stub`")->required();
  c_cmp->add_option("--inputs", inputs, "Directory of inputs (default: one zero-filled 4 KiB input)");
  c_cmp->add_option("--out", out, "Session directory to record compare.txt in");
  irq.add(c_cmp);

  auto* c_model = app.add_subcommand("model", "Inspect model files");
  c_model->require_subcommand(1);
  fs::path ma, mb;
  auto* c_show = c_model->add_subcommand("show", "Print a model as a register table");
  c_show->add_option("model", ma, "Model file")->required();
  auto* c_diff = c_model->add_subcommand("diff", "Changes turning model A into model B");
  c_diff->add_option("a", ma, "Model file")->required();
  c_diff->add_option("b", mb, "Model file")->required();

  auto* c_corpus = app.add_subcommand("corpus-check", "Check the firmware corpus against its manifest");
  c_corpus->add_option("--manifest", manifest, "Manifest (default: the bundled corpus)");
  c_corpus->add_option("--only", only, "Check only these firmware");
  c_corpus->add_option("--seed", check_seed, "Session seed (default: from the manifest)");
  c_corpus->add_option("--mutants", mutants, "Mutated inputs per firmware")->check(CLI::NonNegativeNumber);

  auto* c_report = app.add_subcommand("report", "Tables over session directories");
  c_report->add_option("dirs", dirs, "Session directories")->required();
  c_report->add_flag("--csv", csv, "CSV instead of aligned text");

  auto* c_isa = app.add_subcommand("isa-doc", "Print the instruction set reference");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*c_asm) code = cmd_asm(in, out, labels);
    else if (*c_dis) code = cmd_disasm(image);
    else if (*c_run) code = cmd_run(image, model, stub, input, irq);
    else if (*c_inst) code = cmd_instantiate(image, seed, out, name, threads, max_runs, irq);
    else if (*c_fuzz) code = cmd_fuzz(image, model, seeds, out, seed, execs, jobs, max_input, freeze, irq);
    else if (*c_cmp) code = cmd_compare(image, model_a, model_b, inputs, out, irq);
    else if (*c_show) std::cout << modelstore::render_table(load_model(ma));
    else if (*c_diff) {
      auto changes = modelstore::diff(load_model(ma), load_model(mb));
      for (const auto& c : changes) std::cout << modelstore::format_change(c) << "\n";
      code = changes.empty() ? kOk : kDeviation;
    } else if (*c_corpus) code = cmd_corpus_check(manifest, only, check_seed, mutants);
    else if (*c_report) std::cout << report::render(dirs, csv ? report::Format::Csv : report::Format::Text);
    else if (*c_isa) std::cout << isa::reference_markdown();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return code;
}
