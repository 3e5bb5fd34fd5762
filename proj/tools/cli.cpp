#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <locale>
#include <sstream>

#include <CLI11.hpp>

#include "aiasim/cda_probe.hpp"
#include "aiasim/config.hpp"
#include "aiasim/report.hpp"
#include "aiasim/sweep.hpp"
#include "aiasim/synth.hpp"
#include "aiasim/trace.hpp"
#include "aiasim/validator.hpp"

namespace aiasim::cli {

namespace {

struct SynthFlags {
  std::size_t pipelines = 1;
  std::size_t ops = 1000;
  std::size_t pages = 64;
  double ratio = 1.0;
  std::string pattern = "sequential";
  std::size_t dma_every = 0;
  Tick compute_ticks = ns_to_ticks(100);
  std::uint64_t seed = 0;

  void attach(CLI::App* app) {
    app->add_option("--pipelines", pipelines, "Independent pipelines")->check(CLI::PositiveNumber);
    app->add_option("--ops", ops, "Ops per pipeline");
    app->add_option("--pages", pages, "Distinct pages touched")->check(CLI::PositiveNumber);
    app->add_option("--ratio", ratio, "Fraction of ops that touch memory")->check(CLI::Range(0.0, 1.0));
    app->add_option("--pattern", pattern, "sequential | strided:<s> | random");
    app->add_option("--dma-every", dma_every, "Memory ops between DMA reprograms (0 = never)");
    app->add_option("--compute-ticks", compute_ticks, "Duration of each compute op")->check(CLI::PositiveNumber);
  }

  SynthParams params() const {
    SynthParams p;
    p.pipelines = pipelines;
    p.ops_per_pipeline = ops;
    p.unique_pages = pages;
    p.mem_to_compute_ratio = ratio;
    const auto pat = parse_pattern(pattern);
    if (!pat) throw ConfigError("--pattern: expected sequential, strided:<s> or random, got '" + pattern + "'");
    p.pattern = *pat;
    if (dma_every) p.dma_reprogram_every = dma_every;
    p.compute_ticks = compute_ticks;
    return p;
  }
};

std::string with_commas(std::uint64_t v) {
  std::string digits = std::to_string(v);
  for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
  return digits;
}

void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-")
    out << content;
  else
    write_file_atomic(path, content);
}

Workload load_trace(const std::string& path, Pid pid) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read trace " + path);
  try {
    return parse_trace(in, pid);
  } catch (const TraceError& e) {
    throw TraceError(e.line(), path + ": " + std::string(e.what()));
  }
}

MemoryMap load_map(const std::string& path) {
  if (path.empty()) return default_probe_map();
  const Json doc = read_json_file(path);
  return parse_memory_map(doc.is_object() && doc.contains("memory_map") ? doc.at("memory_map") : doc);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Host/accelerator shared-memory simulator: CDA probes and defense overheads", "aiasim"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a workload under the configured defense");
  std::string sim_config, sim_trace, sim_out;
  std::optional<std::uint64_t> sim_seed;
  SynthFlags sim_synth;
  sim->add_option("--config", sim_config, "Run config (JSON)")->required();
  sim->add_option("--trace", sim_trace, "Trace file; without it a synthetic workload is generated");
  sim->add_option("--out", sim_out, "Report path (default: stdout)");
  sim->add_option("--seed", sim_seed, "Overrides the config seed");
  sim_synth.attach(sim);

  // probe
  auto* probe = app.add_subcommand("probe", "Classify CDA capability for a preset");
  std::string probe_model, probe_map, probe_out;
  Pid probe_pid = 1;
  probe->add_option("--model", probe_model, "Preset: google, nxp, hailo, ti, nvidia, aws, rknpu")->required();
  probe->add_option("--map", probe_map, "Memory map (JSON); default is a built-in synthetic map");
  probe->add_option("--pid", probe_pid, "Attacker pid");
  probe->add_option("--out", probe_out, "Report path");

  // synth
  auto* syn = app.add_subcommand("synth", "Emit a synthetic trace");
  SynthFlags syn_flags;
  std::string syn_out;
  std::uint64_t syn_seed = 0;
  syn_flags.attach(syn);
  syn->add_option("--seed", syn_seed, "Generator seed");
  syn->add_option("--out", syn_out, "Trace path (default: stdout)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "IOTLB size/miss-latency sweep against the validator");
  std::string sweep_spec, sweep_dir;
  unsigned jobs = 1;
  sweep->add_option("--spec", sweep_spec, "Sweep spec (JSON)")->required();
  sweep->add_option("--out-dir", sweep_dir, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Concurrent points")->check(CLI::PositiveNumber);

  // derive-latency
  auto* derive = app.add_subcommand("derive-latency", "Validation round-trip latency from its parts");
  std::uint64_t pagewalk_ns = 125, irq_ns = 4121, freq_hz = 100'000'000;
  derive->add_option("--pagewalk-ns", pagewalk_ns, "Host page-table walk");
  derive->add_option("--irq-ns", irq_ns, "One-way interrupt latency");
  derive->add_option("--freq-hz", freq_hz, "Accelerator clock for the cycle count")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "aiasim: error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*sim) {
      const RunConfig rc = load_config_file(sim_config);
      const std::uint64_t seed = sim_seed.value_or(rc.seed);
      Workload w;
      Json echo = rc.echo;
      if (!sim_trace.empty()) {
        w = load_trace(sim_trace, rc.pid);
        echo["workload"] = {{"trace", sim_trace}};
      } else {
        SynthParams p = sim_synth.params();
        p.pid = rc.pid;
        w = synth(p, seed);
        echo["workload"] = {{"synth", synth_to_json(p)}};
      }
      const SimResult r = run(w, rc.sim);
      emit(sim_out, dump(sim_report(echo, seed, r)), out);
      if (!sim_out.empty() && sim_out != "-")
        out << "baseline_ticks=" << r.baseline_ticks << " protected_ticks=" << r.protected_ticks
            << " overhead_pct=" << format_pct(r.overhead_pct) << " validations=" << r.validations << "\n";
    } else if (*probe) {
      const auto preset = find_preset(probe_model);
      if (!preset) throw ConfigError("unknown preset '" + probe_model + "'");
      const CdaProbe p(load_map(probe_map), *preset, probe_pid);
      const ProbeReport rep = p.classify();
      if (!probe_out.empty()) write_file_atomic(probe_out, dump(probe_report(p, rep)));
      out << format_class(rep.cls) << "\n";
    } else if (*syn) {
      emit(syn_out, format_trace(synth(syn_flags.params(), syn_seed)), out);
    } else if (*sweep) {
      const std::filesystem::path spec_path(sweep_spec);
      const SweepSpec spec = load_sweep_spec(read_json_file(spec_path), spec_path.parent_path());
      const auto rows = run_sweep(spec, jobs);
      write_sweep(rows, sweep_dir);
      out << rows.size() << " points written to " << sweep_dir << "\n";
    } else if (*derive) {
      const std::uint64_t ns = derive_validation_latency_ns(pagewalk_ns, irq_ns);
      out << "kernelValidationLatency: " << ns << " ns\n";
      out << "ticks: " << with_commas(ns_to_ticks(ns)) << " ticks\n";
      out << "cycles @ " << freq_hz << " Hz: " << rational_to_string(ns_to_cycles(ns, freq_hz)) << " cycles\n";
      out << "pagewalk cycles @ " << freq_hz << " Hz: " << rational_to_string(ns_to_cycles(pagewalk_ns, freq_hz))
          << " cycles\n";
    }
  } catch (const TraceError& e) {
    err << "aiasim: trace error: " << e.what() << "\n";
    return kExitTrace;
  } catch (const ConfigError& e) {
    err << "aiasim: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "aiasim: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace aiasim::cli
