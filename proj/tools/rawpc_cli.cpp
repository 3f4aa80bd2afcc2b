// rawpc: architecture search, training and evaluation from the command line.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "rawpc/checkpoint.hpp"
#include "rawpc/config.hpp"
#include "rawpc/data_io.hpp"
#include "rawpc/error.hpp"
#include "rawpc/metrics.hpp"
#include "rawpc/trainer.hpp"

namespace fs = std::filesystem;
using namespace rawpc;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct Common {
  std::string config;
  std::string out;
  std::size_t workers = 0;
  bool print_config = false;
};

RunConfig load_run_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : read_config(c.config);
  if (c.workers > 0) cfg.workers = c.workers;
  if (!c.out.empty()) cfg.out_dir = c.out;
  const fs::path base = c.config.empty() ? fs::path(".") : fs::path(c.config).parent_path();
  for (std::string* p : {&cfg.train_protocol, &cfg.train_wav_dir, &cfg.dev_protocol, &cfg.dev_wav_dir}) {
    if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  cfg.validate();
  return cfg;
}

std::vector<Utterance> load_split(const std::string& protocol, const std::string& wav_dir, const RunConfig& cfg) {
  if (protocol.empty() || wav_dir.empty()) throw ConfigError("config must name both a protocol and a WAV directory");
  const auto entries = parse_protocol(protocol);
  return load_dataset(entries, wav_dir, cfg.model.input_length,
                      static_cast<std::uint32_t>(cfg.model.frontend.sample_rate), cfg.workers);
}

void write_text(const fs::path& path, const std::string& text, bool append = false) {
  std::ofstream out(path, append ? std::ios::app | std::ios::binary : std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string alpha_text(std::span<const double> normal, std::span<const double> expand) {
  std::string s;
  char buf[40];
  for (auto [name, table] : {std::pair{"normal", normal}, std::pair{"expand", expand}}) {
    s += std::string("# ") + name + " (rows: edges, columns: none skip conv3 conv5 dilconv3 dilconv5 maxpool3 avgpool3)\n";
    for (std::size_t e = 0; e < kCellEdges; ++e) {
      for (std::size_t o = 0; o < kNumOps; ++o) {
        std::snprintf(buf, sizeof buf, "%s%.17g", o ? " " : "", table[e * kNumOps + o]);
        s += buf;
      }
      s += "\n";
    }
  }
  return s;
}

int cmd_synth(const fs::path& out, std::size_t n_per_class, std::uint64_t seed, double rate, double duration) {
  SynthConfig sc;
  sc.sample_rate = rate;
  sc.duration_s = duration;
  Rng rng(seed);
  const auto data = synth_task(rng, n_per_class, sc);
  export_dataset(out, data, static_cast<std::uint32_t>(rate));
  std::uint64_t h = fnv1a64({});
  for (const auto& u : data) {
    std::ifstream in(out / (u.id + ".wav"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a64({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()}, h);
  }
  std::printf("utterances %zu\nduration_s %.6g\nsample_rate %.6g\nchecksum %016llx\n", data.size(), duration, rate,
              static_cast<unsigned long long>(h));
  return kOk;
}

int cmd_search(const Common& c, const std::string& resume, std::size_t stop_after) {
  const RunConfig cfg = load_run_config(c);
  if (c.print_config) {
    std::cout << format_config(cfg);
    return kOk;
  }
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "alpha");
  const auto train = load_split(cfg.train_protocol, cfg.train_wav_dir, cfg);
  const auto dev = load_split(cfg.dev_protocol, cfg.dev_wav_dir, cfg);
  SearchRun run = resume.empty() ? SearchRun(cfg, train, dev) : SearchRun::resume(Checkpoint::load(resume), train, dev);
  if (resume.empty()) {
    write_text(out / "search.log", log_header());
    write_text(out / "config.txt", format_config(run.config()));
  }
  std::size_t ran = 0;
  while (!run.done() && (stop_after == 0 || ran < stop_after)) {
    const EpochStats st = run.run_epoch();
    ++ran;
    write_text(out / "search.log", format_log_line(st), true);
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.txt", st.epoch);
    write_text(out / "alpha" / name, alpha_text(run.alpha_normal_history().back(), run.alpha_expand_history().back()));
    run.checkpoint().save(out / "search_state.ckpt");
    std::cout << format_log_line(st) << std::flush;
  }
  if (run.done()) {
    write_genotype(out / "genotype.txt", run.selected_genotype());
    std::cout << "selected epoch " << run.selected_epoch() << "\n" << format_genotype(run.selected_genotype());
  }
  return kOk;
}

int cmd_train(const Common& c, const std::string& genotype_path, const std::string& search_ckpt,
              const std::string& resume, std::size_t stop_after) {
  const RunConfig cfg = load_run_config(c);
  if (c.print_config) {
    std::cout << format_config(cfg);
    return kOk;
  }
  if (resume.empty() && genotype_path.empty()) throw CLI::RequiredError("--genotype");
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const auto train = load_split(cfg.train_protocol, cfg.train_wav_dir, cfg);
  const auto dev = load_split(cfg.dev_protocol, cfg.dev_wav_dir, cfg);
  std::optional<Checkpoint> search_state;
  if (!search_ckpt.empty()) search_state = Checkpoint::load(search_ckpt);
  ScratchRun run = resume.empty()
                       ? ScratchRun(cfg, read_genotype(genotype_path), train, dev, search_state ? &*search_state : nullptr)
                       : ScratchRun::resume(Checkpoint::load(resume), train, dev);
  if (resume.empty()) {
    write_text(out / "train.log", log_header());
    write_text(out / "config.txt", format_config(run.config()));
  }
  std::size_t ran = 0;
  while (!run.done() && (stop_after == 0 || ran < stop_after)) {
    const EpochStats st = run.run_epoch();
    ++ran;
    write_text(out / "train.log", format_log_line(st), true);
    run.checkpoint().save(out / "last.ckpt");
    run.best_checkpoint().save(out / "best.ckpt");
    std::cout << format_log_line(st) << std::flush;
  }
  if (run.done()) std::cout << "best epoch " << run.best_epoch() << "\n";
  return kOk;
}

int cmd_eval(const std::string& ckpt, const std::string& protocol, const std::string& wav_dir, const std::string& out,
             const std::string& tdcf_config, std::size_t workers) {
  RunConfig cfg;
  Model model = load_model(Checkpoint::load(ckpt), &cfg);
  if (workers > 0) cfg.workers = workers;
  const auto data = load_split(protocol, wav_dir, cfg);
  const EvalResult r = evaluate(model, data, cfg.scratch.batch);
  write_scores(out, r.scores);
  const auto records = read_scores(out);
  AttackReport rep = per_attack_report(records);
  if (!tdcf_config.empty()) rep.tdcf = compute_min_tdcf(records, read_tdcf_costs(tdcf_config));
  write_text(out + ".report.tsv", format_report_tsv(rep));
  std::cout << format_report(rep);
  return kOk;
}

int cmd_param_count(const Common& c, const std::string& genotype_path) {
  const RunConfig cfg = load_run_config(c);
  if (c.print_config) {
    std::cout << format_config(cfg);
    return kOk;
  }
  const Genotype g = genotype_path.empty() ? reference_genotype() : read_genotype(genotype_path);
  Rng rng(cfg.seed);
  Model m = Model::discrete(cfg.model, g, rng);
  const ParamCount pc = m.count_params();
  std::printf("%-10s %12s\n", "subsystem", "params");
  std::printf("%-10s %12zu\n", "frontend", pc.frontend);
  std::printf("%-10s %12zu\n", "stem", pc.stem);
  std::printf("%-10s %12zu\n", "cells", pc.cells);
  std::printf("%-10s %12zu\n", "gru", pc.gru);
  std::printf("%-10s %12zu\n", "fc+head", pc.fc_head);
  std::printf("%-10s %12zu\n", "total", pc.total);
  if (genotype_path.empty()) std::printf("(cells use the built-in reference genotype)\n");
  return kOk;
}

void add_common(CLI::App* cmd, Common& c, bool with_out) {
  cmd->add_option("--config", c.config, "key = value run configuration")->check(CLI::ExistingFile);
  if (with_out) cmd->add_option("--out", c.out, "output directory (overrides out_dir)");
  cmd->add_option("--workers", c.workers, "parallel WAV decoders");
  cmd->add_flag("--print-config", c.print_config, "print the resolved configuration and exit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rawpc: partial-channel architecture search for raw-waveform spoofing countermeasures"};
  app.require_subcommand(1);

  std::string out_dir;
  std::size_t n_per_class = 10;
  std::uint64_t seed = 1;
  double rate = 16000.0;
  std::optional<double> duration;
  auto* synth = app.add_subcommand("synth-data", "write a synthetic harmonic dataset as WAV files plus a protocol");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--n-per-class", n_per_class, "utterances per class");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--toy-rate", rate, "sample rate in Hz (default 16000)");
  synth->add_option("--duration", duration, "seconds per utterance (default 4, or 1 with --toy-rate)");

  Common search_c, train_c, count_c;
  std::string resume, genotype, search_ckpt;
  std::size_t stop_after = 0;
  auto* search = app.add_subcommand("search", "bi-level architecture search");
  add_common(search, search_c, true);
  search->add_option("--resume", resume, "continue from a search_state.ckpt")->check(CLI::ExistingFile);
  search->add_option("--stop-after", stop_after, "stop after this many epochs in this invocation");

  auto* train = app.add_subcommand("train", "train a discrete model from scratch");
  add_common(train, train_c, true);
  train->add_option("--genotype", genotype, "genotype file")->check(CLI::ExistingFile);
  train->add_option("--search-checkpoint", search_ckpt, "search state providing the post-search frontend filters")
      ->check(CLI::ExistingFile);
  train->add_option("--resume", resume, "continue from a last.ckpt")->check(CLI::ExistingFile);
  train->add_option("--stop-after", stop_after, "stop after this many epochs in this invocation");

  std::string ckpt, protocol, wav_dir, scores_out, tdcf;
  std::size_t eval_workers = 0;
  auto* eval = app.add_subcommand("eval", "score a protocol and report EER and min t-DCF");
  eval->add_option("--checkpoint", ckpt, "model checkpoint (best.ckpt)")->required()->check(CLI::ExistingFile);
  eval->add_option("--protocol", protocol, "protocol file")->required()->check(CLI::ExistingFile);
  eval->add_option("--wav-dir", wav_dir, "directory of WAV files")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", scores_out, "score file to write")->required();
  eval->add_option("--tdcf-config", tdcf, "t-DCF cost configuration")->check(CLI::ExistingFile);
  eval->add_option("--workers", eval_workers, "parallel WAV decoders");

  auto* count = app.add_subcommand("param-count", "print per-subsystem parameter counts");
  add_common(count, count_c, false);
  count->add_option("--genotype", genotype, "genotype file (default: built-in reference)")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(out_dir, n_per_class, seed, rate, duration.value_or(synth->count("--toy-rate") ? 1.0 : 4.0));
    if (search->parsed()) return cmd_search(search_c, resume, stop_after);
    if (train->parsed()) return cmd_train(train_c, genotype, search_ckpt, resume, stop_after);
    if (eval->parsed()) return cmd_eval(ckpt, protocol, wav_dir, scores_out, tdcf, eval_workers);
    if (count->parsed()) return cmd_param_count(count_c, genotype);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
