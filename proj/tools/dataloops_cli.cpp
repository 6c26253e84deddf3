// dataloops: command-line front end.  Every subcommand reads the same flat
// config (--config, then --density-spec, then --set, then --seed/--sampler/--nfe)
// and derives all randomness from the resulting seed.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "dataloops/dataloops.hpp"

namespace fs = std::filesystem;
using namespace dataloops;

namespace {

struct Globals {
  std::string config;
  std::string density_spec;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string sampler;
  int nfe = 0;
};

RunConfig load_config(const Globals& g) {
  RunConfig c;
  if (!g.config.empty()) {
    auto f = open_in(g.config);
    c.merge(f, g.config);
  }
  if (!g.density_spec.empty()) {
    auto f = open_in(g.density_spec);
    c.merge(f, g.density_spec);
  }
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw FormatError("--set expects key=value, got '" + kv + "'");
    c.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), "--set");
  }
  if (g.seed) c.set("seed", std::to_string(*g.seed), "--seed");
  if (!g.sampler.empty()) c.set("sampler.kind", g.sampler, "--sampler");
  if (g.nfe > 0) c.set("sampler.nfe", std::to_string(g.nfe), "--nfe");
  c.validate();
  return c;
}

void write_dataset_file(const std::string& path, const NoisyDataset& d, const Schedule& s) {
  auto f = open_out(path);
  write_dataset(f, d, s);
}

void write_points_file(const std::string& path, const SampleMatrix& x) {
  auto f = open_out(path);
  write_points(f, x);
}

SampleMatrix read_points_file(const std::string& path) {
  auto f = open_in(path);
  return read_points(f);
}

DatasetFile read_dataset_file(const std::string& path) {
  auto f = open_in(path);
  try {
    return read_dataset(f);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

MlpDenoiser read_model(const std::string& path) {
  auto f = open_in(path, true);
  try {
    return read_checkpoint(f);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_model(const std::string& path, const MlpDenoiser& m) {
  auto f = open_out(path, true);
  write_checkpoint(f, m);
}

void write_reports(const std::string& path, const std::vector<LoopReport>& rows, bool timing) {
  auto f = open_out(path);
  write_report_csv(f, rows, timing);
}

std::string help_footer() {
  std::ostringstream os;
  os << "Config keys (key = value, '#' comments; defaults shown):\n";
  for (const auto& k : config_keys()) {
    std::string def = k.default_value;
    if (def.empty()) def = "(empty)";
    os << "  " << k.key << " = " << def << "\n      " << k.help << '\n';
  }
  os << "  density.<name>.weights / .means / .variances\n"
     << "      Gaussian mixture: weights w1,w2,..  means x1,y1;x2,y2;..  variances v1,v2,..\n";
  return os.str();
}

// Held-out truth from the config; conditional metrics from d0's clean_ref rows.
EvalSpec eval_spec_for(const RunConfig& rc, const NoisyDataset& d0) { return suite_eval_spec(rc.suite(), d0, rc.seed()); }

std::string report_row(const LoopReport& r) {
  std::ostringstream os;
  os << "loop " << r.loop << ": sw2 " << format_double(r.sw2) << "  cond_mse " << format_double(r.cond_mse)
     << "  cond_sw2 " << format_double(r.cond_sw2) << "  |D| " << r.dataset_size;
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dataloops: ambient diffusion trained in loops on its own restorations"};
  app.require_subcommand(1);
  app.footer(help_footer());
  Globals g;
  app.add_option("--config", g.config, "config file (flat key = value)");
  app.add_option("--density-spec", g.density_spec, "extra config file holding density.<name>.* keys");
  app.add_option("--set", g.sets, "override a config key, key=value (repeatable)");
  app.add_option("--seed", g.seed, "global seed (overrides the config)");
  app.add_option("--sampler", g.sampler, "restoration/sampling sampler: ode_heun | sde_euler");
  app.add_option("--nfe", g.nfe, "denoiser evaluations per sample")->check(CLI::PositiveNumber);
  app.fallthrough();

  auto* version = app.add_subcommand("version", "print the version");

  auto* config_cmd = app.add_subcommand("config", "print every config key with its effective value");

  std::string out, out_dir, data, model_path, init_path, clean_path, corrupt_path, refs_path, density_name;
  std::size_t count = 0;
  int loop_index = -1;

  auto* gen = app.add_subcommand("gen-data", "draw the reference benchmark (or samples of a config density)");
  gen->add_option("--out-dir", out_dir, "benchmark: writes clean.csv, corrupt.csv, corrupt_refs.csv");
  gen->add_option("--density", density_name, "sample density.<NAME> instead");
  gen->add_option("--count", count, "samples to draw from --density");
  gen->add_option("--out", out, "output points file for --density");

  auto* annotate = app.add_subcommand("annotate", "fit the time classifier, annotate and noise the corrupt points");
  annotate->add_option("--clean", clean_path, "clean points")->required();
  annotate->add_option("--corrupt", corrupt_path, "corrupt points")->required();
  annotate->add_option("--refs", refs_path, "uncorrupted references of the corrupt points (optional)");
  annotate->add_option("--out", out, "output dataset")->required();

  auto* train_cmd = app.add_subcommand("train", "train a denoiser on a dataset");
  train_cmd->add_option("--data", data, "dataset file")->required();
  train_cmd->add_option("--out", out, "output checkpoint")->required();
  train_cmd->add_option("--init", init_path, "warm-start checkpoint (fine-tuning budget)");
  train_cmd->add_option("--loop", loop_index, "loop index for the training stream (default 0, or 1 with --init)");

  auto* restore = app.add_subcommand("restore", "restore a dataset to lower noise with a trained model");
  restore->add_option("--model", model_path, "checkpoint")->required();
  restore->add_option("--data", data, "source dataset (D0, or the previous loop's for restore_source=previous)")->required();
  restore->add_option("--loop", loop_index, "loop index l >= 1")->required();
  restore->add_option("--out", out, "output dataset")->required();

  auto* loop = app.add_subcommand("loop", "the full train/restore loop");
  loop->require_subcommand(1);
  auto* loop_run = loop->add_subcommand("run", "loops 0..loop.L; writes reports/loop_<l>.csv and datasets/d<l>.csv");
  loop_run->add_option("--out-dir", out_dir, "output directory")->default_val(".");
  loop_run->add_option("--data", data, "initial dataset (default: annotated reference benchmark)");
  bool save_models = false;
  loop_run->add_flag("--checkpoints", save_models, "also write models/m<l>.ckpt");
  auto* loop_suite = loop->add_subcommand("suite", "the reference study: shared loop 0, chains per suite.rhos, k variant");
  loop_suite->add_option("--out-dir", out_dir, "output directory")->default_val(".");
  std::size_t seeds = 0;
  loop_suite->add_option("--seeds", seeds, "number of seeds (default suite.seeds), starting at --seed");

  auto* sample = app.add_subcommand("sample", "generate samples from a checkpoint");
  sample->add_option("--model", model_path, "checkpoint")->required();
  sample->add_option("--count", count, "number of samples")->required();
  sample->add_option("--out", out, "output points file")->required();

  auto* eval = app.add_subcommand("eval", "score a checkpoint (loop report) or compare two point sets (SW2)");
  std::string samples_path, reference_path;
  eval->add_option("--model", model_path, "checkpoint to score");
  eval->add_option("--data", data, "dataset whose clean_ref rows feed the conditional metrics");
  eval->add_option("--samples", samples_path, "points file");
  eval->add_option("--reference", reference_path, "points file compared with --samples");
  eval->add_option("--out", out, "report CSV (default: stdout)");

  auto* theory = app.add_subcommand("theory", "closed-form bounds and Gaussian checks");
  theory->require_subcommand(1);
  auto* bounds = theory->add_subcommand("bounds", "error bounds of learning from clean only (A) or clean + biased (B)");
  BoundParams bp;
  bp.n1 = 100;
  bounds->add_option("--n1", bp.n1, "clean samples")->capture_default_str();
  bounds->add_option("--n2", bp.n2, "biased samples")->capture_default_str();
  bounds->add_option("--lambda1", bp.lambda1, "Lipschitz constant of the clean score")->capture_default_str();
  bounds->add_option("--lambda2", bp.lambda2, "Lipschitz constant of the biased score")->capture_default_str();
  bounds->add_option("--delta", bp.delta, "failure probability")->capture_default_str();
  bounds->add_option("--sigma-t", bp.sigma_t, "noise level")->capture_default_str();
  bounds->add_option("--dtv0", bp.dtv0, "TV distance between clean and biased at t = 0")->capture_default_str();

  auto* lemma2 = theory->add_subcommand("lemma2", "KL to p_t of q_t before and after noise-to-t' and reverse to t");
  double p0_var = 1.0, q0_mean = 1.0, q0_var = 0.5, t = 1.0, t_prime = 2.0;
  int resolution = 4000;
  std::string form = "variance_exploding";
  lemma2->add_option("--p0-var", p0_var)->capture_default_str();
  lemma2->add_option("--q0-mean", q0_mean)->capture_default_str();
  lemma2->add_option("--q0-var", q0_var)->capture_default_str();
  lemma2->add_option("--t", t)->capture_default_str();
  lemma2->add_option("--t-prime", t_prime)->capture_default_str();
  lemma2->add_option("--resolution", resolution, "integration steps")->capture_default_str();
  lemma2->add_option("--form", form, "variance_exploding | stylized")->capture_default_str();

  auto* dpi = theory->add_subcommand("dpi", "TV between two 1-D densities before and after the noise/reverse channel");
  std::string p0_name, q0_name;
  std::size_t dpi_samples = 20000;
  int dpi_steps = 200;
  dpi->add_option("--p0", p0_name, "density name (density.<NAME>.* in the config)")->required();
  dpi->add_option("--q0", q0_name, "density name")->required();
  dpi->add_option("--t", t)->capture_default_str();
  dpi->add_option("--t-prime", t_prime)->capture_default_str();
  dpi->add_option("--samples", dpi_samples)->capture_default_str();
  dpi->add_option("--steps", dpi_steps)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (version->parsed()) {
      std::cout << "dataloops " << kVersion << '\n';
      return 0;
    }
    const RunConfig rc = load_config(g);
    const std::uint64_t seed = rc.seed();
    const bool timing = rc.get_bool("report.timing");

    if (config_cmd->parsed()) {
      std::cout << rc.dump();
    } else if (gen->parsed()) {
      if (!density_name.empty()) {
        if (out.empty() || count == 0) throw FormatError("gen-data --density needs --count and --out");
        Rng rng = Rng::derive(seed, "gen-data");
        write_points_file(out, rc.density(density_name).sample(count, rng));
      } else {
        if (out_dir.empty()) throw FormatError("gen-data needs --out-dir (or --density with --out)");
        fs::create_directories(out_dir);
        Rng rng = Rng::derive(seed, "benchmark");
        const BenchmarkData b = make_benchmark(rc.benchmark(), rng);
        write_points_file((fs::path(out_dir) / "clean.csv").string(), b.clean);
        write_points_file((fs::path(out_dir) / "corrupt.csv").string(), b.corrupt);
        write_points_file((fs::path(out_dir) / "corrupt_refs.csv").string(), b.corrupt_refs);
        std::cout << "clean " << b.clean.rows() << ", corrupt " << b.corrupt.rows() << '\n';
      }
    } else if (annotate->parsed()) {
      BenchmarkData b;
      b.clean = read_points_file(clean_path);
      b.corrupt = read_points_file(corrupt_path);
      if (!refs_path.empty()) b.corrupt_refs = read_points_file(refs_path);
      const Schedule schedule = rc.schedule();
      Rng rng = Rng::derive(seed, "annotate");
      const AnnotatedBenchmark ab = annotate_benchmark(b, schedule, rc.annotation(), rng);
      write_dataset_file(out, ab.dataset, schedule);
      std::size_t fell_back = 0;
      double mean = 0.0;
      for (const auto& a : ab.annotations) {
        fell_back += a.fell_back_to_horizon ? 1 : 0;
        mean += a.t;
      }
      if (!ab.annotations.empty()) mean /= static_cast<double>(ab.annotations.size());
      std::cout << "mean anchor " << format_double(mean) << ", fell back to T: " << fell_back << " of "
                << ab.annotations.size() << '\n';
    } else if (train_cmd->parsed()) {
      const DatasetFile df = read_dataset_file(data);
      const LoopConfig lc = rc.loop();
      const int l = loop_index >= 0 ? loop_index : (init_path.empty() ? 0 : 1);
      TrainConfig tc = lc.train;
      MlpDenoiser model = [&] {
        if (!init_path.empty()) {
          tc.steps = static_cast<std::size_t>(std::llround(lc.later_steps_fraction * static_cast<double>(tc.steps)));
          return read_model(init_path);
        }
        Rng init = Rng::derive(seed, "init");
        return MlpDenoiser::random(df.dataset.dim, lc.model.hidden, df.schedule, init, lc.model.sigma_data,
                                   lc.model.output);
      }();
      df.dataset.validate(df.schedule);
      Rng rng = Rng::derive(seed, "train", {static_cast<std::uint64_t>(l)});
      const TrainResult r = train(std::move(model), df.dataset, tc, rng);
      write_model(out, r.model);
      if (!r.loss_trace.empty()) std::cout << "final loss " << format_double(r.loss_trace.back()) << '\n';
    } else if (restore->parsed()) {
      const DatasetFile df = read_dataset_file(data);
      const MlpDenoiser model = read_model(model_path);
      const NoisyDataset next = restore_dataset(model, df.dataset, loop_index, rc.loop());
      write_dataset_file(out, next, df.schedule);
      std::cout << "restored " << next.size() - next.clean_count() << " noisy rows, " << next.size() << " total\n";
    } else if (loop_run->parsed()) {
      const SuiteConfig sc = rc.suite();
      const Schedule schedule = rc.schedule();
      NoisyDataset d0;
      Schedule data_schedule = schedule;
      if (!data.empty()) {
        DatasetFile df = read_dataset_file(data);
        d0 = std::move(df.dataset);
        data_schedule = df.schedule;
      } else {
        d0 = suite_dataset(sc, schedule, seed).d0;
      }
      const EvalSpec ev = eval_spec_for(rc, d0);
      const fs::path root(out_dir);
      fs::create_directories(root / "reports");
      fs::create_directories(root / "datasets");
      if (save_models) fs::create_directories(root / "models");
      const auto reports = run_dataloop(rc.loop(), d0, data_schedule, &ev, [&](const LoopState& st) {
        const std::string l = std::to_string(st.l);
        write_dataset_file((root / "datasets" / ("d" + l + ".csv")).string(), st.dataset, data_schedule);
        write_reports((root / "reports" / ("loop_" + l + ".csv")).string(), {st.report}, timing);
        if (save_models) write_model((root / "models" / ("m" + l + ".ckpt")).string(), st.model);
        std::cout << report_row(st.report) << std::endl;
      });
      write_reports((root / "reports" / "summary.csv").string(), reports, timing);
    } else if (loop_suite->parsed()) {
      SuiteConfig sc = rc.suite();
      const std::size_t n = seeds > 0 ? seeds : rc.get_count("suite.seeds");
      const fs::path root(out_dir);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t s = seed + i;
        const SuiteResult r = run_suite_seed(sc, s);
        const fs::path dir = root / "reports" / ("seed_" + std::to_string(s));
        fs::create_directories(dir);
        for (const auto& [rho, chain] : r.chains) {
          std::vector<LoopReport> rows{r.loop0};
          rows.insert(rows.end(), chain.begin(), chain.end());
          write_reports((dir / ("rho_" + rho_to_string(rho) + ".csv")).string(), rows, timing);
        }
        write_reports((dir / ("k_" + std::to_string(sc.k_variant) + ".csv")).string(), {r.loop0, r.k_variant}, timing);
        std::cout << "seed " << s << ": anchor " << format_double(r.anchor) << ", loop 0 sw2 " << format_double(r.loop0.sw2)
                  << std::endl;
      }
    } else if (sample->parsed()) {
      const MlpDenoiser model = read_model(model_path);
      write_points_file(out, generate(model, count, rc.sampler(), Rng::derive(seed, "sample").next_u64()));
    } else if (eval->parsed()) {
      if (!samples_path.empty()) {
        if (reference_path.empty()) throw FormatError("eval --samples needs --reference");
        Rng dirs = Rng::derive(seed, "eval-directions");
        const double v = sliced_w2(read_points_file(samples_path), read_points_file(reference_path),
                                   rc.get_count("eval.projections"), dirs);
        std::cout << "sw2 " << format_double(v) << '\n';
      } else {
        if (model_path.empty()) throw FormatError("eval needs --model or --samples/--reference");
        const MlpDenoiser model = read_model(model_path);
        NoisyDataset d;
        d.dim = model.dim();
        if (!data.empty()) d = read_dataset_file(data).dataset;
        const EvalSpec ev = eval_spec_for(rc, d);
        LoopReport r = evaluate_model(model, std::max(loop_index, 0), ev, d.size());
        if (out.empty()) {
          write_report_csv(std::cout, {r}, false);
        } else {
          write_reports(out, {r}, false);
          std::cout << report_row(r) << '\n';
        }
      }
    } else if (bounds->parsed()) {
      std::printf("alg_a %.6f\n", bound_alg_a(bp));
      if (bp.n2 > 0.0) {
        std::printf("alg_b %.6f\n", bound_alg_b(bp));
        std::printf("prefers_b %s\n", prefers_b(bp) ? "true" : "false");
      }
    } else if (lemma2->parsed()) {
      const Lemma2Result r = lemma2_gaussian(p0_var, q0_mean, q0_var, t, t_prime, resolution, sde_form_from_string(form));
      std::printf("kl_q_t %.9g\nkl_rho_t %.9g\ncontraction_ratio %.9g\nrho_mean %.9g\nrho_var %.9g\n", r.kl_q_t,
                  r.kl_rho_t, r.contraction_ratio, r.rho_mean, r.rho_var);
    } else if (dpi->parsed()) {
      const DpiResult r = dpi_check(rc.density(p0_name), rc.density(q0_name), t, t_prime, dpi_samples, seed, dpi_steps);
      std::printf("tv_before %.9g\ntv_after %.9g\n", r.tv_before, r.tv_after);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
