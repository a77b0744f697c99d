// Command-line front end: corrupt images, run classical filters or the
// self-supervised denoiser, evaluate outputs, and produce benchmark reports.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>

#include "CLI11.hpp"
#include "sss/bench.hpp"
#include "sss/checkpoint.hpp"
#include "sss/filters.hpp"
#include "sss/image.hpp"
#include "sss/metrics.hpp"
#include "sss/noise.hpp"
#include "sss/self2self.hpp"

namespace {

using ConfigMap = std::map<std::string, std::string>;

// plain key=value lines; '#' starts a comment, blank lines are skipped
ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  ConfigMap cfg;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
    cfg[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

// Precedence: built-in default < config file < explicit flag. Values from the
// config only land where the command line stayed silent. Keys that don't
// belong to the active subcommand are ignored so one file can serve several.
template <typename V>
void cfg_apply(const ConfigMap& cfg, const CLI::App& cmd, const std::string& key, V& var) {
  const auto it = cfg.find(key);
  if (it == cfg.end()) return;
  if (cmd.count("--" + key) > 0) return;
  if constexpr (std::is_same_v<V, std::string>) {
    var = it->second;
  } else if constexpr (std::is_same_v<V, bool>) {
    const std::string& s = it->second;
    if (s == "1" || s == "true") var = true;
    else if (s == "0" || s == "false") var = false;
    else throw std::runtime_error("config key '" + key + "': expected a boolean, got '" + s + "'");
  } else {
    std::istringstream ss(it->second);
    ss >> var;
    if (ss.fail() || !ss.eof())
      throw std::runtime_error("config key '" + key + "': cannot parse '" + it->second + "'");
  }
}

void require_value(const std::string& v, const char* flag) {
  if (v.empty()) throw std::runtime_error(std::string("missing required option ") + flag);
}

std::string format_metric(const std::optional<double>& v, const char* note) {
  if (!v) return note;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

// --- noise ------------------------------------------------------------

struct NoiseArgs {
  std::string in, out, noise, config;
  std::uint64_t seed = 1;
};

void setup_noise(CLI::App& app, NoiseArgs& a) {
  CLI::App* cmd = app.add_subcommand("noise", "corrupt a clean image with synthetic noise");
  cmd->add_option("--in", a.in, "clean input image (PGM)");
  cmd->add_option("--out", a.out, "noisy output image (PGM)");
  cmd->add_option("--noise", a.noise, "noise spec, e.g. gaussian:0.1, salt-pepper:0.1, speckle:0.2");
  cmd->add_option("--seed", a.seed, "noise rng seed");
  cmd->add_option("--config", a.config, "key=value config file");
  cmd->callback([cmd, &a] {
    ConfigMap cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config);
    cfg_apply(cfg, *cmd, "in", a.in);
    cfg_apply(cfg, *cmd, "out", a.out);
    cfg_apply(cfg, *cmd, "noise", a.noise);
    cfg_apply(cfg, *cmd, "seed", a.seed);
    require_value(a.in, "--in");
    require_value(a.out, "--out");
    require_value(a.noise, "--noise");
    sss::NoiseSpec spec = sss::parse_noise_spec(a.noise);
    spec.seed = a.seed;
    sss::save_pgm(sss::apply_noise(sss::load_pgm(a.in), spec), a.out);
  });
}

// --- filter -----------------------------------------------------------

struct FilterArgs {
  std::string in, out, filter, config;
};

void setup_filter(CLI::App& app, FilterArgs& a) {
  CLI::App* cmd = app.add_subcommand("filter", "apply one classical filter");
  cmd->add_option("--in", a.in, "noisy input image (PGM)");
  cmd->add_option("--out", a.out, "filtered output image (PGM)");
  cmd->add_option("--filter", a.filter,
                  "filter spec: mean:k, median:k, wiener:k, bilateral:r,ss,sr");
  cmd->add_option("--config", a.config, "key=value config file");
  cmd->callback([cmd, &a] {
    ConfigMap cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config);
    cfg_apply(cfg, *cmd, "in", a.in);
    cfg_apply(cfg, *cmd, "out", a.out);
    cfg_apply(cfg, *cmd, "filter", a.filter);
    require_value(a.in, "--in");
    require_value(a.out, "--out");
    require_value(a.filter, "--filter");
    sss::save_pgm(sss::apply_filter(sss::load_pgm(a.in), sss::parse_filter_spec(a.filter)),
                  a.out);
  });
}

// --- denoise ----------------------------------------------------------

struct DenoiseArgs {
  std::string in, out, save_model, load_model, config;
  int iters = 5000;
  std::uint64_t seed = 1;
  double keep_prob = 0.7;
  double dropout = 0.3;
  double lr = 1e-4;
  double alpha = 0.1;
  int channels_enc = 48;
  int channels_dec = 96;
  int ensemble = 50;
  int log_every = 100;
  bool literal_loss = false;
};

void setup_denoise(CLI::App& app, DenoiseArgs& a) {
  CLI::App* cmd =
      app.add_subcommand("denoise", "train the self-supervised net on one image and restore it");
  cmd->add_option("--in", a.in, "noisy input image (PGM)");
  cmd->add_option("--out", a.out, "denoised output image (PGM)");
  cmd->add_option("--iters", a.iters, "training iterations");
  cmd->add_option("--seed", a.seed, "master seed (weights, pairs, dropout, prediction)");
  cmd->add_option("--keep-prob", a.keep_prob, "Bernoulli keep probability");
  cmd->add_option("--dropout", a.dropout, "decoder dropout rate");
  cmd->add_option("--lr", a.lr, "Adam learning rate");
  cmd->add_option("--alpha", a.alpha, "leaky ReLU slope");
  cmd->add_option("--channels-enc", a.channels_enc, "encoder channels");
  cmd->add_option("--channels-dec", a.channels_dec, "decoder channels");
  cmd->add_option("--ensemble", a.ensemble, "prediction ensemble size");
  cmd->add_option("--log-every", a.log_every, "loss logging period (stderr)");
  cmd->add_option("--save-model", a.save_model, "write the trained checkpoint here");
  cmd->add_option("--load-model", a.load_model, "skip training, predict with this checkpoint");
  cmd->add_flag("--literal-loss", a.literal_loss,
                "score the loss on kept pixels (debug; collapses toward zero)");
  cmd->add_option("--config", a.config, "key=value config file");
  cmd->callback([cmd, &a] {
    ConfigMap cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config);
    cfg_apply(cfg, *cmd, "in", a.in);
    cfg_apply(cfg, *cmd, "out", a.out);
    cfg_apply(cfg, *cmd, "iters", a.iters);
    cfg_apply(cfg, *cmd, "seed", a.seed);
    cfg_apply(cfg, *cmd, "keep-prob", a.keep_prob);
    cfg_apply(cfg, *cmd, "dropout", a.dropout);
    cfg_apply(cfg, *cmd, "lr", a.lr);
    cfg_apply(cfg, *cmd, "alpha", a.alpha);
    cfg_apply(cfg, *cmd, "channels-enc", a.channels_enc);
    cfg_apply(cfg, *cmd, "channels-dec", a.channels_dec);
    cfg_apply(cfg, *cmd, "ensemble", a.ensemble);
    cfg_apply(cfg, *cmd, "log-every", a.log_every);
    cfg_apply(cfg, *cmd, "save-model", a.save_model);
    cfg_apply(cfg, *cmd, "load-model", a.load_model);
    cfg_apply(cfg, *cmd, "literal-loss", a.literal_loss);
    require_value(a.in, "--in");
    require_value(a.out, "--out");
    if (a.log_every < 1) throw std::runtime_error("--log-every must be >= 1");

    const sss::GrayImage noisy = sss::load_pgm(a.in);
    sss::PredictConfig pcfg;
    pcfg.ensemble = a.ensemble;
    pcfg.seed = a.seed;

    if (!a.load_model.empty()) {
      sss::UNetModel<float> model = sss::load_model<float>(a.load_model);
      sss::PaddedImage padded = sss::pad_reflect(noisy, 32);
      sss::GrayImage out = sss::predict_ensemble(model, padded.image, pcfg);
      sss::save_pgm(sss::crop(out, 0, 0, padded.original_width, padded.original_height),
                    a.out);
      return;
    }

    sss::TrainConfig tcfg;
    tcfg.keep_prob = a.keep_prob;
    tcfg.dropout_rate = a.dropout;
    tcfg.lr = a.lr;
    tcfg.iterations = a.iters;
    tcfg.seed = a.seed;
    tcfg.lrelu_alpha = a.alpha;
    tcfg.channels_enc = a.channels_enc;
    tcfg.channels_dec = a.channels_dec;
    tcfg.literal_masked_loss = a.literal_loss;

    const int log_every = a.log_every;
    auto observer = [log_every](int iter, double loss) {
      if (iter % log_every == 0) {
        std::fprintf(stderr, "iter=%d loss=%.8g\n", iter, loss);
        std::fflush(stderr);
      }
    };
    sss::UNetModel<float> model;
    sss::DenoiseResult res = sss::denoise_single<float>(noisy, tcfg, pcfg, observer, &model);
    sss::save_pgm(res.image, a.out);
    if (!a.save_model.empty()) sss::save_model(model, a.save_model);
  });
}

// --- eval -------------------------------------------------------------

struct EvalArgs {
  std::string in, ref, noisy, config;
};

void setup_eval(CLI::App& app, EvalArgs& a) {
  CLI::App* cmd = app.add_subcommand("eval", "print metrics between images");
  cmd->add_option("--in", a.in, "image under test (PGM)");
  cmd->add_option("--ref", a.ref, "reference image for PSNR/SSIM (PGM)");
  cmd->add_option("--noisy", a.noisy, "raw image for EPI (defaults to --ref)");
  cmd->add_option("--config", a.config, "key=value config file");
  cmd->callback([cmd, &a] {
    ConfigMap cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config);
    cfg_apply(cfg, *cmd, "in", a.in);
    cfg_apply(cfg, *cmd, "ref", a.ref);
    cfg_apply(cfg, *cmd, "noisy", a.noisy);
    require_value(a.in, "--in");
    require_value(a.ref, "--ref");
    const sss::GrayImage test = sss::load_pgm(a.in);
    const sss::GrayImage ref = sss::load_pgm(a.ref);
    const sss::GrayImage raw = a.noisy.empty() ? ref : sss::load_pgm(a.noisy);
    std::printf("psnr=%s\n", format_metric(sss::psnr(test, ref), "identical").c_str());
    std::printf("ssim=%.6f\n", sss::ssim(test, ref));
    std::printf("fi=%s\n", format_metric(sss::fi(test), "undefined").c_str());
    std::printf("epi=%s\n", format_metric(sss::epi(test, raw), "undefined").c_str());
  });
}

// --- bench ------------------------------------------------------------

struct BenchArgs {
  std::string clean, noisy, noise, methods, out_dir, format, config;
  std::uint64_t seed = 1;
  int iters = 5000;
  double keep_prob = 0.7;
  double dropout = 0.3;
  double lr = 1e-4;
  int ensemble = 50;
};

void setup_bench(CLI::App& app, BenchArgs& a) {
  a.methods = "identity,mean:3,median:3,bilateral:2,2.0,0.1,wiener:3,self2self";
  a.format = "text";
  CLI::App* cmd = app.add_subcommand("bench", "run every method and write a metric report");
  cmd->add_option("--clean", a.clean, "clean image: corrupted with --noise, or PSNR/SSIM reference");
  cmd->add_option("--noisy", a.noisy, "already-noisy input image");
  cmd->add_option("--noise", a.noise, "noise spec applied to --clean");
  cmd->add_option("--methods", a.methods, "comma-separated method list");
  cmd->add_option("--out-dir", a.out_dir, "directory for images and the report");
  cmd->add_option("--format", a.format, "report format: text or csv");
  cmd->add_option("--seed", a.seed, "master seed for noise and self2self");
  cmd->add_option("--iters", a.iters, "self2self training iterations");
  cmd->add_option("--keep-prob", a.keep_prob, "self2self keep probability");
  cmd->add_option("--dropout", a.dropout, "self2self dropout rate");
  cmd->add_option("--lr", a.lr, "self2self learning rate");
  cmd->add_option("--ensemble", a.ensemble, "self2self ensemble size");
  cmd->add_option("--config", a.config, "key=value config file");
  cmd->callback([cmd, &a] {
    ConfigMap cfg;
    if (!a.config.empty()) cfg = load_config_file(a.config);
    cfg_apply(cfg, *cmd, "clean", a.clean);
    cfg_apply(cfg, *cmd, "noisy", a.noisy);
    cfg_apply(cfg, *cmd, "noise", a.noise);
    cfg_apply(cfg, *cmd, "methods", a.methods);
    cfg_apply(cfg, *cmd, "out-dir", a.out_dir);
    cfg_apply(cfg, *cmd, "format", a.format);
    cfg_apply(cfg, *cmd, "seed", a.seed);
    cfg_apply(cfg, *cmd, "iters", a.iters);
    cfg_apply(cfg, *cmd, "keep-prob", a.keep_prob);
    cfg_apply(cfg, *cmd, "dropout", a.dropout);
    cfg_apply(cfg, *cmd, "lr", a.lr);
    cfg_apply(cfg, *cmd, "ensemble", a.ensemble);
    require_value(a.out_dir, "--out-dir");

    sss::Self2SelfSpec s2s;
    s2s.train.iterations = a.iters;
    s2s.train.keep_prob = a.keep_prob;
    s2s.train.dropout_rate = a.dropout;
    s2s.train.lr = a.lr;
    s2s.predict.ensemble = a.ensemble;

    sss::BenchmarkRun run;
    run.methods = sss::parse_methods(a.methods, s2s);
    run.output_dir = a.out_dir;
    run.seed = a.seed;
    if (!a.noisy.empty()) {
      if (!a.noise.empty())
        throw std::runtime_error("--noise cannot be combined with --noisy (input is already corrupted)");
      run.source = a.noisy;
      run.clean_reference = a.clean;
    } else {
      require_value(a.clean, "--clean (or --noisy)");
      if (a.noise.empty())
        throw std::runtime_error("--clean needs --noise to produce the benchmark input");
      run.source = a.clean;
      run.noise = sss::parse_noise_spec(a.noise);
    }

    const sss::ReportFormat fmt = sss::parse_report_format(a.format);
    const std::vector<sss::TableRow> rows = sss::run_benchmark(run);
    const std::string report = sss::render_table(rows, fmt);
    const std::string name = fmt == sss::ReportFormat::csv ? "report.csv" : "report.txt";
    std::ofstream out(run.output_dir + "/" + name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report in '" + run.output_dir + "'");
    out << report;
    std::fputs(report.c_str(), stdout);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-image self-supervised sonar denoising toolkit"};
  app.require_subcommand(1);

  NoiseArgs noise_args;
  FilterArgs filter_args;
  DenoiseArgs denoise_args;
  EvalArgs eval_args;
  BenchArgs bench_args;
  setup_noise(app, noise_args);
  setup_filter(app, filter_args);
  setup_denoise(app, denoise_args);
  setup_eval(app, eval_args);
  setup_bench(app, bench_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
