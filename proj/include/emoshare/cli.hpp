#pragma once

// Command-line front end. Needs CLI11.hpp on the include path.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "emoshare/errors.hpp"
#include "emoshare/pipeline.hpp"

namespace emoshare {

#ifdef EMOSHARE_DEFAULT_BASELINE
inline constexpr const char* kDefaultBaselinePath = EMOSHARE_DEFAULT_BASELINE;
#else
inline constexpr const char* kDefaultBaselinePath = "";
#endif

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitRuntime = 3 };

inline void add_options(CLI::App& app, RunConfig& cfg, std::vector<std::string>& embed) {
  app.set_config("--config", "", "Key-value config file (TOML or INI); flags override it");

  app.add_option("--manifest", cfg.manifest, "Manifest CSV")->capture_default_str();
  app.add_option("--cache-root", cfg.cache_root, "Feature cache root (default: <manifest dir>/cache)");
  app.add_option("--run-root", cfg.run_root, "Training run root")->capture_default_str();
  app.add_option("--out", cfg.out, "Output dir (prepare: corpus dir; report: report dir)");
  app.add_option("--seed", cfg.seed, "Base seed; emotion k trains with seed+k")->capture_default_str();
  app.add_option("--kinds", cfg.kinds, "Feature kinds, comma separated")->delimiter(',')->capture_default_str();
  app.add_option("--archs", cfg.archs, "Architectures, comma separated")->delimiter(',')->capture_default_str();

  app.add_option("--synthetic", cfg.synthetic, "prepare: generate N synthetic utterances")->check(CLI::NonNegativeNumber);
  app.add_option("--synthetic-mode", cfg.synthetic_mode, "feature | waveform")
      ->check(CLI::IsMember({"feature", "waveform"}))
      ->capture_default_str();
  app.add_option("--synthetic-dim", cfg.synthetic_dim, "Synthetic feature dimension")->capture_default_str();
  app.add_option("--frame-period", cfg.synthetic_period_ms, "Synthetic frame period in ms")->capture_default_str();
  app.add_option("--mfcc-dim", cfg.mfcc_dim, "Number of MFCC coefficients")->capture_default_str();
  app.add_option("--embed-command", embed,
                 "KIND=COMMAND for pretrained kinds; COMMAND may use {wav} {out} {model} {layer}");
  app.add_option("--embed-layer", cfg.embedding_layer, "Hidden layer for embedding commands (-1: last)");

  app.add_option("--batch-size", cfg.batch_size)->capture_default_str();
  app.add_option("--lr", cfg.learning_rate)->capture_default_str();
  app.add_option("--max-epochs", cfg.max_epochs)->capture_default_str();
  app.add_option("--patience", cfg.patience)->capture_default_str();
  app.add_option("--monitor", cfg.monitor, "dev_spearman | dev_loss")->capture_default_str();
  app.add_option("--conv-channels", cfg.conv_channels)->capture_default_str();
  app.add_option("--lstm-hidden", cfg.lstm_hidden)->capture_default_str();
  app.add_option("--ffnn-hidden", cfg.ffnn_hidden)->capture_default_str();
  app.add_option("--dropout", cfg.dropout)->capture_default_str();
  app.add_option("--attention-scale", cfg.attention_scale, "linear_Wl | sqrt_Wl")->capture_default_str();
  app.add_option("--max-length", cfg.max_length, "Padded length (0: per-kind default)")->capture_default_str();
  app.add_option("--workers", cfg.workers, "Worker threads (0: hardware concurrency)")->capture_default_str();

  app.add_option("--split", cfg.split, "Evaluation split")->capture_default_str();
  app.add_option("--aggregation", cfg.aggregation, "per_arch | best_per_emotion")->capture_default_str();
  app.add_option("--baseline", cfg.baseline, "Baseline table JSON");
}

inline std::map<std::string, std::string> parse_embed_commands(const std::vector<std::string>& items) {
  std::map<std::string, std::string> out;
  for (const auto& s : items) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigurationError("--embed-command expects KIND=COMMAND, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

// Runs one CLI invocation; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Emotion-share regression pipeline"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::vector<std::string> embed;
  add_options(app, cfg, embed);

  auto* prepare = app.add_subcommand("prepare", "Validate a manifest or generate a synthetic corpus")->fallthrough();
  auto* features = app.add_subcommand("features", "Extract and cache features")->fallthrough();
  auto* train = app.add_subcommand("train", "Train one regressor per emotion, kind and architecture")->fallthrough();
  auto* evaluate = app.add_subcommand("evaluate", "Score trained runs on a labelled split")->fallthrough();
  auto* report = app.add_subcommand("report", "Write tables and plots from evaluations")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    cfg.embedding_commands = parse_embed_commands(embed);
    if (cfg.baseline.empty()) cfg.baseline = kDefaultBaselinePath;
    if (prepare->parsed()) cmd_prepare(cfg, out);
    else if (features->parsed()) cmd_features(cfg, out);
    else if (train->parsed()) cmd_train(cfg, out);
    else if (evaluate->parsed()) cmd_evaluate(cfg, out);
    else if (report->parsed()) cmd_report(cfg, out);
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace emoshare
