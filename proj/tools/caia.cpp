// caia: command-line front end for the neural-visual alignment pipeline.
//
// Subcommands: blur, synth, train, eval, gradcheck, bands.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "caia/commands.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool force = false;
};

// Loads the config document (or defaults) plus the exact bytes to echo into
// output directories. CLI overrides are applied after parsing, and a config
// regenerated from the overridden state is what gets echoed.
caia::RunConfig resolve_config(const GlobalOpts& g, std::string& echo_bytes) {
  caia::RunConfig cfg;
  if (!g.config_path.empty()) {
    cfg = caia::load_run_config(g.config_path);
    std::ifstream in(g.config_path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    echo_bytes = ss.str();
  }
  bool overridden = g.config_path.empty();
  if (g.seed) {
    cfg.train.seed = *g.seed;
    cfg.synth.seed = *g.seed;
    overridden = true;
  }
  if (g.workers) {
    cfg.train.workers = *g.workers;
    overridden = true;
  }
  if (overridden) echo_bytes = caia::run_config_to_json(cfg).dump(2) + "\n";
  return cfg;
}

void add_global_opts(CLI::App* cmd, GlobalOpts& g) {
  cmd->add_option("--config", g.config_path, "run configuration (JSON)");
  cmd->add_option("--seed", g.seed, "override the experiment seed");
  cmd->add_option("--workers", g.workers, "worker threads (default 1)");
  cmd->add_flag("--force", g.force, "overwrite a non-empty output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAIA neural-visual alignment pipeline"};
  app.require_subcommand(1);
  GlobalOpts g;

  std::string input, out_dir, data_dir, params_dir;
  std::string saliency_path, blur_mode = "all", preset;

  CLI::App* blur = app.add_subcommand("blur", "dual-path blur of a P6 image");
  blur->add_option("--input", input, "input image (binary P6)")->required();
  blur->add_option("--out", out_dir, "output directory")->required();
  blur->add_option("--saliency", saliency_path, "precomputed saliency map (.tf or .pgm)");
  blur->add_option("--mode", blur_mode, "all|saliency|center|linear")
      ->check(CLI::IsMember({"all", "saliency", "center", "linear"}));
  add_global_opts(blur, g);

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", out_dir, "output directory")->required();
  add_global_opts(synth, g);

  CLI::App* train = app.add_subcommand("train", "train on a dataset directory");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  add_global_opts(train, g);

  CLI::App* eval = app.add_subcommand("eval", "zero-shot retrieval evaluation");
  eval->add_option("--params", params_dir, "trained parameter directory")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--out", out_dir, "output directory")->required();
  add_global_opts(eval, g);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_global_opts(gradcheck, g);

  CLI::App* bands = app.add_subcommand("bands", "decompose or band-pass a trial tensor");
  bands->add_option("--trial", input, "trial tensor (C x T .tf)")->required();
  bands->add_option("--out", out_dir, "output directory")->required();
  bands->add_option("--preset", preset, "static filter preset: low|mid|high");
  add_global_opts(bands, g);

  CLI11_PARSE(app, argc, argv);

  try {
    std::string echo;
    if (blur->parsed()) {
      const auto cfg = resolve_config(g, echo);
      return caia::cmd_blur(input, out_dir, cfg, saliency_path, blur_mode, echo, g.force);
    }
    if (synth->parsed()) {
      const auto cfg = resolve_config(g, echo);
      return caia::cmd_synth(cfg, out_dir, echo, g.force);
    }
    if (train->parsed()) {
      const auto cfg = resolve_config(g, echo);
      return caia::cmd_train(cfg, data_dir, out_dir, echo, g.force);
    }
    if (eval->parsed()) {
      const auto cfg = resolve_config(g, echo);
      return caia::cmd_eval(cfg, params_dir, data_dir, out_dir, echo, g.force);
    }
    if (gradcheck->parsed()) {
      return caia::cmd_gradcheck(g.workers.value_or(1));
    }
    if (bands->parsed()) {
      const auto cfg = resolve_config(g, echo);
      return caia::cmd_bands(cfg, input, out_dir, preset, echo, g.force);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
