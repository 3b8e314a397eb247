// Command-line front end for the lip-to-speech pipeline.

#include <CLI11.hpp>

#include "l2s/pipeline/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"two-stage lip-to-speech synthesis pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;
  int workers = 0;
  bool resume = false;
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--set", overrides, "dotted-path override, e.g. --set l2s.steps=100");
  app.add_option("--seed", seed, "override the global seed");
  app.add_option("--workers", workers, "per-utterance parallelism");
  app.add_flag("--resume", resume, "no-op when the command already completed");

  l2s::pipeline::RunOptions opt;
  std::string frames, out_wav;
  int speaker_id = 0;
  bool use_gl = false;

  for (const char* name : {"make-data", "fit-units", "train-l2s", "train-vocoder", "evaluate",
                           "ablate"})
    app.add_subcommand(name);
  auto* synth = app.add_subcommand("synthesize");
  synth->add_option("--frames", frames, "input VIDF lip-frame file")->required();
  synth->add_option("--speaker", speaker_id, "speaker id for the d-vector stand-in");
  synth->add_option("--out", out_wav, "output WAV path")->required();
  synth->add_flag("--griffin-lim", use_gl, "invert the predicted mel without a vocoder");

  CLI11_PARSE(app, argc, argv);

  if (seed >= 0) overrides.push_back("seed=" + std::to_string(seed));
  if (workers >= 1) overrides.push_back("workers=" + std::to_string(workers));
  opt.resume = resume;
  opt.frames_path = frames;
  opt.speaker_id = speaker_id;
  opt.out_wav = out_wav;
  opt.griffin_lim_fallback = use_gl;

  return l2s::pipeline::run(app.get_subcommands().front()->get_name(), config_path, overrides,
                            opt);
}
