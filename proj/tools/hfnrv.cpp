// hfnrv: train / compress / decode / eval / freqmap / ablate.

#include <iostream>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "hfnrv/cli.hpp"

using namespace hfnrv;

int main(int argc, char** argv) {
  try {
    if (auto n = threads_from_env()) Eigen::setNbThreads(*n);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App app{"Wavelet-aware neural video representation codec"};
  app.require_subcommand(1);

  TrainArgs train;
  int train_epochs = -1;
  std::uint64_t train_seed = 0;
  for (const char* name : {"train", "encode"}) {
    auto* c = app.add_subcommand(name, name == std::string("train") ? "Fit a model to a video"
                                                                    : "Alias of train");
    c->add_option("--config", train.config, "JSON run config");
    c->add_option("--input", train.input, "Frame directory, raw file or 'fixture'");
    c->add_option("--output", train.output, "Model file to write");
    c->add_option("--log", train.log, "Per-epoch log (JSON lines)");
    c->add_option("--epochs", train_epochs, "Override train.epochs");
    c->add_option("--seed", train_seed, "Override train.seed");
  }

  CompressArgs comp;
  double ratio = -1;
  auto* compress = app.add_subcommand("compress", "Prune, quantize and entropy-code a model");
  compress->add_option("--model", comp.model, "Model file from train")->required();
  compress->add_option("--output", comp.output, "Bitstream to write")->required();
  compress->add_option("--ratio", ratio, "Prune ratio in [0, 1)");
  compress->add_option("--config", comp.config, "JSON run config");
  compress->add_option("--input", comp.input, "Reference frames for PSNR / fine-tune");
  compress->add_option("--report", comp.report, "Report file (default <output>.json)");

  DecodeArgs dec;
  auto* decode_cmd = app.add_subcommand("decode", "Reconstruct frames from a bitstream");
  decode_cmd->add_option("--input", dec.input, "Bitstream")->required();
  decode_cmd->add_option("--output", dec.output, "Frame directory to write")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "PSNR / MS-SSIM between two frame sets");
  eval->add_option("--ref", ev.ref)->required();
  eval->add_option("--recon", ev.recon)->required();
  eval->add_option("--out", ev.out)->required();

  FreqmapArgs fm;
  auto* freqmap = app.add_subcommand("freqmap", "Write the log spectrum of a frame");
  freqmap->add_option("--input", fm.input)->required();
  freqmap->add_option("--output", fm.output)->required();

  AblateArgs ab;
  int ablate_epochs = -1;
  auto* ablate = app.add_subcommand("ablate", "Train ablation variants and tabulate them");
  ablate->add_option("--config", ab.config);
  ablate->add_option("--input", ab.input, "Frame directory, raw file or 'fixture'");
  ablate->add_option("--variants", ab.variants, "Comma-separated ids (V1..V10)")->required();
  ablate->add_option("--out", ab.out)->required();
  ablate->add_option("--epochs", ablate_epochs, "Override train.epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (cmd == "train" || cmd == "encode") {
    auto* sub = app.get_subcommands().front();
    if (sub->count("--epochs")) train.epochs = train_epochs;
    if (sub->count("--seed")) train.seed = train_seed;
    return cmd_train(train, std::cerr);
  }
  if (cmd == "compress") {
    if (compress->count("--ratio")) comp.ratio = ratio;
    return cmd_compress(comp, std::cerr);
  }
  if (cmd == "decode") return cmd_decode(dec, std::cerr);
  if (cmd == "eval") return cmd_eval(ev, std::cerr);
  if (cmd == "freqmap") return cmd_freqmap(fm, std::cerr);
  if (ablate->count("--epochs")) ab.epochs = ablate_epochs;
  return cmd_ablate(ab, std::cerr);
}
