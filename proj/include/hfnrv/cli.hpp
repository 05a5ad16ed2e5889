#pragma once

// Command implementations behind the `hfnrv` executable. Each returns the
// process exit code: 0 success, 2 usage/config/I-O error, 3 corrupt
// bitstream, 1 anything else. Diagnostics go to `err`.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hfnrv/bitstream.hpp"
#include "hfnrv/config.hpp"
#include "hfnrv/media.hpp"

namespace hfnrv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitCorrupt = 3;

/// `fixture` (the bundled synthetic video), a PNG directory or a raw file.
VideoSequence load_input(const std::string& spec);

struct TrainArgs {
  std::string config;  ///< optional JSON config
  std::string input;   ///< overrides paths.input
  std::string output;  ///< model file; overrides paths.output
  std::string log;     ///< defaults to <output>.log.jsonl
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
};
int cmd_train(const TrainArgs& a, std::ostream& err);

struct CompressArgs {
  std::string model;
  std::string output;
  std::string config;  ///< optional; supplies finetune settings
  std::string input;   ///< reference frames for PSNR (and finetune)
  std::string report;  ///< defaults to <output>.json
  std::optional<double> ratio;
};
int cmd_compress(const CompressArgs& a, std::ostream& err);

struct DecodeArgs {
  std::string input;
  std::string output;
};
int cmd_decode(const DecodeArgs& a, std::ostream& err);

struct EvalArgs {
  std::string ref, recon, out;
};
int cmd_eval(const EvalArgs& a, std::ostream& err);

struct FreqmapArgs {
  std::string input, output;
};
int cmd_freqmap(const FreqmapArgs& a, std::ostream& err);

struct AblateArgs {
  std::string config;
  std::string input;
  std::string variants;  ///< comma-separated ids
  std::string out;
  std::optional<int> epochs;
};
int cmd_ablate(const AblateArgs& a, std::ostream& err);

struct AblationRow {
  std::string variant;
  std::string description;
  double psnr = 0;
  double ms_ssim = 0;
  double l_fre = 0;           ///< log-weighted frequency loss of the final reconstructions
  double freqmap_l1 = 0;      ///< mean |freq_map(recon) − freq_map(reference)|
  Index decoder_params = 0;
};

/// Trains `full` plus every listed variant with the shared seed and budget.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                                      const std::vector<Tensor<float>>& frames);

/// Post-hoc metrics of a reconstruction against its reference.
AblationRow score_reconstruction(const std::vector<Tensor<float>>& reference,
                                 const std::vector<Tensor<float>>& recon_unclamped);

struct CompressionReport {
  double prune_ratio = 0;
  double kept_fraction = 1;
  std::uint64_t stream_bytes = 0;
  double bpp = 0;
  double payload_entropy = 0;  ///< bits/symbol
  double mean_code_length = 0;
  double psnr_uncompressed = 0;  ///< vs reference (NaN when none given)
  double psnr_compressed = 0;
  double psnr_vs_uncompressed = 0;
};

/// Prunes (optionally fine-tunes), quantizes and serializes a model file's
/// contents. `reference` may be empty.
CompressionReport compress_model(const ModelFile& m, double ratio, const std::vector<Tensor<float>>& reference,
                                 int finetune_epochs, const TrainConfig& train_cfg,
                                 std::vector<std::uint8_t>* stream_out);

/// Parses HFNRV_THREADS; returns the thread count or throws InvalidArgument.
std::optional<int> threads_from_env();

}  // namespace hfnrv
