#include "hfnrv/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hfnrv/loss.hpp"
#include "hfnrv/train.hpp"

namespace hfnrv {

namespace fs = std::filesystem;
using nlohmann::json;

VideoSequence load_input(const std::string& spec) {
  if (spec.empty()) throw InvalidArgument("no input frames given (use --input DIR|FILE|fixture)");
  if (spec == "fixture") return make_fixture();
  if (!fs::exists(spec)) throw IoError("input " + spec + " does not exist");
  return load_frames(spec);
}

namespace {

/// Maps exceptions onto the exit-code contract.
template <typename F>
int guarded(std::ostream& err, const char* cmd, F&& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << cmd << ": corrupt stream at byte " << e.offset() << ": " << e.what() << '\n';
    return kExitCorrupt;
  } catch (const InvalidArgument& e) {
    err << cmd << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << cmd << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << cmd << ": " << e.what() << '\n';
    return kExitFailure;
  }
}

void write_json(const fs::path& p, const json& j) {
  const std::string s = j.dump(2) + "\n";
  write_file(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

DecoderModel<float> decoder_from(const ModelFile& m) {
  DecoderModel<float> dm(m.model);
  std::vector<std::pair<std::string, Vec<float>>> values;
  for (const auto& [name, t] : m.decoder) values.emplace_back(name, t.data());
  dm.load(values);
  return dm;
}

double mean_psnr(const std::vector<Tensor<float>>& a, const std::vector<Tensor<float>>& b) {
  if (a.size() != b.size()) throw InvalidArgument("frame count mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += psnr(a[i], b[i]);
  return s / static_cast<double>(a.size());
}

std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int cmd_train(const TrainArgs& a, std::ostream& err) {
  return guarded(err, "train", [&] {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (!a.input.empty()) cfg.paths.input = a.input;
    if (!a.output.empty()) cfg.paths.output = a.output;
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.seed) cfg.train.seed = *a.seed;
    validate(cfg.train);
    if (cfg.paths.output.empty()) throw InvalidArgument("no output path given (use --output)");
    const VideoSequence seq = load_input(cfg.paths.input);
    validate(cfg.model, seq.height(), seq.width());

    const fs::path log_path = a.log.empty() ? fs::path(cfg.paths.output + ".log.jsonl") : fs::path(a.log);
    TrainResult r = train_video(seq.frames, cfg.model, cfg.train);
    write_file(cfg.paths.output, serialize_model(cfg.model, r.model.decoder_parameters(), r.embeddings,
                                                 seq.height(), seq.width()));
    std::ostringstream log;
    r.log.write_jsonl(log);
    const std::string s = log.str();
    write_file(log_path, std::vector<std::uint8_t>(s.begin(), s.end()));
    err << "train: " << r.log.records.size() << " epochs, final PSNR " << r.final_psnr << " dB, decoder "
        << r.model.parameter_counts().decoder << " params -> " << cfg.paths.output << '\n';
    return kExitOk;
  });
}

CompressionReport compress_model(const ModelFile& m, double ratio, const std::vector<Tensor<float>>& reference,
                                 int finetune_epochs, const TrainConfig& train_cfg,
                                 std::vector<std::uint8_t>* stream_out) {
  DecoderModel<float> dm = decoder_from(m);
  const auto before = decode_all(m.embeddings, dm.decoder);
  CompressionReport rep;
  rep.prune_ratio = ratio;
  const PruneMask mask = prune(dm.params, ratio);
  rep.kept_fraction = mask.kept_fraction();
  if (finetune_epochs > 0) {
    if (reference.empty()) throw InvalidArgument("finetune after pruning needs the reference frames (--input)");
    std::vector<Vec<float>> keep;
    for (const auto& k : mask.keep) {
      Vec<float> v(static_cast<Index>(k.size()));
      for (std::size_t i = 0; i < k.size(); ++i) v[static_cast<Index>(i)] = k[i];
      keep.push_back(std::move(v));
    }
    finetune_decoder(dm.params, dm.decoder, m.embeddings, reference, keep, finetune_epochs, train_cfg);
  }
  const Bitstream b = build_bitstream(m.model, dm.params, m.embeddings, mask, m.height, m.width);
  const auto bytes = serialize(b);
  const DecodedStream ds = materialize(parse_bitstream(bytes));
  const auto after = decode_all(ds.embeddings, ds.model.decoder);

  const auto symbols = payload_symbols(b);
  rep.stream_bytes = bytes.size();
  rep.bpp = measure_bpp(bytes.size(), m.frames, m.height, m.width);
  rep.payload_entropy = entropy_bits(symbols);
  rep.mean_code_length = mean_code_length(build_huffman(symbols), symbols);
  rep.psnr_vs_uncompressed = mean_psnr(after, before);
  if (!reference.empty()) {
    rep.psnr_uncompressed = mean_psnr(before, reference);
    rep.psnr_compressed = mean_psnr(after, reference);
  } else {
    rep.psnr_uncompressed = rep.psnr_compressed = std::numeric_limits<double>::quiet_NaN();
  }
  if (stream_out) *stream_out = bytes;
  return rep;
}

int cmd_compress(const CompressArgs& a, std::ostream& err) {
  return guarded(err, "compress", [&] {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (a.model.empty()) throw InvalidArgument("no model file given (use --model)");
    if (a.output.empty()) throw InvalidArgument("no output path given (use --output)");
    if (!fs::exists(a.model)) throw InvalidArgument("model file " + a.model + " does not exist");
    const double ratio = a.ratio ? *a.ratio : cfg.compress.prune_ratio;
    const std::string input = a.input.empty() ? cfg.paths.input : a.input;
    ModelFile m;
    try {
      m = parse_model(read_file(a.model));
    } catch (const ParseError& e) {
      throw InvalidArgument("model file " + a.model + ": " + e.what());
    }
    std::vector<Tensor<float>> reference;
    if (!input.empty()) reference = load_input(input).frames;
    std::vector<std::uint8_t> bytes;
    const CompressionReport r = compress_model(m, ratio, reference, cfg.compress.finetune_epochs, cfg.train, &bytes);
    write_file(a.output, bytes);
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    const json j{{"prune_ratio", r.prune_ratio},
                 {"kept_fraction", r.kept_fraction},
                 {"stream_bytes", r.stream_bytes},
                 {"bpp", r.bpp},
                 {"payload_entropy_bits", r.payload_entropy},
                 {"mean_code_length_bits", r.mean_code_length},
                 {"psnr_uncompressed", num(r.psnr_uncompressed)},
                 {"psnr_compressed", num(r.psnr_compressed)},
                 {"psnr_vs_uncompressed", r.psnr_vs_uncompressed},
                 {"finetune_epochs", cfg.compress.finetune_epochs}};
    write_json(a.report.empty() ? fs::path(a.output + ".json") : fs::path(a.report), j);
    err << "compress: " << r.stream_bytes << " bytes, " << r.bpp << " bpp -> " << a.output << '\n';
    return kExitOk;
  });
}

int cmd_decode(const DecodeArgs& a, std::ostream& err) {
  return guarded(err, "decode", [&] {
    if (a.input.empty() || a.output.empty()) throw InvalidArgument("decode needs --input and --output");
    if (!fs::exists(a.input)) throw IoError("bitstream " + a.input + " does not exist");
    const DecodedStream ds = materialize(parse_bitstream(read_file(a.input)));
    VideoSequence seq;
    seq.frames = decode_all(ds.embeddings, ds.model.decoder);
    // Frames appear under the output path only once all of them are written.
    const fs::path out(a.output);
    const fs::path staging = out.string() + ".partial";
    fs::remove_all(staging);
    try {
      save_frames(seq, staging);
    } catch (...) {
      fs::remove_all(staging);
      throw;
    }
    if (fs::exists(out)) fs::remove_all(out);
    fs::rename(staging, out);
    err << "decode: " << seq.frames.size() << " frames -> " << a.output << '\n';
    return kExitOk;
  });
}

int cmd_eval(const EvalArgs& a, std::ostream& err) {
  return guarded(err, "eval", [&] {
    if (a.ref.empty() || a.recon.empty() || a.out.empty()) throw InvalidArgument("eval needs --ref, --recon and --out");
    const VideoSequence ref = load_input(a.ref), rec = load_input(a.recon);
    const MetricsReport r = evaluate(ref.frames, rec.frames);
    json frames = json::array();
    for (std::size_t t = 0; t < r.frames.size(); ++t)
      frames.push_back({{"frame", t}, {"psnr", r.frames[t].psnr}, {"ms_ssim", r.frames[t].ms_ssim}});
    write_json(a.out, {{"frames", frames}, {"mean_psnr", r.mean_psnr}, {"mean_ms_ssim", r.mean_ms_ssim}});
    err << "eval: mean PSNR " << r.mean_psnr << " dB, MS-SSIM " << r.mean_ms_ssim << '\n';
    return kExitOk;
  });
}

int cmd_freqmap(const FreqmapArgs& a, std::ostream& err) {
  return guarded(err, "freqmap", [&] {
    if (a.input.empty() || a.output.empty()) throw InvalidArgument("freqmap needs --input and --output");
    write_png(freq_map(read_png(a.input)), a.output);
    return kExitOk;
  });
}

AblationRow score_reconstruction(const std::vector<Tensor<float>>& reference,
                                 const std::vector<Tensor<float>>& recon) {
  AblationRow row;
  std::vector<Tensor<float>> clamped;
  for (const auto& r : recon) clamped.push_back(clamp01(r));
  const MetricsReport m = evaluate(reference, clamped);
  row.psnr = m.mean_psnr;
  row.ms_ssim = m.mean_ms_ssim;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    row.l_fre += static_cast<double>(frequency_loss(recon[t], reference[t]).item());
    const Tensor<float> a = freq_map(clamped[t]), b = freq_map(reference[t]);
    row.freqmap_l1 += static_cast<double>((a.data() - b.data()).abs().mean());
  }
  row.l_fre /= static_cast<double>(reference.size());
  row.freqmap_l1 /= static_cast<double>(reference.size());
  return row;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                                      const std::vector<Tensor<float>>& frames) {
  if (variants.empty()) throw InvalidArgument("empty variant list");
  std::vector<std::string> ids{"full"};
  for (const auto& v : variants) {
    apply_variant(base, v);  // validates the id
    if (std::find(ids.begin(), ids.end(), v) == ids.end()) ids.push_back(v);
  }
  std::vector<AblationRow> rows;
  for (const auto& id : ids) {
    const RunConfig cfg = apply_variant(base, id);
    TrainResult r = train_video(frames, cfg.model, cfg.train);
    std::vector<Tensor<float>> recon;
    {
      NoGradGuard no_grad;
      for (Index t = 0; t < r.embeddings.frames(); ++t) recon.push_back(decode(r.embeddings, t, r.model.decoder()));
    }
    AblationRow row = score_reconstruction(frames, recon);
    row.variant = id;
    row.description = describe_variant(id);
    row.decoder_params = r.model.parameter_counts().decoder;
    rows.push_back(row);
  }
  return rows;
}

int cmd_ablate(const AblateArgs& a, std::ostream& err) {
  return guarded(err, "ablate", [&] {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (a.epochs) cfg.train.epochs = *a.epochs;
    validate(cfg.train);
    const auto ids = split_ids(a.variants);
    if (ids.empty()) throw InvalidArgument("empty variant list (use --variants V1,V3,...)");
    for (const auto& id : ids) apply_variant(cfg, id);
    if (a.out.empty()) throw InvalidArgument("no output path given (use --out)");
    const VideoSequence seq = load_input(a.input.empty() ? cfg.paths.input : a.input);
    const auto rows = run_ablation(cfg, ids, seq.frames);
    json table = json::array();
    for (const auto& r : rows) {
      table.push_back({{"variant", r.variant},
                       {"description", r.description},
                       {"psnr", r.psnr},
                       {"ms_ssim", r.ms_ssim},
                       {"l_fre", r.l_fre},
                       {"freqmap_l1", r.freqmap_l1},
                       {"decoder_params", r.decoder_params}});
      err << "ablate: " << r.variant << " PSNR " << r.psnr << " MS-SSIM " << r.ms_ssim << '\n';
    }
    write_json(a.out, {{"epochs", cfg.train.epochs}, {"seed", cfg.train.seed}, {"rows", table}});
    return kExitOk;
  });
}

std::optional<int> threads_from_env() {
  const char* v = std::getenv("HFNRV_THREADS");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096)
    throw InvalidArgument(std::string("HFNRV_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<int>(n);
}

}  // namespace hfnrv
