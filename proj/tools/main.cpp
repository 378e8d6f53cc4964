// stylab: desk-scale self-supervised learning with style-transfer
// augmentation. Subcommands cover stylization, style banks, contrastive
// pretraining, downstream evaluation, and an augmentation throughput
// benchmark.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stylab/bench.hpp"
#include "stylab/checkpoint.hpp"
#include "stylab/config.hpp"
#include "stylab/eval.hpp"
#include "stylab/image_io.hpp"
#include "stylab/parallel.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace stylab;

namespace {

// Input/argument problems exit with 2, runtime failures with 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty() || !fs::exists(path))
    throw UsageError(std::string("missing ") + what + ": '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write '" + path + "'");
  out << text;
}

StyleTransfer make_engine(uint64_t seed, int embed_dim, int styled_layers,
                          const std::string& weights) {
  StyleTransfer engine = StyleTransfer::seeded(seed, embed_dim, styled_layers);
  if (!weights.empty()) {
    require_file(weights, "weights checkpoint");
    Checkpoint ckpt = load_checkpoint(weights);
    restore_params(ckpt, [&engine](const ParamVisitor<float>& fn) { engine.visit(fn); });
  }
  return engine;
}

StyleBank style_bank_from_arg(const std::string& style_arg, StyleTransfer& engine) {
  if (fs::is_directory(style_arg)) {
    std::vector<Tensor> images = load_image_dir(style_arg);
    return build_bank(images, engine.extractor, style_arg);
  }
  return load_bank(style_arg);
}

int resolve_workers(int requested) { return requested > 0 ? requested : default_workers(); }

// Loads the configured bank, or derives one from the given images when no
// path is configured.
StyleBank resolve_training_bank(const RunConfig& cfg, StyleTransfer& engine,
                                const LabeledDataset& train) {
  if (!cfg.paths.style_bank.empty()) {
    require_file(cfg.paths.style_bank, "style bank");
    return load_bank(cfg.paths.style_bank);
  }
  std::cerr << "note: no style bank configured; building one from the training images\n";
  std::vector<Tensor> images;
  images.reserve(static_cast<size_t>(train.size()));
  for (int64_t i = 0; i < train.size(); ++i) images.push_back(train.image(i));
  return build_bank(images, engine.extractor, "train-derived");
}

// ---------------------------------------------------------------------------
// stylize
// ---------------------------------------------------------------------------

struct StylizeArgs {
  std::string input, style, out, weights;
  double alpha = 0.5, beta = 1.0, p = 1.0;
  uint64_t seed = 0;
  int embed_dim = kDefaultEmbedDim;
  int styled_layers = StylizationNetwork::kStyledLayerCount;
};

int cmd_stylize(const StylizeArgs& a) {
  if (!fs::is_directory(a.input)) throw UsageError("missing input directory: '" + a.input + "'");
  if (a.style.empty() || !fs::exists(a.style))
    throw UsageError("missing style bank or directory: '" + a.style + "'");
  fs::create_directories(a.out);

  StyleTransfer engine = make_engine(a.seed, a.embed_dim, a.styled_layers, a.weights);
  const StyleBank bank = style_bank_from_arg(a.style, engine);
  if (static_cast<int>(bank.embed_dim) != a.embed_dim)
    throw UsageError("bank embedding length " + std::to_string(bank.embed_dim) +
                     " does not match --embed-dim " + std::to_string(a.embed_dim));

  SasslParams params;
  params.p = a.p;
  params.alpha_min = params.alpha_max = a.alpha;
  params.beta_min = params.beta_max = a.beta;
  params.style_source = StyleSource::external_bank;
  params.validate();

  const std::vector<std::string> files = list_ppm_files(a.input);
  if (files.empty()) throw UsageError("no .ppm images in '" + a.input + "'");

  RngStream root(a.seed);
  const std::vector<Tensor> styles = sample_styles(bank, static_cast<int64_t>(files.size()), root);
  for (size_t i = 0; i < files.size(); ++i) {
    Tensor img = read_ppm(files[i]);
    Tensor out = style_augment(engine, img, StyleRef::from_embedding(styles[i]), params,
                               root.sub(static_cast<uint64_t>(i)).sub(0ull));
    write_ppm(out, (fs::path(a.out) / fs::path(files[i]).filename()).string());
  }
  std::cout << "stylized " << files.size() << " images -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// build-bank / export-embeddings
// ---------------------------------------------------------------------------

struct BuildBankArgs {
  std::string images, out, weights;
  uint64_t seed = 0;
  int embed_dim = kDefaultEmbedDim;
};

int cmd_build_bank(const BuildBankArgs& a) {
  if (!fs::is_directory(a.images)) throw UsageError("missing image directory: '" + a.images + "'");
  StyleTransfer engine = make_engine(a.seed, a.embed_dim,
                                     StylizationNetwork::kStyledLayerCount, a.weights);
  std::vector<Tensor> images = load_image_dir(a.images);
  StyleBank bank = build_bank(images, engine.extractor, a.images);
  save_bank(bank, a.out);
  std::cout << "bank: " << bank.count << " embeddings of length " << bank.embed_dim << " -> "
            << a.out << "\n";
  return 0;
}

struct ExportArgs {
  std::string bank, images, weights, out;
  uint64_t seed = 0;
  int embed_dim = kDefaultEmbedDim;
};

int cmd_export_embeddings(const ExportArgs& a) {
  StyleBank bank;
  if (!a.bank.empty()) {
    require_file(a.bank, "style bank");
    bank = load_bank(a.bank);
  } else if (!a.images.empty()) {
    if (!fs::is_directory(a.images))
      throw UsageError("missing image directory: '" + a.images + "'");
    StyleTransfer engine = make_engine(a.seed, a.embed_dim,
                                       StylizationNetwork::kStyledLayerCount, a.weights);
    bank = build_bank(load_image_dir(a.images), engine.extractor, a.images);
  } else {
    throw UsageError("export-embeddings needs --bank or --images");
  }

  std::string csv;
  for (uint32_t j = 0; j < bank.embed_dim; ++j) {
    if (j) csv += ",";
    csv += "dim_" + std::to_string(j);
  }
  csv += "\n";
  char buf[64];
  for (uint64_t i = 0; i < bank.count; ++i) {
    for (uint32_t j = 0; j < bank.embed_dim; ++j) {
      if (j) csv += ",";
      std::snprintf(buf, sizeof(buf), "%.17g", bank.values[i * bank.embed_dim + j]);
      csv += buf;
    }
    csv += "\n";
  }
  write_text(a.out, csv);
  std::cout << "exported " << bank.count << " x " << bank.embed_dim << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// pretrain / probe / fewshot
// ---------------------------------------------------------------------------

struct PretrainArgs {
  std::string config, out_dir;
};

int cmd_pretrain(const PretrainArgs& a) {
  require_file(a.config, "config");
  RunConfig cfg = load_config_file(a.config);
  const std::string out_dir = a.out_dir.empty() ? cfg.paths.output_dir : a.out_dir;
  fs::create_directories(out_dir);

  SynthData data = gen_synth(cfg.data);
  StyleTransfer engine = StyleTransfer::seeded(cfg.seed, cfg.embed_dim, cfg.styled_layers);

  StyleBank bank;
  StyleContext sctx;
  sctx.pairing_offset = cfg.pairing_offset;
  const StyleSource source = cfg.augment.sassl.style_source;
  if (source == StyleSource::external_bank || source == StyleSource::gaussian_noise) {
    bank = resolve_training_bank(cfg, engine, data.train);
    sctx.bank = &bank;
  }

  SslModel model = SslModel::seeded(cfg.seed, cfg.model);
  const int workers = resolve_workers(cfg.workers);

  std::string csv = "step,loss,lr,m\n";
  PretrainResult result =
      pretrain(model, &engine, data.train.images, cfg.augment, sctx, cfg.train, workers,
               [&csv](const StepStats& s) {
                 csv += std::to_string(s.step) + "," + fmt_shortest(s.loss) + "," +
                        fmt_shortest(s.lr) + "," + fmt_shortest(s.m) + "\n";
               });
  write_text((fs::path(out_dir) / "metrics.csv").string(), csv);

  const uint64_t hash = config_hash(cfg);
  Checkpoint ckpt = snapshot_params([&model](const ParamVisitor<float>& fn) { model.visit(fn); },
                                    static_cast<uint64_t>(result.total_steps), hash);
  const std::string ckpt_path = (fs::path(out_dir) / "model.ssck").string();
  save_checkpoint(ckpt, ckpt_path);

  auto smoothed = [&result](int64_t at, int64_t window) {
    double acc = 0;
    int64_t n = 0;
    for (int64_t i = std::max<int64_t>(0, at - window + 1); i <= at; ++i, ++n)
      acc += result.history[static_cast<size_t>(i)].loss;
    return acc / std::max<int64_t>(1, n);
  };
  const int64_t last = static_cast<int64_t>(result.history.size()) - 1;
  json summary;
  summary["steps"] = result.total_steps;
  summary["final_loss"] = result.history.back().loss;
  summary["smoothed_loss_step10"] = smoothed(std::min<int64_t>(9, last), 10);
  summary["smoothed_loss_final"] = smoothed(last, 10);
  summary["checkpoint"] = ckpt_path;
  summary["config_hash"] = hash;
  write_text((fs::path(out_dir) / "pretrain_summary.json").string(), summary.dump(2) + "\n");

  std::cout << "pretrained " << result.total_steps << " steps; final loss "
            << result.history.back().loss << "; checkpoint " << ckpt_path << "\n";
  return 0;
}

SslModel model_from_checkpoint(const RunConfig& cfg, const std::string& ckpt_path) {
  require_file(ckpt_path, "checkpoint");
  SslModel model = SslModel::seeded(cfg.seed, cfg.model);
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  restore_params(ckpt, [&model](const ParamVisitor<float>& fn) { model.visit(fn); });
  return model;
}

struct ProbeArgs {
  std::string config, ckpt, out;
};

int cmd_probe(const ProbeArgs& a) {
  require_file(a.config, "config");
  RunConfig cfg = load_config_file(a.config);
  SslModel model = model_from_checkpoint(cfg, a.ckpt);
  SynthData data = gen_synth(cfg.data);

  Tensor train_f = encode_dataset(model, data.train, cfg.augment.output_size);
  Tensor test_f = encode_dataset(model, data.test, cfg.augment.output_size);
  const double top1 = linear_probe(train_f, data.train.labels, test_f, data.test.labels,
                                   cfg.data.classes);

  json out;
  out["top1"] = top1;
  out["classes"] = cfg.data.classes;
  out["train_examples"] = data.train.size();
  out["test_examples"] = data.test.size();
  if (!a.out.empty()) write_text(a.out, out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct FewshotArgs {
  std::string config, ckpt, out;
  int k = 1;
  int trials = 5;
};

int cmd_fewshot(const FewshotArgs& a) {
  require_file(a.config, "config");
  RunConfig cfg = load_config_file(a.config);
  SslModel model = model_from_checkpoint(cfg, a.ckpt);
  SynthData data = gen_synth(cfg.data);

  Tensor test_f = encode_dataset(model, data.test, cfg.augment.output_size);
  const double top1 = few_shot_eval(test_f, data.test.labels, cfg.data.classes, a.k, a.trials,
                                    RngStream(cfg.seed).sub("fewshot"));

  json out;
  out["top1"] = top1;
  out["k"] = a.k;
  out["trials"] = a.trials;
  out["classes"] = cfg.data.classes;
  if (!a.out.empty()) write_text(a.out, out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// invariance / bench
// ---------------------------------------------------------------------------

struct InvarianceArgs {
  std::string config, ckpt, baseline_ckpt, out;
  int64_t n = 64;
};

int cmd_invariance(const InvarianceArgs& a) {
  require_file(a.config, "config");
  RunConfig cfg = load_config_file(a.config);
  SynthData data = gen_synth(cfg.data);
  StyleTransfer engine = StyleTransfer::seeded(cfg.seed, cfg.embed_dim, cfg.styled_layers);
  StyleBank bank = resolve_training_bank(cfg, engine, data.train);

  json out;
  out["n"] = a.n;
  SslModel model = model_from_checkpoint(cfg, a.ckpt);
  out["score"] = texture_invariance_score(model, data.test, engine, bank, cfg.augment.sassl,
                                          a.n, RngStream(cfg.seed).sub("invariance"));
  if (!a.baseline_ckpt.empty()) {
    SslModel baseline = model_from_checkpoint(cfg, a.baseline_ckpt);
    out["baseline_score"] = texture_invariance_score(
        baseline, data.test, engine, bank, cfg.augment.sassl, a.n,
        RngStream(cfg.seed).sub("invariance"));
  }
  if (!a.out.empty()) write_text(a.out, out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct BenchArgs {
  std::string config, mode = "sassl", out;
  int runs = 100;
  int warmup = 3;
  int workers = 0;
};

int cmd_bench(const BenchArgs& a) {
  require_file(a.config, "config");
  if (a.mode != "default" && a.mode != "sassl")
    throw UsageError("--mode must be default or sassl");
  RunConfig cfg = load_config_file(a.config);

  SynthData data = gen_synth(cfg.data);
  StyleTransfer engine = StyleTransfer::seeded(cfg.seed, cfg.embed_dim, cfg.styled_layers);
  StyleBank bank;
  StyleContext sctx;
  sctx.pairing_offset = cfg.pairing_offset;
  const StyleSource source = cfg.augment.sassl.style_source;
  if (source == StyleSource::external_bank || source == StyleSource::gaussian_noise) {
    bank = resolve_training_bank(cfg, engine, data.train);
    sctx.bank = &bank;
  }

  const int64_t B = std::min<int64_t>(cfg.train.batch_size, data.train.size());
  Tensor batch({B, 3, cfg.data.image_size, cfg.data.image_size});
  const int64_t per = batch.numel() / B;
  for (int64_t i = 0; i < B; ++i) {
    Tensor img = data.train.image(i);
    std::copy(img.ptr(), img.ptr() + per, batch.ptr() + i * per);
  }

  const int workers = resolve_workers(a.workers > 0 ? a.workers : cfg.workers);
  BenchReport report = run_aug_benchmark(&engine, batch, cfg.augment, sctx, a.mode == "sassl",
                                         a.runs, a.warmup, workers, cfg.seed);

  json out;
  out["pipeline"] = report.pipeline;
  out["images_per_second"] = report.images_per_second;
  out["baseline_images_per_second"] = report.baseline_images_per_second;
  out["relative_change_percent"] = report.relative_change_percent;
  out["runs"] = report.runs;
  out["batch_size"] = report.batch_size;
  out["image_size"] = report.image_size;
  out["workers"] = report.workers;
  if (!a.out.empty()) write_text(a.out, out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale self-supervised learning with style-transfer augmentation"};
  app.require_subcommand(1);

  StylizeArgs st;
  CLI::App* stylize = app.add_subcommand("stylize", "stylize a folder of .ppm images");
  stylize->add_option("--input", st.input, "input image directory")->required();
  stylize->add_option("--style", st.style, "style bank (.ssbk) or style image directory")
      ->required();
  stylize->add_option("--out", st.out, "output directory")->required();
  stylize->add_option("--alpha", st.alpha, "style blending factor");
  stylize->add_option("--beta", st.beta, "pixel interpolation factor");
  stylize->add_option("--p", st.p, "apply probability");
  stylize->add_option("--seed", st.seed, "random seed");
  stylize->add_option("--weights", st.weights, "engine checkpoint (.ssck)");
  stylize->add_option("--embed-dim", st.embed_dim, "style embedding length");
  stylize->add_option("--styled-layers", st.styled_layers, "CIN layer prefix (0..13)");

  BuildBankArgs bb;
  CLI::App* build = app.add_subcommand("build-bank", "precompute style embeddings");
  build->add_option("--images", bb.images, "style image directory")->required();
  build->add_option("--out", bb.out, "output bank path (.ssbk)")->required();
  build->add_option("--weights", bb.weights, "engine checkpoint (.ssck)");
  build->add_option("--seed", bb.seed, "random seed");
  build->add_option("--embed-dim", bb.embed_dim, "style embedding length");

  ExportArgs ex;
  CLI::App* expcsv = app.add_subcommand("export-embeddings", "dump style embeddings as CSV");
  expcsv->add_option("--bank", ex.bank, "style bank (.ssbk)");
  expcsv->add_option("--images", ex.images, "image directory (embeddings computed)");
  expcsv->add_option("--weights", ex.weights, "engine checkpoint (.ssck)");
  expcsv->add_option("--seed", ex.seed, "random seed");
  expcsv->add_option("--embed-dim", ex.embed_dim, "style embedding length");
  expcsv->add_option("--out", ex.out, "output CSV path")->required();

  PretrainArgs pt;
  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "contrastive pretraining");
  pretrain_cmd->add_option("--config", pt.config, "run configuration")->required();
  pretrain_cmd->add_option("--out-dir", pt.out_dir, "output directory (overrides config)");

  ProbeArgs pr;
  CLI::App* probe = app.add_subcommand("probe", "linear probe of frozen features");
  probe->add_option("--config", pr.config, "run configuration")->required();
  probe->add_option("--ckpt", pr.ckpt, "model checkpoint (.ssck)")->required();
  probe->add_option("--out", pr.out, "output JSON path");

  FewshotArgs fsa;
  CLI::App* fewshot = app.add_subcommand("fewshot", "few-shot evaluation");
  fewshot->add_option("--config", fsa.config, "run configuration")->required();
  fewshot->add_option("--ckpt", fsa.ckpt, "model checkpoint (.ssck)")->required();
  fewshot->add_option("--k", fsa.k, "examples per class");
  fewshot->add_option("--trials", fsa.trials, "number of trials");
  fewshot->add_option("--out", fsa.out, "output JSON path");

  InvarianceArgs inv;
  CLI::App* invariance = app.add_subcommand("invariance", "texture-invariance score");
  invariance->add_option("--config", inv.config, "run configuration")->required();
  invariance->add_option("--ckpt", inv.ckpt, "model checkpoint (.ssck)")->required();
  invariance->add_option("--baseline-ckpt", inv.baseline_ckpt, "baseline checkpoint (.ssck)");
  invariance->add_option("--n", inv.n, "number of images");
  invariance->add_option("--out", inv.out, "output JSON path");

  BenchArgs ba;
  CLI::App* bench = app.add_subcommand("bench", "augmentation throughput benchmark");
  bench->add_option("--config", ba.config, "run configuration")->required();
  bench->add_option("--runs", ba.runs, "timed runs per pipeline");
  bench->add_option("--warmup", ba.warmup, "untimed warmup runs");
  bench->add_option("--mode", ba.mode, "candidate pipeline: default|sassl");
  bench->add_option("--workers", ba.workers, "augmentation worker threads");
  bench->add_option("--out", ba.out, "output JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*stylize) return cmd_stylize(st);
    if (*build) return cmd_build_bank(bb);
    if (*expcsv) return cmd_export_embeddings(ex);
    if (*pretrain_cmd) return cmd_pretrain(pt);
    if (*probe) return cmd_probe(pr);
    if (*fewshot) return cmd_fewshot(fsa);
    if (*invariance) return cmd_invariance(inv);
    if (*bench) return cmd_bench(ba);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
