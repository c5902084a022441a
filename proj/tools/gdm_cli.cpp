// gdm: command-line front end for preprocessing, training, denoising,
// evaluation, and synthetic data generation.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gdm/error.hpp"
#include "gdm/image.hpp"
#include "gdm/metrics.hpp"
#include "gdm/model.hpp"
#include "gdm/preprocess.hpp"
#include "gdm/synth.hpp"
#include "gdm/trainer.hpp"
#include "run_context.hpp"

#ifndef GDM_VERSION
#define GDM_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace gdm::cli {
namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kInvalidInput = 2,
  kConfig = 3,
  kIo = 4,
  kCheckpoint = 5,
  kNumeric = 6,
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("GDM_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used, 0);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("GDM_SEED is not an unsigned integer: '") + s + "'");
  }
}

// --seed wins, then a seed from a config file, then GDM_SEED, then 0.
std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value,
                           std::optional<std::uint64_t> from_config = std::nullopt) {
  if (flag->count() > 0) return flag_value;
  if (from_config) return *from_config;
  if (auto e = env_seed()) return *e;
  return 0;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p.parent_path() / p.stem();
  out += suffix;
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void save_tracked(RunContext& ctx, const GrayImage& img, const fs::path& path) {
  save_image(img, ctx.output(path));
}

void finish(RunContext& ctx, const fs::path& manifest_path) {
  json m = ctx.manifest(GDM_VERSION);
  m["cwd"] = fs::current_path().string();
  m["outputs"].push_back(manifest_path.string());
  write_json(ctx.output(manifest_path), m);
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  std::string mode;
  std::string input;
  std::string out_dir;
  StmParams stm;
  AfmParams afm;
  std::string axis = "columns";
  int threshold = 130;
  double radius = 3.0;
};

void add_preprocess(CLI::App& app, PreprocessArgs& a) {
  auto* sub = app.add_subcommand("preprocess", "Goal-specific preparation of a training image");
  sub->add_option("--mode", a.mode, "stm: band-pass ripple enhancement; afm: notch filter, "
                                    "dark mask and merge; sem: bright-strip mask and inpainting")
      ->required()
      ->check(CLI::IsMember({"stm", "afm", "sem"}));
  sub->add_option("input", a.input, "Input PNG/TIFF image")->required()->check(CLI::ExistingFile);
  sub->add_option("--out-dir", a.out_dir, "Output directory (default: next to the input)");
  auto* g_stm = sub->add_option_group("stm");
  g_stm->add_option("--r-low", a.stm.r_low, "Inner band-pass radius in frequency pixels")
      ->capture_default_str();
  g_stm->add_option("--r-high", a.stm.r_high, "Outer band-pass radius in frequency pixels")
      ->capture_default_str();
  g_stm->add_option("--theta-margin", a.stm.theta_margin_deg,
                    "Angular half-width (degrees) excluded around the vertical frequency axis")
      ->capture_default_str();
  auto* g_afm = sub->add_option_group("afm");
  g_afm->add_option("--dc-radius", a.afm.dc_radius,
                    "Radius (pixels) around the spectrum center that is never notched")
      ->capture_default_str();
  g_afm->add_option("--smooth-sigma", a.afm.smooth_sigma,
                    "Gaussian sigma (pixels) for smoothing the energy profile")
      ->capture_default_str();
  g_afm->add_option("--notch-half-width", a.afm.notch_half_width, "Notch half-width in pixels")
      ->capture_default_str();
  g_afm->add_option("--dark-percentile", a.afm.dark_percentile,
                    "Intensity percentile below which pixels enter the dark mask")
      ->capture_default_str();
  g_afm->add_option("--peak-mad", a.afm.peak_mad_factor,
                    "Profile peaks must exceed median + k * MAD; this sets k")
      ->capture_default_str();
  g_afm->add_option("--axis", a.axis, "Profile and notch spectrum columns or rows")
      ->check(CLI::IsMember({"columns", "rows"}))
      ->capture_default_str();
  auto* g_sem = sub->add_option_group("sem");
  g_sem->add_option("--threshold", a.threshold,
                    "8-bit intensity above which a pixel belongs to a bright strip")
      ->capture_default_str();
  g_sem->add_option("--radius", a.radius, "Inpainting neighbourhood radius in pixels")
      ->capture_default_str();
}

void run_preprocess(const PreprocessArgs& a, RunContext& ctx) {
  const fs::path in(a.input);
  const fs::path dir = a.out_dir.empty() ? in.parent_path() : fs::path(a.out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  const fs::path base = dir / in.stem();
  auto out = [&](const std::string& tag) {
    fs::path p = base;
    p += "." + tag + ".png";
    return p;
  };
  ctx.input(in);
  const GrayImage img = load_image(in);
  json& cfg = ctx.config();
  cfg["mode"] = a.mode;

  if (a.mode == "stm") {
    cfg["r_low"] = a.stm.r_low;
    cfg["r_high"] = a.stm.r_high;
    cfg["theta_margin_deg"] = a.stm.theta_margin_deg;
    const StmResult r = stm_bandpass(img, a.stm);
    cfg["frequency_mask"] = r.mask.description;
    save_tracked(ctx, r.image, out("bandpass"));
  } else if (a.mode == "afm") {
    AfmParams p = a.afm;
    p.axis = a.axis == "rows" ? NotchAxis::kRows : NotchAxis::kColumns;
    cfg["dc_radius"] = p.dc_radius;
    cfg["smooth_sigma"] = p.smooth_sigma;
    cfg["notch_half_width"] = p.notch_half_width;
    cfg["dark_percentile"] = p.dark_percentile;
    cfg["peak_mad_factor"] = p.peak_mad_factor;
    cfg["axis"] = a.axis;
    const AfmResult r = afm_notch_clean(img, p);
    cfg["notch_lines"] = r.notch_lines;
    cfg["notch_mask"] = r.notch.description;
    save_tracked(ctx, r.cleaned, out("cleaned"));
    save_tracked(ctx, r.pair.dark_masked, out("darkmask"));
    save_tracked(ctx, r.pair.merged, out("merged"));
  } else {
    cfg["threshold"] = a.threshold;
    cfg["radius"] = a.radius;
    const SemResult r = sem_clean(img, a.threshold, a.radius);
    save_tracked(ctx, mask_to_image(r.mask), out("stripmask"));
    save_tracked(ctx, r.cleaned, out("cleaned"));
  }
  fs::path manifest = base;
  manifest += "." + a.mode + ".manifest.json";
  finish(ctx, manifest);
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string ch1, ch2, config_file, out = "gdm_model";
  TrainConfig cfg;
  int stride = 0;
  std::string reduction = "mean";
  bool no_fft = false;
  bool quiet = false;
  CLI::Option* o_seed = nullptr;
  std::map<std::string, CLI::Option*> opts;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* sub = app.add_subcommand("train", "Train the U-Net on one or two channel images");
  auto& o = a.opts;
  o["ch1"] = sub->add_option("--ch1", a.ch1, "Channel 1 training image")->check(CLI::ExistingFile);
  o["ch2"] = sub->add_option("--ch2", a.ch2, "Channel 2 training image")->check(CLI::ExistingFile);
  o["w1"] = sub->add_option("--w1", a.cfg.weights.w1,
                            "Channel 1 weight (w1 + w2 = 1; defaults to 1 with a single channel)")
                ->capture_default_str();
  o["w2"] = sub->add_option("--w2", a.cfg.weights.w2, "Channel 2 weight")->capture_default_str();
  sub->add_option("--config", a.config_file, "JSON training config; flags override its values")
      ->check(CLI::ExistingFile);
  o["patch_size"] = sub->add_option("--patch-size", a.cfg.patch_size,
                                    "Square training patch side (multiple of 4)")
                        ->capture_default_str();
  o["stride"] = sub->add_option("--stride", a.stride,
                                "Patch grid stride (default: patch size, non-overlapping)");
  o["batch_size"] = sub->add_option("--batch-size", a.cfg.batch_size, "Patches per channel per step")
                        ->capture_default_str();
  o["learning_rate"] = sub->add_option("--lr", a.cfg.learning_rate,
                                       "Base Adam learning rate, halved every 10 epochs")
                           ->capture_default_str();
  o["mask_fraction"] = sub->add_option("--mask-fraction", a.cfg.mask_fraction,
                                       "Fraction of blind-spot masked pixels per patch")
                           ->capture_default_str();
  o["epochs"] = sub->add_option("--epochs", a.cfg.epochs, "Training epochs")->capture_default_str();
  o["reduction"] = sub->add_option("--reduction", a.reduction,
                                   "Batch reduction of the loss terms: mean or sum")
                       ->check(CLI::IsMember({"mean", "sum"}))
                       ->capture_default_str();
  o["no_fft"] = sub->add_flag("--no-fft", a.no_fft, "Ablation: train on the masked-pixel MSE only");
  a.o_seed = sub->add_option("--seed", a.cfg.seed, "Seed for initialization, shuffling and masks "
                                                   "(fallback: GDM_SEED, then 0)");
  sub->add_option("--out", a.out, "Checkpoint base path (writes .gdmw, .json, .loss.csv)")
      ->capture_default_str();
  sub->add_flag("--quiet", a.quiet, "Do not print per-epoch losses");
}

void run_train(TrainArgs& a, RunContext& ctx) {
  auto given = [&](const char* k) { return a.opts.at(k)->count() > 0; };
  if (a.ch1.empty() && a.ch2.empty()) {
    throw CLI::ValidationError("train", "at least one of --ch1 / --ch2 is required");
  }

  TrainConfig cfg;
  std::optional<std::uint64_t> cfg_seed;
  bool cfg_weights = false;
  if (!a.config_file.empty()) {
    ctx.input(a.config_file);
    std::ifstream in(a.config_file);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(a.config_file + ": " + e.what());
    }
    cfg = j.get<TrainConfig>();
    if (j.contains("seed")) cfg_seed = cfg.seed;
    cfg_weights = j.contains("w1") || j.contains("w2");
  }
  if (given("patch_size")) cfg.patch_size = a.cfg.patch_size;
  if (given("stride")) cfg.stride = a.stride;
  if (given("batch_size")) cfg.batch_size = a.cfg.batch_size;
  if (given("learning_rate")) cfg.learning_rate = a.cfg.learning_rate;
  if (given("mask_fraction")) cfg.mask_fraction = a.cfg.mask_fraction;
  if (given("epochs")) cfg.epochs = a.cfg.epochs;
  if (given("reduction")) cfg.reduction = reduction_from_string(a.reduction);
  if (a.no_fft) cfg = ablate_fft(cfg);

  if (given("w1") && given("w2")) {
    cfg.weights = a.cfg.weights;
  } else if (given("w1")) {
    cfg.weights = {a.cfg.weights.w1, 1.0 - a.cfg.weights.w1};
  } else if (given("w2")) {
    cfg.weights = {1.0 - a.cfg.weights.w2, a.cfg.weights.w2};
  } else if (!cfg_weights) {
    if (a.ch2.empty()) cfg.weights = {1.0, 0.0};
    if (a.ch1.empty()) cfg.weights = {0.0, 1.0};
  }
  cfg.seed = resolve_seed(a.o_seed, a.cfg.seed, cfg_seed);
  cfg.validate();

  std::vector<ChannelSpec> channels;
  json chan_paths = json::object();
  for (auto [id, path] : {std::pair{1, a.ch1}, std::pair{2, a.ch2}}) {
    if (path.empty()) continue;
    ctx.input(path);
    channels.push_back({id, load_image(path), cfg.weights.of(id)});
    chan_paths[std::to_string(id)] = path;
  }
  ctx.config() = cfg;
  ctx.seed("train", cfg.seed);

  TrainHooks hooks;
  if (!a.quiet) {
    hooks.on_epoch = [&](const EpochRecord& r) {
      std::cerr << "epoch " << r.epoch << "  l_px " << r.l_px;
      if (r.l_fft) std::cerr << "  l_fft " << *r.l_fft;
      std::cerr << "  L " << r.total << "  lr " << r.lr << "  (" << std::fixed
                << std::setprecision(1) << ctx.elapsed() << " s)" << std::defaultfloat
                << std::setprecision(6) << '\n';
    };
  }
  TrainResult result = train(channels, cfg, hooks);
  ctx.mark_timing("train_seconds");

  json meta = result.checkpoint.metadata;
  meta["channel_paths"] = chan_paths;
  const fs::path base(a.out);
  ctx.output(weights_path(base));
  ctx.output(metadata_path(base));
  save_checkpoint(result.checkpoint.model, meta, base);
  write_loss_csv(result.history, ctx.output(with_suffix(weights_path(base), ".loss.csv")));
  finish(ctx, with_suffix(weights_path(base), ".manifest.json"));
}

// ------------------------------------------------------------------- denoise

struct DenoiseArgs {
  std::string ckpt, input, out;
  DenoiseOptions opts;
};

void add_denoise(CLI::App& app, DenoiseArgs& a) {
  auto* sub = app.add_subcommand("denoise", "Denoise an image with a trained checkpoint");
  sub->add_option("--ckpt", a.ckpt, "Checkpoint base path")->required();
  sub->add_option("--in", a.input, "Noisy input image")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", a.out, "Output image (PNG, or TIFF to keep 16-bit depth)")->required();
  sub->add_flag("--tile", a.opts.force_tiling, "Force tiled inference");
  sub->add_option("--tile-size", a.opts.tile_size, "Tile side for tiled inference")
      ->capture_default_str();
  sub->add_option("--overlap", a.opts.overlap, "Feathered overlap between tiles in pixels")
      ->capture_default_str();
}

void run_denoise(const DenoiseArgs& a, RunContext& ctx) {
  ctx.input(weights_path(a.ckpt));
  ctx.input(a.input);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const GrayImage img = load_image(a.input);
  ctx.config() = {{"force_tiling", a.opts.force_tiling},
                  {"tile_size", a.opts.tile_size},
                  {"overlap", a.opts.overlap}};
  const GrayImage out = denoise_image(ck.model, img, a.opts);
  save_tracked(ctx, out, a.out);
  finish(ctx, with_suffix(a.out, ".manifest.json"));
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
  std::string noisy, denoised, modality = "stm", out = "evaluate";
  std::vector<double> theta{-30.0, 30.0};
  bool no_plots = false;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* sub = app.add_subcommand("evaluate", "PNR and line-length metrics for a noisy/denoised pair");
  sub->add_option("--noisy", a.noisy, "Noisy image")->required()->check(CLI::ExistingFile);
  sub->add_option("--denoised", a.denoised, "Denoised image")->required()->check(CLI::ExistingFile);
  sub->add_option("--modality", a.modality,
                  "Selects line-detector defaults: stm (sigma 0.1, low 1, gap 2), "
                  "afm (sigma 1, low 1, gap 2), sem (sigma 1, low 5, gap 1); high 10")
      ->check(CLI::IsMember({"stm", "afm", "sem"}))
      ->capture_default_str();
  sub->add_option("--theta", a.theta, "Open angle range in degrees for the line length")
      ->expected(2)
      ->allow_extra_args(false)
      ->capture_default_str();
  sub->add_option("--out", a.out, "Output prefix for the CSV and overlay PNGs")
      ->capture_default_str();
  sub->add_flag("--no-plots", a.no_plots, "Skip the overlay PNGs");
}

void run_evaluate(const EvaluateArgs& a, RunContext& ctx) {
  ctx.input(a.noisy);
  ctx.input(a.denoised);
  const GrayImage noisy = load_image(a.noisy);
  const GrayImage den = load_image(a.denoised);
  const Modality mod = modality_from_string(a.modality);
  const MetricsReport r = evaluate_pair(noisy, den, mod, a.theta[0], a.theta[1]);
  ctx.config() = {{"modality", a.modality}, {"theta1", a.theta[0]}, {"theta2", a.theta[1]}};
  ctx.seed("hough", r.lines_noisy.hough_seed);

  const fs::path prefix(a.out);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  auto path = [&](const std::string& suffix) {
    fs::path p = prefix;
    p += suffix;
    return p;
  };
  {
    const fs::path csv = ctx.output(path(".csv"));
    std::ofstream out(csv, std::ios::trunc);
    if (!out) throw IoError("cannot open " + csv.string() + " for writing");
    out << "image,pnr_db_noisy,pnr_db_denoised,line_len_noisy,line_len_denoised,theta1,theta2\n"
        << std::setprecision(10) << a.noisy << ',' << r.pnr_noisy.pnr_db << ','
        << r.pnr_denoised.pnr_db << ',' << r.line_len_noisy << ',' << r.line_len_denoised << ','
        << a.theta[0] << ',' << a.theta[1] << '\n';
    if (!out) throw IoError("failed writing " + csv.string());
  }
  if (!a.no_plots) {
    write_spectrum_overlay(r.pnr_noisy, ctx.output(path(".noisy_spectrum.png")));
    write_spectrum_overlay(r.pnr_denoised, ctx.output(path(".denoised_spectrum.png")));
    write_lines_overlay(noisy, r.lines_noisy, a.theta[0], a.theta[1],
                        ctx.output(path(".noisy_lines.png")));
    write_lines_overlay(den, r.lines_denoised, a.theta[0], a.theta[1],
                        ctx.output(path(".denoised_lines.png")));
  }
  std::cout << std::setprecision(6) << "PNR (dB)     noisy " << r.pnr_noisy.pnr_db << "  denoised "
            << r.pnr_denoised.pnr_db << "  delta " << r.pnr_delta << '\n'
            << "line length  noisy " << r.line_len_noisy << "  denoised " << r.line_len_denoised
            << "  delta " << r.line_len_delta << '\n';
  finish(ctx, path(".manifest.json"));
}

// --------------------------------------------------------------------- synth

struct SynthArgs {
  std::string out, input, mask_out;
  QpiParams qpi;
  ArtifactSpec art;
  int lattice_size = 256;
  double lattice_period = 8.0;
  double lattice_angle = 0.0;
  std::uint64_t seed = 0;
  std::map<std::string, CLI::Option*> seed_opts;
  std::string which;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* sub = app.add_subcommand("synth", "Generate synthetic images and inject artifacts");
  sub->require_subcommand(1);

  auto* qpi = sub->add_subcommand("qpi", "Standing-wave (QPI) image from point scatterers");
  qpi->add_option("--size", a.qpi.image_size_px, "Image side in pixels")->capture_default_str();
  qpi->add_option("--fov-nm", a.qpi.field_of_view_nm, "Field of view in nm")->capture_default_str();
  qpi->add_option("--scatterers", a.qpi.n_scatterers, "Number of point defects")
      ->capture_default_str();
  qpi->add_option("--mass-ratio", a.qpi.effective_mass_ratio,
                  "Surface-state effective mass in electron masses (Cu(111) value)")
      ->capture_default_str();
  qpi->add_option("--mu", a.qpi.chemical_potential_ev,
                  "Chemical potential in eV (Cu(111) value)")
      ->capture_default_str();
  qpi->add_option("--decay", a.qpi.decay_exponent, "Radial decay exponent of each ripple")
      ->capture_default_str();
  qpi->add_option("--defect-radius-nm", a.qpi.defect_radius_nm, "Dark disk radius at each defect")
      ->capture_default_str();
  a.seed_opts["qpi"] = qpi->add_option("--seed", a.seed, "Seed (fallback: GDM_SEED, then 0)");
  qpi->add_option("--out", a.out, "Output image")->required();

  auto* scan = sub->add_subcommand("scanlines", "Add scan-line artifacts");
  scan->add_option("--in", a.input, "Input image")->required()->check(CLI::ExistingFile);
  scan->add_option("--amplitude", a.art.amplitude, "Row offset and segment amplitude")
      ->capture_default_str();
  scan->add_option("--density", a.art.density, "Jittered segments per image row")
      ->capture_default_str();
  scan->add_option("--jitter", a.art.angle_jitter_deg, "Segment tilt range in degrees")
      ->capture_default_str();
  a.seed_opts["scanlines"] = scan->add_option("--seed", a.seed, "Seed (fallback: GDM_SEED, then 0)");
  scan->add_option("--out", a.out, "Output image")->required();

  auto* strips = sub->add_subcommand("strips", "Paint bright strips");
  strips->add_option("--in", a.input, "Input image")->required()->check(CLI::ExistingFile);
  strips->add_option("--amplitude", a.art.amplitude, "Strip brightness in [0, 1] above 130/255")
      ->capture_default_str();
  strips->add_option("--count", a.art.count, "Number of strips")->capture_default_str();
  strips->add_option("--jitter", a.art.angle_jitter_deg, "Strip tilt range in degrees")
      ->capture_default_str();
  strips->add_option("--mask-out", a.mask_out, "Also write the painted-pixel mask");
  a.seed_opts["strips"] = strips->add_option("--seed", a.seed, "Seed (fallback: GDM_SEED, then 0)");
  strips->add_option("--out", a.out, "Output image")->required();

  auto* noise = sub->add_subcommand("noise", "Add white Gaussian noise");
  noise->add_option("--in", a.input, "Input image")->required()->check(CLI::ExistingFile);
  noise->add_option("--sigma", a.art.sigma, "Noise standard deviation")->capture_default_str();
  a.seed_opts["noise"] = noise->add_option("--seed", a.seed, "Seed (fallback: GDM_SEED, then 0)");
  noise->add_option("--out", a.out, "Output image")->required();

  auto* lat = sub->add_subcommand("lattice", "Hexagonal cosine test texture");
  lat->add_option("--size", a.lattice_size, "Image side in pixels")->capture_default_str();
  lat->add_option("--period", a.lattice_period, "Lattice period in pixels")->capture_default_str();
  lat->add_option("--angle", a.lattice_angle, "Lattice rotation in degrees")->capture_default_str();
  lat->add_option("--out", a.out, "Output image")->required();

  for (auto* s : {qpi, scan, strips, noise, lat}) {
    s->callback([&a, s] { a.which = s->get_name(); });
  }
}

void run_synth(SynthArgs& a, RunContext& ctx) {
  json params;
  GrayImage img;
  std::optional<BinaryMask> painted;
  if (a.which != "lattice") {
    const std::uint64_t seed = resolve_seed(a.seed_opts.at(a.which), a.seed);
    ctx.seed(a.which, seed);
    a.qpi.seed = seed;
    a.art.seed = seed;
  }
  if (a.which == "qpi") {
    img = simulate_qpi(a.qpi);
    params = a.qpi;
  } else if (a.which == "lattice") {
    img = hex_lattice(a.lattice_size, a.lattice_period, a.lattice_angle);
    params = {{"size", a.lattice_size}, {"period_px", a.lattice_period},
              {"angle_deg", a.lattice_angle}};
  } else {
    ctx.input(a.input);
    const GrayImage src = load_image(a.input);
    if (a.which == "scanlines") {
      a.art.kind = ArtifactKind::kScanlines;
      img = add_scanlines(src, a.art);
    } else if (a.which == "strips") {
      a.art.kind = ArtifactKind::kBrightStrips;
      StripResult r = add_bright_strips(src, a.art);
      img = std::move(r.image);
      painted = std::move(r.painted);
    } else {
      a.art.kind = ArtifactKind::kGaussianNoise;
      img = add_gaussian_noise(src, a.art);
    }
    params = a.art;
    params["input"] = a.input;
  }
  ctx.config() = params;

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_tracked(ctx, img, out);
  if (painted && !a.mask_out.empty()) save_tracked(ctx, mask_to_image(*painted), a.mask_out);
  json sidecar = {{"generator", a.which}, {"parameters", params}, {"seeds", ctx.manifest("").at("seeds")},
                  {"height", img.height()}, {"width", img.width()}};
  if (img.pixel_size_nm()) sidecar["pixel_size_nm"] = *img.pixel_size_nm();
  write_json(ctx.output(with_suffix(out, ".json")), sidecar);
  finish(ctx, with_suffix(out, ".manifest.json"));
}

// -------------------------------------------------------------------- replay

int run(const std::vector<std::string>& args);

int run_replay(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot read manifest " + manifest_path);
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(manifest_path + ": " + e.what());
  }
  if (!m.contains("argv") || !m["argv"].is_array()) {
    throw ConfigError(manifest_path + " has no recorded argv");
  }
  const auto argv = m["argv"].get<std::vector<std::string>>();
  if (!argv.empty() && argv.front() == "replay") throw ConfigError("refusing to replay a replay");
  const fs::path old = fs::current_path();
  if (m.contains("cwd")) fs::current_path(m["cwd"].get<std::string>());
  const int code = run(argv);
  fs::current_path(old);
  return code;
}

// ---------------------------------------------------------------------- main

int run(const std::vector<std::string>& args) {
  CLI::App app{"GDM: self-supervised denoising for microscopy images"};
  app.set_version_flag("--version", GDM_VERSION);
  app.require_subcommand(1);

  PreprocessArgs pre;
  TrainArgs tr;
  DenoiseArgs dn;
  EvaluateArgs ev;
  SynthArgs sy;
  std::string replay_manifest;
  add_preprocess(app, pre);
  add_train(app, tr);
  add_denoise(app, dn);
  add_evaluate(app, ev);
  add_synth(app, sy);
  auto* rep = app.add_subcommand("replay", "Re-run a command from its manifest");
  rep->add_option("manifest", replay_manifest, "Manifest JSON written by an earlier run")
      ->required()
      ->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  RunContext ctx(name, args);
  try {
    if (name == "preprocess") run_preprocess(pre, ctx);
    else if (name == "train") run_train(tr, ctx);
    else if (name == "denoise") run_denoise(dn, ctx);
    else if (name == "evaluate") run_evaluate(ev, ctx);
    else if (name == "synth") run_synth(sy, ctx);
    else if (name == "replay") return run_replay(replay_manifest);
    return kOk;
  } catch (const CLI::ParseError& e) {
    ctx.remove_outputs();
    return app.exit(e);
  } catch (const Error& e) {
    ctx.remove_outputs();
    std::cerr << "gdm " << name << ": " << e.what() << '\n';
    if (dynamic_cast<const InvalidInput*>(&e)) return kInvalidInput;
    if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
    if (dynamic_cast<const IoError*>(&e)) return kIo;
    if (dynamic_cast<const CheckpointError*>(&e)) return kCheckpoint;
    if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
    return kFailure;
  } catch (const std::exception& e) {
    ctx.remove_outputs();
    std::cerr << "gdm " << name << ": " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace
}  // namespace gdm::cli

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gdm::cli::run(args);
}
