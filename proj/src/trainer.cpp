#include "gdm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "gdm/error.hpp"

namespace gdm {

void TrainConfig::validate() const {
  if (patch_size < kSizeMultiple || patch_size % kSizeMultiple != 0) {
    throw ConfigError("patch_size must be a positive multiple of 4, got " +
                      std::to_string(patch_size));
  }
  if (stride && *stride < 1) throw ConfigError("stride must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) {
    throw ConfigError("mask_fraction must lie in (0, 1)");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw ConfigError("invalid Adam parameters");
  }
  weights.validate();
  try {
    unet.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"schema_version", kConfigSchemaVersion},
      {"patch_size", c.patch_size},
      {"stride", c.effective_stride()},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"mask_fraction", c.mask_fraction},
      {"epochs", c.epochs},
      {"w1", c.weights.w1},
      {"w2", c.weights.w2},
      {"reduction", to_string(c.reduction)},
      {"fft_loss_enabled", c.fft_loss_enabled},
      {"seed", c.seed},
      {"unet", c.unet},
      {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  static const std::set<std::string> known{
      "schema_version", "patch_size", "stride", "batch_size", "learning_rate",
      "mask_fraction",  "epochs",     "w1",     "w2",         "reduction",
      "fft_loss_enabled", "seed",     "unet",   "adam"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown training config key '" + key + "'");
  }
  if (!j.contains("schema_version") || j.at("schema_version") != kConfigSchemaVersion) {
    throw ConfigError("training config needs schema_version " +
                      std::to_string(kConfigSchemaVersion));
  }
  try {
    if (j.contains("patch_size")) c.patch_size = j.at("patch_size").get<int>();
    if (j.contains("stride")) c.stride = j.at("stride").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("mask_fraction")) c.mask_fraction = j.at("mask_fraction").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("w1")) c.weights.w1 = j.at("w1").get<double>();
    if (j.contains("w2")) c.weights.w2 = j.at("w2").get<double>();
    if (j.contains("reduction")) {
      c.reduction = reduction_from_string(j.at("reduction").get<std::string>());
    }
    if (j.contains("fft_loss_enabled")) c.fft_loss_enabled = j.at("fft_loss_enabled").get<bool>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("unet")) c.unet = j.at("unet").get<UNetSpec>();
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
      c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j.get<TrainConfig>();
}

double lr_at_epoch(double base_lr, int epoch) {
  if (epoch < 0) throw InvalidInput("epoch must be >= 0");
  return base_lr * std::pow(0.5, epoch / 10);
}

TrainConfig ablate_fft(TrainConfig config) {
  config.fft_loss_enabled = false;
  return config;
}

Adam::Adam(const Model& model, AdamParams params) : p_(params) {
  for (const auto& t : model.parameters()) {
    m_.emplace_back(t.values.size(), 0.0);
    v_.emplace_back(t.values.size(), 0.0);
  }
}

void Adam::step(Model& model, const Gradients<float>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].values;
    auto& m = m_[i];
    auto& v = v_[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = p_.beta1 * m[k] + (1.0 - p_.beta1) * gk;
      v[k] = p_.beta2 * v[k] + (1.0 - p_.beta2) * gk * gk;
      const double mh = m[k] / c1;
      const double vh = v[k] / c2;
      w[k] = static_cast<float>(w[k] - lr * mh / (std::sqrt(vh) + p_.epsilon));
    }
  }
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = nlohmann::json{{"epoch", r.epoch}, {"l_px", r.l_px}, {"L", r.total}, {"lr", r.lr}};
  j["l_fft"] = r.l_fft ? nlohmann::json(*r.l_fft) : nlohmann::json(nullptr);
}

namespace {

struct ChannelState {
  int id = 0;
  std::vector<Patch> patches;
  std::vector<std::size_t> order;
  Rng rng;
};

Rng channel_rng(std::uint64_t seed, int channel_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(channel_id), 0x6764u};
  return Rng(seq);
}

Tensor<float> to_tensor(const std::vector<MaskedPatch>& patches) {
  const int s = patches.front().size();
  Tensor<float> t(static_cast<int>(patches.size()), 1, s, s);
  for (std::size_t b = 0; b < patches.size(); ++b) {
    auto dst = t.sample(static_cast<int>(b));
    const Matrix& src = patches[b].corrupted;
    for (Eigen::Index i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src.data()[i]);
  }
  return t;
}

std::vector<Matrix> to_matrices(const Tensor<float>& t) {
  std::vector<Matrix> out;
  for (int b = 0; b < t.n; ++b) {
    Matrix m(t.h, t.w);
    auto src = t.sample(b);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = src[i];
    out.push_back(std::move(m));
  }
  return out;
}

void check_channels(const std::vector<ChannelSpec>& channels, const TrainConfig& config) {
  if (channels.empty()) throw ConfigError("at least one training channel is required");
  std::set<int> seen;
  bool any_active = false;
  for (const auto& ch : channels) {
    if (ch.channel_id != 1 && ch.channel_id != 2) {
      throw ConfigError("channel id must be 1 or 2, got " + std::to_string(ch.channel_id));
    }
    if (!seen.insert(ch.channel_id).second) {
      throw ConfigError("channel " + std::to_string(ch.channel_id) + " given twice");
    }
    if (std::abs(ch.weight - config.weights.of(ch.channel_id)) > 1e-9) {
      throw ConfigError("channel " + std::to_string(ch.channel_id) +
                        " weight disagrees with the training config");
    }
    if (ch.image.empty()) throw ConfigError("channel image is empty");
    if (ch.image.height() < config.patch_size || ch.image.width() < config.patch_size) {
      throw ConfigError("channel " + std::to_string(ch.channel_id) + " image (" +
                        std::to_string(ch.image.height()) + "x" + std::to_string(ch.image.width()) +
                        ") is smaller than patch_size " + std::to_string(config.patch_size));
    }
    any_active = any_active || ch.weight > 0.0;
  }
  // Weight on an absent channel means the loss could never reach that term.
  for (int id : {1, 2}) {
    if (!seen.contains(id) && config.weights.of(id) > 0.0) {
      throw ConfigError("weight w" + std::to_string(id) + " > 0 but channel " +
                        std::to_string(id) + " has no image");
    }
  }
  if (!any_active) throw ConfigError("no channel has a positive weight");
}

bool finite_grads(const Gradients<float>& g) {
  for (const auto& t : g) {
    for (float v : t) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

TrainResult train(const std::vector<ChannelSpec>& channels, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  check_channels(channels, config);

  Rng init_rng(config.seed);
  Model model = build_unet(config.unet, init_rng);
  Adam adam(model, config.adam);

  // Zero-weight channels contribute nothing to the loss or its gradient, so
  // they are skipped entirely and cannot perturb the other channels' streams.
  std::vector<ChannelState> active;
  for (const auto& ch : channels) {
    if (ch.weight <= 0.0) continue;
    ChannelState st;
    st.id = ch.channel_id;
    st.patches = extract_patches(ch.image, config.patch_size, config.effective_stride());
    st.order.resize(st.patches.size());
    st.rng = channel_rng(config.seed, ch.channel_id);
    active.push_back(std::move(st));
  }
  std::sort(active.begin(), active.end(),
            [](const ChannelState& a, const ChannelState& b) { return a.id < b.id; });
  std::size_t n_max = 0;
  for (const auto& st : active) n_max = std::max(n_max, st.patches.size());
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n_max + batch - 1) / batch;

  TrainResult result;
  Gradients<float> grads = model.zero_gradients();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config.learning_rate, epoch);
    for (auto& st : active) {
      for (std::size_t i = 0; i < st.order.size(); ++i) st.order[i] = i;
      std::shuffle(st.order.begin(), st.order.end(), st.rng);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    if (config.fft_loss_enabled) rec.l_fft = 0.0;

    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t begin = step * batch;
      const std::size_t nb = std::min(batch, n_max - begin);

      std::vector<ChannelBatch> batches;
      std::vector<ForwardCache<float>> caches(active.size());
      for (std::size_t ci = 0; ci < active.size(); ++ci) {
        auto& st = active[ci];
        ChannelBatch cb;
        cb.channel_id = st.id;
        for (std::size_t j = 0; j < nb; ++j) {
          const auto& p = st.patches[st.order[(begin + j) % st.patches.size()]];
          cb.patches.push_back(apply_blindspot_mask(p, config.mask_fraction, st.rng));
        }
        cb.predictions = to_matrices(model.forward(to_tensor(cb.patches), caches[ci]));
        batches.push_back(std::move(cb));
      }

      const CompositeLoss loss = composite_loss_with_gradients(
          batches, config.weights, config.reduction, config.fft_loss_enabled);
      const auto& bd = loss.breakdown;
      if (!std::isfinite(bd.total) || !std::isfinite(bd.l_px) ||
          (bd.l_fft && !std::isfinite(*bd.l_fft))) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(step));
      }

      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
      for (std::size_t ci = 0; ci < active.size(); ++ci) {
        const int s = config.patch_size;
        Tensor<float> grad_out(static_cast<int>(nb), 1, s, s);
        for (std::size_t b = 0; b < nb; ++b) {
          auto dst = grad_out.sample(static_cast<int>(b));
          const Matrix& g = loss.gradients[ci][b];
          for (Eigen::Index i = 0; i < g.size(); ++i) dst[i] = static_cast<float>(g.data()[i]);
        }
        model.backward(caches[ci], grad_out, grads);
      }
      if (!finite_grads(grads)) {
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(step));
      }
      adam.step(model, grads, lr);

      result.steps.push_back({epoch, static_cast<int>(step), bd.l_px, bd.l_fft, bd.total, lr});
      rec.l_px += bd.l_px;
      if (rec.l_fft) *rec.l_fft += *bd.l_fft;
      rec.total += bd.total;
    }
    const double n = static_cast<double>(steps_per_epoch);
    rec.l_px /= n;
    if (rec.l_fft) *rec.l_fft /= n;
    rec.total /= n;
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  result.optimizer_steps = adam.steps_taken();

  nlohmann::json meta;
  meta["train_config"] = config;
  meta["epoch"] = config.epochs;
  meta["seed"] = config.seed;
  meta["optimizer"] = {{"name", "adam"},
                       {"beta1", config.adam.beta1},
                       {"beta2", config.adam.beta2},
                       {"epsilon", config.adam.epsilon},
                       {"steps", result.optimizer_steps}};
  meta["loss_history"] = result.history;
  std::vector<nlohmann::json> chans;
  for (const auto& ch : channels) {
    chans.push_back({{"channel_id", ch.channel_id},
                     {"weight", ch.weight},
                     {"height", ch.image.height()},
                     {"width", ch.image.width()}});
  }
  meta["channels"] = chans;
  result.checkpoint = Checkpoint{std::move(model), std::move(meta)};
  return result;
}

void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,l_px,l_fft,L,lr\n" << std::setprecision(17);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.l_px << ',';
    if (r.l_fft) out << *r.l_fft;
    out << ',' << r.total << ',' << r.lr << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gdm
