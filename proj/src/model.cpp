#include "gdm/model.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include "gdm/error.hpp"

namespace gdm {

namespace {

constexpr std::array<char, 4> kMagic{'G', 'D', 'M', 'W'};
constexpr std::array<char, 4> kFooter{'W', 'M', 'D', 'G'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint8_t kFloat32 = 1;

std::filesystem::path strip_known_extension(const std::filesystem::path& base) {
  const auto ext = base.extension();
  if (ext == ".gdmw" || ext == ".json") return std::filesystem::path(base).replace_extension();
  return base;
}

template <typename V>
void write_pod(std::ofstream& out, const V& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(V));
}

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  template <typename V>
  V pod(const char* what) {
    V value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(V));
    if (!in_) fail(std::string("truncated while reading ") + what);
    return value;
  }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (!in_) fail(std::string("truncated while reading ") + what);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw CheckpointError(path_.string() + ": " + msg);
  }

 private:
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

std::filesystem::path weights_path(const std::filesystem::path& base) {
  auto p = strip_known_extension(base);
  p += ".gdmw";
  return p;
}

std::filesystem::path metadata_path(const std::filesystem::path& base) {
  auto p = strip_known_extension(base);
  p += ".json";
  return p;
}

void save_checkpoint(const Model& model, const nlohmann::json& metadata,
                     const std::filesystem::path& base) {
  const auto wpath = weights_path(base);
  const auto mpath = metadata_path(base);
  if (wpath.has_parent_path()) std::filesystem::create_directories(wpath.parent_path());

  nlohmann::json meta = metadata;
  meta["unet_spec"] = model.spec();
  meta["parameter_count"] = model.parameter_count();
  meta["weights_file"] = wpath.filename().string();

  {
    std::ofstream out(wpath, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + wpath.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    write_pod(out, kFormatVersion);
    write_pod(out, static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
      write_pod(out, static_cast<std::uint32_t>(p.name.size()));
      out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      write_pod(out, kFloat32);
      write_pod(out, static_cast<std::uint32_t>(p.shape.size()));
      for (int d : p.shape) write_pod(out, static_cast<std::uint32_t>(d));
      write_pod(out, static_cast<std::uint64_t>(p.values.size()));
      out.write(reinterpret_cast<const char*>(p.values.data()),
                static_cast<std::streamsize>(p.values.size() * sizeof(float)));
    }
    out.write(kFooter.data(), kFooter.size());
    if (!out) throw IoError("failed writing " + wpath.string());
  }
  {
    std::ofstream out(mpath, std::ios::trunc);
    if (!out) throw IoError("cannot open " + mpath.string() + " for writing");
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + mpath.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& base) {
  const auto wpath = weights_path(base);
  const auto mpath = metadata_path(base);
  if (!std::filesystem::exists(mpath)) {
    throw CheckpointError("missing checkpoint metadata file " + mpath.string());
  }
  if (!std::filesystem::exists(wpath)) {
    throw CheckpointError("missing checkpoint weights file " + wpath.string());
  }

  Checkpoint ckpt;
  try {
    std::ifstream meta_in(mpath);
    ckpt.metadata = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt checkpoint metadata " + mpath.string() + ": " + e.what());
  }

  UNetSpec spec;
  try {
    spec = ckpt.metadata.at("unet_spec").get<UNetSpec>();
    spec.validate();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint metadata lacks a valid unet_spec: " + std::string(e.what()));
  } catch (const InvalidInput& e) {
    throw CheckpointError("checkpoint metadata has an invalid unet_spec: " + std::string(e.what()));
  }
  ckpt.model = Model::zeros(spec);

  std::ifstream in(wpath, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + wpath.string());
  Reader rd(in, wpath);

  std::array<char, 4> magic{};
  rd.bytes(magic.data(), magic.size(), "header");
  if (magic != kMagic) rd.fail("not a weights file (bad magic)");
  const auto version = rd.pod<std::uint32_t>("version");
  if (version != kFormatVersion) rd.fail("unsupported format version " + std::to_string(version));
  const auto count = rd.pod<std::uint32_t>("tensor count");
  auto& params = ckpt.model.parameters();
  if (count != params.size()) {
    rd.fail("holds " + std::to_string(count) + " tensors but the metadata spec implies " +
            std::to_string(params.size()));
  }

  for (auto& p : params) {
    const auto name_len = rd.pod<std::uint32_t>("name length");
    if (name_len > 4096) rd.fail("implausible tensor name length");
    std::string name(name_len, '\0');
    rd.bytes(name.data(), name_len, "tensor name");
    if (name != p.name) rd.fail("expected tensor '" + p.name + "', found '" + name + "'");
    if (rd.pod<std::uint8_t>("dtype") != kFloat32) rd.fail("tensor '" + name + "' is not float32");
    const auto ndim = rd.pod<std::uint32_t>("rank");
    if (ndim != p.shape.size()) rd.fail("tensor '" + name + "' has rank mismatch against spec");
    for (int d : p.shape) {
      const auto dim = rd.pod<std::uint32_t>("dimension");
      if (dim != static_cast<std::uint32_t>(d)) {
        rd.fail("tensor '" + name + "' shape does not match the metadata spec");
      }
    }
    const auto n = rd.pod<std::uint64_t>("value count");
    if (n != p.values.size()) rd.fail("tensor '" + name + "' value count mismatch");
    rd.bytes(reinterpret_cast<char*>(p.values.data()), n * sizeof(float), "tensor data");
  }
  std::array<char, 4> footer{};
  rd.bytes(footer.data(), footer.size(), "footer");
  if (footer != kFooter) rd.fail("bad footer");
  return ckpt;
}

Matrix forward_image(const Model& model, const Matrix& pixels) {
  Tensor<float> input(1, 1, static_cast<int>(pixels.rows()), static_cast<int>(pixels.cols()));
  for (Eigen::Index i = 0; i < pixels.size(); ++i) {
    input.data[i] = static_cast<float>(pixels.data()[i]);
  }
  const Tensor<float> out = model.forward(input);
  Matrix result(pixels.rows(), pixels.cols());
  for (Eigen::Index i = 0; i < result.size(); ++i) result.data()[i] = out.data[i];
  return result;
}

GrayImage denoise_tiled(const Model& model, const GrayImage& image, int tile_size, int overlap) {
  if (tile_size < kSizeMultiple || tile_size % kSizeMultiple != 0) {
    throw InvalidInput("tile size must be a positive multiple of 4");
  }
  if (overlap < 0 || overlap >= tile_size) throw InvalidInput("overlap must lie in [0, tile)");

  const PaddedImage padded = pad_to_multiple(image, kSizeMultiple);
  const Matrix& src = padded.image.pixels();
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  const int th = std::min(tile_size, h);
  const int tw = std::min(tile_size, w);
  const auto rows = patch_positions(h, th, std::max(kSizeMultiple, th - overlap));
  const auto cols = patch_positions(w, tw, std::max(kSizeMultiple, tw - overlap));

  // Linear ramp over `overlap` pixels on sides that border another tile.
  auto ramp = [overlap](int i, int len, bool lead, bool trail) {
    double v = 1.0;
    if (overlap > 0 && lead) v = std::min(v, (i + 0.5) / overlap);
    if (overlap > 0 && trail) v = std::min(v, (len - i - 0.5) / overlap);
    return v;
  };

  Matrix acc = Matrix::Zero(h, w);
  Matrix weight = Matrix::Zero(h, w);
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    for (std::size_t ci = 0; ci < cols.size(); ++ci) {
      const int r0 = rows[ri];
      const int c0 = cols[ci];
      const Matrix pred = forward_image(model, src.block(r0, c0, th, tw));
      for (int r = 0; r < th; ++r) {
        const double wr = ramp(r, th, ri > 0, ri + 1 < rows.size());
        for (int c = 0; c < tw; ++c) {
          const double wt = wr * ramp(c, tw, ci > 0, ci + 1 < cols.size());
          acc(r0 + r, c0 + c) += wt * pred(r, c);
          weight(r0 + r, c0 + c) += wt;
        }
      }
    }
  }
  Matrix blended = acc.array() / weight.array();
  return crop(GrayImage::clamped(std::move(blended), image.source_bit_depth(),
                                 image.pixel_size_nm()),
              padded.crop);
}

GrayImage denoise_image(const Model& model, const GrayImage& image, const DenoiseOptions& options) {
  if (image.empty()) throw InvalidInput("cannot denoise an empty image");
  if (options.force_tiling) {
    return denoise_tiled(model, image, options.tile_size, options.overlap);
  }
  try {
    const PaddedImage padded = pad_to_multiple(image, kSizeMultiple);
    Matrix out = forward_image(model, padded.image.pixels());
    return crop(GrayImage::clamped(std::move(out), image.source_bit_depth(), image.pixel_size_nm()),
                padded.crop);
  } catch (const std::bad_alloc&) {
    return denoise_tiled(model, image, options.tile_size, options.overlap);
  }
}

}  // namespace gdm
