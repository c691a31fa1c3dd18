#include "fraug/features_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace fraug::io {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw BinIoError(BinIoErrorCode::Io, "cannot open for writing: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw BinIoError(BinIoErrorCode::Io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw BinIoError(BinIoErrorCode::Io, "cannot open: " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

nlohmann::json frame_config_to_json(const dsp::FrameConfig& config) {
  return {{"width_ms", config.frame_width_ms},
          {"shift_fraction", config.frame_shift_fraction},
          {"dft_size", config.dft_size},
          {"window", dsp::window_kind_name(config.window)},
          {"num_mel_filters", config.num_mel_filters},
          {"num_cepstra", config.num_cepstra},
          {"fmin_hz", config.fmin_hz},
          {"fmax_hz", config.fmax_hz},
          {"pre_emphasis", config.pre_emphasis}};
}

dsp::FrameConfig frame_config_from_json(const nlohmann::json& obj) {
  dsp::FrameConfig c;
  c.frame_width_ms = obj.value("width_ms", c.frame_width_ms);
  c.frame_shift_fraction = obj.value("shift_fraction", c.frame_shift_fraction);
  c.dft_size = obj.value("dft_size", c.dft_size);
  if (obj.contains("window")) c.window = dsp::window_kind_from_name(obj.at("window"));
  c.num_mel_filters = obj.value("num_mel_filters", c.num_mel_filters);
  c.num_cepstra = obj.value("num_cepstra", c.num_cepstra);
  c.fmin_hz = obj.value("fmin_hz", c.fmin_hz);
  c.fmax_hz = obj.value("fmax_hz", c.fmax_hz);
  c.pre_emphasis = obj.value("pre_emphasis", c.pre_emphasis);
  return c;
}

std::string json_hash(const nlohmann::json& value) {
  const std::string dump = value.dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_features(const dsp::FeatureMatrix& features, const std::filesystem::path& path,
                    const nlohmann::json& extra_sidecar) {
  const auto rows = static_cast<std::uint32_t>(features.values.rows());
  const auto cols = static_cast<std::uint32_t>(features.values.cols());

  std::string bytes;
  bytes.reserve(16 + std::size_t{4} * rows * cols);
  bytes += "FRAG";
  put_u32(bytes, kFeatureFileVersion);
  put_u32(bytes, rows);
  put_u32(bytes, cols);
  for (double v : features.values.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    put_u32(bytes, bits);
  }
  atomic_write(path, bytes);

  nlohmann::json sidecar = extra_sidecar;
  sidecar["format"] = "FRAG";
  sidecar["version"] = kFeatureFileVersion;
  sidecar["rows"] = rows;
  sidecar["cols"] = cols;
  sidecar["feature"] = dsp::feature_kind_name(features.kind);
  sidecar["sample_rate"] = features.sample_rate;
  sidecar["config"] = frame_config_to_json(features.config);
  std::filesystem::path sidecar_path = path;
  sidecar_path += ".json";
  atomic_write(sidecar_path, sidecar.dump(2) + "\n");
}

nlohmann::json read_feature_sidecar(const std::filesystem::path& path) {
  std::filesystem::path sidecar_path = path;
  sidecar_path += ".json";
  std::ifstream f(sidecar_path);
  if (!f)
    throw BinIoError(BinIoErrorCode::Io, "missing feature sidecar: " + sidecar_path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw BinIoError(BinIoErrorCode::Malformed,
                     "bad feature sidecar " + sidecar_path.string() + ": " + e.what());
  }
}

dsp::FeatureMatrix read_features(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_all(path);
  if (bytes.size() < 16)
    throw BinIoError(BinIoErrorCode::Truncated, "feature file shorter than its header: " +
                                                    path.string());
  if (std::memcmp(bytes.data(), "FRAG", 4) != 0)
    throw BinIoError(BinIoErrorCode::BadMagic, "bad feature file magic: " + path.string());
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFeatureFileVersion)
    throw BinIoError(BinIoErrorCode::BadVersion,
                     "unsupported feature file version " + std::to_string(version) + ": " +
                         path.string());
  const std::uint32_t rows = get_u32(bytes.data() + 8);
  const std::uint32_t cols = get_u32(bytes.data() + 12);
  const std::size_t expected = 16 + std::size_t{4} * rows * cols;
  if (bytes.size() != expected)
    throw BinIoError(BinIoErrorCode::Truncated,
                     "feature file payload size mismatch (expected " +
                         std::to_string(expected) + " bytes, got " +
                         std::to_string(bytes.size()) + "): " + path.string());

  dsp::FeatureMatrix out;
  out.values = Matrix(rows, cols);
  for (std::size_t i = 0; i < std::size_t{rows} * cols; ++i) {
    const std::uint32_t bits = get_u32(bytes.data() + 16 + 4 * i);
    out.values.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
  }

  const nlohmann::json sidecar = read_feature_sidecar(path);
  try {
    out.kind = dsp::feature_kind_from_name(sidecar.at("feature").get<std::string>());
    out.sample_rate = sidecar.at("sample_rate").get<int>();
    out.config = frame_config_from_json(sidecar.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw BinIoError(BinIoErrorCode::Malformed,
                     "feature sidecar missing fields for " + path.string() + ": " + e.what());
  }
  return out;
}

Matrix round_matrix_f32(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

}  // namespace fraug::io
