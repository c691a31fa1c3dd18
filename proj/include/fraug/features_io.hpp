#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "fraug/dsp.hpp"

namespace fraug::io {

enum class BinIoErrorCode { BadMagic, BadVersion, Truncated, Malformed, Io };

class BinIoError : public std::runtime_error {
 public:
  BinIoError(BinIoErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  BinIoErrorCode code() const { return code_; }

 private:
  BinIoErrorCode code_;
};

constexpr std::uint32_t kFeatureFileVersion = 1;

nlohmann::json frame_config_to_json(const dsp::FrameConfig& config);
dsp::FrameConfig frame_config_from_json(const nlohmann::json& obj);

// FNV-1a hash over the canonical (sorted-key) JSON dump, as a fixed-width
// hex string. Used to stamp artifacts with the config that produced them.
std::string json_hash(const nlohmann::json& value);

// Binary layout: magic "FRAG", u32 version, u32 rows, u32 cols, then
// rows*cols little-endian float32 values row-major. A JSON sidecar at
// <path>.json records the FrameConfig, feature kind, sample rate and any
// extra provenance passed by the caller. Writes are atomic.
void write_features(const dsp::FeatureMatrix& features, const std::filesystem::path& path,
                    const nlohmann::json& extra_sidecar = nlohmann::json::object());

dsp::FeatureMatrix read_features(const std::filesystem::path& path);
nlohmann::json read_feature_sidecar(const std::filesystem::path& path);

// Narrow every value through float32, i.e. exactly what a write/read
// round trip through a feature file would produce.
Matrix round_matrix_f32(const Matrix& m);

}  // namespace fraug::io
