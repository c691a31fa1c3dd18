#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "fraug/features_io.hpp"
#include "fraug/wav.hpp"

using namespace fraug;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fraug_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

dsp::FeatureMatrix sample_features() {
  dsp::FeatureMatrix f;
  f.kind = dsp::FeatureKind::Mfcc;
  f.sample_rate = 16000;
  f.config.frame_width_ms = 32.0;
  f.config.frame_shift_fraction = 0.25;
  f.config.num_cepstra = 30;
  f.values = Matrix(3, 4);
  const double raw[12] = {0.0,    -1.5,      3.25,    1.0 / 3.0,  // 1/3 is not f32-exact
                          1e-8,   -2.5e7,    0.125,   -1e-40,     // -1e-40 is subnormal in f32
                          6.0221, 1.0 / 7.0, -0.0625, 42.0};
  for (std::size_t i = 0; i < 12; ++i) f.values.data()[i] = raw[i];
  return f;
}

io::BinIoErrorCode code_of(const fs::path& path) {
  try {
    io::read_features(path);
  } catch (const io::BinIoError& e) {
    return e.code();
  }
  FAIL("expected BinIoError for " << path.string());
  return io::BinIoErrorCode::Io;
}

}  // namespace

TEST_CASE("feature files round trip through float32") {
  const fs::path dir = fresh_dir("io_rt");
  const auto feats = sample_features();
  io::write_features(feats, dir / "a.feat", {{"note", "hello"}, {"fold", 3}});

  CHECK(fs::file_size(dir / "a.feat") == 16 + 4 * 3 * 4);
  CHECK(!fs::exists(dir / "a.feat.tmp"));  // atomic write leaves no temp file

  const auto back = io::read_features(dir / "a.feat");
  CHECK(back.kind == dsp::FeatureKind::Mfcc);
  CHECK(back.sample_rate == 16000);
  CHECK(back.config == feats.config);
  CHECK(back.values == io::round_matrix_f32(feats.values));  // bitwise after f32 narrowing
  CHECK(back.values(0, 3) != feats.values(0, 3));            // 1/3 really was narrowed

  const auto sidecar = io::read_feature_sidecar(dir / "a.feat");
  CHECK(sidecar.at("format") == "FRAG");
  CHECK(sidecar.at("version") == io::kFeatureFileVersion);
  CHECK(sidecar.at("rows") == 3);
  CHECK(sidecar.at("cols") == 4);
  CHECK(sidecar.at("feature") == "mfcc");
  CHECK(sidecar.at("note") == "hello");  // caller-provided keys survive
  CHECK(sidecar.at("fold") == 3);
  CHECK(sidecar.at("config").at("width_ms") == 32.0);

  // Writing the already-narrowed matrix reproduces the file byte for byte.
  dsp::FeatureMatrix narrowed = back;
  io::write_features(narrowed, dir / "b.feat", {{"note", "hello"}, {"fold", 3}});
  CHECK(slurp(dir / "a.feat") == slurp(dir / "b.feat"));
}

TEST_CASE("every corruption mode reports its own error code") {
  const fs::path dir = fresh_dir("io_err");
  const fs::path path = dir / "x.feat";
  io::write_features(sample_features(), path);
  const std::string good = slurp(path);

  std::string bad = good;
  bad[0] = 'G';
  spit(path, bad);
  CHECK(code_of(path) == io::BinIoErrorCode::BadMagic);

  bad = good;
  bad[4] = 9;  // version = 9
  spit(path, bad);
  CHECK(code_of(path) == io::BinIoErrorCode::BadVersion);

  spit(path, good.substr(0, 10));  // shorter than the 16-byte header
  CHECK(code_of(path) == io::BinIoErrorCode::Truncated);

  spit(path, good.substr(0, good.size() - 4));  // one value missing
  CHECK(code_of(path) == io::BinIoErrorCode::Truncated);

  spit(path, good + "junk");  // trailing garbage
  CHECK(code_of(path) == io::BinIoErrorCode::Truncated);

  spit(path, good);
  fs::remove(dir / "x.feat.json");
  CHECK(code_of(path) == io::BinIoErrorCode::Io);

  spit(dir / "x.feat.json", "{oops");
  CHECK(code_of(path) == io::BinIoErrorCode::Malformed);

  spit(dir / "x.feat.json", R"({"rows": 3})");  // parses, but fields are missing
  CHECK(code_of(path) == io::BinIoErrorCode::Malformed);

  CHECK(code_of(dir / "never_written.feat") == io::BinIoErrorCode::Io);
}

TEST_CASE("round_matrix_f32 matches a float cast and is idempotent") {
  const auto feats = sample_features();
  const Matrix once = io::round_matrix_f32(feats.values);
  REQUIRE(once.rows() == feats.values.rows());
  REQUIRE(once.cols() == feats.values.cols());
  for (std::size_t i = 0; i < once.data().size(); ++i) {
    CHECK(once.data()[i] == static_cast<double>(static_cast<float>(feats.values.data()[i])));
  }
  CHECK(io::round_matrix_f32(once) == once);
  CHECK(once(0, 0) == 0.0);
  CHECK(once(0, 1) == -1.5);  // exactly representable values pass through
  CHECK(once(2, 3) == 42.0);
}

TEST_CASE("json_hash is stable, canonical and sensitive") {
  const nlohmann::json a{{"alpha", 1}, {"beta", 2.5}};
  nlohmann::json b;
  b["beta"] = 2.5;  // same object, different insertion order
  b["alpha"] = 1;
  const std::string ha = io::json_hash(a);
  CHECK(ha.size() == 16);
  CHECK(ha.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(io::json_hash(a) == ha);
  CHECK(io::json_hash(b) == ha);

  nlohmann::json c = a;
  c["beta"] = 2.5000001;
  CHECK(io::json_hash(c) != ha);
  CHECK(io::json_hash(nlohmann::json::object()) != io::json_hash(nlohmann::json::array()));
}

TEST_CASE("frame configs round trip through JSON") {
  dsp::FrameConfig c;
  c.frame_width_ms = 25.0;
  c.frame_shift_fraction = 0.4;
  c.dft_size = 2048;
  c.window = dsp::WindowKind::Hann;
  c.num_mel_filters = 26;
  c.num_cepstra = 13;
  c.fmin_hz = 50.0;
  c.fmax_hz = 7000.0;
  c.pre_emphasis = 0.97;
  CHECK(io::frame_config_from_json(io::frame_config_to_json(c)) == c);

  // Absent fields fall back to defaults.
  const auto partial = io::frame_config_from_json({{"width_ms", 30.0}});
  CHECK(partial.frame_width_ms == 30.0);
  CHECK(partial.frame_shift_fraction == dsp::FrameConfig{}.frame_shift_fraction);
  CHECK(partial.window == dsp::WindowKind::Hamming);

  CHECK_THROWS_AS(io::frame_config_from_json({{"window", "kaiser"}}), std::invalid_argument);
}

TEST_CASE("wav files round trip within one quantization step") {
  const fs::path dir = fresh_dir("io_wav");
  dsp::Signal sig;
  sig.sample_rate = 22050;
  sig.samples = {0.0, 0.5, -0.5, 0.25, -1.0, 0.999, 1.5, -2.0, 1.0 / 3.0};
  dsp::write_wav(sig, dir / "s.wav");
  CHECK(fs::file_size(dir / "s.wav") == 44 + 2 * sig.samples.size());

  const auto back = dsp::read_wav(dir / "s.wav");
  CHECK(back.sample_rate == 22050);
  REQUIRE(back.samples.size() == sig.samples.size());
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(std::abs(back.samples[i] - sig.samples[i]) <= 0.5 / 32768 + 1e-12);
  CHECK(back.samples[6] == doctest::Approx(32767.0 / 32768.0));  // clamped high
  CHECK(back.samples[7] == doctest::Approx(-1.0));               // clamped low

  // A second trip is lossless: the samples are already on the int16 grid.
  dsp::write_wav(back, dir / "t.wav");
  const auto again = dsp::read_wav(dir / "t.wav");
  CHECK(again.samples == back.samples);

  CHECK_THROWS_AS(dsp::read_wav(dir / "missing.wav"), dsp::WavError);
  spit(dir / "junk.wav", "this is not audio at all, not even close");
  CHECK_THROWS_AS(dsp::read_wav(dir / "junk.wav"), dsp::WavError);
  spit(dir / "short.wav", "RIF");
  CHECK_THROWS_AS(dsp::read_wav(dir / "short.wav"), dsp::WavError);
}
