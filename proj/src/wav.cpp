#include "fraug/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace fraug::dsp {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

Signal read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open wav file: " + path.string());

  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw WavError("wav file too short: " + path.string());
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0)
    throw WavError("missing RIFF magic: " + path.string());
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError("missing WAVE magic: " + path.string());

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_size = read_u32(hdr + 4);
    std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size())
      throw WavError("truncated chunk in wav file: " + path.string());
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw WavError("fmt chunk too short: " + path.string());
      std::uint16_t format = read_u16(bytes.data() + body);
      if (format != 1) throw WavError("unsupported wav format (want PCM): " + path.string());
      channels = read_u16(bytes.data() + body + 2);
      sample_rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = chunk_size;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw WavError("missing fmt chunk: " + path.string());
  if (data == nullptr) throw WavError("missing data chunk: " + path.string());
  if (channels != 1)
    throw WavError("unsupported channel count " + std::to_string(channels) + ": " + path.string());
  if (bits != 16)
    throw WavError("unsupported bit depth " + std::to_string(bits) + ": " + path.string());
  if (sample_rate < 8000 || sample_rate > 48000)
    throw WavError("sample rate out of range: " + path.string());

  Signal sig;
  sig.sample_rate = static_cast<int>(sample_rate);
  std::size_t n = data_size / 2;
  sig.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = static_cast<std::int16_t>(data[2 * i] | data[2 * i + 1] << 8);
    sig.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return sig;
}

void write_wav(const Signal& signal, const std::filesystem::path& path) {
  if (signal.sample_rate < 8000 || signal.sample_rate > 48000)
    throw WavError("sample rate out of range: " + std::to_string(signal.sample_rate));

  std::uint32_t data_size = static_cast<std::uint32_t>(signal.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(signal.sample_rate) * 2);  // byte rate
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits per sample
  out += "data";
  put_u32(out, data_size);
  for (double x : signal.samples) {
    long long v = std::llround(x * 32768.0);
    if (v > 32767) v = 32767;
    if (v < -32768) v = -32768;
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw WavError("cannot open for writing: " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw WavError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fraug::dsp
