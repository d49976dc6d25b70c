#include "stx/wav.hpp"

#include "stx/binary_io.hpp"
#include "stx/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace stx {
namespace {

double decode_sample(const unsigned char* p, int bits, bool is_float) {
  if (is_float) {
    float f;
    std::memcpy(&f, p, 4);
    return f;
  }
  switch (bits) {
    case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: return static_cast<std::int16_t>(p[0] | (p[1] << 8)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;
      return v / 8388608.0;
    }
    case 32: {
      std::int32_t v;
      std::memcpy(&v, p, 4);
      return v / 2147483648.0;
    }
  }
  return 0.0;
}

}  // namespace

Signal read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Path, "cannot open " + path.string());
  const auto where = path.string();

  char tag[4];
  in.read(tag, 4);
  require(in.gcount() == 4 && std::string(tag, 4) == "RIFF", ErrorKind::Parse, where + ": not a RIFF file");
  binio::get<std::uint32_t>(in);
  in.read(tag, 4);
  require(in.gcount() == 4 && std::string(tag, 4) == "WAVE", ErrorKind::Parse, where + ": not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<unsigned char> data;
  while (in.read(tag, 4), in.gcount() == 4) {
    const auto size = binio::get<std::uint32_t>(in);
    const std::string id(tag, 4);
    if (id == "fmt ") {
      format = binio::get<std::uint16_t>(in);
      channels = binio::get<std::uint16_t>(in);
      rate = binio::get<std::uint32_t>(in);
      binio::get<std::uint32_t>(in);
      binio::get<std::uint16_t>(in);
      bits = binio::get<std::uint16_t>(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      // WAVE_FORMAT_EXTENSIBLE: treat by bit depth.
      if (format == 0xFFFE) format = bits == 32 ? 3 : 1;
      have_fmt = true;
    } else if (id == "data") {
      data.resize(size);
      in.read(reinterpret_cast<char*>(data.data()), size);
      data.resize(static_cast<std::size_t>(in.gcount()));
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  require(have_fmt, ErrorKind::Parse, where + ": missing fmt chunk");
  require(format == 1 || (format == 3 && bits == 32), ErrorKind::Parse, where + ": unsupported WAV encoding");
  require(bits == 8 || bits == 16 || bits == 24 || bits == 32, ErrorKind::Parse, where + ": unsupported bit depth");
  require(channels >= 1 && rate > 0, ErrorKind::Parse, where + ": bad channel count or rate");

  const std::size_t width = bits / 8;
  const std::size_t frame = width * channels;
  const std::size_t frames = data.size() / frame;
  Signal out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) acc += decode_sample(&data[f * frame + ch * width], bits, format == 3);
    out.samples[f] = acc / channels;
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Signal& signal) {
  signal.validate();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Path, "cannot write " + path.string());
  const auto bytes = static_cast<std::uint32_t>(signal.size() * 2);
  out.write("RIFF", 4);
  binio::put<std::uint32_t>(out, 36 + bytes);
  out.write("WAVEfmt ", 8);
  binio::put<std::uint32_t>(out, 16);
  binio::put<std::uint16_t>(out, 1);
  binio::put<std::uint16_t>(out, 1);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(signal.sample_rate));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(signal.sample_rate) * 2);
  binio::put<std::uint16_t>(out, 2);
  binio::put<std::uint16_t>(out, 16);
  out.write("data", 4);
  binio::put<std::uint32_t>(out, bytes);
  for (double v : signal.samples) {
    const double clipped = std::clamp(v, -1.0, 1.0);
    binio::put<std::int16_t>(out, static_cast<std::int16_t>(std::lround(clipped * 32767.0)));
  }
}

}  // namespace stx
