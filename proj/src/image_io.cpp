#include "rcs/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstring>
#include <fstream>

namespace rcs {

namespace {

constexpr char kRawMagic[8] = {'F', '6', '4', 'I', 'M', 'A', 'G', 'E'};

static_assert(std::endian::native == std::endian::little, "raw image I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("raw image: truncated header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

// Next whitespace-delimited token of a PGM header, skipping comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

void write_pgm(const std::string& path, const Image& img, double lo, double hi) {
  if (!(hi > lo)) throw Error("write_pgm: need hi > lo");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(img.size()));
  for (Index i = 0; i < img.size(); ++i) {
    const double t = (img.pixels[i] - lo) / (hi - lo);
    bytes[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  if (pgm_token(in) != "P5") throw Error(path + ": not a binary PGM");
  const long w = std::stol(pgm_token(in));
  const long h = std::stol(pgm_token(in));
  const long maxval = std::stol(pgm_token(in));
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw Error(path + ": unsupported PGM header");
  Image img(h, w);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w * h));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw Error(path + ": truncated pixel data");
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    img.pixels[static_cast<Index>(i)] = static_cast<double>(bytes[i]) / static_cast<double>(maxval);
  }
  return img;
}

void write_raw(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(kRawMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(img.width));
  put_u32(out, static_cast<std::uint32_t>(img.height));
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(img.size())));
  if (!out) throw Error("failed writing " + path);
}

Image read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kRawMagic, 8) != 0) {
    throw Error(path + ": bad raw image magic");
  }
  const std::uint32_t w = get_u32(in);
  const std::uint32_t h = get_u32(in);
  Image img(static_cast<Index>(h), static_cast<Index>(w));
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(img.size())))) {
    throw Error(path + ": truncated pixel data");
  }
  return img;
}

}  // namespace rcs
