#include "core/png_codec.hpp"

#include <zlib.h>

#include <cstring>

#include "core/errors.hpp"
#include "core/util.hpp"

namespace hazgraph::png {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t off) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3]));
}

void append_chunk(std::string& out, const char type[4], std::string_view payload) {
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  std::string body(type, 4);
  body.append(payload);
  out += body;
  std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  put_u32(out, crc);
}

// 3x5 glyphs for hex digits, row-major bitmasks (bit 2 = leftmost).
constexpr std::uint16_t kHexFont[16] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
    0b111101111101101,  // a
    0b110101110101110,  // b
    0b111100100100111,  // c
    0b110101101101110,  // d
    0b111100111100111,  // e
    0b111100111100100,  // f
};

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return 0;
}

}  // namespace

bool has_png_signature(std::string_view bytes) {
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSignature, 8) == 0;
}

Header read_header(std::string_view bytes) {
  if (!has_png_signature(bytes) || bytes.size() < 33) {
    fail(ErrorCode::malformed_response, "not a PNG: bad signature");
  }
  if (bytes.substr(12, 4) != "IHDR") {
    fail(ErrorCode::malformed_response, "not a PNG: missing IHDR");
  }
  return Header{get_u32(bytes, 16), get_u32(bytes, 20)};
}

std::string encode_rgb(std::uint32_t width, std::uint32_t height,
                       const std::vector<unsigned char>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    fail(ErrorCode::invalid_argument, "rgb buffer size does not match dimensions");
  }
  // Raw scanlines, filter byte 0 per row.
  std::vector<unsigned char> raw;
  raw.reserve((static_cast<std::size_t>(width) * 3 + 1) * height);
  for (std::uint32_t y = 0; y < height; ++y) {
    raw.push_back(0);
    const unsigned char* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * 3);
  }
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(bound, '\0');
  if (::compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound, raw.data(),
                  static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK) {
    fail(ErrorCode::internal_error, "zlib compression failed");
  }
  compressed.resize(bound);

  std::string out(reinterpret_cast<const char*>(kSignature), 8);
  std::string ihdr;
  put_u32(ihdr, width);
  put_u32(ihdr, height);
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", "");
  return out;
}

std::string render_placeholder(std::uint32_t width, std::uint32_t height,
                               std::string_view digest_hex) {
  std::uint64_t h = util::stable_hash64(digest_hex);
  const unsigned char bg[3] = {static_cast<unsigned char>(40 + (h & 0x3f)),
                               static_cast<unsigned char>(40 + ((h >> 8) & 0x3f)),
                               static_cast<unsigned char>(40 + ((h >> 16) & 0x3f))};
  std::vector<unsigned char> rgb(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = bg[0];
    rgb[i + 1] = bg[1];
    rgb[i + 2] = bg[2];
  }

  const int scale = 4;
  const int glyph_w = 3 * scale;
  const int advance = glyph_w + scale;
  const std::size_t n_chars = std::min<std::size_t>(digest_hex.size(), 16);
  int x0 = (static_cast<int>(width) - static_cast<int>(n_chars) * advance + scale) / 2;
  int y0 = (static_cast<int>(height) - 5 * scale) / 2;
  if (x0 < 0) x0 = 0;
  if (y0 < 0) y0 = 0;

  auto set_px = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= static_cast<int>(width) || y >= static_cast<int>(height)) return;
    std::size_t off = (static_cast<std::size_t>(y) * width + x) * 3;
    rgb[off] = rgb[off + 1] = rgb[off + 2] = 0xf0;
  };

  for (std::size_t c = 0; c < n_chars; ++c) {
    std::uint16_t glyph = kHexFont[hex_value(digest_hex[c])];
    for (int row = 0; row < 5; ++row) {
      for (int col = 0; col < 3; ++col) {
        if (!(glyph >> ((4 - row) * 3 + (2 - col)) & 1)) continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) {
            set_px(x0 + static_cast<int>(c) * advance + col * scale + dx,
                   y0 + row * scale + dy);
          }
        }
      }
    }
  }
  return encode_rgb(width, height, rgb);
}

}  // namespace hazgraph::png
