#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hazgraph::png {

inline constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

struct Header {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
};

bool has_png_signature(std::string_view bytes);

// Reads width/height out of the IHDR chunk; throws MalformedResponse if the
// bytes are not a PNG.
Header read_header(std::string_view bytes);

// Encodes an 8-bit RGB buffer (row-major, 3 bytes per pixel) as a PNG.
std::string encode_rgb(std::uint32_t width, std::uint32_t height,
                       const std::vector<unsigned char>& rgb);

// Deterministic placeholder: solid background derived from the digest with
// the first 16 hex digits stamped on top. Same digest, same bytes.
std::string render_placeholder(std::uint32_t width, std::uint32_t height,
                               std::string_view digest_hex);

}  // namespace hazgraph::png
