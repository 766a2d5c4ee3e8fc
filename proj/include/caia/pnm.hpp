#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "caia/image.hpp"
#include "caia/tensor_file.hpp"

namespace caia {

namespace detail {

// Token scanner for PNM headers: skips whitespace and '#' comments.
inline std::size_t pnm_token(const std::vector<unsigned char>& b, std::size_t pos,
                             std::string& token) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  token.clear();
  while (pos < b.size() && !std::isspace(b[pos])) token.push_back(static_cast<char>(b[pos++]));
  return pos;
}

inline unsigned char quantize8(double v) {
  // round half up, clamped
  const double q = std::floor(v * 255.0 + 0.5);
  if (q <= 0.0) return 0;
  if (q >= 255.0) return 255;
  return static_cast<unsigned char>(q);
}

struct PnmHeader {
  std::string magic;
  std::size_t width = 0, height = 0;
  std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(const std::vector<unsigned char>& bytes, const std::string& what) {
  PnmHeader h;
  std::string tok;
  std::size_t pos = pnm_token(bytes, 0, h.magic);
  pos = pnm_token(bytes, pos, tok);
  h.width = std::stoul(tok);
  pos = pnm_token(bytes, pos, tok);
  h.height = std::stoul(tok);
  pos = pnm_token(bytes, pos, tok);
  if (tok != "255") throw std::runtime_error(what + ": only 8-bit pixmaps are supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw std::runtime_error(what + ": malformed header");
  }
  h.data_offset = pos + 1;  // single whitespace byte before binary data
  if (h.width == 0 || h.height == 0) throw std::runtime_error(what + ": empty image");
  return h;
}

}  // namespace detail

inline std::vector<unsigned char> p6_bytes(const Image& img) {
  std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) out.push_back(detail::quantize8(v));
  return out;
}

inline std::vector<unsigned char> p5_bytes(const Plane& plane) {
  std::string header =
      "P5\n" + std::to_string(plane.width) + " " + std::to_string(plane.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + plane.data.size());
  for (double v : plane.data) out.push_back(detail::quantize8(v));
  return out;
}

inline Image parse_p6(const std::vector<unsigned char>& bytes, const std::string& what = "P6") {
  const auto h = detail::parse_pnm_header(bytes, what);
  if (h.magic != "P6") throw std::runtime_error(what + ": expected a P6 binary pixmap");
  if (bytes.size() < h.data_offset + h.width * h.height * 3) {
    throw std::runtime_error(what + ": truncated pixel data");
  }
  Image img(h.height, h.width);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = bytes[h.data_offset + i] / 255.0;
  }
  return img;
}

inline Plane parse_p5(const std::vector<unsigned char>& bytes, const std::string& what = "P5") {
  const auto h = detail::parse_pnm_header(bytes, what);
  if (h.magic != "P5") throw std::runtime_error(what + ": expected a P5 binary graymap");
  if (bytes.size() < h.data_offset + h.width * h.height) {
    throw std::runtime_error(what + ": truncated pixel data");
  }
  Plane plane(h.height, h.width);
  for (std::size_t i = 0; i < plane.data.size(); ++i) {
    plane.data[i] = bytes[h.data_offset + i] / 255.0;
  }
  return plane;
}

inline void write_p6(const std::string& path, const Image& img) { write_file_bytes(path, p6_bytes(img)); }
inline void write_p5(const std::string& path, const Plane& plane) { write_file_bytes(path, p5_bytes(plane)); }
inline Image read_p6(const std::string& path) { return parse_p6(read_file_bytes(path), path); }
inline Plane read_p5(const std::string& path) { return parse_p5(read_file_bytes(path), path); }

}  // namespace caia
