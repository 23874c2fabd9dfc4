#include "draw/imageio.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace draw {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& body) {
  put_u32(out, static_cast<uint32_t>(body.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(crc32(0L, nullptr, 0), out.data() + start, static_cast<uInt>(out.size() - start)));
  put_u32(out, crc);
}

std::vector<uint8_t> deflate_bytes(const std::vector<uint8_t>& raw) {
  uLongf cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> out(cap);
  // Fixed level keeps output bytes reproducible for identical input.
  if (compress2(out.data(), &cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  out.resize(cap);
  return out;
}

std::vector<uint8_t> inflate_bytes(const uint8_t* src, size_t n, size_t expect) {
  std::vector<uint8_t> out(expect);
  uLongf got = static_cast<uLongf>(expect);
  if (uncompress(out.data(), &got, src, static_cast<uLong>(n)) != Z_OK || got != expect)
    throw std::runtime_error("png: inflate failed");
  return out;
}

uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const std::string& path, const void* data, size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace

void write_png(const std::string& path, const ImageU8& img) {
  if (img.ch != 1 && img.ch != 3) throw std::invalid_argument("png: channels must be 1 or 3");
  if (img.w <= 0 || img.h <= 0 ||
      img.data.size() != static_cast<size_t>(img.w) * img.h * img.ch)
    throw std::invalid_argument("png: bad dimensions");

  const size_t stride = static_cast<size_t>(img.w) * img.ch;
  std::vector<uint8_t> raw;
  raw.reserve((stride + 1) * static_cast<size_t>(img.h));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), img.data.begin() + static_cast<long>(y * stride),
               img.data.begin() + static_cast<long>((y + 1) * stride));
  }

  std::vector<uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(img.w));
  put_u32(ihdr, static_cast<uint32_t>(img.h));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(img.ch == 3 ? 2 : 0);                // color type
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);                                  // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", deflate_bytes(raw));
  put_chunk(out, "IEND", {});
  write_file(path, out.data(), out.size());
}

ImageU8 read_png(const std::string& path) {
  const std::vector<uint8_t> buf = read_file(path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw std::runtime_error("png: bad signature in " + path);

  ImageU8 img;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= buf.size()) {
    const uint32_t len = get_u32(buf.data() + pos);
    if (pos + 12 + len > buf.size()) throw std::runtime_error("png: truncated " + path);
    const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
    const uint8_t* body = buf.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      img.w = static_cast<int>(get_u32(body));
      img.h = static_cast<int>(get_u32(body + 4));
      const int depth = body[8], color = body[9], interlace = body[12];
      if (depth != 8 || (color != 0 && color != 2) || interlace != 0)
        throw std::runtime_error("png: unsupported format in " + path);
      img.ch = color == 2 ? 3 : 1;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), body, body + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (img.w <= 0 || img.h <= 0 || idat.empty())
    throw std::runtime_error("png: missing chunks in " + path);

  const size_t stride = static_cast<size_t>(img.w) * img.ch;
  const std::vector<uint8_t> raw = inflate_bytes(idat.data(), idat.size(),
                                                 (stride + 1) * static_cast<size_t>(img.h));
  img.data.assign(stride * static_cast<size_t>(img.h), 0);
  const int bpp = img.ch;
  for (int y = 0; y < img.h; ++y) {
    const uint8_t filter = raw[(stride + 1) * static_cast<size_t>(y)];
    const uint8_t* src = raw.data() + (stride + 1) * static_cast<size_t>(y) + 1;
    uint8_t* dst = img.data.data() + stride * static_cast<size_t>(y);
    const uint8_t* up = y > 0 ? dst - stride : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
      const int b = up ? up[i] : 0;
      const int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw std::runtime_error("png: bad filter in " + path);
      }
      dst[i] = static_cast<uint8_t>(v);
    }
  }
  return img;
}

void write_f32(const std::string& path, const float* data, size_t n) {
  write_file(path, data, n * sizeof(float));
}

std::vector<float> read_f32(const std::string& path, size_t expect) {
  const std::vector<uint8_t> buf = read_file(path);
  if (buf.size() % sizeof(float) != 0)
    throw std::runtime_error("f32: size not a multiple of 4 in " + path);
  std::vector<float> out(buf.size() / sizeof(float));
  std::memcpy(out.data(), buf.data(), buf.size());
  if (expect != 0 && out.size() != expect)
    throw std::runtime_error("f32: unexpected element count in " + path);
  return out;
}

ImageU8 to_u8(const Tensor<float>& chw) {
  if (chw.shape.rank != 3) throw std::invalid_argument("to_u8: rank != 3");
  ImageU8 img;
  img.ch = chw.shape[0];
  img.h = chw.shape[1];
  img.w = chw.shape[2];
  img.data.resize(static_cast<size_t>(img.w) * img.h * img.ch);
  const long hw = static_cast<long>(img.h) * img.w;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.ch; ++c) {
        float v = chw[c * hw + y * img.w + x];
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        img.data[(static_cast<size_t>(y) * img.w + x) * img.ch + c] =
            static_cast<uint8_t>(std::lround(v * 255.0f));
      }
  return img;
}

Tensor<float> to_chw(const ImageU8& img) {
  Tensor<float> t(Shape{img.ch, img.h, img.w});
  const long hw = static_cast<long>(img.h) * img.w;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.ch; ++c)
        t[c * hw + y * img.w + x] =
            img.data[(static_cast<size_t>(y) * img.w + x) * img.ch + c] / 255.0f;
  return t;
}

}  // namespace draw
