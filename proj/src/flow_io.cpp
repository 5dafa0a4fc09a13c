#include "vfi/flow_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace vfi {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  buf.push_back(v & 0xff);
  buf.push_back((v >> 8) & 0xff);
  buf.push_back((v >> 16) & 0xff);
  buf.push_back((v >> 24) & 0xff);
}

void put_f32(std::vector<unsigned char>& buf, float f) {
  put_u32(buf, std::bit_cast<std::uint32_t>(f));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

}  // namespace

void save_flow_file(const Tensor& flow, const std::string& path) {
  if (flow.shape.n != 1 || flow.shape.c != 2) {
    throw std::invalid_argument("save_flow_file: expected (1,2,h,w), got " + flow.shape.str());
  }
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), {'F', 'L', 'O', '1'});
  put_u32(buf, std::uint32_t(flow.shape.w));
  put_u32(buf, std::uint32_t(flow.shape.h));
  for (int y = 0; y < flow.shape.h; ++y) {
    for (int x = 0; x < flow.shape.w; ++x) {
      put_f32(buf, flow.at(0, 0, y, x));
      put_f32(buf, flow.at(0, 1, y, x));
    }
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write flow file: " + path);
  if (std::fwrite(buf.data(), 1, buf.size(), fp.get()) != buf.size()) {
    throw std::runtime_error("short write on flow file: " + path);
  }
}

Tensor load_flow_file(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open flow file: " + path);
  std::vector<unsigned char> buf;
  unsigned char chunk[4096];
  std::size_t got;
  while ((got = std::fread(chunk, 1, sizeof chunk, fp.get())) > 0) {
    buf.insert(buf.end(), chunk, chunk + got);
  }
  if (buf.size() < 12 || std::memcmp(buf.data(), "FLO1", 4) != 0) {
    throw std::runtime_error("not a FLO1 file: " + path);
  }
  const std::uint32_t w = get_u32(buf.data() + 4);
  const std::uint32_t h = get_u32(buf.data() + 8);
  const std::size_t need = 12 + std::size_t(w) * h * 2 * 4;
  if (buf.size() != need) {
    throw std::runtime_error("flow file size mismatch in " + path + ": expected " +
                             std::to_string(need) + " bytes, got " + std::to_string(buf.size()));
  }
  Tensor out = Tensor::zeros({1, 2, int(h), int(w)});
  const unsigned char* p = buf.data() + 12;
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      out.at(0, 0, int(y), int(x)) = std::bit_cast<float>(get_u32(p));
      out.at(0, 1, int(y), int(x)) = std::bit_cast<float>(get_u32(p + 4));
      p += 8;
    }
  }
  return out;
}

Tensor flow_to_color(const Tensor& flow) {
  if (flow.shape.n != 1 || flow.shape.c != 2) {
    throw std::invalid_argument("flow_to_color: expected (1,2,h,w), got " + flow.shape.str());
  }
  const int h = flow.shape.h, w = flow.shape.w;
  std::vector<float> mags(std::size_t(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      mags[std::size_t(y) * w + x] = std::hypot(flow.at(0, 0, y, x), flow.at(0, 1, y, x));
    }
  }
  std::vector<float> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const float p99 = sorted[std::size_t(std::floor(0.99 * double(sorted.size() - 1)))];

  Tensor img = Tensor::zeros({1, 3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float fx = flow.at(0, 0, y, x);
      const float fy = flow.at(0, 1, y, x);
      const float mag = mags[std::size_t(y) * w + x];
      const float sat = p99 > 0.0f ? std::min(mag / p99, 1.0f) : 0.0f;
      float hue = std::atan2(fy, fx) * 180.0f / float(M_PI);
      if (hue < 0.0f) hue += 360.0f;
      // HSV -> RGB with V = 1
      const float hh = hue / 60.0f;
      const int sector = int(hh) % 6;
      const float f = hh - std::floor(hh);
      const float p = 1.0f - sat;
      const float q = 1.0f - sat * f;
      const float t = 1.0f - sat * (1.0f - f);
      float r = 1, g = 1, b = 1;
      switch (sector) {
        case 0: r = 1; g = t; b = p; break;
        case 1: r = q; g = 1; b = p; break;
        case 2: r = p; g = 1; b = t; break;
        case 3: r = p; g = q; b = 1; break;
        case 4: r = t; g = p; b = 1; break;
        default: r = 1; g = p; b = q; break;
      }
      img.at(0, 0, y, x) = r;
      img.at(0, 1, y, x) = g;
      img.at(0, 2, y, x) = b;
    }
  }
  return img;
}

}  // namespace vfi
