#include "ililt/raster.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "ililt/interp.hpp"

namespace ililt {

GrayImage GrayImage::filled(int w, int h, double px, double value) {
  GrayImage img;
  img.width = w;
  img.height = h;
  img.pixel_size = px;
  img.data.assign(static_cast<size_t>(w) * h, value);
  return img;
}

BinaryImage BinaryImage::zeros(int w, int h, double px) {
  BinaryImage img;
  img.width = w;
  img.height = h;
  img.pixel_size = px;
  img.data.assign(static_cast<size_t>(w) * h, 0);
  return img;
}

GrayImage to_gray(const BinaryImage& b) {
  GrayImage g;
  g.width = b.width;
  g.height = b.height;
  g.pixel_size = b.pixel_size;
  g.data.resize(b.size());
  for (size_t i = 0; i < b.size(); ++i) g.data[i] = b.data[i] ? 1.0 : 0.0;
  return g;
}

void validate_unit_range(const GrayImage& img) {
  if (img.width <= 0 || img.height <= 0 || img.pixel_size <= 0)
    throw std::invalid_argument("image: non-positive dimensions or pixel size");
  if (img.data.size() != static_cast<size_t>(img.width) * img.height)
    throw std::invalid_argument("image: data size does not match dimensions");
  for (double v : img.data)
    if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("image: value outside [0,1]");
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

GrayImage load_png(const std::string& path, double pixel_size) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("load_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("load_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("load_png: png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  std::vector<uint8_t> bytes;
  GrayImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_png: decode error in " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_png: " + path + " is not an 8-bit grayscale PNG");
  }

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.pixel_size = pixel_size;
  bytes.resize(static_cast<size_t>(img.width) * img.height);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = bytes.data() + static_cast<size_t>(y) * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img.data.resize(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void save_png(const GrayImage& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("save_png: cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("save_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("save_png: png_create_info_struct failed");
  }
  std::vector<uint8_t> bytes(img.size());
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_png: encode error for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  for (size_t i = 0; i < img.size(); ++i) {
    long b = std::lround(img.data[i] * 255.0);
    if (b < 0) b = 0;
    if (b > 255) b = 255;
    bytes[i] = static_cast<uint8_t>(b);
  }
  for (int y = 0; y < img.height; ++y) rows[y] = bytes.data() + static_cast<size_t>(y) * img.width;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

BinaryImage binarize(const GrayImage& img, double thresh) {
  if (!(thresh > 0.0 && thresh < 1.0)) throw std::invalid_argument("binarize: thresh must be in (0,1)");
  BinaryImage out = BinaryImage::zeros(img.width, img.height, img.pixel_size);
  for (size_t i = 0; i < img.size(); ++i) out.data[i] = img.data[i] > thresh ? 1 : 0;
  return out;
}

GrayImage avg_pool(const GrayImage& img, int factor) {
  if (factor < 1) throw std::invalid_argument("avg_pool: factor must be >= 1");
  if (img.width % factor != 0 || img.height % factor != 0)
    throw std::invalid_argument("avg_pool: factor must divide image dimensions");
  GrayImage out = GrayImage::zeros(img.width / factor, img.height / factor, img.pixel_size * factor);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) s += img.at(y * factor + dy, x * factor + dx);
      out.at(y, x) = s * inv;
    }
  return out;
}

GrayImage upsample_bicubic(const GrayImage& img, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample_bicubic: factor must be >= 1");
  if (factor == 1) return img;
  BicubicAxis ax(img.width, factor), ay(img.height, factor);
  GrayImage out = GrayImage::zeros(img.width * factor, img.height * factor, img.pixel_size / factor);
  // Separable: rows first at original height, then columns.
  std::vector<double> tmp(static_cast<size_t>(img.height) * out.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const int* id = &ax.idx[static_cast<size_t>(x) * 4];
      const double* w = &ax.wgt[static_cast<size_t>(x) * 4];
      tmp[static_cast<size_t>(y) * out.width + x] = w[0] * img.at(y, id[0]) + w[1] * img.at(y, id[1]) +
                                                    w[2] * img.at(y, id[2]) + w[3] * img.at(y, id[3]);
    }
  for (int y = 0; y < out.height; ++y) {
    const int* id = &ay.idx[static_cast<size_t>(y) * 4];
    const double* w = &ay.wgt[static_cast<size_t>(y) * 4];
    for (int x = 0; x < out.width; ++x) {
      double v = w[0] * tmp[static_cast<size_t>(id[0]) * out.width + x] +
                 w[1] * tmp[static_cast<size_t>(id[1]) * out.width + x] +
                 w[2] * tmp[static_cast<size_t>(id[2]) * out.width + x] +
                 w[3] * tmp[static_cast<size_t>(id[3]) * out.width + x];
      if (v < 0.0) v = 0.0;
      if (v > 1.0) v = 1.0;
      out.at(y, x) = v;
    }
  }
  return out;
}

std::vector<EdgeSegment> extract_edges(const BinaryImage& design) {
  std::vector<EdgeSegment> segs;
  const double px = design.pixel_size;
  const int w = design.width, h = design.height;
  auto pix = [&](int y, int x) -> int {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0;
    return design.at(y, x);
  };

  // Vertical boundaries between columns x-1 and x, merged over runs of rows.
  for (int x = 0; x <= w; ++x) {
    int run_start = -1, run_dir = 0;
    for (int y = 0; y <= h; ++y) {
      int left = pix(y, x - 1), right = pix(y, x);
      int dir = 0;
      if (y < h && left != right) dir = right ? +1 : -1;
      if (dir != run_dir) {
        if (run_dir != 0)
          segs.push_back({EdgeAxis::Vertical, x * px, run_start * px, y * px, run_dir});
        run_start = y;
        run_dir = dir;
      }
    }
  }
  // Horizontal boundaries between rows y-1 and y.
  for (int y = 0; y <= h; ++y) {
    int run_start = -1, run_dir = 0;
    for (int x = 0; x <= w; ++x) {
      int up = pix(y - 1, x), down = pix(y, x);
      int dir = 0;
      if (x < w && up != down) dir = down ? +1 : -1;
      if (dir != run_dir) {
        if (run_dir != 0)
          segs.push_back({EdgeAxis::Horizontal, y * px, run_start * px, x * px, run_dir});
        run_start = x;
        run_dir = dir;
      }
    }
  }
  return segs;
}

}  // namespace ililt
