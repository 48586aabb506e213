#include "scanmerge/image_io.h"

#include <cstdio>
#include <fstream>
#include <memory>

#include <png.h>

#include "scanmerge/errors.h"

namespace scanmerge {

namespace {

void WritePng(const std::string& path, int width, int height, int channels,
              const std::vector<std::uint8_t>& data) {
  if (data.size() != static_cast<size_t>(width) * height * channels) {
    throw InvalidArgument("PNG buffer size mismatch");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data.data() +
                                             static_cast<size_t>(y) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void WritePngRgb(const std::string& path, int width, int height,
                 const std::vector<std::uint8_t>& rgb) {
  WritePng(path, width, height, 3, rgb);
}

void WritePngGray(const std::string& path, int width, int height,
                  const std::vector<std::uint8_t>& gray) {
  WritePng(path, width, height, 1, gray);
}

void WritePfm(const std::string& path, int width, int height,
              const std::vector<float>& data) {
  if (data.size() != static_cast<size_t>(width) * height) {
    throw InvalidArgument("PFM buffer size mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "Pf\n" << width << " " << height << "\n-1.0\n";
  for (int y = height - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(data.data() + static_cast<size_t>(y) * width),
              static_cast<std::streamsize>(sizeof(float) * width));
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<float> ReadPfm(const std::string& path, int* width, int* height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string magic;
  double scale = 0.0;
  in >> magic >> *width >> *height >> scale;
  in.get();
  if (magic != "Pf" || scale >= 0.0) {
    throw IoError("'" + path + "' is not a little-endian grayscale PFM");
  }
  std::vector<float> data(static_cast<size_t>(*width) * *height);
  for (int y = *height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(data.data() + static_cast<size_t>(y) * *width),
            static_cast<std::streamsize>(sizeof(float) * *width));
  }
  if (!in) throw IoError("truncated PFM '" + path + "'");
  return data;
}

}  // namespace scanmerge
