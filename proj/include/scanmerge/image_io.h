#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scanmerge {

// Row-major, top row first. rgb holds 3 bytes per pixel.
void WritePngRgb(const std::string& path, int width, int height,
                 const std::vector<std::uint8_t>& rgb);
void WritePngGray(const std::string& path, int width, int height,
                  const std::vector<std::uint8_t>& gray);

// Single-channel little-endian PFM. Stored bottom-up on disk, exposed top-down.
void WritePfm(const std::string& path, int width, int height,
              const std::vector<float>& data);
std::vector<float> ReadPfm(const std::string& path, int* width, int* height);

}  // namespace scanmerge
