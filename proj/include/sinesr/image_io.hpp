#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sinesr/tensor.hpp"

namespace sinesr {

// Reads a PNG or JPEG file (decided by content) into a 1 x 3 x H x W image on
// the [0, 255] scale. Gray inputs are replicated to three channels, alpha is
// dropped. Throws DataError when the file is missing or undecodable.
Image read_image(const std::filesystem::path& path);

// Quantizes to 8 bits: clamp to [0, 255], round half away from zero.
std::vector<std::uint8_t> to_bytes_interleaved(const Image& img);
Image from_bytes_interleaved(std::span<const std::uint8_t> bytes, int h, int w, int channels);

void write_png(const std::filesystem::path& path, const Image& img);
void write_jpeg(const std::filesystem::path& path, const Image& img, int quality);

// Baseline JPEG with 4:2:0 chroma subsampling.
std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality);
Image decode_jpeg(std::span<const std::uint8_t> data);
Image jpeg_roundtrip(const Image& img, int quality);

bool is_image_file(const std::filesystem::path& path);
// Sorted list of PNG/JPEG files directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace sinesr
