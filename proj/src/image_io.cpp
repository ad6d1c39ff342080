#include "sinesr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "sinesr/errors.hpp"

namespace sinesr {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

Image decode_png(const std::vector<std::uint8_t>& data, const std::string& what) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
    throw DataError("cannot decode PNG " + what + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG " + what + ": " + image.message);
  }
  return from_bytes_interleaved(pixels, static_cast<int>(image.height),
                                static_cast<int>(image.width), 3);
}

}  // namespace

std::vector<std::uint8_t> to_bytes_interleaved(const Image& img) {
  if (img.n() != 1) throw ShapeError("expected a single image, got " + img.shape().str());
  std::vector<std::uint8_t> bytes(img.size());
  const int c = img.c();
  for (int ch = 0; ch < c; ++ch) {
    const float* p = img.plane(0, ch);
    for (std::size_t i = 0; i < img.shape().plane(); ++i) {
      const double v = std::clamp(static_cast<double>(p[i]), 0.0, 255.0);
      bytes[i * c + ch] = static_cast<std::uint8_t>(std::round(v));
    }
  }
  return bytes;
}

Image from_bytes_interleaved(std::span<const std::uint8_t> bytes, int h, int w,
                             int channels) {
  Image img(1, channels, h, w);
  if (bytes.size() != img.size()) throw ShapeError("byte buffer size mismatch");
  for (int ch = 0; ch < channels; ++ch) {
    float* p = img.plane(0, ch);
    for (std::size_t i = 0; i < img.shape().plane(); ++i) p[i] = bytes[i * channels + ch];
  }
  return img;
}

Image read_image(const std::filesystem::path& path) {
  const auto data = read_file(path);
  if (data.size() >= 8 && png_sig_cmp(data.data(), 0, 8) == 0) {
    return decode_png(data, path.string());
  }
  if (data.size() >= 2 && data[0] == 0xFF && data[1] == 0xD8) {
    try {
      return decode_jpeg(data);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  throw DataError("unsupported or corrupt image " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.c() != 1 && img.c() != 3) throw ShapeError("write_png: need 1 or 3 channels");
  const auto bytes = to_bytes_interleaved(img);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.w());
  image.height = static_cast<png_uint_32>(img.h());
  image.format = img.c() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality) {
  if (img.c() != 3) throw ShapeError("encode_jpeg: expected an RGB image");
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must be in [1, 100]");
  const auto bytes = to_bytes_interleaved(img);

  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw DataError(std::string("jpeg encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.w());
  cinfo.image_height = static_cast<JDIMENSION>(img.h());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.comp_info[0].h_samp_factor = 2;
  cinfo.comp_info[0].v_samp_factor = 2;
  cinfo.comp_info[1].h_samp_factor = cinfo.comp_info[1].v_samp_factor = 1;
  cinfo.comp_info[2].h_samp_factor = cinfo.comp_info[2].v_samp_factor = 1;
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = static_cast<std::size_t>(img.w()) * 3;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(bytes.data() + cinfo.next_scanline * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

Image decode_jpeg(std::span<const std::uint8_t> data) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silent;
  std::vector<std::uint8_t> pixels;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError(std::string("cannot decode JPEG: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_bytes_interleaved(pixels, h, w, 3);
}

void write_jpeg(const std::filesystem::path& path, const Image& img, int quality) {
  const auto bytes = encode_jpeg(img, quality);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write JPEG " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Image jpeg_roundtrip(const Image& img, int quality) {
  if (img.n() != 1) {
    Image out(img.shape());
    for (int n = 0; n < img.n(); ++n) {
      const Image one = jpeg_roundtrip(img.slice(n, 1), quality);
      std::copy(one.data(), one.data() + one.size(), out.sample(n));
    }
    return out;
  }
  return decode_jpeg(encode_jpeg(img, quality));
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) {
    return static_cast<char>(std::tolower(ch));
  });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("image directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace sinesr
