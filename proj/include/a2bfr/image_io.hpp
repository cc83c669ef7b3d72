#pragma once

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/image.hpp"

namespace a2bfr {

inline uint8_t quantize8(Scalar v) {
  Scalar q = std::lround(clamp01(v) * 255.0);
  return static_cast<uint8_t>(q);
}

inline std::vector<uint8_t> to_bytes(const Image& img) {
  std::vector<uint8_t> bytes(img.v.size());
  for (size_t i = 0; i < img.v.size(); ++i) bytes[i] = quantize8(img.v[i]);
  return bytes;
}

inline Image from_bytes(const std::vector<uint8_t>& bytes, int h, int w, int c) {
  Image img(h, w, c);
  for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = static_cast<Scalar>(bytes[i]) / 255.0;
  return img;
}

// ---------------------------------------------------------------------------
// PNG (8-bit gray or RGB). Compression settings are pinned so repeated runs
// emit byte-identical files.
// ---------------------------------------------------------------------------

inline void write_png(const std::filesystem::path& path, const Image& img) {
  require(img.c == 1 || img.c == 3, "write_png: channels must be 1 or 3");
  require(img.h > 0 && img.w > 0, "write_png: empty image");

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) fail_runtime("write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail_runtime("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail_runtime("write_png: libpng error writing " + path.string());
  }

  png_init_io(png, fp);
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, img.w, img.h, 8,
               img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> bytes = to_bytes(img);
  std::vector<png_bytep> rows(img.h);
  size_t stride = static_cast<size_t>(img.w) * img.c;
  for (int y = 0; y < img.h; ++y) rows[y] = bytes.data() + y * stride;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) fail_runtime("read_png: cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail_runtime("read_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail_runtime("read_png: libpng error reading " + path.string());
  }

  png_init_io(png, fp);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int channels = png_get_channels(png, info);
  require_runtime(channels == 1 || channels == 3, "read_png: unsupported channel count");

  std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * channels);
  std::vector<png_bytep> rows(h);
  size_t stride = static_cast<size_t>(w) * channels;
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  return from_bytes(bytes, static_cast<int>(h), static_cast<int>(w), channels);
}

// ---------------------------------------------------------------------------
// JPEG round-trip, in memory. Pixels are quantized to 8 bit, encoded at the
// given quality with 4:4:4 sampling (no chroma subsampling), decoded, and
// mapped back to [0,1].
// ---------------------------------------------------------------------------

namespace detail {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

}  // namespace detail

inline Image jpeg_roundtrip(const Image& img, int quality) {
  require(quality >= 1 && quality <= 100, "jpeg_roundtrip: quality must be in [1,100]");
  require(img.c == 1 || img.c == 3, "jpeg_roundtrip: channels must be 1 or 3");

  std::vector<uint8_t> bytes = to_bytes(img);

  // Encode.
  jpeg_compress_struct cinfo{};
  detail::JpegErrorMgr jerr{};
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    if (buf) std::free(buf);
    fail_runtime("jpeg_roundtrip: encode failed");
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buf, &buf_size);
  cinfo.image_width = static_cast<JDIMENSION>(img.w);
  cinfo.image_height = static_cast<JDIMENSION>(img.h);
  cinfo.input_components = img.c;
  cinfo.in_color_space = img.c == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  for (int i = 0; i < cinfo.num_components; ++i) {
    cinfo.comp_info[i].h_samp_factor = 1;
    cinfo.comp_info[i].v_samp_factor = 1;
  }
  jpeg_start_compress(&cinfo, TRUE);
  size_t stride = static_cast<size_t>(img.w) * img.c;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = bytes.data() + cinfo.next_scanline * stride;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);

  // Decode.
  jpeg_decompress_struct dinfo{};
  detail::JpegErrorMgr derr{};
  dinfo.err = jpeg_std_error(&derr.pub);
  derr.pub.error_exit = detail::jpeg_error_exit;
  if (setjmp(derr.jump)) {
    jpeg_destroy_decompress(&dinfo);
    std::free(buf);
    fail_runtime("jpeg_roundtrip: decode failed");
  }
  jpeg_create_decompress(&dinfo);
  jpeg_mem_src(&dinfo, buf, buf_size);
  jpeg_read_header(&dinfo, TRUE);
  dinfo.out_color_space = img.c == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&dinfo);
  require_runtime(static_cast<int>(dinfo.output_components) == img.c, "jpeg_roundtrip: component mismatch");

  std::vector<uint8_t> out_bytes(static_cast<size_t>(img.h) * img.w * img.c);
  while (dinfo.output_scanline < dinfo.output_height) {
    JSAMPROW row = out_bytes.data() + dinfo.output_scanline * stride;
    jpeg_read_scanlines(&dinfo, &row, 1);
  }
  jpeg_finish_decompress(&dinfo);
  jpeg_destroy_decompress(&dinfo);
  std::free(buf);

  return from_bytes(out_bytes, img.h, img.w, img.c);
}

}  // namespace a2bfr
