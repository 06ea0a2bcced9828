#include "forgebench/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <csetjmp>
#include <cstring>
#include <memory>

#include "forgebench/error.hpp"

namespace forgebench {

MediaType sniff_media_type(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return MediaType::Jpeg;
  static constexpr std::uint8_t kPng[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPng, 8) == 0) return MediaType::Png;
  return MediaType::Unknown;
}

namespace {

struct JpegErrorState {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  int warnings = 0;
  char message[JMSG_LENGTH_MAX];
};

extern "C" void jpeg_error_exit_jump(j_common_ptr cinfo) {
  auto* state = reinterpret_cast<JpegErrorState*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, state->message);
  std::longjmp(state->jump, 1);
}

extern "C" void jpeg_emit_message_count(j_common_ptr cinfo, int level) {
  auto* state = reinterpret_cast<JpegErrorState*>(cinfo->err);
  if (level < 0) {
    if (state->warnings == 0) (*cinfo->err->format_message)(cinfo, state->message);
    ++state->warnings;
  }
}

// Only trivially destructible locals live in the setjmp frames below.
bool decode_jpeg_raw(const std::uint8_t* data, std::size_t size, Image* out, JpegErrorState* err) {
  jpeg_decompress_struct cinfo;
  cinfo.err = jpeg_std_error(&err->mgr);
  err->mgr.error_exit = jpeg_error_exit_jump;
  err->mgr.emit_message = jpeg_emit_message_count;
  if (setjmp(err->jump)) {
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out->width = static_cast<int>(cinfo.output_width);
  out->height = static_cast<int>(cinfo.output_height);
  out->channels = cinfo.output_components;
  out->pixels.resize(static_cast<std::size_t>(out->width) * out->height * out->channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out->pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out->width * out->channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

bool encode_jpeg_raw(const Image* image, const JpegEncodeOptions* opts, unsigned char** buffer,
                     unsigned long* size, JpegErrorState* err) {
  jpeg_compress_struct cinfo;
  cinfo.err = jpeg_std_error(&err->mgr);
  err->mgr.error_exit = jpeg_error_exit_jump;
  err->mgr.emit_message = jpeg_emit_message_count;
  if (setjmp(err->jump)) {
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, buffer, size);
  cinfo.image_width = static_cast<JDIMENSION>(image->width);
  cinfo.image_height = static_cast<JDIMENSION>(image->height);
  cinfo.input_components = image->channels;
  cinfo.in_color_space = image->channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, opts->quality, TRUE);
  cinfo.dct_method = JDCT_ISLOW;
  cinfo.optimize_coding = opts->optimize_huffman ? TRUE : FALSE;
  cinfo.restart_interval = static_cast<unsigned int>(opts->restart_interval);
  if (image->channels == 3 && !opts->subsample_chroma) {
    for (int c = 0; c < 3; ++c) {
      cinfo.comp_info[c].h_samp_factor = 1;
      cinfo.comp_info[c].v_samp_factor = 1;
    }
  }
  if (opts->progressive) jpeg_simple_progression(&cinfo);
  jpeg_start_compress(&cinfo, TRUE);
  const int stride = image->width * image->channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(image->pixels.data() + static_cast<std::size_t>(cinfo.next_scanline) * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::UndecodableImage, std::string("png: ") + png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image image(static_cast<int>(png.width), static_cast<int>(png.height), gray ? 1 : 3);
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    std::string message = png.message;
    png_image_free(&png);
    throw Error(ErrorCode::UndecodableImage, "png: " + message);
  }
  return image;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  switch (sniff_media_type(bytes)) {
    case MediaType::Jpeg: {
      Image image;
      JpegErrorState err{};
      if (!decode_jpeg_raw(bytes.data(), bytes.size(), &image, &err)) {
        throw Error(ErrorCode::UndecodableImage, std::string("jpeg: ") + err.message);
      }
      if (err.warnings > 0) throw Error(ErrorCode::UndecodableImage, std::string("jpeg: ") + err.message);
      return image;
    }
    case MediaType::Png:
      return decode_png(bytes);
    case MediaType::Unknown:
      break;
  }
  throw Error(ErrorCode::UndecodableImage, "unrecognized image format");
}

Bytes encode_jpeg(const Image& image, const JpegEncodeOptions& options) {
  if (image.width <= 0 || image.height <= 0 || (image.channels != 1 && image.channels != 3)) {
    throw Error(ErrorCode::ShapeMismatch, "encode_jpeg expects a non-empty 1- or 3-channel image");
  }
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  JpegErrorState err{};
  const bool ok = encode_jpeg_raw(&image, &options, &buffer, &size, &err);
  std::unique_ptr<unsigned char, decltype(&std::free)> owned(buffer, &std::free);
  if (!ok) throw Error(ErrorCode::IoError, std::string("jpeg encode: ") + err.message);
  return Bytes(buffer, buffer + size);
}

}  // namespace forgebench
