#include "lesion/image_io.hpp"

#include "lesion/error.hpp"
#include "lesion/morphology.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <memory>

namespace lesion::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

enum class Format { png, jpeg, unknown };

Format sniff(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open image " + path.string());
    unsigned char sig[8] = {};
    is.read(reinterpret_cast<char*>(sig), sizeof(sig));
    if (is.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0) return Format::png;
    if (is.gcount() >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return Format::jpeg;
    return Format::unknown;
}

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, std::uint32_t format,
                                   int& width, int& height) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    image.format = format;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    width = static_cast<int>(image.width);
    height = static_cast<int>(image.height);
    return buf;
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Decodes to interleaved RGB or gray. No C++ objects with destructors live
// across the setjmp region.
bool decode_jpeg(std::FILE* f, bool gray, std::vector<std::uint8_t>& out, int& width, int& height,
                 char* message) {
    jpeg_decompress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = gray ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    width = static_cast<int>(cinfo.output_width);
    height = static_cast<int>(cinfo.output_height);
    const std::size_t stride = static_cast<std::size_t>(width) * cinfo.output_components;
    out.resize(stride * static_cast<std::size_t>(height));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.data() + stride * cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

std::vector<std::uint8_t> read_jpeg(const std::filesystem::path& path, bool gray, int& width,
                                    int& height) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open image " + path.string());
    std::vector<std::uint8_t> out;
    char message[JMSG_LENGTH_MAX] = {};
    if (!decode_jpeg(f.get(), gray, out, width, height, message)) {
        throw DataError("cannot decode JPEG " + path.string() + ": " + message);
    }
    return out;
}

std::vector<std::uint8_t> read_any(const std::filesystem::path& path, bool gray, int& width,
                                   int& height) {
    switch (sniff(path)) {
        case Format::png:
            return read_png(path, gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB, width, height);
        case Format::jpeg:
            return read_jpeg(path, gray, width, height);
        case Format::unknown:
            break;
    }
    throw DataError("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& data, int width,
               int height, std::uint32_t format) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    if (!png_image_write_to_file(&image, path.c_str(), 0, data.data(), 0, nullptr)) {
        throw DataError("cannot write PNG " + path.string() + ": " + image.message);
    }
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
    int w = 0;
    int h = 0;
    const auto bytes = read_any(path, false, w, h);
    std::vector<Rgb> px(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = {bytes[3 * i] / 255.0, bytes[3 * i + 1] / 255.0, bytes[3 * i + 2] / 255.0};
    }
    return RgbImage(w, h, std::move(px));
}

BinaryMask read_mask(const std::filesystem::path& path) {
    int w = 0;
    int h = 0;
    const auto bytes = read_any(path, true, w, h);
    std::vector<std::uint8_t> bits(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bits[i] = bytes[i] >= 128 ? 1 : 0;
    return BinaryMask(w, h, std::move(bits));
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> data(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask[i] ? 255 : 0;
    write_png(path, data, mask.width(), mask.height(), PNG_FORMAT_GRAY);
}

void write_gray_png(const std::filesystem::path& path, const ScalarMap& map) {
    std::vector<std::uint8_t> data(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) data[i] = to_byte(map[i]);
    write_png(path, data, map.width(), map.height(), PNG_FORMAT_GRAY);
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img) {
    std::vector<std::uint8_t> data(img.size() * 3);
    for (std::size_t i = 0; i < img.size(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) data[3 * i + c] = to_byte(img[i][c]);
    }
    write_png(path, data, img.width(), img.height(), PNG_FORMAT_RGB);
}

RgbImage render_overlay(const RgbImage& img, const BinaryMask& truth, const BinaryMask& predicted) {
    if (truth.width() != img.width() || truth.height() != img.height() ||
        !truth.same_shape(predicted)) {
        throw std::invalid_argument("render_overlay: dimensions differ");
    }
    RgbImage out = img;
    const BinaryMask t = inner_boundary(truth);
    const BinaryMask p = inner_boundary(predicted);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (t[i]) out[i] = {1.0, 0.0, 0.0};
        if (p[i]) out[i] = {0.0, 1.0, 0.0};
    }
    return out;
}

}  // namespace lesion::io
