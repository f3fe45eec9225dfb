#pragma once

// PNG encoding of guidance images through libpng. Normal and render maps
// are 8-bit RGB; depth maps are 16-bit grayscale. Quantization is
// round(v * (2^bits - 1)) after clamping to [0, 1].

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "flameguide/raster.hpp"

namespace flameguide {

inline std::uint32_t quantize(double v, int bits) {
    const double max = static_cast<double>((1u << bits) - 1u);
    return static_cast<std::uint32_t>(std::lround(std::clamp(v, 0.0, 1.0) * max));
}

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_handler(png_structp png, png_const_charp message) {
    auto* msg = static_cast<std::string*>(png_get_error_ptr(png));
    if (msg) *msg = message;
    png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace detail

/// Writes a 1- or 3-channel image with the given bit depth (8 or 16).
inline void write_png(const std::filesystem::path& path, const Image& img, int bit_depth) {
    if (img.channels != 1 && img.channels != 3) throw ValidationError("write_png: only 1 or 3 channels supported");
    if (bit_depth != 8 && bit_depth != 16) throw ValidationError("write_png: bit depth must be 8 or 16");
    detail::FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw IoError("cannot open for writing: " + path.string());

    const std::size_t bytes_per_sample = static_cast<std::size_t>(bit_depth / 8);
    const std::size_t row_bytes = img.width * img.channels * bytes_per_sample;
    std::vector<png_byte> buffer(row_bytes * img.height);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c) {
                const auto q = quantize(img.at(x, y, c), bit_depth);
                png_byte* dst = &buffer[y * row_bytes + (x * img.channels + c) * bytes_per_sample];
                if (bit_depth == 16) {
                    dst[0] = static_cast<png_byte>(q >> 8);  // PNG samples are big-endian
                    dst[1] = static_cast<png_byte>(q & 0xff);
                } else {
                    dst[0] = static_cast<png_byte>(q);
                }
            }
    std::vector<png_bytep> rows(img.height);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = &buffer[y * row_bytes];

    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_error_handler,
                                              detail::png_warning_handler);
    if (!png) throw IoError("libpng: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng write error for " + path.string() + ": " + error);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), bit_depth,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(file.get()) != 0) throw IoError("write failed: " + path.string());
}

struct PngImage {
    Image image;  // values dequantized to [0, 1]
    int bit_depth = 8;
};

/// Reads 8- or 16-bit gray or RGB PNGs without gamma or color conversion.
inline PngImage read_png(const std::filesystem::path& path) {
    detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw IoError("cannot open PNG: " + path.string());
    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_error_handler,
                                             detail::png_warning_handler);
    if (!png) throw IoError("libpng: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng read error for " + path.string() + ": " + error);
    }
    png_init_io(png, file.get());
    png_read_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    png_bytepp rows = png_get_rows(png, info);

    PngImage out;
    out.bit_depth = depth;
    const bool supported = (depth == 8 || depth == 16) && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_RGB);
    if (supported) {
        const std::size_t channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
        const double max = depth == 16 ? 65535.0 : 255.0;
        out.image = Image(width, height, channels);
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x)
                for (std::size_t c = 0; c < channels; ++c) {
                    const png_byte* s = rows[y] + (x * channels + c) * static_cast<std::size_t>(depth / 8);
                    const unsigned v = depth == 16 ? (static_cast<unsigned>(s[0]) << 8) | s[1] : s[0];
                    out.image.at(x, y, c) = static_cast<double>(v) / max;
                }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!supported) throw ValidationError(path.string() + ": unsupported PNG format (need 8/16-bit gray or RGB)");
    return out;
}

/// {frame:06}_{kind}.png
inline std::string guidance_filename(std::size_t frame, const char* kind) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%06zu_%s.png", frame, kind);
    return buf;
}

inline void write_guidance_pngs(const std::filesystem::path& dir, std::size_t frame, const GuidanceMaps& maps) {
    write_png(dir / guidance_filename(frame, "depth"), maps.depth, 16);
    write_png(dir / guidance_filename(frame, "normal"), maps.normal, 8);
    write_png(dir / guidance_filename(frame, "render"), maps.render, 8);
}

}  // namespace flameguide
