#ifndef INVERSENET_IMAGE_IO_HPP
#define INVERSENET_IMAGE_IO_HPP

#include <png.h>

#include <cstring>
#include <string>
#include <vector>

#include "inversenet/tensor.hpp"

// 8-bit PNG <-> [0,1] double tensors (libpng simplified API). Gray stays
// 1-channel, everything else is expanded to RGB.

namespace inversenet {

inline Tensor read_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw Error("read_png: cannot read '" + path + "': " + image.message);
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::int64_t c = color ? 3 : 1;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw Error("read_png: decode failed for '" + path + "': " + image.message);
    }
    Tensor out(Shape{1, static_cast<std::int64_t>(image.height),
                     static_cast<std::int64_t>(image.width), c});
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<double>(buffer[static_cast<std::size_t>(i)]) / 255.0;
    return out;
}

// Quantizes to the nearest of 256 levels; callers pass [0,1] images.
inline void write_png(const std::string& path, const Tensor& img) {
    const Shape s = img.shape();
    if (s.n != 1 || (s.c != 1 && s.c != 3))
        throw Error("write_png: need shape (1,h,w,1|3), got " + s.str());
    std::vector<png_byte> buffer(static_cast<std::size_t>(s.h * s.w * s.c));
    for (std::int64_t i = 0; i < img.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, img[i]));
        buffer[static_cast<std::size_t>(i)] =
            static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(s.w);
    image.height = static_cast<png_uint_32>(s.h);
    image.format = s.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw Error("write_png: cannot write '" + path + "': " + image.message);
}

// Channel adaptation for dataset ingestion: gray -> RGB replication, RGB ->
// gray averaging.
inline Tensor adapt_channels(const Tensor& img, std::int64_t channels) {
    const Shape s = img.shape();
    if (s.c == channels) return img;
    Tensor out(Shape{s.n, s.h, s.w, channels});
    if (s.c == 1) {
        for (std::int64_t p = 0; p < s.n * s.h * s.w; ++p)
            for (std::int64_t c = 0; c < channels; ++c) out[p * channels + c] = img[p];
        return out;
    }
    if (channels == 1) {
        for (std::int64_t p = 0; p < s.n * s.h * s.w; ++p) {
            double acc = 0.0;
            for (std::int64_t c = 0; c < s.c; ++c) acc += img[p * s.c + c];
            out[p] = acc / static_cast<double>(s.c);
        }
        return out;
    }
    throw Error("adapt_channels: cannot map " + std::to_string(s.c) + " -> " +
                std::to_string(channels) + " channels");
}

}  // namespace inversenet

#endif  // INVERSENET_IMAGE_IO_HPP
