#include "mmcof/image.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mmcof {

namespace {

GrayFrame read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_frame: cannot open " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5" && magic != "P2")
        throw std::runtime_error("read_frame: unsupported PGM magic in " + path);
    auto next_token = [&is, &path]() {
        std::string tok;
        while (is >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(is, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error("read_frame: truncated PGM header in " + path);
    };
    int w = std::stoi(next_token());
    int h = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw std::runtime_error("read_frame: bad PGM header in " + path);
    GrayFrame frame(w, h);
    if (magic == "P5") {
        is.get();  // single whitespace after maxval
        int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> raw(static_cast<size_t>(w) * h * bytes);
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
            throw std::runtime_error("read_frame: truncated PGM data in " + path);
        for (size_t i = 0; i < frame.intensity.size(); ++i) {
            int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
            frame.intensity[i] = static_cast<float>(v) / static_cast<float>(maxval);
        }
    } else {
        for (auto& px : frame.intensity) {
            int v = std::stoi(next_token());
            px = static_cast<float>(v) / static_cast<float>(maxval);
        }
    }
    return frame;
}

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) fclose(fp);
    }
};

GrayFrame read_png(const std::string& path) {
    PngReader r;
    r.fp = fopen(path.c_str(), "rb");
    if (!r.fp) throw std::runtime_error("read_frame: cannot open " + path);
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    r.info = png_create_info_struct(r.png);
    if (!r.png || !r.info || setjmp(png_jmpbuf(r.png)))
        throw std::runtime_error("read_frame: PNG decode failed for " + path);
    png_init_io(r.png, r.fp);
    png_read_info(r.png, r.info);
    png_set_expand(r.png);
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);
    int w = static_cast<int>(png_get_image_width(r.png, r.info));
    int h = static_cast<int>(png_get_image_height(r.png, r.info));
    int channels = png_get_channels(r.png, r.info);
    std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
    GrayFrame frame(w, h);
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            float v;
            if (channels >= 3) {
                // ITU-R 601 luma
                v = 0.299f * row[x * channels] + 0.587f * row[x * channels + 1] +
                    0.114f * row[x * channels + 2];
            } else {
                v = row[x * channels];
            }
            frame.at(y, x) = v / 255.0f;
        }
    }
    return frame;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) fclose(fp);
    }
};

void write_png(const std::vector<unsigned char>& pixels, int width, int height, int channels,
               const std::string& path) {
    if (static_cast<long long>(pixels.size()) != static_cast<long long>(width) * height * channels)
        throw std::invalid_argument("write_png: pixel buffer size mismatch");
    PngWriter w;
    w.fp = fopen(path.c_str(), "wb");
    if (!w.fp) throw std::runtime_error("write_png: cannot open " + path);
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    w.info = png_create_info_struct(w.png);
    if (!w.png || !w.info || setjmp(png_jmpbuf(w.png)))
        throw std::runtime_error("write_png: encode failed for " + path);
    png_init_io(w.png, w.fp);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    for (int y = 0; y < height; ++y)
        png_write_row(w.png, const_cast<png_bytep>(&pixels[static_cast<size_t>(y) * width * channels]));
    png_write_end(w.png, nullptr);
}

}  // namespace

GrayFrame read_frame(const std::string& path) {
    if (has_suffix(path, ".png") || has_suffix(path, ".PNG")) return read_png(path);
    return read_pgm(path);
}

void write_pgm(const GrayFrame& frame, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
    os << "P5\n" << frame.width << " " << frame.height << "\n255\n";
    std::vector<unsigned char> raw(frame.intensity.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        float v = frame.intensity[i];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        raw[i] = static_cast<unsigned char>(v * 255.0f + 0.5f);
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw std::runtime_error("write_pgm: write failed for " + path);
}

void write_png_gray(const std::vector<unsigned char>& pixels, int width, int height,
                    const std::string& path) {
    write_png(pixels, width, height, 1, path);
}

void write_png_rgb(const std::vector<unsigned char>& pixels, int width, int height,
                   const std::string& path) {
    write_png(pixels, width, height, 3, path);
}

}  // namespace mmcof
