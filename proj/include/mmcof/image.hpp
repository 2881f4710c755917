#pragma once

#include <string>
#include <vector>

namespace mmcof {

// Grayscale frame with intensities in [0,1].
struct GrayFrame {
    int width = 0;
    int height = 0;
    std::vector<float> intensity;  // row-major

    GrayFrame() = default;
    GrayFrame(int w, int h, float fill = 0.0f)
        : width(w), height(h), intensity(static_cast<size_t>(w) * h, fill) {}

    float& at(int y, int x) { return intensity[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const { return intensity[static_cast<size_t>(y) * width + x]; }
};

// PGM (P5/P2) and PNG ingestion; color PNG is converted with ITU-R 601 luma.
GrayFrame read_frame(const std::string& path);
void write_pgm(const GrayFrame& frame, const std::string& path);

// 8-bit PNG writers (gray: one channel, rgb: interleaved 3 channels).
void write_png_gray(const std::vector<unsigned char>& pixels, int width, int height,
                    const std::string& path);
void write_png_rgb(const std::vector<unsigned char>& pixels, int width, int height,
                   const std::string& path);

}  // namespace mmcof
