#include "mmcof/visualize.hpp"

#include <cmath>
#include <stdexcept>

#include "mmcof/image.hpp"

namespace mmcof {

namespace {

// Polynomial fit of the turbo colormap (Google AI blog, 2019).
void turbo(float t, unsigned char* rgb) {
    float r = 0.13572138f + t * (4.61539260f + t * (-42.66032258f +
              t * (132.13108234f + t * (-152.94239396f + t * 59.28637943f))));
    float g = 0.09140261f + t * (2.19418839f + t * (4.84296658f +
              t * (-14.18503333f + t * (4.27729857f + t * 2.82956604f))));
    float b = 0.10667330f + t * (12.64194608f + t * (-60.58204836f +
              t * (110.36276771f + t * (-89.90310912f + t * 27.34824973f))));
    auto q = [](float v) {
        return static_cast<unsigned char>(std::lround(std::fmin(1.0f, std::fmax(0.0f, v)) * 255));
    };
    rgb[0] = q(r);
    rgb[1] = q(g);
    rgb[2] = q(b);
}

}  // namespace

void write_heatmap(const std::vector<float>& values, int width, int height,
                   const std::string& path, Colormap colormap) {
    if (width < 1 || height < 1 ||
        values.size() != static_cast<size_t>(width) * static_cast<size_t>(height))
        throw std::invalid_argument("write_heatmap: size mismatch");
    float lo = values[0], hi = values[0];
    for (float v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("write_heatmap: non-finite value");
        lo = std::fmin(lo, v);
        hi = std::fmax(hi, v);
    }
    bool constant = hi <= lo;
    auto unit = [&](float v) { return constant ? 0.5f : (v - lo) / (hi - lo); };
    if (colormap == Colormap::Gray) {
        std::vector<unsigned char> px(values.size());
        for (size_t i = 0; i < values.size(); ++i)
            px[i] = static_cast<unsigned char>(std::lround(unit(values[i]) * 255));
        write_png_gray(px, width, height, path);
    } else {
        std::vector<unsigned char> px(values.size() * 3);
        for (size_t i = 0; i < values.size(); ++i) turbo(unit(values[i]), &px[3 * i]);
        write_png_rgb(px, width, height, path);
    }
}

}  // namespace mmcof
