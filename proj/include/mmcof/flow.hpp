#pragma once

#include <string>
#include <vector>

#include "mmcof/image.hpp"

namespace mmcof {

// Dense per-pixel motion between two frames, in pixels.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> u, v;  // row-major

    FlowField() = default;
    FlowField(int w, int h)
        : width(w), height(h), u(static_cast<size_t>(w) * h, 0.0f), v(u) {}

    size_t idx(int y, int x) const { return static_cast<size_t>(y) * width + x; }
};

struct MagnitudeMap {
    int width = 0;
    int height = 0;
    std::vector<float> m;

    MagnitudeMap() = default;
    MagnitudeMap(int w, int h, float fill = 0.0f)
        : width(w), height(h), m(static_cast<size_t>(w) * h, fill) {}
};

// Horn-Schunck variational flow: brightness constancy plus a smoothness term
// weighted by `smoothness` (the classic alpha^2). Jacobi iterations; replicate
// borders. `energy_trace`, when given, receives the objective after every
// iteration.
FlowField estimate_flow(const GrayFrame& a, const GrayFrame& b, int iterations = 200,
                        float smoothness = 0.1f, std::vector<double>* energy_trace = nullptr);

// Middlebury .flo: float tag 202021.25 ("PIEH"), i32 width/height, then
// interleaved little-endian f32 (u,v) row-major. Bit-exact round-trip.
FlowField read_flo(const std::string& path);
void write_flo(const FlowField& field, const std::string& path);

MagnitudeMap flow_magnitude(const FlowField& field);

}  // namespace mmcof
