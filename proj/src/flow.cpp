#include "mmcof/flow.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mmcof {

namespace {

constexpr float kFloTag = 202021.25f;  // "PIEH"

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

FlowField estimate_flow(const GrayFrame& a, const GrayFrame& b, int iterations, float smoothness,
                        std::vector<double>* energy_trace) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("estimate_flow: frame dimensions differ");
    if (a.width < 2 || a.height < 2) throw std::invalid_argument("estimate_flow: frames too small");
    if (iterations < 1) throw std::invalid_argument("estimate_flow: iterations must be >= 1");
    if (!(smoothness > 0.0f)) throw std::invalid_argument("estimate_flow: smoothness must be > 0");

    const int W = a.width, H = a.height;
    const size_t N = static_cast<size_t>(W) * H;

    // Horn-Schunck derivative estimates over the 2x2x2 cube, replicate borders.
    std::vector<float> Ex(N), Ey(N), Et(N);
    auto A = [&](int y, int x) { return a.at(clampi(y, 0, H - 1), clampi(x, 0, W - 1)); };
    auto B = [&](int y, int x) { return b.at(clampi(y, 0, H - 1), clampi(x, 0, W - 1)); };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            size_t i = static_cast<size_t>(y) * W + x;
            Ex[i] = 0.25f * (A(y, x + 1) - A(y, x) + A(y + 1, x + 1) - A(y + 1, x) +
                             B(y, x + 1) - B(y, x) + B(y + 1, x + 1) - B(y + 1, x));
            Ey[i] = 0.25f * (A(y + 1, x) - A(y, x) + A(y + 1, x + 1) - A(y, x + 1) +
                             B(y + 1, x) - B(y, x) + B(y + 1, x + 1) - B(y, x + 1));
            Et[i] = 0.25f * (B(y, x) - A(y, x) + B(y + 1, x) - A(y + 1, x) +
                             B(y, x + 1) - A(y, x + 1) + B(y + 1, x + 1) - A(y + 1, x + 1));
        }

    FlowField f(W, H);
    std::vector<float> ubar(N), vbar(N);
    const float alpha2 = smoothness;

    auto neighbor_avg = [&](const std::vector<float>& src, std::vector<float>& dst) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                auto S = [&](int yy, int xx) {
                    return src[static_cast<size_t>(clampi(yy, 0, H - 1)) * W + clampi(xx, 0, W - 1)];
                };
                dst[static_cast<size_t>(y) * W + x] =
                    (S(y - 1, x) + S(y + 1, x) + S(y, x - 1) + S(y, x + 1)) / 6.0f +
                    (S(y - 1, x - 1) + S(y - 1, x + 1) + S(y + 1, x - 1) + S(y + 1, x + 1)) / 12.0f;
            }
    };

    auto energy = [&]() {
        double e = 0.0;
        for (size_t i = 0; i < N; ++i) {
            double r = Ex[i] * f.u[i] + Ey[i] * f.v[i] + Et[i];
            e += r * r;
        }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                size_t i = static_cast<size_t>(y) * W + x;
                size_t ix = static_cast<size_t>(y) * W + clampi(x + 1, 0, W - 1);
                size_t iy = static_cast<size_t>(clampi(y + 1, 0, H - 1)) * W + x;
                double dux = f.u[ix] - f.u[i], duy = f.u[iy] - f.u[i];
                double dvx = f.v[ix] - f.v[i], dvy = f.v[iy] - f.v[i];
                e += alpha2 * (dux * dux + duy * duy + dvx * dvx + dvy * dvy);
            }
        return e;
    };

    for (int it = 0; it < iterations; ++it) {
        neighbor_avg(f.u, ubar);
        neighbor_avg(f.v, vbar);
        for (size_t i = 0; i < N; ++i) {
            float num = Ex[i] * ubar[i] + Ey[i] * vbar[i] + Et[i];
            float den = alpha2 + Ex[i] * Ex[i] + Ey[i] * Ey[i];
            f.u[i] = ubar[i] - Ex[i] * num / den;
            f.v[i] = vbar[i] - Ey[i] * num / den;
        }
        if (energy_trace) energy_trace->push_back(energy());
    }
    return f;
}

FlowField read_flo(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_flo: cannot open " + path);
    float tag;
    int32_t w, h;
    if (!is.read(reinterpret_cast<char*>(&tag), 4) || !is.read(reinterpret_cast<char*>(&w), 4) ||
        !is.read(reinterpret_cast<char*>(&h), 4))
        throw std::runtime_error("read_flo: truncated header in " + path);
    if (tag != kFloTag) throw std::runtime_error("read_flo: bad magic in " + path);
    if (w < 1 || h < 1 || w > 99999 || h > 99999)
        throw std::runtime_error("read_flo: implausible dimensions in " + path);
    FlowField f(w, h);
    std::vector<float> inter(static_cast<size_t>(w) * h * 2);
    if (!is.read(reinterpret_cast<char*>(inter.data()),
                 static_cast<std::streamsize>(inter.size() * 4)))
        throw std::runtime_error("read_flo: truncated data in " + path);
    for (size_t i = 0; i < f.u.size(); ++i) {
        f.u[i] = inter[2 * i];
        f.v[i] = inter[2 * i + 1];
    }
    return f;
}

void write_flo(const FlowField& field, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_flo: cannot open " + path);
    int32_t w = field.width, h = field.height;
    os.write(reinterpret_cast<const char*>(&kFloTag), 4);
    os.write(reinterpret_cast<const char*>(&w), 4);
    os.write(reinterpret_cast<const char*>(&h), 4);
    for (size_t i = 0; i < field.u.size(); ++i) {
        os.write(reinterpret_cast<const char*>(&field.u[i]), 4);
        os.write(reinterpret_cast<const char*>(&field.v[i]), 4);
    }
    if (!os) throw std::runtime_error("write_flo: write failed for " + path);
}

MagnitudeMap flow_magnitude(const FlowField& field) {
    MagnitudeMap m(field.width, field.height);
    for (size_t i = 0; i < m.m.size(); ++i) m.m[i] = std::hypot(field.u[i], field.v[i]);
    return m;
}

}  // namespace mmcof
