#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmcof {

// Dense row-major float tensor. NCHW for 4-d feature maps.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    static Tensor from(std::vector<int> s, std::vector<float> d) {
        if (numel_of(s) != static_cast<long long>(d.size()))
            throw std::invalid_argument("Tensor::from: shape/data size mismatch");
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(d);
        return t;
    }

    static long long numel_of(const std::vector<int>& s) {
        long long n = 1;
        for (int e : s) {
            if (e < 0) throw std::invalid_argument("Tensor: negative extent");
            n *= e;
        }
        return n;
    }

    int numel() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // NCHW access
    float& at4(int n, int c, int y, int x) {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    const float& at4(int n, int c, int y, int x) const {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    float& at2(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    const float& at2(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace mmcof
