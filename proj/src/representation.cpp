#include "mmcof/representation.hpp"

#include <algorithm>
#include <cmath>

namespace mmcof {

MagnitudeMap normalize_magnitude(const MagnitudeMap& m) {
    MagnitudeMap out(m.width, m.height);
    if (m.m.empty()) return out;
    auto [lo_it, hi_it] = std::minmax_element(m.m.begin(), m.m.end());
    float lo = *lo_it, hi = *hi_it;
    if (hi <= lo) return out;  // constant map collapses to zeros
    float inv = 1.0f / (hi - lo);
    for (size_t i = 0; i < out.m.size(); ++i) out.m[i] = (m.m[i] - lo) * inv;
    return out;
}

CombinedMagnitude combine_flows(const MagnitudeMap& m1n, const MagnitudeMap& m2n, float theta1,
                                float theta2) {
    if (m1n.width != m2n.width || m1n.height != m2n.height)
        throw std::invalid_argument("combine_flows: dimension mismatch");
    if (theta1 < 0.0f || theta2 < 0.0f)
        throw std::invalid_argument("combine_flows: phase weights must be >= 0");
    CombinedMagnitude c;
    c.width = m1n.width;
    c.height = m1n.height;
    c.theta1 = theta1;
    c.theta2 = theta2;
    c.m_c.resize(m1n.m.size());
    for (size_t i = 0; i < c.m_c.size(); ++i)
        c.m_c[i] = theta1 * m1n.m[i] + theta2 * m2n.m[i];
    return c;
}

std::pair<float, float> adaptive_thresholds(const CombinedMagnitude& mc, float k_upper,
                                            float k_lower) {
    if (mc.m_c.empty()) throw std::invalid_argument("adaptive_thresholds: empty map");
    double mu = 0.0;
    for (float v : mc.m_c) mu += v;
    mu /= static_cast<double>(mc.m_c.size());
    double var = 0.0;
    for (float v : mc.m_c) {
        double d = v - mu;
        var += d * d;
    }
    var /= static_cast<double>(mc.m_c.size());
    double sigma = std::sqrt(var);
    float lower = static_cast<float>(std::max(0.0, mu - k_lower * sigma));
    float upper = static_cast<float>(mu + k_upper * sigma);
    return {lower, upper};
}

MagnitudeMap modulate(const CombinedMagnitude& mc, float alpha, float beta, float w1, float w2) {
    if (alpha > beta) throw std::invalid_argument("modulate: alpha must be <= beta");
    if (!(w1 > 0.0f) || !(w2 > 0.0f)) throw std::invalid_argument("modulate: weights must be > 0");
    MagnitudeMap out(mc.width, mc.height);
    for (size_t i = 0; i < mc.m_c.size(); ++i) {
        float v = mc.m_c[i];
        out.m[i] = v > beta ? w1 * v : (v < alpha ? w2 * v : v);
    }
    return out;
}

MMCofImage build_mmcof(const FlowField& flow_on, const FlowField& flow_off,
                       const ModulationConfig& config, float theta1, float theta2) {
    if (flow_on.width != flow_off.width || flow_on.height != flow_off.height)
        throw std::invalid_argument("build_mmcof: phase flows must share dimensions");
    MagnitudeMap m1n = normalize_magnitude(flow_magnitude(flow_on));
    MagnitudeMap m2n = normalize_magnitude(flow_magnitude(flow_off));
    CombinedMagnitude mc = combine_flows(m1n, m2n, theta1, theta2);
    float alpha = config.alpha, beta = config.beta;
    if (config.mode == ThresholdMode::Adaptive)
        std::tie(alpha, beta) = adaptive_thresholds(mc, config.k_upper, config.k_lower);
    else if (!(config.alpha < config.beta))
        throw std::invalid_argument("build_mmcof: manual mode requires alpha < beta");
    MagnitudeMap mod = modulate(mc, alpha, beta, config.w1, config.w2);

    MMCofImage img;
    img.width = flow_on.width;
    img.height = flow_on.height;
    img.image = Tensor({3, img.height, img.width});
    size_t n = mod.m.size();
    for (size_t i = 0; i < n; ++i) {
        img.image.data[i] = theta1 * flow_on.u[i] + theta2 * flow_off.u[i];
        img.image.data[n + i] = theta1 * flow_on.v[i] + theta2 * flow_off.v[i];
        img.image.data[2 * n + i] = mod.m[i];
    }
    return img;
}

}  // namespace mmcof
