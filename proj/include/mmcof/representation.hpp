#pragma once

#include "mmcof/flow.hpp"
#include "mmcof/tensor.hpp"

namespace mmcof {

// Weighted sum of the two min-max-normalized phase magnitudes.
struct CombinedMagnitude {
    int width = 0;
    int height = 0;
    std::vector<float> m_c;
    float theta1 = 1.0f;
    float theta2 = 1.0f;
};

enum class ThresholdMode { Manual, Adaptive };

struct ModulationConfig {
    ThresholdMode mode = ThresholdMode::Adaptive;
    float alpha = 0.5f;   // manual lower threshold (must stay below beta)
    float beta = 1.8f;    // manual upper threshold
    float k_upper = 2.0f;
    float k_lower = 1.0f;
    float w1 = 2.0f;
    float w2 = 0.5f;
};

// 3-channel motion image fed to the classifier:
// channel 0/1 = theta-weighted sums of the raw u/v components,
// channel 2 = modulated combined magnitude (>= 0).
struct MMCofImage {
    int width = 0;
    int height = 0;
    Tensor image;  // (3, H, W)
};

// Min-max rescale to [0,1]; a constant map collapses to all zeros.
MagnitudeMap normalize_magnitude(const MagnitudeMap& m);

CombinedMagnitude combine_flows(const MagnitudeMap& m1n, const MagnitudeMap& m2n, float theta1,
                                float theta2);

// (lower, upper) = (max(0, mu - k_lower*sigma), mu + k_upper*sigma).
std::pair<float, float> adaptive_thresholds(const CombinedMagnitude& mc, float k_upper,
                                            float k_lower);

MagnitudeMap modulate(const CombinedMagnitude& mc, float alpha, float beta, float w1, float w2);

MMCofImage build_mmcof(const FlowField& flow_on, const FlowField& flow_off,
                       const ModulationConfig& config, float theta1 = 1.0f, float theta2 = 1.0f);

}  // namespace mmcof
