#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mmcof/representation.hpp"

using namespace mmcof;

namespace {

MagnitudeMap random_map(int w, int h, std::mt19937& rng, float lo = 0.0f, float hi = 4.0f) {
    MagnitudeMap m(w, h);
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& v : m.m) v = d(rng);
    return m;
}

CombinedMagnitude as_combined(const MagnitudeMap& m) {
    CombinedMagnitude c;
    c.width = m.width;
    c.height = m.height;
    c.m_c = m.m;
    return c;
}

}  // namespace

TEST_CASE("normalize_magnitude rescales [0,5,10] to [0,0.5,1]") {
    MagnitudeMap m(3, 1);
    m.m = {0.0f, 5.0f, 10.0f};
    MagnitudeMap n = normalize_magnitude(m);
    CHECK(n.m[0] == doctest::Approx(0.0f));
    CHECK(n.m[1] == doctest::Approx(0.5f));
    CHECK(n.m[2] == doctest::Approx(1.0f));
}

TEST_CASE("a constant map normalizes to all zeros") {
    MagnitudeMap m(4, 4, 3.7f);
    MagnitudeMap n = normalize_magnitude(m);
    for (float v : n.m) CHECK(v == 0.0f);
}

TEST_CASE("normalize_magnitude matches the min-max oracle") {
    std::mt19937 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        MagnitudeMap m = random_map(7, 5, rng);
        MagnitudeMap n = normalize_magnitude(m);
        float lo = *std::min_element(m.m.begin(), m.m.end());
        float hi = *std::max_element(m.m.begin(), m.m.end());
        for (size_t i = 0; i < m.m.size(); ++i) {
            CHECK(std::abs(n.m[i] - (m.m[i] - lo) / (hi - lo)) <= 1e-6f);
            CHECK(n.m[i] >= 0.0f);
            CHECK(n.m[i] <= 1.0f);
        }
    }
}

TEST_CASE("normalization is scale-invariant over 1000 random cases") {
    std::mt19937 rng(2);
    std::uniform_real_distribution<float> sc(0.01f, 100.0f);
    for (int trial = 0; trial < 1000; ++trial) {
        MagnitudeMap m = random_map(6, 4, rng);
        float c = sc(rng);
        MagnitudeMap scaled = m;
        for (float& v : scaled.m) v *= c;
        MagnitudeMap a = normalize_magnitude(m), b = normalize_magnitude(scaled);
        for (size_t i = 0; i < a.m.size(); ++i) CHECK(std::abs(a.m[i] - b.m[i]) <= 1e-5f);
    }
}

TEST_CASE("combine_flows forms the weighted sum") {
    std::mt19937 rng(3);
    MagnitudeMap m = random_map(5, 5, rng, 0.0f, 1.0f);
    CombinedMagnitude twice = combine_flows(m, m, 1.0f, 1.0f);
    for (size_t i = 0; i < m.m.size(); ++i)
        CHECK(twice.m_c[i] == doctest::Approx(2.0f * m.m[i]));

    MagnitudeMap other = random_map(5, 5, rng, 0.0f, 1.0f);
    CombinedMagnitude single = combine_flows(m, other, 1.5f, 0.0f);
    for (size_t i = 0; i < m.m.size(); ++i)
        CHECK(single.m_c[i] == doctest::Approx(1.5f * m.m[i]));

    MagnitudeMap small(3, 3);
    CHECK_THROWS_AS(combine_flows(m, small, 1.0f, 1.0f), std::invalid_argument);
}

TEST_CASE("adaptive thresholds reproduce hand statistics") {
    MagnitudeMap constant(3, 3, 1.25f);
    auto [lo_c, hi_c] = adaptive_thresholds(as_combined(constant), 2.0f, 1.0f);
    CHECK(lo_c == doctest::Approx(1.25f));
    CHECK(hi_c == doctest::Approx(1.25f));

    // {0.5, 1.5}: mean 1, population sigma 0.5
    MagnitudeMap half(2, 1);
    half.m = {0.5f, 1.5f};
    auto [lo_h, hi_h] = adaptive_thresholds(as_combined(half), 2.0f, 1.0f);
    CHECK(lo_h == doctest::Approx(0.5f));
    CHECK(hi_h == doctest::Approx(2.0f));

    // {0, 2}: mean 1, sigma 1; lower clamps at 0
    MagnitudeMap pair(2, 1);
    pair.m = {0.0f, 2.0f};
    auto [lo_p, hi_p] = adaptive_thresholds(as_combined(pair), 2.0f, 1.0f);
    CHECK(lo_p == doctest::Approx(0.0f));
    CHECK(hi_p == doctest::Approx(3.0f));
}

TEST_CASE("adaptive thresholds bracket the mean over 1000 random cases") {
    std::mt19937 rng(4);
    std::uniform_real_distribution<float> k(0.1f, 3.0f);
    for (int trial = 0; trial < 1000; ++trial) {
        MagnitudeMap m = random_map(6, 3, rng);
        double mu = 0.0;
        for (float v : m.m) mu += v;
        mu /= static_cast<double>(m.m.size());
        auto [lo, hi] = adaptive_thresholds(as_combined(m), k(rng), k(rng));
        CHECK(lo <= mu + 1e-5);
        CHECK(hi >= mu - 1e-5);
        CHECK(lo >= 0.0f);
        CHECK(lo <= hi);
    }
}

TEST_CASE("modulate reproduces the published manual setting") {
    MagnitudeMap m(3, 1);
    m.m = {2.0f, 0.2f, 1.0f};
    MagnitudeMap out = modulate(as_combined(m), 0.5f, 1.8f, 2.0f, 0.5f);
    CHECK(out.m[0] == doctest::Approx(4.0f));
    CHECK(out.m[1] == doctest::Approx(0.1f));
    CHECK(out.m[2] == doctest::Approx(1.0f));
}

TEST_CASE("unit weights make modulation the identity") {
    std::mt19937 rng(5);
    MagnitudeMap m = random_map(6, 6, rng);
    MagnitudeMap out = modulate(as_combined(m), 0.5f, 1.8f, 1.0f, 1.0f);
    for (size_t i = 0; i < m.m.size(); ++i) CHECK(out.m[i] == m.m[i]);
}

TEST_CASE("modulate matches the branch-per-pixel oracle and slope set over 1000 cases") {
    std::mt19937 rng(6);
    std::uniform_real_distribution<float> th(0.2f, 3.0f), w1d(1.0f, 3.0f), w2d(0.1f, 1.0f);
    for (int trial = 0; trial < 1000; ++trial) {
        MagnitudeMap m = random_map(5, 3, rng);
        float a = th(rng), b = th(rng);
        if (a > b) std::swap(a, b);
        float w1 = w1d(rng), w2 = w2d(rng);
        MagnitudeMap out = modulate(as_combined(m), a, b, w1, w2);
        for (size_t i = 0; i < m.m.size(); ++i) {
            float expect = m.m[i] > b ? w1 * m.m[i] : (m.m[i] < a ? w2 * m.m[i] : m.m[i]);
            CHECK(std::abs(out.m[i] - expect) <= 1e-6f);
            // the local slope is one of {w2, 1, w1}
            if (m.m[i] > 0.0f) {
                float slope = out.m[i] / m.m[i];
                bool known = std::abs(slope - w1) <= 1e-5f || std::abs(slope - 1.0f) <= 1e-5f ||
                             std::abs(slope - w2) <= 1e-5f;
                CHECK(known);
            }
        }
    }
}

TEST_CASE("modulation is monotone within each region") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        MagnitudeMap m = random_map(8, 4, rng);
        float a = 1.0f, b = 2.5f;
        MagnitudeMap out = modulate(as_combined(m), a, b, 2.0f, 0.5f);
        auto region = [&](float v) { return v > b ? 2 : (v < a ? 0 : 1); };
        for (size_t i = 0; i < m.m.size(); ++i)
            for (size_t j = 0; j < m.m.size(); ++j)
                if (region(m.m[i]) == region(m.m[j]) && m.m[i] <= m.m[j])
                    CHECK(out.m[i] <= out.m[j] + 1e-6f);
    }
}

TEST_CASE("modulate rejects inverted thresholds") {
    MagnitudeMap m(2, 2, 1.0f);
    CHECK_THROWS_AS(modulate(as_combined(m), 2.0f, 1.0f, 2.0f, 0.5f), std::invalid_argument);
}

TEST_CASE("zero flows build an all-zero image") {
    FlowField on(8, 8), off(8, 8);
    ModulationConfig config;
    MMCofImage img = build_mmcof(on, off, config);
    for (float v : img.image.data) CHECK(v == 0.0f);
}

TEST_CASE("identical pure-horizontal unit flows follow the degenerate policy") {
    FlowField on(8, 8), off(8, 8);
    for (size_t i = 0; i < on.u.size(); ++i) on.u[i] = off.u[i] = 1.0f;
    ModulationConfig config;
    config.mode = ThresholdMode::Manual;
    config.alpha = 0.0f;
    config.beta = 10.0f;
    config.w1 = 1.0f;
    config.w2 = 1.0f;
    MMCofImage img = build_mmcof(on, off, config);
    size_t hw = 64;
    for (size_t i = 0; i < hw; ++i) {
        CHECK(img.image.data[i] == doctest::Approx(2.0f));         // combined u
        CHECK(img.image.data[hw + i] == doctest::Approx(0.0f));    // combined v
        CHECK(img.image.data[2 * hw + i] == doctest::Approx(0.0f));  // constant magnitude -> zeros
    }
}

TEST_CASE("the magnitude channel is symmetric in the two phases over 1000 cases") {
    std::mt19937 rng(8);
    std::uniform_real_distribution<float> d(-2.0f, 2.0f);
    ModulationConfig config;  // adaptive defaults
    for (int trial = 0; trial < 1000; ++trial) {
        FlowField a(5, 4), b(5, 4);
        for (size_t i = 0; i < a.u.size(); ++i) {
            a.u[i] = d(rng);
            a.v[i] = d(rng);
            b.u[i] = d(rng);
            b.v[i] = d(rng);
        }
        MMCofImage ab = build_mmcof(a, b, config, 1.0f, 1.0f);
        MMCofImage ba = build_mmcof(b, a, config, 1.0f, 1.0f);
        size_t hw = a.u.size();
        for (size_t i = 0; i < hw; ++i) {
            CHECK(std::abs(ab.image.data[2 * hw + i] - ba.image.data[2 * hw + i]) <= 1e-5f);
            CHECK(ab.image.data[2 * hw + i] >= 0.0f);
        }
    }
}

TEST_CASE("adaptive modulation amplifies a blob core and attenuates quiet pixels") {
    // three motion populations: a small intense core, a quiet margin, and a
    // dominant mid-level plateau so both adaptive thresholds are active
    int S = 20;
    FlowField on(S, S), off(S, S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            float dx = x - 10.0f, dy = y - 10.0f;
            float v = 1.0f;
            if (dx * dx + dy * dy < 9.0f) v = 3.0f;  // core
            else if (x < 2) v = 0.1f;                // quiet margin
            on.u[on.idx(y, x)] = v;
            off.u[off.idx(y, x)] = -v;
        }
    on.u[on.idx(0, S - 1)] = 0.0f;  // anchor the min of the normalization
    off.u[off.idx(0, S - 1)] = 0.0f;
    ModulationConfig config;  // adaptive, k = (2, 1), w1 = 2, w2 = 0.5
    MMCofImage img = build_mmcof(on, off, config);

    // recompute the regions independently
    MagnitudeMap m1 = normalize_magnitude(flow_magnitude(on));
    MagnitudeMap m2 = normalize_magnitude(flow_magnitude(off));
    CombinedMagnitude mc = combine_flows(m1, m2, 1.0f, 1.0f);
    auto [lo, hi] = adaptive_thresholds(mc, 2.0f, 1.0f);
    size_t hw = static_cast<size_t>(S) * S;
    int amplified = 0, attenuated = 0;
    for (size_t i = 0; i < hw; ++i) {
        float expect = mc.m_c[i] > hi ? 2.0f * mc.m_c[i]
                                      : (mc.m_c[i] < lo ? 0.5f * mc.m_c[i] : mc.m_c[i]);
        CHECK(std::abs(img.image.data[2 * hw + i] - expect) <= 1e-5f);
        if (mc.m_c[i] > hi) ++amplified;
        if (mc.m_c[i] < lo) ++attenuated;
    }
    CHECK(amplified > 0);   // the blob core crosses the upper threshold
    CHECK(attenuated > 0);  // the flat background falls below the lower one
}
