#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmcof/image.hpp"

namespace mmcof {

struct Sample {
    std::string subject;
    std::string clip;
    std::string onset, apex, offset;  // frame paths, relative to the dataset root
    std::string raw_label;
    int label = -1;  // mapped class index; -1 until map_labels runs
};

struct DatasetIndex {
    std::string root;
    std::vector<Sample> samples;
    int protocol = 0;  // 0 = raw labels only
    std::vector<std::string> class_names;
};

// CSV columns: subject,clip,onset,apex,offset,label (header row required).
// Frame paths are resolved against `root`; missing frames and malformed rows
// are collected and reported together with their line numbers.
DatasetIndex load_index(const std::string& root, const std::string& annotation_path);

// protocol 5: classes with fewer than 10 samples are dropped entirely.
// protocol 3: positive={happiness}, negative={disgust,repression,sadness,fear},
//             surprise; 'others' discarded.
// protocol 6/7: raw labels mapped verbatim (sorted), no exclusion.
DatasetIndex map_labels(const DatasetIndex& index, int protocol);

struct LosoFold {
    std::string subject;             // held-out subject
    std::vector<int> train, test;    // sample indices into the index
};

// One fold per subject, ordered by subject id.
std::vector<LosoFold> loso_splits(const DatasetIndex& index);

struct FrameTriplet {
    GrayFrame onset, apex, offset;
};

struct AugmentSpec {
    bool flip = true;
    bool rot5 = true;
    bool rot10 = true;
};

GrayFrame flip_horizontal(const GrayFrame& frame);
// Rotation about the image center; bilinear sampling, replicate borders.
GrayFrame rotate(const GrayFrame& frame, float degrees);

// Original triplet first, then flip, then rotations (-10, -5, +5, +10 as
// enabled); the same transform is applied to all three frames.
std::vector<FrameTriplet> augment(const FrameTriplet& triplet, const AugmentSpec& spec);

struct SynthConfig {
    int classes = 5;
    int samples_per_class = 20;
    int subjects = 8;
    int image_size = 32;
    float noise_level = 0.0f;
    float asymmetry_level = 0.5f;  // how much apex-offset motion deviates from reversal
    uint64_t seed = 1;
};

struct SynthClip {
    std::string subject;
    std::string clip;
    int label = 0;
    FrameTriplet frames;
    // ground-truth displacements of the moving blob (pixels)
    float d1x = 0, d1y = 0;  // onset -> apex
    float d2x = 0, d2y = 0;  // apex -> offset
};

// Each class is a localized Gaussian-blob motion: the blob rises onset->apex
// along a class/region-specific direction and moves apex->offset along
// -(1-a)*d1 + a*e_c, where e_c is a class-specific deviation and a the
// asymmetry level. a = 0 gives exact reversal. Deterministic in the seed.
std::vector<SynthClip> synth_clips(const SynthConfig& config);

// Materialize the clips as PGM frames plus annotations.csv under `root`.
DatasetIndex synth_generate(const SynthConfig& config, const std::string& root);

}  // namespace mmcof
