#pragma once

#include <string>
#include <vector>

#include "mmcof/dataset.hpp"
#include "mmcof/fmanet.hpp"
#include "mmcof/metrics.hpp"

namespace mmcof {

enum class ModelKind { Fmanet, ScnnMmcof, ScnnSingle };

ModelKind parse_model_kind(const std::string& name);  // fmanet | scnn-mmcof | scnn-single

struct FlowOptions {
    int iterations = 200;
    float smoothness = 0.1f;
};

struct FlowPair {
    FlowField on;   // onset -> apex
    FlowField off;  // apex -> offset
};

FlowPair compute_flows(const FrameTriplet& frames, const FlowOptions& options);

EncodedSample encode_for_model(const FlowPair& flows, ModelKind kind,
                               const ModulationConfig& mmcof_config);

// Flow + per-model encoding for every sample of the index. Frames are read
// from index.root.
std::vector<EncodedSample> encode_index(const DatasetIndex& index, ModelKind kind,
                                        const FlowOptions& flow_options,
                                        const ModulationConfig& mmcof_config);

// In-memory variant used with the synthetic generator.
std::vector<EncodedSample> encode_clips(const std::vector<SynthClip>& clips, ModelKind kind,
                                        const FlowOptions& flow_options,
                                        const ModulationConfig& mmcof_config);

struct LosoRunConfig {
    ModelKind kind = ModelKind::Fmanet;
    FmanetHyper hyper;
    TrainSchedule schedule;
    int jobs = 1;                 // fold-level parallelism
    std::string checkpoint_dir;   // final per-fold checkpoints when non-empty
    int protocol = 0;             // recorded in checkpoints
};

std::unique_ptr<Network> make_network(ModelKind kind, int classes, int height, int width,
                                      const FmanetHyper& hyper, uint64_t seed);

struct LosoOutcome {
    std::vector<FoldPrediction> folds;  // ordered by held-out subject id
    LosoReport report;
};

// Trains one network per fold and evaluates it on the held-out subject.
// Results are merged in subject-id order regardless of completion order.
// `evaluate_mask`, when given, marks the samples eligible for test sets
// (augmented variants train but are never evaluated).
LosoOutcome run_loso(const std::vector<EncodedSample>& data,
                     const std::vector<std::string>& subject_of_sample, int classes,
                     int height, int width, const LosoRunConfig& config,
                     const std::vector<char>* evaluate_mask = nullptr);

}  // namespace mmcof
