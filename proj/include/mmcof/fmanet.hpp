#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mmcof/ops.hpp"
#include "mmcof/optimizer.hpp"
#include "mmcof/representation.hpp"
#include "mmcof/rng.hpp"

namespace mmcof {

struct FmanetHyper {
    float theta = 1.0f;    // consensus exponent
    float tau = 0.1f;      // coherence temperature (magnitudes are per-sample normalized)
    int c_mid = 8;         // FFB intermediate channels
    float epsilon = 1e-6f;

    void validate() const {
        if (theta < 0.0f) throw std::invalid_argument("FmanetHyper: theta must be >= 0");
        if (!(tau > 0.0f)) throw std::invalid_argument("FmanetHyper: tau must be > 0");
        if (c_mid < 1) throw std::invalid_argument("FmanetHyper: c_mid must be >= 1");
        if (!(epsilon > 0.0f)) throw std::invalid_argument("FmanetHyper: epsilon must be > 0");
    }
};

// Per-pixel [0,1] agreement between the two motion phases.
struct ConsensusMap {
    int width = 0;
    int height = 0;
    std::vector<float> c;
};

// strength * similarity, max-normalized over the spatial extent.
ConsensusMap ffb_consensus(const MagnitudeMap& m_on, const MagnitudeMap& m_off, float epsilon);

// Batched dual-phase network input. Flow images carry (u, v, magnitude)
// channels, normalized per sample by the phase's peak magnitude.
struct PhaseInput {
    Tensor i_on, i_off;  // (B,3,H,W)
    Tensor m_on, m_off;  // (B,1,H,W)
};

// One preprocessed training/eval sample. SCNN-style models read `primary`
// only; FMANet reads all four tensors.
struct EncodedSample {
    Tensor primary;              // (3,H,W)
    Tensor i_off, m_on, m_off;   // FMANet extras; empty for SCNN inputs
    int label = -1;
};

EncodedSample encode_fmanet(const FlowField& on, const FlowField& off);
EncodedSample encode_mmcof(const FlowField& on, const FlowField& off,
                           const ModulationConfig& config, float theta1, float theta2);
EncodedSample encode_single_phase(const FlowField& on);

PhaseInput gather_phase_input(const std::vector<const EncodedSample*>& batch);

// Common interface for the trainable classifiers.
class Network {
  public:
    virtual ~Network() = default;
    virtual ag::Var forward(const std::vector<const EncodedSample*>& batch, bool training) = 0;
    virtual ParameterSet& params() = 0;
    virtual std::string kind() const = 0;
};

// The Table-I shallow backbone: four 3x3 convolutions, three 2x2 max-pools,
// two 1024-wide fully connected layers, and a linear output layer, with ReLU
// after every convolution and hidden dense layer. Resolution-polymorphic:
// the flatten size is derived at construction; H and W must be divisible by 8.
class ScnnModel : public Network {
  public:
    ScnnModel(int classes, int in_channels, int height, int width, uint64_t seed);

    ag::Var forward_tensor(const ag::Var& x, bool training);
    ag::Var forward(const std::vector<const EncodedSample*>& batch, bool training) override;
    ParameterSet& params() override { return params_; }
    std::string kind() const override { return "scnn"; }

    // (channels, height, width) after each conv/pool stage, then dense widths.
    std::vector<std::vector<int>> shape_trace() const;

    int classes() const { return classes_; }
    int in_channels() const { return in_channels_; }
    int height() const { return height_; }
    int width() const { return width_; }

  private:
    friend class FmanetModel;
    int classes_, in_channels_, height_, width_, flat_;
    ParameterSet params_;
    ParameterSet* external_ = nullptr;  // set when embedded in FMANet
    ParameterSet& store() { return external_ ? *external_ : params_; }
    void build(ParameterSet& ps, Rng& rng);
    ag::Var run(ParameterSet& ps, const ag::Var& x, bool training);
};

// FFB + SMAB + SCNN backbone. The backbone's first convolution is
// re-dimensioned to accept c_mid input channels.
class FmanetModel : public Network {
  public:
    FmanetModel(int classes, int height, int width, FmanetHyper hyper, uint64_t seed);

    ag::Var ffb_forward(const PhaseInput& input, bool training);
    ag::Var smab_forward(const ag::Var& fused, const PhaseInput& input);
    ag::Var forward_phases(const PhaseInput& input, bool training);  // logits
    ag::Var forward(const std::vector<const EncodedSample*>& batch, bool training) override;
    ParameterSet& params() override { return params_; }
    std::string kind() const override { return "fmanet"; }

    const FmanetHyper& hyper() const { return hyper_; }
    int classes() const { return classes_; }
    int height() const { return height_; }
    int width() const { return width_; }

  private:
    int classes_, height_, width_;
    FmanetHyper hyper_;
    ParameterSet params_;
    std::unique_ptr<ScnnModel> backbone_;
};

struct TrainSchedule {
    int epochs = 50;
    int batch = 16;
    float lr = 1e-3f;
    OptimizerKind optimizer = OptimizerKind::Adam;
    uint64_t seed = 1;
    // stop once training accuracy stays at/above this for `patience` epochs
    float early_stop_acc = 0.999f;
    int early_stop_patience = 3;
    std::string checkpoint_dir;  // per-epoch checkpoints when non-empty
};

struct TrainResult {
    std::vector<float> loss_curve;     // mean batch loss per epoch
    std::vector<float> train_accuracy;
    int epochs_run = 0;
};

TrainResult train(Network& net, const std::vector<EncodedSample>& data,
                  const std::vector<int>& train_idx, const TrainSchedule& schedule);

struct Prediction {
    std::vector<int> classes;
    Tensor probabilities;  // (N, C), rows sum to 1
};

Prediction predict(Network& net, const std::vector<EncodedSample>& data,
                   const std::vector<int>& idx, int batch = 16);

// Checkpoint: structured-text header (kind, dimensions, hyperparameters,
// class count, protocol id) followed by the parameter container.
void save_checkpoint(Network& net, int protocol, const std::string& path);
struct Checkpoint {
    std::string kind;
    int classes = 0, in_channels = 0, height = 0, width = 0, protocol = 0;
    FmanetHyper hyper;
    ParameterSet values;
};
Checkpoint load_checkpoint(const std::string& path);
std::unique_ptr<Network> restore_network(const Checkpoint& ckpt);

}  // namespace mmcof
