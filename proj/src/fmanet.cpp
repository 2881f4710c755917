#include "mmcof/fmanet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mmcof {

namespace {

Tensor he_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    for (float& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

constexpr float kNormEps = 1e-5f;  // BN / LN variance epsilon

}  // namespace

ConsensusMap ffb_consensus(const MagnitudeMap& m_on, const MagnitudeMap& m_off, float epsilon) {
    if (m_on.width != m_off.width || m_on.height != m_off.height)
        throw std::invalid_argument("ffb_consensus: dimension mismatch");
    if (!(epsilon > 0.0f)) throw std::invalid_argument("ffb_consensus: epsilon must be > 0");
    ConsensusMap cm;
    cm.width = m_on.width;
    cm.height = m_on.height;
    cm.c.resize(m_on.m.size());
    float peak = 0.0f;
    for (size_t i = 0; i < cm.c.size(); ++i) {
        float strength = 0.5f * (m_on.m[i] + m_off.m[i]);
        float sim = 1.0f - std::abs(m_on.m[i] - m_off.m[i]) / (m_on.m[i] + m_off.m[i] + epsilon);
        cm.c[i] = std::max(0.0f, strength * sim);
        peak = std::max(peak, cm.c[i]);
    }
    float inv = 1.0f / (peak + epsilon);
    for (float& v : cm.c) v *= inv;
    return cm;
}

EncodedSample encode_fmanet(const FlowField& on, const FlowField& off) {
    if (on.width != off.width || on.height != off.height)
        throw std::invalid_argument("encode_fmanet: phase flows must share dimensions");
    auto phase = [](const FlowField& f, Tensor& img, Tensor& mag) {
        int H = f.height, W = f.width;
        size_t n = f.u.size();
        float peak = 0.0f;
        for (size_t i = 0; i < n; ++i) peak = std::max(peak, std::hypot(f.u[i], f.v[i]));
        float inv = peak > 0.0f ? 1.0f / peak : 0.0f;
        img = Tensor({3, H, W});
        mag = Tensor({1, H, W});
        for (size_t i = 0; i < n; ++i) {
            float u = f.u[i] * inv, v = f.v[i] * inv;
            img.data[i] = u;
            img.data[n + i] = v;
            float m = std::hypot(u, v);
            img.data[2 * n + i] = m;
            mag.data[i] = m;
        }
    };
    EncodedSample s;
    phase(on, s.primary, s.m_on);
    phase(off, s.i_off, s.m_off);
    return s;
}

EncodedSample encode_mmcof(const FlowField& on, const FlowField& off,
                           const ModulationConfig& config, float theta1, float theta2) {
    EncodedSample s;
    s.primary = build_mmcof(on, off, config, theta1, theta2).image;
    return s;
}

EncodedSample encode_single_phase(const FlowField& on) {
    EncodedSample s;
    // same per-phase normalization as the dual-phase encoder
    FlowField zero(on.width, on.height);
    EncodedSample both = encode_fmanet(on, zero);
    s.primary = std::move(both.primary);
    return s;
}

PhaseInput gather_phase_input(const std::vector<const EncodedSample*>& batch) {
    if (batch.empty()) throw std::invalid_argument("gather_phase_input: empty batch");
    const Tensor& first = batch[0]->primary;
    int H = first.dim(1), W = first.dim(2);
    int B = static_cast<int>(batch.size());
    PhaseInput in;
    in.i_on = Tensor({B, 3, H, W});
    in.i_off = Tensor({B, 3, H, W});
    in.m_on = Tensor({B, 1, H, W});
    in.m_off = Tensor({B, 1, H, W});
    size_t img = static_cast<size_t>(3) * H * W, map = static_cast<size_t>(H) * W;
    for (int n = 0; n < B; ++n) {
        const EncodedSample& s = *batch[n];
        if (s.i_off.data.empty())
            throw std::invalid_argument("gather_phase_input: sample lacks dual-phase tensors");
        std::copy(s.primary.data.begin(), s.primary.data.end(), in.i_on.data.begin() + n * img);
        std::copy(s.i_off.data.begin(), s.i_off.data.end(), in.i_off.data.begin() + n * img);
        std::copy(s.m_on.data.begin(), s.m_on.data.end(), in.m_on.data.begin() + n * map);
        std::copy(s.m_off.data.begin(), s.m_off.data.end(), in.m_off.data.begin() + n * map);
    }
    return in;
}

// ---------------------------------------------------------------------------
// SCNN

ScnnModel::ScnnModel(int classes, int in_channels, int height, int width, uint64_t seed)
    : classes_(classes), in_channels_(in_channels), height_(height), width_(width) {
    if (classes < 2) throw std::invalid_argument("ScnnModel: need at least 2 classes");
    if (height % 8 != 0 || width % 8 != 0)
        throw std::invalid_argument("ScnnModel: spatial extents must be divisible by 8");
    flat_ = 64 * (height / 8) * (width / 8);
    Rng rng(seed);
    build(params_, rng);
}

void ScnnModel::build(ParameterSet& ps, Rng& rng) {
    auto conv = [&](const std::string& name, int cout, int cin) {
        ps.add(name + ".w", he_uniform({cout, cin, 3, 3}, cin * 9, rng), ParamRole::ConvKernel);
        ps.add(name + ".b", Tensor({cout}), ParamRole::ConvBias);
    };
    conv("scnn.conv1", 32, in_channels_);
    conv("scnn.conv2", 32, 32);
    conv("scnn.conv3", 32, 32);
    conv("scnn.conv4", 64, 32);
    auto fc = [&](const std::string& name, int in, int out) {
        ps.add(name + ".w", he_uniform({in, out}, in, rng), ParamRole::DenseWeight);
        ps.add(name + ".b", Tensor({out}), ParamRole::DenseBias);
    };
    fc("scnn.fc1", flat_, 1024);
    fc("scnn.fc2", 1024, 1024);
    fc("scnn.out", 1024, classes_);
}

ag::Var ScnnModel::run(ParameterSet& ps, const ag::Var& x, bool training) {
    (void)training;  // no batch-dependent layers in the backbone
    if (x->value.dim(2) != height_ || x->value.dim(3) != width_ ||
        x->value.dim(1) != in_channels_)
        throw std::invalid_argument("scnn_forward: input shape " + x->value.shape_str() +
                                    " does not match the constructed network");
    using namespace ag;
    Var h = relu(conv2d(x, ps.get("scnn.conv1.w"), ps.get("scnn.conv1.b"), 1, 1));
    h = relu(conv2d(h, ps.get("scnn.conv2.w"), ps.get("scnn.conv2.b"), 1, 1));
    h = maxpool2d(h);
    h = relu(conv2d(h, ps.get("scnn.conv3.w"), ps.get("scnn.conv3.b"), 1, 1));
    h = maxpool2d(h);
    h = relu(conv2d(h, ps.get("scnn.conv4.w"), ps.get("scnn.conv4.b"), 1, 1));
    h = maxpool2d(h);
    h = flatten(h);
    h = relu(dense(h, ps.get("scnn.fc1.w"), ps.get("scnn.fc1.b")));
    h = relu(dense(h, ps.get("scnn.fc2.w"), ps.get("scnn.fc2.b")));
    return dense(h, ps.get("scnn.out.w"), ps.get("scnn.out.b"));
}

ag::Var ScnnModel::forward_tensor(const ag::Var& x, bool training) {
    return run(store(), x, training);
}

ag::Var ScnnModel::forward(const std::vector<const EncodedSample*>& batch, bool training) {
    if (batch.empty()) throw std::invalid_argument("scnn_forward: empty batch");
    int H = batch[0]->primary.dim(1), W = batch[0]->primary.dim(2);
    int B = static_cast<int>(batch.size());
    Tensor x({B, 3, H, W});
    size_t img = static_cast<size_t>(3) * H * W;
    for (int n = 0; n < B; ++n)
        std::copy(batch[n]->primary.data.begin(), batch[n]->primary.data.end(),
                  x.data.begin() + n * img);
    return forward_tensor(ag::make_const(std::move(x)), training);
}

std::vector<std::vector<int>> ScnnModel::shape_trace() const {
    int H = height_, W = width_;
    return {
        {32, H, W},          // conv1
        {32, H, W},          // conv2
        {32, H / 2, W / 2},  // pool1
        {32, H / 2, W / 2},  // conv3
        {32, H / 4, W / 4},  // pool2
        {64, H / 4, W / 4},  // conv4
        {64, H / 8, W / 8},  // pool3
        {flat_},             // flatten
        {1024},              // fc1
        {1024},              // fc2
        {classes_},          // output
    };
}

// ---------------------------------------------------------------------------
// FMANet

FmanetModel::FmanetModel(int classes, int height, int width, FmanetHyper hyper, uint64_t seed)
    : classes_(classes), height_(height), width_(width), hyper_(hyper) {
    hyper_.validate();
    Rng rng(seed);
    int cm = hyper_.c_mid;
    auto conv = [&](const std::string& name, int cout, int cin, int k) {
        params_.add(name + ".w", he_uniform({cout, cin, k, k}, cin * k * k, rng),
                    ParamRole::ConvKernel);
        params_.add(name + ".b", Tensor({cout}), ParamRole::ConvBias);
    };
    conv("ffb.conv_on", cm, 3, 3);
    conv("ffb.conv_off", cm, 3, 3);
    conv("ffb.gate", cm, cm, 3);
    conv("ffb.fuse", cm, cm, 3);
    params_.add("ffb.bn.scale", Tensor({cm}, 1.0f), ParamRole::BnScale);
    params_.add("ffb.bn.shift", Tensor({cm}), ParamRole::BnShift);
    params_.add("ffb.bn.run_mean", Tensor({cm}), ParamRole::RunningStat, false);
    params_.add("ffb.bn.run_var", Tensor({cm}, 1.0f), ParamRole::RunningStat, false);
    params_.add("smab.ln_m.scale", Tensor({1}, 1.0f), ParamRole::LnScale);
    params_.add("smab.ln_m.shift", Tensor({1}), ParamRole::LnShift);
    params_.add("smab.ln_c.scale", Tensor({1}, 1.0f), ParamRole::LnScale);
    params_.add("smab.ln_c.shift", Tensor({1}), ParamRole::LnShift);
    params_.add("smab.dw.w", he_uniform({2, 1, 3, 3}, 9, rng), ParamRole::ConvKernel);
    params_.add("smab.dw.b", Tensor({2}), ParamRole::ConvBias);
    params_.add("smab.pw.w", he_uniform({1, 2, 1, 1}, 2, rng), ParamRole::ConvKernel);
    params_.add("smab.pw.b", Tensor({1}), ParamRole::ConvBias);

    backbone_ = std::make_unique<ScnnModel>(classes, cm, height, width, rng.next_u64());
    // merge backbone parameters into the single model-wide set
    for (auto& e : backbone_->params_.entries())
        params_.entries().push_back(e);
    backbone_->external_ = &params_;
}

namespace {

// C_n^theta for a whole batch; no gradient flows through the motion cues.
Tensor consensus_gate(const Tensor& m_on, const Tensor& m_off, float epsilon, float theta) {
    int B = m_on.dim(0), HW = m_on.dim(2) * m_on.dim(3);
    Tensor out(m_on.shape);
    for (int n = 0; n < B; ++n) {
        const float* a = m_on.data.data() + static_cast<size_t>(n) * HW;
        const float* b = m_off.data.data() + static_cast<size_t>(n) * HW;
        float* o = out.data.data() + static_cast<size_t>(n) * HW;
        float peak = 0.0f;
        for (int i = 0; i < HW; ++i) {
            float strength = 0.5f * (a[i] + b[i]);
            float sim = 1.0f - std::abs(a[i] - b[i]) / (a[i] + b[i] + epsilon);
            o[i] = std::max(0.0f, strength * sim);
            peak = std::max(peak, o[i]);
        }
        float inv = 1.0f / (peak + epsilon);
        for (int i = 0; i < HW; ++i) o[i] = std::pow(o[i] * inv, theta);
    }
    return out;
}

}  // namespace

ag::Var FmanetModel::ffb_forward(const PhaseInput& input, bool training) {
    using namespace ag;
    Var i_on = make_const(input.i_on);
    Var i_off = make_const(input.i_off);
    Var x_on = conv2d(i_on, params_.get("ffb.conv_on.w"), params_.get("ffb.conv_on.b"), 1, 1);
    Var x_off = conv2d(i_off, params_.get("ffb.conv_off.w"), params_.get("ffb.conv_off.b"), 1, 1);
    Var cn = make_const(consensus_gate(input.m_on, input.m_off, hyper_.epsilon, hyper_.theta));
    Var avg = scale(add(x_on, x_off), 0.5f);
    Var gate = mul(sigmoid(conv2d(avg, params_.get("ffb.gate.w"), params_.get("ffb.gate.b"), 1, 1)),
                   cn);
    // g*x_on + (1-g)*x_off
    Var f_raw = add(x_off, mul(gate, sub(x_on, x_off)));
    Var fused = conv2d(f_raw, params_.get("ffb.fuse.w"), params_.get("ffb.fuse.b"), 1, 1);
    fused = batch_norm2d(fused, params_.get("ffb.bn.scale"), params_.get("ffb.bn.shift"),
                         params_.get("ffb.bn.run_mean")->value,
                         params_.get("ffb.bn.run_var")->value, 0.1f, kNormEps, training);
    return relu(fused);
}

ag::Var FmanetModel::smab_forward(const ag::Var& fused, const PhaseInput& input) {
    using namespace ag;
    if (fused->value.dim(2) != input.m_on.dim(2) || fused->value.dim(3) != input.m_on.dim(3))
        throw std::invalid_argument("smab_forward: magnitude maps do not match feature size");
    Tensor mc(input.m_on.shape), coh(input.m_on.shape);
    for (size_t i = 0; i < mc.data.size(); ++i) {
        float a = input.m_on.data[i], b = input.m_off.data[i];
        mc.data[i] = std::sqrt(a * b + hyper_.epsilon);
        coh.data[i] = std::exp(-std::abs(a - b) / hyper_.tau);
    }
    Var mn = layer_norm_spatial(make_const(std::move(mc)), params_.get("smab.ln_m.scale"),
                                params_.get("smab.ln_m.shift"), kNormEps);
    Var cn = layer_norm_spatial(make_const(std::move(coh)), params_.get("smab.ln_c.scale"),
                                params_.get("smab.ln_c.shift"), kNormEps);
    Var f_in = concat_channels(mn, cn);
    Var h = relu(depthwise_conv2d(f_in, params_.get("smab.dw.w"), params_.get("smab.dw.b"), 1));
    Var g_attn = sigmoid(conv2d(h, params_.get("smab.pw.w"), params_.get("smab.pw.b"), 1, 0));
    return mul(fused, add_scalar(g_attn, 0.5f));
}

ag::Var FmanetModel::forward_phases(const PhaseInput& input, bool training) {
    ag::Var fused = ffb_forward(input, training);
    ag::Var out = smab_forward(fused, input);
    return backbone_->forward_tensor(out, training);
}

ag::Var FmanetModel::forward(const std::vector<const EncodedSample*>& batch, bool training) {
    return forward_phases(gather_phase_input(batch), training);
}

// ---------------------------------------------------------------------------
// Training and prediction

TrainResult train(Network& net, const std::vector<EncodedSample>& data,
                  const std::vector<int>& train_idx, const TrainSchedule& schedule) {
    if (train_idx.empty()) throw std::invalid_argument("train: empty fold");
    for (int i : train_idx) {
        if (i < 0 || i >= static_cast<int>(data.size()))
            throw std::invalid_argument("train: sample index out of range");
        if (data[static_cast<size_t>(i)].label < 0)
            throw std::invalid_argument("train: unlabeled sample in training fold");
    }
    Optimizer opt(schedule.optimizer, schedule.lr);
    Rng rng(schedule.seed);
    TrainResult result;
    std::vector<int> order(train_idx);
    int streak = 0;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0, correct = 0;
        for (size_t pos = 0; pos < order.size(); pos += schedule.batch) {
            size_t end = std::min(order.size(), pos + schedule.batch);
            std::vector<const EncodedSample*> batch;
            std::vector<int> labels;
            for (size_t i = pos; i < end; ++i) {
                batch.push_back(&data[static_cast<size_t>(order[i])]);
                labels.push_back(data[static_cast<size_t>(order[i])].label);
            }
            ag::Var logits = net.forward(batch, true);
            ag::Var loss = ag::softmax_cross_entropy(logits, labels);
            loss_sum += loss->value.data[0];
            ++batches;
            for (size_t i = 0; i < batch.size(); ++i) {
                const float* row = &logits->value.at2(static_cast<int>(i), 0);
                int cls = static_cast<int>(std::max_element(row, row + logits->value.dim(1)) - row);
                if (cls == labels[i]) ++correct;
            }
            backward_and_step(loss, net.params(), opt);
        }
        result.loss_curve.push_back(static_cast<float>(loss_sum / batches));
        float acc = static_cast<float>(correct) / static_cast<float>(order.size());
        result.train_accuracy.push_back(acc);
        result.epochs_run = epoch + 1;
        if (!schedule.checkpoint_dir.empty()) {
            char name[64];
            std::snprintf(name, sizeof(name), "/epoch_%03d.ckpt", epoch + 1);
            save_checkpoint(net, 0, schedule.checkpoint_dir + name);
        }
        streak = acc >= schedule.early_stop_acc ? streak + 1 : 0;
        if (streak >= schedule.early_stop_patience) break;
    }
    return result;
}

Prediction predict(Network& net, const std::vector<EncodedSample>& data,
                   const std::vector<int>& idx, int batch) {
    Prediction p;
    if (idx.empty()) return p;
    int C = 0;
    std::vector<std::vector<float>> rows;
    for (size_t pos = 0; pos < idx.size(); pos += batch) {
        size_t end = std::min(idx.size(), pos + batch);
        std::vector<const EncodedSample*> chunk;
        for (size_t i = pos; i < end; ++i) chunk.push_back(&data[static_cast<size_t>(idx[i])]);
        ag::Var logits = net.forward(chunk, false);
        Tensor probs = ag::softmax_rows(logits->value);
        C = probs.dim(1);
        for (int n = 0; n < probs.dim(0); ++n) {
            const float* row = &probs.at2(n, 0);
            rows.emplace_back(row, row + C);
            p.classes.push_back(static_cast<int>(std::max_element(row, row + C) - row));
        }
    }
    p.probabilities = Tensor({static_cast<int>(rows.size()), C});
    for (size_t n = 0; n < rows.size(); ++n)
        std::copy(rows[n].begin(), rows[n].end(), &p.probabilities.at2(static_cast<int>(n), 0));
    return p;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(Network& net, int protocol, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os << "FMANET-CKPT v1\n";
    os << "kind " << net.kind() << "\n";
    if (auto* fm = dynamic_cast<FmanetModel*>(&net)) {
        os << "classes " << fm->classes() << "\n";
        os << "in_channels 3\n";
        os << "height " << fm->height() << "\n";
        os << "width " << fm->width() << "\n";
        os << "theta " << fmt_float(fm->hyper().theta) << "\n";
        os << "tau " << fmt_float(fm->hyper().tau) << "\n";
        os << "c_mid " << fm->hyper().c_mid << "\n";
        os << "epsilon " << fmt_float(fm->hyper().epsilon) << "\n";
    } else if (auto* sc = dynamic_cast<ScnnModel*>(&net)) {
        os << "classes " << sc->classes() << "\n";
        os << "in_channels " << sc->in_channels() << "\n";
        os << "height " << sc->height() << "\n";
        os << "width " << sc->width() << "\n";
    } else {
        throw std::invalid_argument("save_checkpoint: unknown network kind");
    }
    os << "protocol " << protocol << "\n";
    os << "---\n";
    net.params().save_stream(os);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != "FMANET-CKPT v1")
        throw std::runtime_error("load_checkpoint: bad header in " + path);
    Checkpoint ckpt;
    while (std::getline(is, line)) {
        if (line == "---") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "kind") ls >> ckpt.kind;
        else if (key == "classes") ls >> ckpt.classes;
        else if (key == "in_channels") ls >> ckpt.in_channels;
        else if (key == "height") ls >> ckpt.height;
        else if (key == "width") ls >> ckpt.width;
        else if (key == "protocol") ls >> ckpt.protocol;
        else if (key == "theta") ls >> ckpt.hyper.theta;
        else if (key == "tau") ls >> ckpt.hyper.tau;
        else if (key == "c_mid") ls >> ckpt.hyper.c_mid;
        else if (key == "epsilon") ls >> ckpt.hyper.epsilon;
        else throw std::runtime_error("load_checkpoint: unknown header key '" + key + "'");
    }
    if (line != "---") throw std::runtime_error("load_checkpoint: missing header terminator");
    ckpt.values = ParameterSet::load_stream(is);
    return ckpt;
}

std::unique_ptr<Network> restore_network(const Checkpoint& ckpt) {
    std::unique_ptr<Network> net;
    if (ckpt.kind == "fmanet")
        net = std::make_unique<FmanetModel>(ckpt.classes, ckpt.height, ckpt.width, ckpt.hyper, 0);
    else if (ckpt.kind == "scnn")
        net = std::make_unique<ScnnModel>(ckpt.classes, ckpt.in_channels, ckpt.height, ckpt.width,
                                          0);
    else
        throw std::runtime_error("restore_network: unknown kind " + ckpt.kind);
    for (auto& e : net->params().entries()) {
        const ag::Var& src = ckpt.values.get(e.name);
        if (!src->value.same_shape(e.var->value))
            throw std::runtime_error("restore_network: shape mismatch for " + e.name);
        e.var->value = src->value;
    }
    return net;
}

}  // namespace mmcof
