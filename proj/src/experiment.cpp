#include "mmcof/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <stdexcept>
#include <thread>

namespace mmcof {

ModelKind parse_model_kind(const std::string& name) {
    if (name == "fmanet") return ModelKind::Fmanet;
    if (name == "scnn-mmcof") return ModelKind::ScnnMmcof;
    if (name == "scnn-single") return ModelKind::ScnnSingle;
    throw std::invalid_argument("unknown model '" + name +
                                "' (expected fmanet, scnn-mmcof, or scnn-single)");
}

FlowPair compute_flows(const FrameTriplet& frames, const FlowOptions& options) {
    FlowPair p;
    p.on = estimate_flow(frames.onset, frames.apex, options.iterations, options.smoothness);
    p.off = estimate_flow(frames.apex, frames.offset, options.iterations, options.smoothness);
    return p;
}

EncodedSample encode_for_model(const FlowPair& flows, ModelKind kind,
                               const ModulationConfig& mmcof_config) {
    switch (kind) {
        case ModelKind::Fmanet: return encode_fmanet(flows.on, flows.off);
        case ModelKind::ScnnMmcof: return encode_mmcof(flows.on, flows.off, mmcof_config, 1, 1);
        case ModelKind::ScnnSingle: return encode_single_phase(flows.on);
    }
    throw std::logic_error("encode_for_model: unreachable");
}

std::vector<EncodedSample> encode_index(const DatasetIndex& index, ModelKind kind,
                                        const FlowOptions& flow_options,
                                        const ModulationConfig& mmcof_config) {
    std::vector<EncodedSample> out;
    out.reserve(index.samples.size());
    for (const auto& s : index.samples) {
        FrameTriplet frames;
        frames.onset = read_frame(index.root + "/" + s.onset);
        frames.apex = read_frame(index.root + "/" + s.apex);
        frames.offset = read_frame(index.root + "/" + s.offset);
        EncodedSample enc = encode_for_model(compute_flows(frames, flow_options), kind,
                                             mmcof_config);
        enc.label = s.label;
        out.push_back(std::move(enc));
    }
    return out;
}

std::vector<EncodedSample> encode_clips(const std::vector<SynthClip>& clips, ModelKind kind,
                                        const FlowOptions& flow_options,
                                        const ModulationConfig& mmcof_config) {
    std::vector<EncodedSample> out;
    out.reserve(clips.size());
    for (const auto& clip : clips) {
        EncodedSample enc = encode_for_model(compute_flows(clip.frames, flow_options), kind,
                                             mmcof_config);
        enc.label = clip.label;
        out.push_back(std::move(enc));
    }
    return out;
}

std::unique_ptr<Network> make_network(ModelKind kind, int classes, int height, int width,
                                      const FmanetHyper& hyper, uint64_t seed) {
    if (kind == ModelKind::Fmanet)
        return std::make_unique<FmanetModel>(classes, height, width, hyper, seed);
    return std::make_unique<ScnnModel>(classes, 3, height, width, seed);
}

LosoOutcome run_loso(const std::vector<EncodedSample>& data,
                     const std::vector<std::string>& subject_of_sample, int classes,
                     int height, int width, const LosoRunConfig& config,
                     const std::vector<char>* evaluate_mask) {
    if (data.size() != subject_of_sample.size())
        throw std::invalid_argument("run_loso: data/subject length mismatch");
    if (evaluate_mask && evaluate_mask->size() != data.size())
        throw std::invalid_argument("run_loso: evaluate mask length mismatch");
    if (config.jobs < 1) throw std::invalid_argument("run_loso: jobs must be >= 1");

    std::map<std::string, std::vector<int>> by_subject;
    for (int i = 0; i < static_cast<int>(data.size()); ++i)
        if (!evaluate_mask || (*evaluate_mask)[static_cast<size_t>(i)])
            by_subject[subject_of_sample[static_cast<size_t>(i)]].push_back(i);
    if (by_subject.size() < 2) throw std::runtime_error("run_loso: need at least 2 subjects");

    struct Fold {
        std::string subject;
        std::vector<int> train, test;
    };
    std::vector<Fold> folds;
    for (const auto& [subject, test] : by_subject) {
        Fold f;
        f.subject = subject;
        f.test = test;
        for (int i = 0; i < static_cast<int>(data.size()); ++i)
            if (subject_of_sample[static_cast<size_t>(i)] != subject) f.train.push_back(i);
        folds.push_back(std::move(f));
    }

    std::vector<FoldPrediction> results(folds.size());
    auto run_fold = [&](size_t k) {
        const Fold& fold = folds[k];
        uint64_t seed = config.schedule.seed + 7919ull * k;
        std::unique_ptr<Network> net =
            make_network(config.kind, classes, height, width, config.hyper, seed);
        TrainSchedule schedule = config.schedule;
        schedule.seed = seed + 1;
        train(*net, data, fold.train, schedule);
        Prediction pred = predict(*net, data, fold.test, schedule.batch);
        if (!config.checkpoint_dir.empty())
            save_checkpoint(*net, config.protocol,
                            config.checkpoint_dir + "/fold_" + fold.subject + ".ckpt");
        FoldPrediction out;
        out.subject = fold.subject;
        out.sample_indices = fold.test;
        out.preds = pred.classes;
        for (int i : fold.test) out.labels.push_back(data[static_cast<size_t>(i)].label);
        results[k] = std::move(out);
    };

    if (config.jobs == 1) {
        for (size_t k = 0; k < folds.size(); ++k) run_fold(k);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&] {
            for (size_t k = next.fetch_add(1); k < folds.size(); k = next.fetch_add(1))
                run_fold(k);
        };
        std::vector<std::thread> pool;
        size_t n = std::min<size_t>(static_cast<size_t>(config.jobs), folds.size());
        for (size_t t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    LosoOutcome outcome;
    outcome.folds = std::move(results);
    outcome.report = aggregate_loso(outcome.folds, classes);
    return outcome;
}

}  // namespace mmcof
