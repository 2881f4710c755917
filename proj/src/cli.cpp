#include "mmcof/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "mmcof/config.hpp"
#include "mmcof/experiment.hpp"
#include "mmcof/gradcheck.hpp"
#include "mmcof/visualize.hpp"

namespace fs = std::filesystem;

namespace mmcof {

namespace {

Colormap parse_colormap(const std::string& name) {
    if (name == "gray") return Colormap::Gray;
    if (name == "turbo") return Colormap::Turbo;
    throw std::invalid_argument("unknown colormap '" + name + "' (expected gray or turbo)");
}

ThresholdMode parse_mode(const std::string& name) {
    if (name == "adaptive") return ThresholdMode::Adaptive;
    if (name == "manual") return ThresholdMode::Manual;
    throw std::invalid_argument("unknown threshold mode '" + name +
                                "' (expected adaptive or manual)");
}

void write_rgb_channels(const Tensor& image, const std::string& path) {
    // per-channel min-max to 8 bits; a constant channel renders 128
    int H = image.dim(1), W = image.dim(2);
    size_t hw = static_cast<size_t>(H) * W;
    std::vector<unsigned char> px(hw * 3);
    for (int c = 0; c < 3; ++c) {
        const float* ch = image.data.data() + c * hw;
        float lo = ch[0], hi = ch[0];
        for (size_t i = 0; i < hw; ++i) {
            lo = std::min(lo, ch[i]);
            hi = std::max(hi, ch[i]);
        }
        for (size_t i = 0; i < hw; ++i) {
            float t = hi > lo ? (ch[i] - lo) / (hi - lo) : 0.5f;
            px[3 * i + c] = static_cast<unsigned char>(std::lround(t * 255));
        }
    }
    write_png_rgb(px, W, H, path);
}

struct FlowArgs {
    std::string a, b, out, viz, colormap = "gray";
    FlowOptions options;
};

int cmd_flow(const FlowArgs& args) {
    GrayFrame fa = read_frame(args.a), fb = read_frame(args.b);
    FlowField flow = estimate_flow(fa, fb, args.options.iterations, args.options.smoothness);
    write_flo(flow, args.out);
    if (!args.viz.empty()) {
        MagnitudeMap mag = flow_magnitude(flow);
        write_heatmap(mag.m, mag.width, mag.height, args.viz, parse_colormap(args.colormap));
    }
    return 0;
}

struct MmcofArgs {
    std::string onset, apex, offset, on_flo, off_flo, out, raw;
    std::string mode = "adaptive";
    ModulationConfig config;
    float theta1 = 1.0f, theta2 = 1.0f;
    FlowOptions flow;
};

int cmd_mmcof(const MmcofArgs& args) {
    FlowField on, off;
    if (!args.on_flo.empty()) {
        on = read_flo(args.on_flo);
        off = read_flo(args.off_flo);
    } else {
        GrayFrame fo = read_frame(args.onset), fa = read_frame(args.apex),
                  fe = read_frame(args.offset);
        on = estimate_flow(fo, fa, args.flow.iterations, args.flow.smoothness);
        off = estimate_flow(fa, fe, args.flow.iterations, args.flow.smoothness);
    }
    ModulationConfig config = args.config;
    config.mode = parse_mode(args.mode);
    MMCofImage image = build_mmcof(on, off, config, args.theta1, args.theta2);
    if (!args.out.empty()) write_rgb_channels(image.image, args.out);
    if (!args.raw.empty()) {
        ParameterSet ps;
        ps.add("mmcof", image.image, ParamRole::ConvKernel);
        ps.save(args.raw);
    }
    return 0;
}

struct SynthArgs {
    SynthConfig config;
    std::string out;
};

int cmd_synth(const SynthArgs& args) {
    DatasetIndex index = synth_generate(args.config, args.out);
    std::cout << "wrote " << index.samples.size() << " clips under " << args.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string root, annotations, out, model = "fmanet", config_path;
    int protocol = 0;  // 0 = labels used verbatim
    bool do_augment = false;
    int jobs = 1;
    FlowOptions flow;
    std::string mode = "adaptive";
    ModulationConfig mmcof_config;
    FmanetHyper hyper;
    TrainSchedule schedule;
    std::string optimizer = "adam";
};

void write_predictions_csv(const std::vector<FoldPrediction>& folds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "subject,sample,true,pred\n";
    for (const auto& fold : folds)
        for (size_t i = 0; i < fold.preds.size(); ++i)
            os << fold.subject << "," << fold.sample_indices[i] << "," << fold.labels[i] << ","
               << fold.preds[i] << "\n";
    if (!os) throw std::runtime_error("write failed for " + path);
}

void print_loso_summary(const LosoReport& report) {
    std::printf("pooled acc=%.4f uf1=%.4f uar=%.4f\n", report.pooled.accuracy, report.pooled.uf1,
                report.pooled.uar);
    std::printf("macro  acc=%.4f uf1=%.4f uar=%.4f (fold averages)\n", report.macro_accuracy,
                report.macro_uf1, report.macro_uar);
}

int cmd_train(const TrainArgs& args) {
    DatasetIndex raw = load_index(args.root, args.annotations.empty()
                                                 ? args.root + "/annotations.csv"
                                                 : args.annotations);
    DatasetIndex index = map_labels(raw, args.protocol == 0 ? 6 : args.protocol);
    index.protocol = args.protocol;
    if (index.samples.empty()) throw std::runtime_error("train: no samples after label mapping");
    int classes = static_cast<int>(index.class_names.size());

    ModulationConfig mmcof_config = args.mmcof_config;
    mmcof_config.mode = parse_mode(args.mode);
    ModelKind kind = parse_model_kind(args.model);

    std::vector<EncodedSample> data;
    std::vector<std::string> subjects;
    std::vector<char> eval_mask;
    AugmentSpec aug;
    for (const auto& s : index.samples) {
        FrameTriplet frames;
        frames.onset = read_frame(index.root + "/" + s.onset);
        frames.apex = read_frame(index.root + "/" + s.apex);
        frames.offset = read_frame(index.root + "/" + s.offset);
        std::vector<FrameTriplet> variants =
            args.do_augment ? augment(frames, aug) : std::vector<FrameTriplet>{frames};
        for (size_t v = 0; v < variants.size(); ++v) {
            EncodedSample enc =
                encode_for_model(compute_flows(variants[v], args.flow), kind, mmcof_config);
            enc.label = s.label;
            data.push_back(std::move(enc));
            subjects.push_back(s.subject);
            eval_mask.push_back(v == 0 ? 1 : 0);
        }
    }
    int height = data[0].primary.dim(1), width = data[0].primary.dim(2);

    fs::create_directories(args.out);
    LosoRunConfig run;
    run.kind = kind;
    run.hyper = args.hyper;
    run.schedule = args.schedule;
    run.schedule.optimizer = args.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
    run.jobs = args.jobs;
    run.checkpoint_dir = args.out;
    run.protocol = args.protocol;
    LosoOutcome outcome = run_loso(data, subjects, classes, height, width, run,
                                   args.do_augment ? &eval_mask : nullptr);

    write_predictions_csv(outcome.folds, args.out + "/predictions.csv");
    write_metrics_csv(outcome.folds, outcome.report, args.out + "/metrics.csv");
    print_loso_summary(outcome.report);
    return 0;
}

struct EvaluateArgs {
    std::string predictions, out;
    int classes = 0;
    bool do_assert = false;
    double min_acc = 0.0, min_uf1 = 0.0, min_uar = 0.0;
};

int cmd_evaluate(const EvaluateArgs& args) {
    std::ifstream is(args.predictions);
    if (!is) throw std::runtime_error("cannot open " + args.predictions);
    std::string line;
    if (!std::getline(is, line) || line.rfind("subject,sample,true,pred", 0) != 0)
        throw std::runtime_error("expected header 'subject,sample,true,pred' in " +
                                 args.predictions);
    std::map<std::string, FoldPrediction> folds;
    int max_class = 0, line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        std::string subject, field;
        if (!std::getline(ls, subject, ',')) break;
        int vals[3];
        for (int k = 0; k < 3; ++k) {
            if (!std::getline(ls, field, ','))
                throw std::runtime_error(args.predictions + ":" + std::to_string(line_no) +
                                         ": expected 4 fields");
            vals[k] = std::stoi(field);
        }
        FoldPrediction& f = folds[subject];
        f.subject = subject;
        f.sample_indices.push_back(vals[0]);
        f.labels.push_back(vals[1]);
        f.preds.push_back(vals[2]);
        max_class = std::max({max_class, vals[1], vals[2]});
    }
    if (folds.empty()) throw std::runtime_error("no prediction rows in " + args.predictions);
    int classes = args.classes > 0 ? args.classes : max_class + 1;
    std::vector<FoldPrediction> ordered;
    for (auto& [subject, fold] : folds) ordered.push_back(std::move(fold));
    LosoReport report = aggregate_loso(ordered, classes);
    if (!args.out.empty()) write_metrics_csv(ordered, report, args.out);
    print_loso_summary(report);
    if (args.do_assert) {
        bool ok = report.pooled.accuracy >= args.min_acc && report.pooled.uf1 >= args.min_uf1 &&
                  report.pooled.uar >= args.min_uar;
        if (!ok) {
            std::cerr << "evaluate: metrics below asserted thresholds\n";
            return 1;
        }
    }
    return 0;
}

struct VisualizeArgs {
    std::string flo, on_flo, off_flo, frame, out, colormap = "gray";
    float epsilon = 1e-6f;
};

int cmd_visualize(const VisualizeArgs& args) {
    Colormap cm = parse_colormap(args.colormap);
    if (!args.flo.empty()) {
        MagnitudeMap mag = flow_magnitude(read_flo(args.flo));
        write_heatmap(mag.m, mag.width, mag.height, args.out, cm);
    } else if (!args.on_flo.empty()) {
        MagnitudeMap m1 = flow_magnitude(read_flo(args.on_flo));
        MagnitudeMap m2 = flow_magnitude(read_flo(args.off_flo));
        ConsensusMap c = ffb_consensus(m1, m2, args.epsilon);
        write_heatmap(c.c, c.width, c.height, args.out, cm);
    } else {
        GrayFrame g = read_frame(args.frame);
        write_heatmap(g.intensity, g.width, g.height, args.out, cm);
    }
    return 0;
}

struct GradcheckArgs {
    uint64_t seed = 1;
    int coords = 20;
    float step = 1e-2f, tolerance = 1e-3f;
    bool quick = false;  // skip the full-model check
};

Tensor random_tensor(std::vector<int> shape, std::mt19937& rng, float lo = -0.5f,
                     float hi = 0.5f) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& v : t.data) v = d(rng);
    return t;
}

int cmd_gradcheck(const GradcheckArgs& args) {
    std::mt19937 rng(static_cast<unsigned>(args.seed));
    bool all_ok = true;
    auto report = [&](const std::string& name, const GradReport& r) {
        std::printf("%-16s %s  max rel err %.3g over %zu tensors\n", name.c_str(),
                    r.pass ? "ok  " : "FAIL", static_cast<double>(r.max_error()),
                    r.per_parameter.size());
        if (!r.pass)
            for (const auto& e : r.per_parameter)
                if (e.max_rel_error > r.tolerance)
                    std::printf("    %-24s rel err %.3g (%d coords)\n", e.name.c_str(),
                                static_cast<double>(e.max_rel_error), e.coords_checked);
        all_ok = all_ok && r.pass;
    };
    std::vector<int> labels = {0, 1};

    auto check_head = [&](const std::string& name,
                          const std::function<ag::Var(ParameterSet&)>& body, ParameterSet& ps,
                          int feat) {
        // small dense head turns the feature map into a scalar loss
        ps.add("head.w", random_tensor({feat, 2}, rng), ParamRole::DenseWeight);
        ps.add("head.b", random_tensor({2}, rng), ParamRole::DenseBias);
        auto forward = [&ps, body, labels] {
            ag::Var h = ag::flatten(body(ps));
            h = ag::dense(h, ps.get("head.w"), ps.get("head.b"));
            return ag::softmax_cross_entropy(h, labels);
        };
        report(name, grad_check(forward, ps, args.step, args.tolerance, args.coords, &rng));
    };

    {
        ParameterSet ps;
        ps.add("x", random_tensor({2, 3, 6, 6}, rng), ParamRole::ConvKernel);
        ps.add("w", random_tensor({4, 3, 3, 3}, rng), ParamRole::ConvKernel);
        ps.add("b", random_tensor({4}, rng), ParamRole::ConvBias);
        check_head("conv2d", [](ParameterSet& p) {
            return ag::conv2d(p.get("x"), p.get("w"), p.get("b"), 1, 1);
        }, ps, 4 * 6 * 6);
    }
    {
        ParameterSet ps;
        ps.add("x", random_tensor({2, 3, 5, 5}, rng), ParamRole::ConvKernel);
        ps.add("w", random_tensor({3, 1, 3, 3}, rng), ParamRole::ConvKernel);
        ps.add("b", random_tensor({3}, rng), ParamRole::ConvBias);
        check_head("depthwise", [](ParameterSet& p) {
            return ag::depthwise_conv2d(p.get("x"), p.get("w"), p.get("b"), 1);
        }, ps, 3 * 5 * 5);
    }
    {
        ParameterSet ps;
        ps.add("x", random_tensor({2, 2, 4, 4}, rng), ParamRole::ConvKernel);
        check_head("relu+pool", [](ParameterSet& p) {
            return ag::maxpool2d(ag::relu(p.get("x")));
        }, ps, 2 * 2 * 2);
    }
    {
        ParameterSet ps;
        ps.add("x", random_tensor({2, 2, 4, 4}, rng), ParamRole::ConvKernel);
        ps.add("s", random_tensor({2}, rng, 0.5f, 1.5f), ParamRole::LnScale);
        ps.add("t", random_tensor({2}, rng), ParamRole::LnShift);
        check_head("layer_norm", [](ParameterSet& p) {
            return ag::layer_norm_spatial(p.get("x"), p.get("s"), p.get("t"), 1e-5f);
        }, ps, 2 * 4 * 4);
    }
    {
        ParameterSet ps;
        ps.add("x", random_tensor({2, 2, 4, 4}, rng), ParamRole::ConvKernel);
        ps.add("s", random_tensor({2}, rng, 0.5f, 1.5f), ParamRole::BnScale);
        ps.add("t", random_tensor({2}, rng), ParamRole::BnShift);
        Tensor rm({2}), rv({2}, 1.0f);
        check_head("batch_norm", [&rm, &rv](ParameterSet& p) mutable {
            Tensor m = rm, v = rv;  // keep the FD probes on identical stats
            return ag::batch_norm2d(p.get("x"), p.get("s"), p.get("t"), m, v, 0.1f, 1e-5f, true);
        }, ps, 2 * 4 * 4);
    }
    {
        ParameterSet ps;
        ps.add("x", random_tensor({2, 2, 4, 4}, rng), ParamRole::ConvKernel);
        ps.add("g", random_tensor({2, 1, 4, 4}, rng), ParamRole::ConvKernel);
        check_head("sigmoid gate", [](ParameterSet& p) {
            return ag::mul(p.get("x"), ag::add_scalar(ag::sigmoid(p.get("g")), 0.5f));
        }, ps, 2 * 4 * 4);
    }

    if (!args.quick) {
        {
            ScnnModel scnn(3, 3, 16, 16, args.seed);
            Tensor x = random_tensor({2, 3, 16, 16}, rng);
            auto forward = [&] {
                return ag::softmax_cross_entropy(scnn.forward_tensor(ag::make_const(x), true),
                                                 labels);
            };
            report("scnn 16x16", grad_check(forward, scnn.params(), args.step, args.tolerance,
                                            args.coords, &rng));
        }
        FmanetHyper hyper;
        hyper.c_mid = 4;
        FmanetModel model(3, 16, 16, hyper, args.seed);
        PhaseInput input;
        input.i_on = random_tensor({2, 3, 16, 16}, rng);
        input.i_off = random_tensor({2, 3, 16, 16}, rng);
        input.m_on = random_tensor({2, 1, 16, 16}, rng, 0.0f, 1.0f);
        input.m_off = random_tensor({2, 1, 16, 16}, rng, 0.0f, 1.0f);
        auto forward = [&] {
            return ag::softmax_cross_entropy(model.forward_phases(input, true), labels);
        };
        report("fmanet 16x16",
               grad_check(forward, model.params(), args.step, args.tolerance, args.coords, &rng));
    }
    return all_ok ? 0 : 1;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"Dual-phase optical-flow micro-expression toolkit"};
    app.require_subcommand(1);

    FlowArgs flow_args;
    auto* flow_cmd = app.add_subcommand("flow", "Estimate dense flow between two frames");
    flow_cmd->add_option("--a", flow_args.a, "first frame (PNG/PGM)")->required();
    flow_cmd->add_option("--b", flow_args.b, "second frame")->required();
    flow_cmd->add_option("--out", flow_args.out, "output .flo path")->required();
    flow_cmd->add_option("--iterations", flow_args.options.iterations, "solver iterations");
    flow_cmd->add_option("--smoothness", flow_args.options.smoothness, "smoothness weight");
    flow_cmd->add_option("--viz", flow_args.viz, "also write a magnitude heatmap PNG");
    flow_cmd->add_option("--colormap", flow_args.colormap, "gray|turbo");

    MmcofArgs mmcof_args;
    auto* mmcof_cmd = app.add_subcommand("mmcof", "Build the dual-phase motion representation");
    auto* onset_opt = mmcof_cmd->add_option("--onset", mmcof_args.onset, "onset frame");
    mmcof_cmd->add_option("--apex", mmcof_args.apex, "apex frame")->needs(onset_opt);
    mmcof_cmd->add_option("--offset", mmcof_args.offset, "offset frame")->needs(onset_opt);
    auto* on_opt = mmcof_cmd->add_option("--on", mmcof_args.on_flo, "onset-apex .flo");
    mmcof_cmd->add_option("--off", mmcof_args.off_flo, "apex-offset .flo")->needs(on_opt);
    on_opt->excludes(onset_opt);
    mmcof_cmd->add_option("--out", mmcof_args.out, "RGB PNG rendering");
    mmcof_cmd->add_option("--raw", mmcof_args.raw, "raw tensor container path");
    mmcof_cmd->add_option("--mode", mmcof_args.mode, "adaptive|manual thresholds");
    mmcof_cmd->add_option("--alpha", mmcof_args.config.alpha, "manual lower threshold");
    mmcof_cmd->add_option("--beta", mmcof_args.config.beta, "manual upper threshold");
    mmcof_cmd->add_option("--k-upper", mmcof_args.config.k_upper, "adaptive upper multiplier");
    mmcof_cmd->add_option("--k-lower", mmcof_args.config.k_lower, "adaptive lower multiplier");
    mmcof_cmd->add_option("--w1", mmcof_args.config.w1, "amplification weight");
    mmcof_cmd->add_option("--w2", mmcof_args.config.w2, "attenuation weight");
    mmcof_cmd->add_option("--theta1", mmcof_args.theta1, "onset-apex combination weight");
    mmcof_cmd->add_option("--theta2", mmcof_args.theta2, "apex-offset combination weight");
    mmcof_cmd->add_option("--iterations", mmcof_args.flow.iterations, "flow solver iterations");
    mmcof_cmd->add_option("--smoothness", mmcof_args.flow.smoothness, "flow smoothness weight");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic motion dataset");
    synth_cmd->add_option("--classes", synth_args.config.classes, "number of classes");
    synth_cmd->add_option("--per-class", synth_args.config.samples_per_class, "samples per class");
    synth_cmd->add_option("--subjects", synth_args.config.subjects, "number of subjects");
    synth_cmd->add_option("--size", synth_args.config.image_size, "frame side length");
    synth_cmd->add_option("--noise", synth_args.config.noise_level, "noise level");
    synth_cmd->add_option("--asymmetry", synth_args.config.asymmetry_level,
                          "apex-offset deviation from reversal");
    synth_cmd->add_option("--seed", synth_args.config.seed, "random seed");
    synth_cmd->add_option("--out", synth_args.out, "output directory")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "LOSO training and evaluation");
    train_cmd->add_option("--root", train_args.root, "dataset root")->required();
    train_cmd->add_option("--annotations", train_args.annotations,
                          "annotation CSV (default <root>/annotations.csv)");
    train_cmd->add_option("--protocol", train_args.protocol,
                          "label protocol: 3, 5, 6, 7, or 0 = labels verbatim");
    train_cmd->add_option("--model", train_args.model, "fmanet|scnn-mmcof|scnn-single");
    train_cmd->add_option("--out", train_args.out, "output directory")->required();
    train_cmd->add_option("--config", train_args.config_path, "key = value config file");
    train_cmd->add_flag("--augment", train_args.do_augment, "flip/rotate training folds");
    train_cmd->add_option("--jobs", train_args.jobs, "parallel folds");
    train_cmd->add_option("--epochs", train_args.schedule.epochs, "max epochs per fold");
    train_cmd->add_option("--batch", train_args.schedule.batch, "batch size");
    train_cmd->add_option("--lr", train_args.schedule.lr, "learning rate");
    train_cmd->add_option("--optimizer", train_args.optimizer, "adam|sgd");
    train_cmd->add_option("--seed", train_args.schedule.seed, "random seed");
    train_cmd->add_option("--theta", train_args.hyper.theta, "consensus exponent");
    train_cmd->add_option("--tau", train_args.hyper.tau, "coherence temperature");
    train_cmd->add_option("--c-mid", train_args.hyper.c_mid, "FFB channels");
    train_cmd->add_option("--mode", train_args.mode, "mmcof thresholds: adaptive|manual");
    train_cmd->add_option("--alpha", train_args.mmcof_config.alpha, "manual lower threshold");
    train_cmd->add_option("--beta", train_args.mmcof_config.beta, "manual upper threshold");
    train_cmd->add_option("--k-upper", train_args.mmcof_config.k_upper, "adaptive upper mult");
    train_cmd->add_option("--k-lower", train_args.mmcof_config.k_lower, "adaptive lower mult");
    train_cmd->add_option("--w1", train_args.mmcof_config.w1, "amplification weight");
    train_cmd->add_option("--w2", train_args.mmcof_config.w2, "attenuation weight");
    train_cmd->add_option("--iterations", train_args.flow.iterations, "flow solver iterations");
    train_cmd->add_option("--smoothness", train_args.flow.smoothness, "flow smoothness weight");

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "Metrics from a predictions CSV");
    eval_cmd->add_option("--predictions", eval_args.predictions, "predictions CSV")->required();
    eval_cmd->add_option("--out", eval_args.out, "metrics CSV output");
    eval_cmd->add_option("--classes", eval_args.classes, "class count (default: inferred)");
    eval_cmd->add_flag("--assert", eval_args.do_assert, "exit 1 below the thresholds");
    eval_cmd->add_option("--min-acc", eval_args.min_acc, "pooled accuracy threshold");
    eval_cmd->add_option("--min-uf1", eval_args.min_uf1, "pooled UF1 threshold");
    eval_cmd->add_option("--min-uar", eval_args.min_uar, "pooled UAR threshold");

    VisualizeArgs viz_args;
    auto* viz_cmd = app.add_subcommand("visualize", "Heatmap PNG export");
    auto* flo_opt = viz_cmd->add_option("--flo", viz_args.flo, "flow field: magnitude heatmap");
    auto* von_opt = viz_cmd->add_option("--on", viz_args.on_flo, "onset-apex .flo (consensus)");
    viz_cmd->add_option("--off", viz_args.off_flo, "apex-offset .flo (consensus)")
        ->needs(von_opt);
    auto* frame_opt = viz_cmd->add_option("--frame", viz_args.frame, "grayscale frame heatmap");
    flo_opt->excludes(von_opt);
    flo_opt->excludes(frame_opt);
    von_opt->excludes(frame_opt);
    viz_cmd->add_option("--out", viz_args.out, "output PNG")->required();
    viz_cmd->add_option("--colormap", viz_args.colormap, "gray|turbo");
    viz_cmd->add_option("--epsilon", viz_args.epsilon, "consensus epsilon");

    GradcheckArgs grad_args;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    grad_cmd->add_option("--seed", grad_args.seed, "random seed");
    grad_cmd->add_option("--coords", grad_args.coords, "probed coordinates per tensor");
    grad_cmd->add_option("--step", grad_args.step, "finite-difference step");
    grad_cmd->add_option("--tolerance", grad_args.tolerance, "relative error tolerance");
    grad_cmd->add_flag("--quick", grad_args.quick, "skip the full-model check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*flow_cmd) return cmd_flow(flow_args);
        if (*mmcof_cmd) {
            if (mmcof_args.on_flo.empty() &&
                (mmcof_args.onset.empty() || mmcof_args.apex.empty() ||
                 mmcof_args.offset.empty()))
                throw std::invalid_argument(
                    "mmcof: give either --onset/--apex/--offset or --on/--off");
            if (!mmcof_args.on_flo.empty() && mmcof_args.off_flo.empty())
                throw std::invalid_argument("mmcof: --on requires --off");
            if (mmcof_args.out.empty() && mmcof_args.raw.empty())
                throw std::invalid_argument("mmcof: nothing to do without --out or --raw");
            return cmd_mmcof(mmcof_args);
        }
        if (*synth_cmd) return cmd_synth(synth_args);
        if (*train_cmd) {
            if (!train_args.config_path.empty()) {
                Config cfg = Config::from_file(train_args.config_path);
                // CLI flag > file entry > built-in default
                auto num = [&](const char* flag, auto& var) {
                    if (!train_cmd->count(flag))
                        var = static_cast<std::decay_t<decltype(var)>>(
                            cfg.get(flag + 2, static_cast<double>(var)));
                };
                auto str = [&](const char* flag, std::string& var) {
                    if (!train_cmd->count(flag)) var = cfg.get(flag + 2, var);
                };
                num("--protocol", train_args.protocol);
                str("--model", train_args.model);
                num("--jobs", train_args.jobs);
                num("--epochs", train_args.schedule.epochs);
                num("--batch", train_args.schedule.batch);
                num("--lr", train_args.schedule.lr);
                str("--optimizer", train_args.optimizer);
                num("--seed", train_args.schedule.seed);
                num("--theta", train_args.hyper.theta);
                num("--tau", train_args.hyper.tau);
                num("--c-mid", train_args.hyper.c_mid);
                str("--mode", train_args.mode);
                num("--alpha", train_args.mmcof_config.alpha);
                num("--beta", train_args.mmcof_config.beta);
                num("--k-upper", train_args.mmcof_config.k_upper);
                num("--k-lower", train_args.mmcof_config.k_lower);
                num("--w1", train_args.mmcof_config.w1);
                num("--w2", train_args.mmcof_config.w2);
                num("--iterations", train_args.flow.iterations);
                num("--smoothness", train_args.flow.smoothness);
                if (cfg.has("augment")) train_args.do_augment = cfg.get("augment", 0L) != 0;
            }
            return cmd_train(train_args);
        }
        if (*eval_cmd) return cmd_evaluate(eval_args);
        if (*viz_cmd) {
            if (viz_args.flo.empty() && viz_args.on_flo.empty() && viz_args.frame.empty())
                throw std::invalid_argument("visualize: give one of --flo, --on/--off, --frame");
            if (!viz_args.on_flo.empty() && viz_args.off_flo.empty())
                throw std::invalid_argument("visualize: --on requires --off");
            return cmd_visualize(viz_args);
        }
        if (*grad_cmd) return cmd_gradcheck(grad_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int dispatch(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.push_back("mmcof");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : full) argv.push_back(s.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mmcof
