#include "mmcof/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mmcof/rng.hpp"

namespace fs = std::filesystem;

namespace mmcof {

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    for (auto& f : fields) {
        size_t a = f.find_first_not_of(" \t");
        size_t b = f.find_last_not_of(" \t");
        f = a == std::string::npos ? "" : f.substr(a, b - a + 1);
    }
    return fields;
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Frame order index: the whole field if numeric, else the trailing digit run
// of the basename stem. -1 when absent.
long frame_order(const std::string& field) {
    if (all_digits(field)) return std::stol(field);
    std::string stem = fs::path(field).stem().string();
    size_t end = stem.size();
    while (end > 0 && std::isdigit(static_cast<unsigned char>(stem[end - 1]))) --end;
    if (end == stem.size()) return -1;
    return std::stol(stem.substr(end));
}

const char* kHeader = "subject,clip,onset,apex,offset,label";

}  // namespace

DatasetIndex load_index(const std::string& root, const std::string& annotation_path) {
    std::ifstream is(annotation_path);
    if (!is) throw std::runtime_error("load_index: cannot open " + annotation_path);
    std::string line;
    if (!std::getline(is, line))
        throw std::runtime_error("load_index: " + annotation_path + " is empty");
    {
        std::string header = line;
        header.erase(std::remove(header.begin(), header.end(), ' '), header.end());
        if (!header.empty() && header.back() == '\r') header.pop_back();
        if (header != kHeader)
            throw std::runtime_error("load_index: expected header '" + std::string(kHeader) +
                                     "', got '" + line + "'");
    }
    DatasetIndex index;
    index.root = root;
    std::vector<std::string> problems;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv_row(line);
        auto complain = [&](const std::string& why) {
            problems.push_back("line " + std::to_string(line_no) + ": " + why);
        };
        if (f.size() != 6) {
            complain("expected 6 fields, got " + std::to_string(f.size()));
            continue;
        }
        Sample s{f[0], f[1], f[2], f[3], f[4], f[5], -1};
        bool ok = true;
        if (s.subject.empty() || s.clip.empty() || s.raw_label.empty()) {
            complain("empty subject/clip/label field");
            ok = false;
        }
        for (const std::string* frame : {&s.onset, &s.apex, &s.offset}) {
            if (frame->empty()) {
                complain("empty frame field");
                ok = false;
            } else if (!all_digits(*frame) && !fs::exists(fs::path(root) / *frame)) {
                complain("missing frame " + *frame);
                ok = false;
            }
        }
        long o = frame_order(s.onset), a = frame_order(s.apex), e = frame_order(s.offset);
        if (o >= 0 && a >= 0 && e >= 0 && !(o <= a && a <= e)) {
            complain("frame order violated: onset " + std::to_string(o) + ", apex " +
                     std::to_string(a) + ", offset " + std::to_string(e));
            ok = false;
        }
        if (ok) index.samples.push_back(std::move(s));
    }
    if (!problems.empty()) {
        std::string msg = "load_index: " + std::to_string(problems.size()) + " bad row(s) in " +
                          annotation_path;
        for (const auto& p : problems) msg += "\n  " + p;
        throw std::runtime_error(msg);
    }
    return index;
}

DatasetIndex map_labels(const DatasetIndex& index, int protocol) {
    DatasetIndex out;
    out.root = index.root;
    out.protocol = protocol;
    if (protocol == 3) {
        static const std::map<std::string, int> rule = {
            {"happiness", 0}, {"disgust", 1}, {"repression", 1}, {"sadness", 1},
            {"fear", 1},      {"surprise", 2},
        };
        out.class_names = {"positive", "negative", "surprise"};
        for (const auto& s : index.samples) {
            if (s.raw_label == "others") continue;  // discarded by the protocol
            auto it = rule.find(s.raw_label);
            if (it == rule.end())
                throw std::runtime_error("map_labels: unknown raw label '" + s.raw_label + "'");
            Sample m = s;
            m.label = it->second;
            out.samples.push_back(std::move(m));
        }
        return out;
    }
    if (protocol == 5) {
        static const std::vector<std::string> vocab = {"happiness", "disgust",  "surprise",
                                                       "repression", "others", "fear", "sadness"};
        std::map<std::string, int> counts;
        for (const auto& s : index.samples) {
            if (std::find(vocab.begin(), vocab.end(), s.raw_label) == vocab.end())
                throw std::runtime_error("map_labels: unknown raw label '" + s.raw_label + "'");
            ++counts[s.raw_label];
        }
        std::map<std::string, int> ids;
        for (const auto& name : vocab)
            if (counts.count(name) && counts[name] >= 10) {
                ids[name] = static_cast<int>(out.class_names.size());
                out.class_names.push_back(name);
            }
        for (const auto& s : index.samples) {
            auto it = ids.find(s.raw_label);
            if (it == ids.end()) continue;  // class excluded (< 10 samples)
            Sample m = s;
            m.label = it->second;
            out.samples.push_back(std::move(m));
        }
        return out;
    }
    if (protocol == 6 || protocol == 7) {
        std::set<std::string> names;
        for (const auto& s : index.samples) names.insert(s.raw_label);
        std::map<std::string, int> ids;
        for (const auto& n : names) {
            ids[n] = static_cast<int>(out.class_names.size());
            out.class_names.push_back(n);
        }
        for (const auto& s : index.samples) {
            Sample m = s;
            m.label = ids[s.raw_label];
            out.samples.push_back(std::move(m));
        }
        return out;
    }
    throw std::invalid_argument("map_labels: protocol must be one of 3, 5, 6, 7");
}

std::vector<LosoFold> loso_splits(const DatasetIndex& index) {
    std::set<std::string> subjects;
    for (const auto& s : index.samples) subjects.insert(s.subject);
    if (subjects.size() < 2)
        throw std::runtime_error("loso_splits: need at least 2 subjects, have " +
                                 std::to_string(subjects.size()));
    std::vector<LosoFold> folds;
    for (const auto& subject : subjects) {
        LosoFold fold;
        fold.subject = subject;
        for (int i = 0; i < static_cast<int>(index.samples.size()); ++i)
            (index.samples[static_cast<size_t>(i)].subject == subject ? fold.test : fold.train)
                .push_back(i);
        folds.push_back(std::move(fold));
    }
    return folds;
}

GrayFrame flip_horizontal(const GrayFrame& frame) {
    GrayFrame out(frame.width, frame.height);
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) out.at(y, x) = frame.at(y, frame.width - 1 - x);
    return out;
}

GrayFrame rotate(const GrayFrame& frame, float degrees) {
    GrayFrame out(frame.width, frame.height);
    double rad = degrees * 3.14159265358979323846 / 180.0;
    double c = std::cos(rad), s = std::sin(rad);
    double cx = (frame.width - 1) / 2.0, cy = (frame.height - 1) / 2.0;
    auto sample = [&](double x, double y) {
        x = std::clamp(x, 0.0, frame.width - 1.0);
        y = std::clamp(y, 0.0, frame.height - 1.0);
        int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
        int x1 = std::min(x0 + 1, frame.width - 1), y1 = std::min(y0 + 1, frame.height - 1);
        double fx = x - x0, fy = y - y0;
        return static_cast<float>((1 - fy) * ((1 - fx) * frame.at(y0, x0) + fx * frame.at(y0, x1)) +
                                  fy * ((1 - fx) * frame.at(y1, x0) + fx * frame.at(y1, x1)));
    };
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) {
            double dx = x - cx, dy = y - cy;
            out.at(y, x) = sample(cx + c * dx - s * dy, cy + s * dx + c * dy);
        }
    return out;
}

std::vector<FrameTriplet> augment(const FrameTriplet& triplet, const AugmentSpec& spec) {
    std::vector<FrameTriplet> out{triplet};
    auto apply = [&](auto&& f) {
        out.push_back({f(triplet.onset), f(triplet.apex), f(triplet.offset)});
    };
    if (spec.flip) apply([](const GrayFrame& g) { return flip_horizontal(g); });
    if (spec.rot10) apply([](const GrayFrame& g) { return rotate(g, -10.0f); });
    if (spec.rot5) apply([](const GrayFrame& g) { return rotate(g, -5.0f); });
    if (spec.rot5) apply([](const GrayFrame& g) { return rotate(g, 5.0f); });
    if (spec.rot10) apply([](const GrayFrame& g) { return rotate(g, 10.0f); });
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

constexpr float kPi = 3.14159265358979323846f;

struct Blob {
    float x, y, sigma, amp;
};

void paint(GrayFrame& frame, const Blob& b) {
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) {
            float dx = x - b.x, dy = y - b.y;
            frame.at(y, x) += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0f * b.sigma * b.sigma));
        }
}

GrayFrame background(int size, Rng& rng) {
    // smooth subject-specific texture so the static region anchors zero flow
    float ax = rng.uniform(0.25f, 0.6f), ay = rng.uniform(0.25f, 0.6f);
    float bx = rng.uniform(0.6f, 1.2f), by = rng.uniform(0.6f, 1.2f);
    float p1 = rng.uniform(0.0f, 2 * kPi), p2 = rng.uniform(0.0f, 2 * kPi);
    GrayFrame g(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            g.at(y, x) = 0.45f + 0.08f * std::sin(ax * x + ay * y + p1) +
                         0.08f * std::sin(bx * x - by * y + p2);
    return g;
}

void clamp_frame(GrayFrame& g) {
    for (float& v : g.intensity) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

std::vector<SynthClip> synth_clips(const SynthConfig& config) {
    if (config.classes < 2) throw std::invalid_argument("synth_clips: classes must be >= 2");
    if (config.samples_per_class < 1 || config.subjects < 2 || config.image_size < 16)
        throw std::invalid_argument("synth_clips: invalid config");
    if (config.noise_level < 0.0f)
        throw std::invalid_argument("synth_clips: noise level must be >= 0");
    const int S = config.image_size;
    // three facial regions with a base motion direction each; classes that
    // share a region differ only in the apex-offset deviation direction
    const float rx[3] = {0.32f, 0.68f, 0.50f};
    const float ry[3] = {0.34f, 0.34f, 0.70f};
    const float phi[3] = {25.0f, 115.0f, 245.0f};

    Rng subj_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    struct SubjectTraits {
        GrayFrame bg;
        float jx[3], jy[3], sigma_scale;
    };
    std::vector<SubjectTraits> subjects;
    for (int s = 0; s < config.subjects; ++s) {
        SubjectTraits t;
        t.bg = background(S, subj_rng);
        for (int r = 0; r < 3; ++r) {
            t.jx[r] = subj_rng.uniform(-0.05f, 0.05f) * S;
            t.jy[r] = subj_rng.uniform(-0.05f, 0.05f) * S;
        }
        t.sigma_scale = subj_rng.uniform(0.85f, 1.15f);
        subjects.push_back(std::move(t));
    }

    Rng rng(config.seed);
    std::vector<SynthClip> clips;
    for (int c = 0; c < config.classes; ++c) {
        int region = c % 3;
        float dev_angle = phi[region] + 180.0f + static_cast<float>(c / 3) * 110.0f;
        for (int i = 0; i < config.samples_per_class; ++i) {
            int sid = i % config.subjects;
            const SubjectTraits& t = subjects[static_cast<size_t>(sid)];
            SynthClip clip;
            clip.subject = "s" + std::to_string(sid);
            clip.clip = "c" + std::to_string(c) + "_" + std::to_string(i);
            clip.label = c;

            float mag = (0.05f * S) * rng.uniform(0.85f, 1.2f);
            float a1 = (phi[region] + rng.uniform(-5.0f, 5.0f)) * kPi / 180.0f;
            clip.d1x = mag * std::cos(a1);
            clip.d1y = mag * std::sin(a1);
            float a2 = (dev_angle + rng.uniform(-8.0f, 8.0f)) * kPi / 180.0f;
            float ex = mag * std::cos(a2), ey = mag * std::sin(a2);
            float a = config.asymmetry_level;
            clip.d2x = -(1.0f - a) * clip.d1x + a * ex;
            clip.d2y = -(1.0f - a) * clip.d1y + a * ey;

            Blob blob;
            blob.sigma = 0.09f * S * t.sigma_scale;
            blob.amp = 0.4f;
            float px = rx[region] * S + t.jx[region];
            float py = ry[region] * S + t.jy[region];

            auto render = [&](float bx, float by) {
                GrayFrame g = t.bg;
                Blob b = blob;
                b.x = bx;
                b.y = by;
                paint(g, b);
                return g;
            };
            clip.frames.onset = render(px, py);
            clip.frames.apex = render(px + clip.d1x, py + clip.d1y);
            clip.frames.offset = render(px + clip.d1x + clip.d2x, py + clip.d1y + clip.d2y);

            if (config.noise_level > 0.0f) {
                // one small distractor blob per frame, moving incoherently
                Blob d;
                d.sigma = 0.05f * S;
                d.amp = 1.2f * config.noise_level;
                d.x = rng.uniform(0.1f, 0.9f) * S;
                d.y = rng.uniform(0.1f, 0.9f) * S;
                GrayFrame* frames[3] = {&clip.frames.onset, &clip.frames.apex,
                                        &clip.frames.offset};
                for (GrayFrame* g : frames) {
                    paint(*g, d);
                    d.x += rng.uniform(-1.5f, 1.5f);
                    d.y += rng.uniform(-1.5f, 1.5f);
                }
                float sigma = 0.3f * config.noise_level;
                for (GrayFrame* g : frames)
                    for (float& v : g->intensity) v += sigma * rng.normal();
            }
            clamp_frame(clip.frames.onset);
            clamp_frame(clip.frames.apex);
            clamp_frame(clip.frames.offset);
            clips.push_back(std::move(clip));
        }
    }
    return clips;
}

DatasetIndex synth_generate(const SynthConfig& config, const std::string& root) {
    std::vector<SynthClip> clips = synth_clips(config);
    fs::create_directories(root);
    std::ofstream csv(fs::path(root) / "annotations.csv");
    if (!csv) throw std::runtime_error("synth_generate: cannot write under " + root);
    csv << kHeader << "\n";
    DatasetIndex index;
    index.root = root;
    for (const auto& clip : clips) {
        fs::create_directories(fs::path(root) / clip.subject);
        std::string base = clip.subject + "/" + clip.clip + "_";
        const GrayFrame* frames[3] = {&clip.frames.onset, &clip.frames.apex, &clip.frames.offset};
        std::string names[3];
        for (int k = 0; k < 3; ++k) {
            names[k] = base + std::to_string(k + 1) + ".pgm";
            write_pgm(*frames[k], root + "/" + names[k]);
        }
        csv << clip.subject << "," << clip.clip << "," << names[0] << "," << names[1] << ","
            << names[2] << ",class" << clip.label << "\n";
        Sample s{clip.subject, clip.clip, names[0], names[1], names[2],
                 "class" + std::to_string(clip.label), clip.label};
        index.samples.push_back(std::move(s));
    }
    index.protocol = config.classes;
    for (int c = 0; c < config.classes; ++c) index.class_names.push_back("class" + std::to_string(c));
    return index;
}

}  // namespace mmcof
