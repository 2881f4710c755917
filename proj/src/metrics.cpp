#include "mmcof/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace mmcof {

long long ConfusionMatrix::total() const {
    long long n = 0;
    for (long long v : counts) n += v;
    return n;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int classes) {
    if (preds.size() != labels.size())
        throw std::invalid_argument("confusion: preds/labels length mismatch");
    if (classes < 1) throw std::invalid_argument("confusion: classes must be >= 1");
    ConfusionMatrix cm(classes);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes || preds[i] < 0 || preds[i] >= classes)
            throw std::invalid_argument("confusion: class index out of range at position " +
                                        std::to_string(i));
        ++cm.at(labels[i], preds[i]);
    }
    return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    long long total = cm.total();
    if (cm.classes < 1 || total == 0)
        throw std::invalid_argument("compute_metrics: empty confusion matrix");
    MetricsReport r;
    long long diag = 0;
    for (int c = 0; c < cm.classes; ++c) diag += cm.at(c, c);
    r.accuracy = static_cast<double>(diag) / static_cast<double>(total);
    for (int c = 0; c < cm.classes; ++c) {
        long long tp = cm.at(c, c), row = 0, col = 0;
        for (int k = 0; k < cm.classes; ++k) {
            row += cm.at(c, k);
            col += cm.at(k, c);
        }
        bool degenerate = false;
        double prec = 0.0, rec = 0.0, f1 = 0.0;
        if (col > 0) prec = static_cast<double>(tp) / static_cast<double>(col);
        else degenerate = true;
        if (row > 0) rec = static_cast<double>(tp) / static_cast<double>(row);
        else degenerate = true;
        if (prec + rec > 0.0) f1 = 2.0 * prec * rec / (prec + rec);
        else degenerate = true;
        if (degenerate) r.zero_denominator.push_back(c);
        r.precision.push_back(prec);
        r.recall.push_back(rec);
        r.f1.push_back(f1);
        r.uf1 += f1;
        r.uar += rec;
    }
    r.uf1 /= cm.classes;
    r.uar /= cm.classes;
    return r;
}

LosoReport aggregate_loso(const std::vector<FoldPrediction>& folds, int classes) {
    if (folds.empty()) throw std::invalid_argument("aggregate_loso: no folds");
    std::set<int> seen;
    LosoReport report;
    report.pooled_cm = ConfusionMatrix(classes);
    for (const auto& fold : folds) {
        if (fold.labels.size() != fold.preds.size() ||
            (!fold.sample_indices.empty() && fold.sample_indices.size() != fold.labels.size()))
            throw std::invalid_argument("aggregate_loso: inconsistent fold " + fold.subject);
        for (int idx : fold.sample_indices)
            if (!seen.insert(idx).second)
                throw std::runtime_error("aggregate_loso: sample " + std::to_string(idx) +
                                         " appears in more than one fold");
        ConfusionMatrix cm = confusion(fold.preds, fold.labels, classes);
        for (size_t i = 0; i < cm.counts.size(); ++i) report.pooled_cm.counts[i] += cm.counts[i];
        report.per_fold.push_back(compute_metrics(cm));
    }
    report.pooled = compute_metrics(report.pooled_cm);
    for (const auto& m : report.per_fold) {
        report.macro_uf1 += m.uf1;
        report.macro_uar += m.uar;
        report.macro_accuracy += m.accuracy;
    }
    report.macro_uf1 /= static_cast<double>(report.per_fold.size());
    report.macro_uar /= static_cast<double>(report.per_fold.size());
    report.macro_accuracy /= static_cast<double>(report.per_fold.size());
    return report;
}

void write_metrics_csv(const std::vector<FoldPrediction>& folds, const LosoReport& report,
                       const std::string& path) {
    if (folds.size() != report.per_fold.size())
        throw std::invalid_argument("write_metrics_csv: fold count mismatch");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    os << "fold_subject,n_test,acc,uf1,uar\n";
    char buf[160];
    for (size_t i = 0; i < folds.size(); ++i) {
        const auto& m = report.per_fold[i];
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f\n", folds[i].subject.c_str(),
                      folds[i].labels.size(), m.accuracy, m.uf1, m.uar);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "ALL,%lld,%.6f,%.6f,%.6f\n", report.pooled_cm.total(),
                  report.pooled.accuracy, report.pooled.uf1, report.pooled.uar);
    os << buf;
    if (!os) throw std::runtime_error("write_metrics_csv: write failed for " + path);
}

}  // namespace mmcof
