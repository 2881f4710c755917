#pragma once

#include <string>
#include <vector>

namespace mmcof {

// rows = true class, cols = predicted class
struct ConfusionMatrix {
    int classes = 0;
    std::vector<long long> counts;  // row-major C x C

    explicit ConfusionMatrix(int c = 0) : classes(c), counts(static_cast<size_t>(c) * c, 0) {}
    long long& at(int t, int p) { return counts[static_cast<size_t>(t) * classes + p]; }
    long long at(int t, int p) const { return counts[static_cast<size_t>(t) * classes + p]; }
    long long total() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int classes);

struct MetricsReport {
    double accuracy = 0.0;
    double uf1 = 0.0;  // unweighted mean of per-class F1
    double uar = 0.0;  // unweighted mean of per-class recall
    std::vector<double> precision, recall, f1;
    std::vector<int> zero_denominator;  // classes whose F1/recall were forced to 0
};

MetricsReport compute_metrics(const ConfusionMatrix& cm);

struct FoldPrediction {
    std::string subject;
    std::vector<int> sample_indices;  // positions in the evaluated index
    std::vector<int> labels, preds;
};

struct LosoReport {
    MetricsReport pooled;  // micro-pooled over all folds; the primary numbers
    ConfusionMatrix pooled_cm;
    std::vector<MetricsReport> per_fold;  // same order as the input folds
    double macro_uf1 = 0.0, macro_uar = 0.0, macro_accuracy = 0.0;  // fold averages
};

// Folds must not share sample indices.
LosoReport aggregate_loso(const std::vector<FoldPrediction>& folds, int classes);

// Per-fold rows `fold_subject,n_test,acc,uf1,uar` plus a pooled row with
// subject id ALL.
void write_metrics_csv(const std::vector<FoldPrediction>& folds, const LosoReport& report,
                       const std::string& path);

}  // namespace mmcof
