#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mmcof/metrics.hpp"

using namespace mmcof;

namespace {

// independent recomputation straight from prediction/label pairs
struct Recount {
    double accuracy = 0.0, uf1 = 0.0, uar = 0.0;
};

Recount recount(const std::vector<int>& preds, const std::vector<int>& labels, int classes) {
    Recount r;
    int correct = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++correct;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    for (int c = 0; c < classes; ++c) {
        long long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < preds.size(); ++i) {
            if (labels[i] == c && preds[i] == c) ++tp;
            if (labels[i] != c && preds[i] == c) ++fp;
            if (labels[i] == c && preds[i] != c) ++fn;
        }
        double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        double f1 = 2 * tp + fp + fn > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
        r.uar += recall;
        r.uf1 += f1;
    }
    r.uar /= classes;
    r.uf1 /= classes;
    return r;
}

}  // namespace

TEST_CASE("confusion counts true/predicted pairs") {
    ConfusionMatrix cm = confusion({0, 1, 1, 2, 0}, {0, 1, 2, 2, 1}, 3);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(2, 1) == 1);
    CHECK(cm.at(2, 2) == 1);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.total() == 5);
    CHECK_THROWS(confusion({0, 1}, {0}, 2));
}

TEST_CASE("perfect predictions give a diagonal matrix and unit metrics") {
    std::vector<int> labels = {0, 1, 2, 1, 0, 2};
    ConfusionMatrix cm = confusion(labels, labels, 3);
    for (int t = 0; t < 3; ++t)
        for (int p = 0; p < 3; ++p)
            if (t != p) CHECK(cm.at(t, p) == 0);
    MetricsReport r = compute_metrics(cm);
    CHECK(r.accuracy == doctest::Approx(1.0));
    CHECK(r.uf1 == doctest::Approx(1.0));
    CHECK(r.uar == doctest::Approx(1.0));
}

TEST_CASE("a degenerate single-class predictor fills one column") {
    ConfusionMatrix cm = confusion({1, 1, 1, 1}, {0, 1, 2, 1}, 3);
    for (int t = 0; t < 3; ++t)
        for (int p = 0; p < 3; ++p)
            if (p != 1) CHECK(cm.at(t, p) == 0);
    CHECK(cm.at(1, 1) == 2);
}

TEST_CASE("the hand-computed 2-class example reproduces acc 0.7, uar 0.7, uf1 0.697") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 8;
    cm.at(0, 1) = 2;
    cm.at(1, 0) = 4;
    cm.at(1, 1) = 6;
    MetricsReport r = compute_metrics(cm);
    CHECK(r.accuracy == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(r.uar == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(std::abs(r.uf1 - 0.697) <= 1e-3);
    CHECK(r.precision[0] == doctest::Approx(8.0 / 12.0));
    CHECK(r.precision[1] == doctest::Approx(6.0 / 8.0));
    CHECK(r.recall[0] == doctest::Approx(0.8));
    CHECK(r.recall[1] == doctest::Approx(0.6));
}

TEST_CASE("metrics match a brute-force tally oracle on 100 random cases") {
    std::mt19937 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        int classes = 2 + trial % 5;
        std::uniform_int_distribution<int> pick(0, classes - 1);
        std::vector<int> preds, labels;
        for (int i = 0; i < 40 + trial; ++i) {
            preds.push_back(pick(rng));
            labels.push_back(pick(rng));
        }
        MetricsReport r = compute_metrics(confusion(preds, labels, classes));
        Recount ref = recount(preds, labels, classes);
        CHECK(r.accuracy == doctest::Approx(ref.accuracy).epsilon(1e-9));
        CHECK(r.uf1 == doctest::Approx(ref.uf1).epsilon(1e-9));
        CHECK(r.uar == doctest::Approx(ref.uar).epsilon(1e-9));
        CHECK(r.accuracy >= 0.0);
        CHECK(r.uf1 <= 1.0);
        CHECK(r.uar <= 1.0);
    }
}

TEST_CASE("balanced random predictions land near 1/C accuracy") {
    std::mt19937 rng(2);
    int classes = 4, n = 4000;
    std::uniform_int_distribution<int> pick(0, classes - 1);
    std::vector<int> preds, labels;
    for (int i = 0; i < n; ++i) {
        preds.push_back(pick(rng));
        labels.push_back(pick(rng));
    }
    MetricsReport r = compute_metrics(confusion(preds, labels, classes));
    double p = 1.0 / classes;
    double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(r.accuracy - p) <= 3 * sigma);
}

TEST_CASE("absent and never-predicted classes are flagged with zero scores") {
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 5;
    cm.at(1, 1) = 5;  // class 2 never appears at all
    MetricsReport r = compute_metrics(cm);
    CHECK(r.recall[2] == 0.0);
    CHECK(r.f1[2] == 0.0);
    CHECK(std::find(r.zero_denominator.begin(), r.zero_denominator.end(), 2) !=
          r.zero_denominator.end());
    CHECK(r.accuracy == doctest::Approx(1.0));
    CHECK(r.uar == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("UAR is invariant to duplicating a class's samples") {
    std::vector<int> preds = {0, 0, 1, 1, 1, 0};
    std::vector<int> labels = {0, 1, 1, 1, 0, 0};
    MetricsReport base = compute_metrics(confusion(preds, labels, 2));
    // triplicate every class-1 sample
    std::vector<int> preds2 = preds, labels2 = labels;
    for (size_t i = 0; i < preds.size(); ++i)
        if (labels[i] == 1)
            for (int k = 0; k < 2; ++k) {
                preds2.push_back(preds[i]);
                labels2.push_back(labels[i]);
            }
    MetricsReport dup = compute_metrics(confusion(preds2, labels2, 2));
    CHECK(dup.uar == doctest::Approx(base.uar).epsilon(1e-12));
    CHECK(dup.recall[0] == doctest::Approx(base.recall[0]));
    CHECK(dup.recall[1] == doctest::Approx(base.recall[1]));
}

TEST_CASE("accuracy equals the exact diagonal ratio") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> pick(0, 3);
    std::vector<int> preds, labels;
    for (int i = 0; i < 100; ++i) {
        preds.push_back(pick(rng));
        labels.push_back(pick(rng));
    }
    ConfusionMatrix cm = confusion(preds, labels, 4);
    long long diag = 0;
    for (int c = 0; c < 4; ++c) diag += cm.at(c, c);
    MetricsReport r = compute_metrics(cm);
    CHECK(r.accuracy == static_cast<double>(diag) / cm.total());
}

TEST_CASE("pooled LOSO metrics equal metrics on concatenated predictions") {
    FoldPrediction f1{"s1", {0, 1, 2}, {0, 1, 1}, {0, 1, 0}};
    FoldPrediction f2{"s2", {3, 4}, {2, 0}, {2, 0}};
    LosoReport two = aggregate_loso({f1, f2}, 3);
    std::vector<int> preds = {0, 1, 0, 2, 0}, labels = {0, 1, 1, 2, 0};
    MetricsReport ref = compute_metrics(confusion(preds, labels, 3));
    CHECK(two.pooled.accuracy == doctest::Approx(ref.accuracy));
    CHECK(two.pooled.uf1 == doctest::Approx(ref.uf1));
    CHECK(two.pooled.uar == doctest::Approx(ref.uar));

    LosoReport single = aggregate_loso({f1}, 3);
    MetricsReport direct = compute_metrics(confusion(f1.preds, f1.labels, 3));
    CHECK(single.pooled.accuracy == doctest::Approx(direct.accuracy));
    CHECK(single.macro_uf1 == doctest::Approx(direct.uf1));

    LosoReport permuted = aggregate_loso({f2, f1}, 3);
    CHECK(permuted.pooled.accuracy == doctest::Approx(two.pooled.accuracy));
    CHECK(permuted.pooled.uf1 == doctest::Approx(two.pooled.uf1));
    CHECK(permuted.macro_uar == doctest::Approx(two.macro_uar));
}

TEST_CASE("overlapping folds are rejected") {
    FoldPrediction f1{"s1", {0, 1}, {0, 1}, {0, 1}};
    FoldPrediction f2{"s2", {1, 2}, {1, 0}, {1, 0}};
    CHECK_THROWS(aggregate_loso({f1, f2}, 2));
}

TEST_CASE("the metrics CSV carries one row per fold plus a pooled ALL row") {
    FoldPrediction f1{"s1", {0, 1}, {0, 1}, {0, 1}};
    FoldPrediction f2{"s2", {2, 3, 4}, {1, 0, 1}, {1, 1, 1}};
    LosoReport report = aggregate_loso({f1, f2}, 2);
    std::string path =
        (std::filesystem::temp_directory_path() / "mmcof_metrics.csv").string();
    write_metrics_csv({f1, f2}, report, path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "fold_subject,n_test,acc,uf1,uar");
    std::vector<std::string> rows;
    while (std::getline(is, line))
        if (!line.empty()) rows.push_back(line);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].rfind("s1,2,", 0) == 0);
    CHECK(rows[1].rfind("s2,3,", 0) == 0);
    CHECK(rows[2].rfind("ALL,5,", 0) == 0);
    {
        std::istringstream ls(rows[0]);
        std::string f;
        std::getline(ls, f, ',');
        std::getline(ls, f, ',');
        std::getline(ls, f, ',');
        CHECK(std::stod(f) == doctest::Approx(1.0));  // fold s1 is perfect
    }
    std::filesystem::remove(path);
}
