#pragma once

#include <cstdint>
#include <vector>

#include "r2upp/tensor.hpp"

namespace r2upp::metrics {

struct ConfusionCounts {
    int64_t tp = 0;
    int64_t tn = 0;
    int64_t fp = 0;
    int64_t fn = 0;
};

// Pixel-wise counts over binary masks (values must be exactly 0 or 1).
ConfusionCounts confusion_counts(const std::vector<double>& gt, const std::vector<double>& pred);

// Both-empty masks score 1.0 on all overlap metrics (vacuous agreement);
// any other zero denominator also resolves to 1.0.
double dice(const std::vector<double>& gt, const std::vector<double>& pred);
double iou(const std::vector<double>& gt, const std::vector<double>& pred);
double accuracy(const std::vector<double>& gt, const std::vector<double>& pred);
double sensitivity(const std::vector<double>& gt, const std::vector<double>& pred);
double specificity(const std::vector<double>& gt, const std::vector<double>& pred);

// pred = 1 where p >= threshold
std::vector<double> binarize(const std::vector<double>& probs, double threshold = 0.5);
Tensor binarize(const Tensor& probs, double threshold = 0.5);

struct MetricRow {
    double dice = 0, iou = 0, accuracy = 0, sensitivity = 0, specificity = 0;
};

MetricRow all_metrics(const std::vector<double>& gt, const std::vector<double>& pred);

}  // namespace r2upp::metrics
