#include "r2upp/metrics.hpp"

#include <stdexcept>

namespace r2upp::metrics {

namespace {

void check_binary_pair(const std::vector<double>& gt, const std::vector<double>& pred) {
    if (gt.size() != pred.size())
        throw ShapeError("metrics: mask sizes differ (" + std::to_string(gt.size()) + " vs " +
                         std::to_string(pred.size()) + ")");
    for (double v : gt)
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("metrics: non-binary ground truth");
    for (double v : pred)
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("metrics: non-binary prediction");
}

double ratio(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

}  // namespace

ConfusionCounts confusion_counts(const std::vector<double>& gt, const std::vector<double>& pred) {
    check_binary_pair(gt, pred);
    ConfusionCounts c;
    for (size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == 1.0)
            (pred[i] == 1.0 ? c.tp : c.fn)++;
        else
            (pred[i] == 1.0 ? c.fp : c.tn)++;
    }
    return c;
}

double dice(const std::vector<double>& gt, const std::vector<double>& pred) {
    ConfusionCounts c = confusion_counts(gt, pred);
    return ratio(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn);
}

double iou(const std::vector<double>& gt, const std::vector<double>& pred) {
    ConfusionCounts c = confusion_counts(gt, pred);
    return ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn));
}

double accuracy(const std::vector<double>& gt, const std::vector<double>& pred) {
    ConfusionCounts c = confusion_counts(gt, pred);
    return ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(gt.size()));
}

double sensitivity(const std::vector<double>& gt, const std::vector<double>& pred) {
    ConfusionCounts c = confusion_counts(gt, pred);
    return ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
}

double specificity(const std::vector<double>& gt, const std::vector<double>& pred) {
    ConfusionCounts c = confusion_counts(gt, pred);
    return ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
}

std::vector<double> binarize(const std::vector<double>& probs, double threshold) {
    std::vector<double> out(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold ? 1.0 : 0.0;
    return out;
}

Tensor binarize(const Tensor& probs, double threshold) {
    Tensor out = probs;
    for (double& v : out.data) v = v >= threshold ? 1.0 : 0.0;
    return out;
}

MetricRow all_metrics(const std::vector<double>& gt, const std::vector<double>& pred) {
    ConfusionCounts c = confusion_counts(gt, pred);
    MetricRow r;
    r.dice = ratio(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn);
    r.iou = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn));
    r.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(gt.size()));
    r.sensitivity = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    r.specificity = ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
    return r;
}

}  // namespace r2upp::metrics
