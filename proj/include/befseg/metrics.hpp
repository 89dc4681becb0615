#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "befseg/image.hpp"

namespace befseg {

// Pixel-level confusion counts per class. Accumulators are pure sums, so
// partial results merge in any grouping with a deterministic total.
struct ConfusionAccumulator {
    explicit ConfusionAccumulator(std::size_t num_classes);

    std::size_t num_classes() const { return tp.size(); }
    void merge(const ConfusionAccumulator& other);

    std::vector<std::uint64_t> tp, fp, fn;
};

void accumulate(const LabelMap& pred, const LabelMap& gt, ConfusionAccumulator& acc);

struct MetricsReport {
    double miou = 0.0;
    double mdice = 0.0;
    double mrecall = 0.0;
    double boundary_f1 = 0.0;
    double fps = 0.0;

    // NaN marks a class whose denominator is empty; it serializes as null
    // and never enters the macro means.
    struct PerClass {
        double iou, dice, recall;
    };
    std::vector<PerClass> per_class;

    std::string to_json() const;
};

// IoU = TP/(TP+FP+FN), Dice = 2TP/(2TP+FP+FN), Recall = TP/(TP+FN); each
// aggregate is the unweighted mean over classes whose respective
// denominator is nonzero. boundary_f1 and fps are left for the caller.
MetricsReport report(const ConfusionAccumulator& acc);

// F1 between the class-boundary pixel sets of prediction and ground truth.
// A boundary pixel has a 4-neighbor of a different class; a boundary pixel
// counts as matched when some boundary pixel of the other map lies within
// Chebyshev distance <= tolerance. Both sets empty scores 1, exactly one
// empty scores 0.
double boundary_f1(const LabelMap& pred, const LabelMap& gt, std::size_t tolerance = 1);

// mIoU of the constant prediction filling every pixel with the split's most
// frequent ground-truth class — the floor any trained model must beat.
double majority_baseline_miou(const std::vector<Sample>& samples, std::size_t num_classes);

struct BenchResult {
    double fps = 0.0;
    std::size_t warmup = 5;
    std::size_t timed = 50;
    std::string element_type = "float64";
    std::size_t image_size = 0;

    std::string to_json() const;
};

// Wall-clock throughput of `forward_once`, excluding `warmup` initial calls;
// exactly warmup + timed invocations occur.
BenchResult fps_bench(const std::function<void()>& forward_once, std::size_t image_size,
                      std::size_t warmup = 5, std::size_t timed = 50);

}  // namespace befseg
