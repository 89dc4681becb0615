#include "befseg/metrics.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace befseg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<bool> boundary_pixels(const LabelMap& m) {
    std::vector<bool> b(m.height * m.width, false);
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) {
            std::uint8_t c = m.at(y, x);
            bool edge = (y > 0 && m.at(y - 1, x) != c) ||
                        (y + 1 < m.height && m.at(y + 1, x) != c) ||
                        (x > 0 && m.at(y, x - 1) != c) ||
                        (x + 1 < m.width && m.at(y, x + 1) != c);
            b[y * m.width + x] = edge;
        }
    return b;
}

// square (Chebyshev-ball) dilation of a boolean grid
std::vector<bool> dilate(const std::vector<bool>& b, std::size_t h, std::size_t w,
                         std::size_t tol) {
    if (tol == 0) return b;
    std::vector<bool> out(h * w, false);
    const long t = static_cast<long>(tol);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (!b[y * w + x]) continue;
            for (long dy = -t; dy <= t; ++dy)
                for (long dx = -t; dx <= t; ++dx) {
                    long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
                    if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) ||
                        nx >= static_cast<long>(w))
                        continue;
                    out[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)] = true;
                }
        }
    return out;
}

// fraction of set pixels in `from` that land inside the dilated `target`
double matched_fraction(const std::vector<bool>& from, const std::vector<bool>& target_dilated,
                        std::size_t count) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < from.size(); ++i)
        if (from[i] && target_dilated[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(count);
}

nlohmann::json per_class_json(const MetricsReport& r) {
    nlohmann::json pc = nlohmann::json::object();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& s = r.per_class[c];
        pc[std::to_string(c)] = {{"iou", s.iou}, {"dice", s.dice}, {"recall", s.recall}};
    }
    return pc;
}

}  // namespace

ConfusionAccumulator::ConfusionAccumulator(std::size_t num_classes)
    : tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0) {
    if (num_classes == 0) throw std::invalid_argument("confusion: needs at least one class");
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
    if (other.num_classes() != num_classes())
        throw std::invalid_argument("confusion: cannot merge " +
                                    std::to_string(other.num_classes()) + " classes into " +
                                    std::to_string(num_classes()));
    for (std::size_t c = 0; c < tp.size(); ++c) {
        tp[c] += other.tp[c];
        fp[c] += other.fp[c];
        fn[c] += other.fn[c];
    }
}

void accumulate(const LabelMap& pred, const LabelMap& gt, ConfusionAccumulator& acc) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("accumulate: prediction " + std::to_string(pred.height) +
                                    "x" + std::to_string(pred.width) + " vs ground truth " +
                                    std::to_string(gt.height) + "x" + std::to_string(gt.width));
    const std::size_t c = acc.num_classes();
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        std::uint8_t p = pred.labels[i], g = gt.labels[i];
        if (p >= c || g >= c)
            throw std::invalid_argument("accumulate: label " +
                                        std::to_string(std::max(p, g)) + " outside the " +
                                        std::to_string(c) + "-class alphabet");
        if (p == g) {
            ++acc.tp[p];
        } else {
            ++acc.fp[p];
            ++acc.fn[g];
        }
    }
}

MetricsReport report(const ConfusionAccumulator& acc) {
    MetricsReport r;
    double iou_sum = 0, dice_sum = 0, rec_sum = 0;
    std::size_t iou_n = 0, rec_n = 0;
    for (std::size_t c = 0; c < acc.num_classes(); ++c) {
        const double tp = static_cast<double>(acc.tp[c]);
        const double fp = static_cast<double>(acc.fp[c]);
        const double fn = static_cast<double>(acc.fn[c]);
        MetricsReport::PerClass s{kNaN, kNaN, kNaN};
        if (tp + fp + fn > 0) {
            s.iou = tp / (tp + fp + fn);
            s.dice = 2 * tp / (2 * tp + fp + fn);
            iou_sum += s.iou;
            dice_sum += s.dice;
            ++iou_n;
        }
        if (tp + fn > 0) {
            s.recall = tp / (tp + fn);
            rec_sum += s.recall;
            ++rec_n;
        }
        r.per_class.push_back(s);
    }
    if (iou_n == 0)
        throw std::invalid_argument("report: accumulator is empty, no class has any count");
    r.miou = iou_sum / static_cast<double>(iou_n);
    r.mdice = dice_sum / static_cast<double>(iou_n);
    r.mrecall = rec_n ? rec_sum / static_cast<double>(rec_n) : 0.0;
    return r;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j{{"miou", miou},
                     {"mdice", mdice},
                     {"mrecall", mrecall},
                     {"boundary_f1", boundary_f1},
                     {"fps", fps},
                     {"per_class", per_class_json(*this)}};
    return j.dump(2);
}

double boundary_f1(const LabelMap& pred, const LabelMap& gt, std::size_t tolerance) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("boundary_f1: prediction " + std::to_string(pred.height) +
                                    "x" + std::to_string(pred.width) + " vs ground truth " +
                                    std::to_string(gt.height) + "x" + std::to_string(gt.width));
    std::vector<bool> pb = boundary_pixels(pred);
    std::vector<bool> gb = boundary_pixels(gt);
    std::size_t pn = 0, gn = 0;
    for (bool v : pb) pn += v;
    for (bool v : gb) gn += v;
    if (pn == 0 && gn == 0) return 1.0;
    if (pn == 0 || gn == 0) return 0.0;

    double precision = matched_fraction(pb, dilate(gb, gt.height, gt.width, tolerance), pn);
    double recall = matched_fraction(gb, dilate(pb, pred.height, pred.width, tolerance), gn);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double majority_baseline_miou(const std::vector<Sample>& samples, std::size_t num_classes) {
    if (samples.empty()) throw std::invalid_argument("majority baseline: no samples");
    std::vector<std::uint64_t> counts(num_classes, 0);
    for (const Sample& s : samples)
        for (std::uint8_t l : s.labels.labels) {
            if (l >= num_classes)
                throw std::invalid_argument("majority baseline: label " + std::to_string(l) +
                                            " outside the " + std::to_string(num_classes) +
                                            "-class alphabet");
            ++counts[l];
        }
    std::size_t majority = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
        if (counts[c] > counts[majority]) majority = c;

    ConfusionAccumulator acc(num_classes);
    for (const Sample& s : samples) {
        LabelMap constant{s.labels.height, s.labels.width,
                          std::vector<std::uint8_t>(s.labels.labels.size(),
                                                    static_cast<std::uint8_t>(majority))};
        accumulate(constant, s.labels, acc);
    }
    return report(acc).miou;
}

std::string BenchResult::to_json() const {
    nlohmann::json j{{"fps", fps},
                     {"warmup", warmup},
                     {"timed", timed},
                     {"element_type", element_type},
                     {"image_size", image_size}};
    return j.dump(2);
}

BenchResult fps_bench(const std::function<void()>& forward_once, std::size_t image_size,
                      std::size_t warmup, std::size_t timed) {
    if (timed == 0) throw std::invalid_argument("fps_bench: timed count must be positive");
    for (std::size_t i = 0; i < warmup; ++i) forward_once();
    auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < timed; ++i) forward_once();
    auto stop = std::chrono::steady_clock::now();
    double seconds = std::chrono::duration<double>(stop - start).count();
    // a sub-resolution measurement still reports a positive figure
    seconds = std::max(seconds, 1e-9);

    BenchResult r;
    r.fps = static_cast<double>(timed) / seconds;
    r.warmup = warmup;
    r.timed = timed;
    r.image_size = image_size;
    return r;
}

}  // namespace befseg
