#include "befseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace befseg {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

void check_finite_params(const ParamList& params, const std::string& context) {
    for (const auto& [name, tensor] : params)
        for (double v : tensor->values())
            if (!std::isfinite(v))
                throw std::runtime_error(context + ": parameter '" + name +
                                         "' became non-finite");
}

// deterministic Fisher-Yates permutation of 0..n-1
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

double median_of_three(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

void TrainConfig::validate() const {
    weights.validate();
    if (epochs == 0) throw std::invalid_argument("train: epochs must be at least 1");
    if (batch_size == 0) throw std::invalid_argument("train: batch size must be at least 1");
    if (!(lr > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
}

Adam::Adam(const ParamList& params, double lr) : lr_(lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    for (const auto& [name, tensor] : params) {
        (void)name;
        m_.emplace_back(tensor->size(), 0.0);
        v_.emplace_back(tensor->size(), 0.0);
    }
}

void Adam::step(ParamList& params) {
    if (params.size() != m_.size())
        throw std::invalid_argument("adam: parameter list has " + std::to_string(params.size()) +
                                    " entries, optimizer was built for " +
                                    std::to_string(m_.size()));
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor* tensor = params[p].second;
        if (tensor->size() != m_[p].size())
            throw std::invalid_argument("adam: parameter '" + params[p].first +
                                        "' changed size");
        const std::vector<double>& g = tensor->grad();
        std::vector<double>& vals = tensor->values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            m_[p][i] = kBeta1 * m_[p][i] + (1.0 - kBeta1) * g[i];
            v_[p][i] = kBeta2 * v_[p][i] + (1.0 - kBeta2) * g[i] * g[i];
            vals[i] -= lr_ * (m_[p][i] / bc1) / (std::sqrt(v_[p][i] / bc2) + kEps);
        }
    }
}

double global_grad_norm(const ParamList& params) {
    double sq = 0.0;
    for (const auto& [name, tensor] : params) {
        (void)name;
        for (double g : tensor->grad()) sq += g * g;
    }
    return std::sqrt(sq);
}

void clip_gradients(ParamList& params, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip: max norm must be positive");
    double norm = global_grad_norm(params);
    if (norm <= max_norm) return;
    double factor = max_norm / norm;
    for (auto& [name, tensor] : params) {
        (void)name;
        for (double& g : tensor->grad_mut()) g *= factor;
    }
}

LossBreakdown train_step(Model& model, const std::vector<Sample>& batch,
                         const LossWeights& weights, Adam& opt, double clip_norm,
                         const std::function<void(const Model&)>& after_backward) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    model.zero_grad();

    const double inv = 1.0 / static_cast<double>(batch.size());
    LossBreakdown mean;
    for (const Sample& sample : batch) {
        ForwardResult fwd = model.forward(sample.image);
        EdgePyramid edges = model.edge_targets(sample.image);
        LossBreakdown bd;
        Tensor loss = model.loss(fwd, sample.labels, edges, weights, &bd);
        if (!std::isfinite(bd.total))
            throw std::runtime_error("train_step: non-finite loss on sample '" + sample.id +
                                     "'");
        // scaling the root makes the accumulated gradient the batch mean
        backward(scale(loss, inv));
        mean.cls += bd.cls * inv;
        mean.mask += bd.mask * inv;
        mean.edge += bd.edge * inv;
        mean.total += bd.total * inv;
    }
    if (after_backward) after_backward(model);
    if (clip_norm > 0.0) clip_gradients(model.params(), clip_norm);
    opt.step(model.params());
    check_finite_params(model.params(), "train_step");
    return mean;
}

MetricsReport evaluate_model(const Model& model, const std::vector<Sample>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
    NoGradGuard ng;
    ConfusionAccumulator acc(model.config().num_classes);
    double bf1_sum = 0.0;
    for (const Sample& sample : samples) {
        ForwardResult fwd = model.forward(sample.image);
        LabelMap pred = semantic_argmax(fwd.masks_full);
        accumulate(pred, sample.labels, acc);
        bf1_sum += boundary_f1(pred, sample.labels);
    }
    MetricsReport r = report(acc);
    r.boundary_f1 = bf1_sum / static_cast<double>(samples.size());
    return r;
}

TrainResult run_training(Model& model, const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (data.train.empty() || data.val.empty())
        throw std::invalid_argument("train: needs non-empty train and val splits");
    if (config.out_dir.empty()) throw std::invalid_argument("train: output directory not set");
    fs::create_directories(config.out_dir);

    const std::size_t n = data.train.size();
    const std::size_t image_size = model.config().image_size;
    Adam opt(model.params(), config.lr);

    TrainResult result;
    result.csv_path = (fs::path(config.out_dir) / "loss.csv").string();
    result.best_path = (fs::path(config.out_dir) / "best.befb").string();
    result.final_path = (fs::path(config.out_dir) / "final.befb").string();

    std::ofstream csv(result.csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("train: cannot write '" + result.csv_path + "'");
    csv << "epoch,step,total,cls,mask,edge\n";

    double best = -1.0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(config.seed, 2, epoch));
        std::vector<std::size_t> order = shuffled_indices(n, shuffle_rng);

        double epoch_total = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            std::size_t stop = std::min(n, start + config.batch_size);
            std::vector<Sample> batch;
            batch.reserve(stop - start);
            for (std::size_t b = start; b < stop; ++b) {
                const Sample& src = data.train[order[b]];
                if (config.augment) {
                    // jitter stream keyed by (seed, epoch, dataset index):
                    // independent of shuffle and batch boundaries
                    Rng aug_rng(mix_seed(config.seed, 3, epoch, order[b]));
                    AugmentParams ap = draw_augment_params(aug_rng, src.image.height,
                                                           src.image.width, image_size,
                                                           image_size);
                    batch.push_back(augment_crop_scale(src, ap, image_size, image_size));
                } else {
                    batch.push_back(src);
                }
            }
            LossBreakdown bd = train_step(model, batch, config.weights, opt,
                                          config.grad_clip_norm, config.after_backward);
            ++steps;
            epoch_total += bd.total;
            char row[160];
            std::snprintf(row, sizeof(row), "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", epoch, steps,
                          bd.total, bd.cls, bd.mask, bd.edge);
            csv << row;
        }
        result.epoch_mean_total.push_back(epoch_total / static_cast<double>(steps));

        MetricsReport val = evaluate_model(model, data.val);
        result.final_val_miou = val.miou;
        if (val.miou > best) {
            best = val.miou;
            result.best_val_miou = val.miou;
            result.best_epoch = epoch;
            model.save(result.best_path);
        }
    }
    csv.close();
    if (!csv) throw std::runtime_error("train: failed writing '" + result.csv_path + "'");
    model.save(result.final_path);
    return result;
}

std::string AblationReport::to_json() const {
    nlohmann::json arms_json = nlohmann::json::array();
    for (const AblationArm& arm : arms)
        arms_json.push_back({{"lambda3", arm.lambda3},
                             {"miou", arm.miou},
                             {"boundary_f1", arm.boundary_f1}});
    nlohmann::json j{
        {"arms", arms_json}, {"seeds", seeds}, {"expectation_met", expectation_met}};
    return j.dump(2);
}

AblationReport run_ablation(const ModelConfig& model_config, const Dataset& data,
                            const TrainConfig& base) {
    base.validate();
    if (base.out_dir.empty()) throw std::invalid_argument("ablation: output directory not set");

    AblationReport rep;
    rep.seeds = {base.seed, base.seed + 1, base.seed + 2};
    const double lambda3_values[2] = {0.0, base.weights.lambda3};

    std::vector<double> bf1_medians;
    for (double lambda3 : lambda3_values) {
        std::vector<double> mious, bf1s;
        for (std::uint64_t seed : rep.seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.weights.lambda3 = lambda3;
            char tag[64];
            std::snprintf(tag, sizeof(tag), "arm_%g/seed_%llu", lambda3,
                          static_cast<unsigned long long>(seed));
            cfg.out_dir = (fs::path(base.out_dir) / tag).string();

            if (lambda3 == 0.0) {
                // hard protocol check: with the edge term switched off, no
                // backward pass may touch the boundary head
                cfg.after_backward = [](const Model& m) {
                    for (const auto& [name, tensor] : m.params()) {
                        if (name.rfind("befbm.boundary.", 0) != 0) continue;
                        for (double g : tensor->grad())
                            if (g != 0.0)
                                throw std::runtime_error(
                                    "ablation: boundary gradient nonzero in the lambda3=0 arm "
                                    "(parameter '" + name + "')");
                    }
                };
            }

            Rng init_rng(seed);
            Model model(model_config, init_rng);
            run_training(model, data, cfg);
            MetricsReport val = evaluate_model(model, data.val);
            mious.push_back(val.miou);
            bf1s.push_back(val.boundary_f1);
        }
        AblationArm arm;
        arm.lambda3 = lambda3;
        arm.miou = median_of_three(mious);
        arm.boundary_f1 = median_of_three(bf1s);
        rep.arms.push_back(arm);
        bf1_medians.push_back(arm.boundary_f1);
    }
    rep.expectation_met = bf1_medians[1] >= bf1_medians[0];

    std::ofstream out(fs::path(base.out_dir) / "ablation.json", std::ios::binary);
    if (out) out << rep.to_json() << '\n';
    return rep;
}

}  // namespace befseg
