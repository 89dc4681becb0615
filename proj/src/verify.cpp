#include "befseg/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "befseg/metrics.hpp"
#include "befseg/model.hpp"

namespace befseg::verify {

namespace {

std::string format_error(double err) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max error %.3e", err);
    return buf;
}

// The oracle: convolution as literally written — for every output cell,
// walk the kernel window with clamped (replicate) indexing and sum.
std::vector<double> conv_reference(const std::vector<double>& input, std::size_t cin,
                                   std::size_t h, std::size_t w,
                                   const std::vector<double>& kernel, std::size_t cout,
                                   std::size_t kh, std::size_t kw, std::size_t stride) {
    const std::size_t oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
    std::vector<double> out(cout * oh * ow, 0.0);
    for (std::size_t oc = 0; oc < cout; ++oc)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double sum = 0.0;
                for (std::size_t ic = 0; ic < cin; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            long iy = static_cast<long>(oy * stride) + static_cast<long>(ky) -
                                      static_cast<long>(kh / 2);
                            long ix = static_cast<long>(ox * stride) + static_cast<long>(kx) -
                                      static_cast<long>(kw / 2);
                            iy = std::clamp(iy, 0L, static_cast<long>(h) - 1);
                            ix = std::clamp(ix, 0L, static_cast<long>(w) - 1);
                            sum += input[(ic * h + static_cast<std::size_t>(iy)) * w +
                                         static_cast<std::size_t>(ix)] *
                                   kernel[((oc * cin + ic) * kh + ky) * kw + kx];
                        }
                out[(oc * oh + oy) * ow + ox] = sum;
            }
    return out;
}

ModelConfig tiny_model_config() {
    ModelConfig mc;
    mc.image_size = 16;
    mc.num_classes = 3;
    mc.num_scales = 2;
    mc.channels = {4, 6};
    mc.num_queries = 3;
    mc.query_dim = 8;
    mc.decoder_rounds = 1;
    return mc;
}

}  // namespace

CheckResult check_conv_oracle(std::uint64_t seed) {
    CheckResult r{"convolution vs nested-loop oracle", false, ""};
    Rng rng(seed);
    double worst = 0.0;

    for (int trial = 0; trial < 20; ++trial) {
        std::size_t cin = static_cast<std::size_t>(rng.uniform_int(1, 3));
        std::size_t cout = static_cast<std::size_t>(rng.uniform_int(1, 3));
        std::size_t k = rng.uniform_int(0, 1) ? 3 : 1;
        std::size_t h = static_cast<std::size_t>(rng.uniform_int(4, 16));
        std::size_t w = static_cast<std::size_t>(rng.uniform_int(4, 16));
        std::size_t stride = static_cast<std::size_t>(rng.uniform_int(1, 2));

        std::vector<double> iv(cin * h * w), kv(cout * cin * k * k);
        for (double& v : iv) v = rng.uniform(-1.0, 1.0);
        for (double& v : kv) v = rng.uniform(-1.0, 1.0);

        Tensor out = conv2d(Tensor::from_vector({cin, h, w}, iv),
                            Tensor::from_vector({cout, cin, k, k}, kv), stride);
        std::vector<double> want = conv_reference(iv, cin, h, w, kv, cout, k, k, stride);
        if (out.values().size() != want.size()) {
            r.detail = "output size mismatch";
            return r;
        }
        for (std::size_t i = 0; i < want.size(); ++i)
            worst = std::max(worst, std::abs(out.values()[i] - want[i]));
    }

    // the fixed gradient kernels as used by the edge extractor
    const std::vector<double> gx = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
    const std::vector<double> gy = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
    std::vector<double> img(8 * 8);
    for (double& v : img) v = rng.uniform();
    for (const auto& kv : {gx, gy}) {
        Tensor out = conv2d(Tensor::from_vector({1, 8, 8}, img),
                            Tensor::from_vector({1, 1, 3, 3}, kv), 1);
        std::vector<double> want = conv_reference(img, 1, 8, 8, kv, 1, 3, 3, 1);
        for (std::size_t i = 0; i < want.size(); ++i)
            worst = std::max(worst, std::abs(out.values()[i] - want[i]));
    }

    r.pass = worst < 1e-12;
    r.detail = format_error(worst);
    return r;
}

CheckResult check_sobel_analytics() {
    CheckResult r{"edge extractor analytics", false, ""};
    const double step_mag = 1.0 / std::sqrt(2.0);

    // constant image: every output must be exactly zero
    Image flat{6, 6, std::vector<double>(3 * 36, 0.4)};
    for (double v : sobel_edge(flat).values)
        if (v != 0.0) {
            r.detail = "constant image produced a nonzero edge";
            return r;
        }

    // vertical unit step between columns 2 and 3 of a 6x6 image: interior
    // magnitude 4/(4*sqrt(2)) on both facing columns, zero elsewhere
    double worst = 0.0;
    Image vstep{6, 6, std::vector<double>(3 * 36, 0.0)};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t x = 3; x < 6; ++x) vstep.at(c, y, x) = 1.0;
    EdgeMap ev = sobel_edge(vstep);
    for (std::size_t y = 1; y < 5; ++y)
        for (std::size_t x = 0; x < 6; ++x) {
            double want = (x == 2 || x == 3) ? step_mag : 0.0;
            worst = std::max(worst, std::abs(ev.at(y, x) - want));
        }

    // the transposed image must give the transposed response
    Image hstep{6, 6, std::vector<double>(3 * 36, 0.0)};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 3; y < 6; ++y)
            for (std::size_t x = 0; x < 6; ++x) hstep.at(c, y, x) = 1.0;
    EdgeMap eh = sobel_edge(hstep);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x)
            worst = std::max(worst, std::abs(eh.at(y, x) - ev.at(x, y)));

    r.pass = worst < 1e-12;
    r.detail = format_error(worst);
    return r;
}

CheckResult check_gradients(std::size_t num_seeds) {
    CheckResult r{"finite-difference gradient fidelity", false, ""};
    const double tol = 1e-4;
    double worst = 0.0;

    for (std::uint64_t seed = 1; seed <= num_seeds; ++seed) {
        Rng rng(mix_seed(19, seed));
        auto random_tensor = [&rng](Shape shape) {
            std::size_t n = 1;
            for (std::size_t d : shape) n *= d;
            std::vector<double> v(n);
            for (double& x : v) x = rng.uniform(-1.0, 1.0);
            return Tensor::from_vector(std::move(shape), std::move(v));
        };

        // every primitive operation, composed so one scalar touches all of
        // them (parameter-side conv/bias gradients come from the model
        // sweep below)
        Tensor kernel = random_tensor({3, 2, 3, 3});
        Tensor bias = random_tensor({3});
        auto everything = [&](const Tensor& t) {
            Tensor a = sigmoid(t);
            Tensor cb = add_channel_bias(conv2d(a, kernel, 1), bias);
            Tensor d = div(cb, add_scalar(sigmoid(cb), 1.0));
            Tensor e = mul(d, scale(add(d, cb), 0.5));
            Tensor f = sub(e, scale_by(cb, mean_all(sigmoid(t))));
            Tensor up = resample(resample(f, Resample::kAvgPool2x),
                                 Resample::kUpsampleNearest2x);
            Tensor flat = reshape(add(up, f), {3, 16});
            Tensor mm = matmul(flat, transpose(flat));
            Tensor sm = softmax_lastdim(mm);
            Tensor lg = log_clamped(add_scalar(sm, 0.5));
            Tensor rv = add_rowvec(mm, global_avg_pool(reshape(lg, {3, 1, 3})));
            Tensor maxed = mean_all(resample(f, Resample::kMaxPool2x));
            return add(sum_all(rv), maxed);
        };
        Tensor x = random_tensor({2, 4, 4});
        worst = std::max(worst, grad_check(everything, x));
        if (worst >= tol) {
            r.detail = "operation composition: " + format_error(worst);
            return r;
        }

        // composite loss through the full model: every registered
        // parameter, finite differences against the analytic sweep
        ModelConfig mc = tiny_model_config();
        Rng model_rng(mix_seed(23, seed));
        Model model(mc, model_rng);
        Image img{16, 16, std::vector<double>(3 * 256)};
        for (double& v : img.pixels) v = rng.uniform();
        LabelMap gt{16, 16, std::vector<std::uint8_t>(256)};
        for (auto& l : gt.labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
        EdgePyramid edges = model.edge_targets(img);
        LossWeights weights;

        for (auto& [name, slot] : model.params()) {
            Tensor original = *slot;
            auto f = [&, slot_ptr = slot](const Tensor& candidate) {
                *slot_ptr = candidate;
                Tensor loss = model.loss(model.forward(img), gt, edges, weights);
                *slot_ptr = original;
                return loss;
            };
            worst = std::max(worst, grad_check(f, original));
            *slot = original;
            if (worst >= tol) {
                r.detail = "parameter '" + name + "': " + format_error(worst);
                return r;
            }
        }
    }

    r.pass = worst < tol;
    r.detail = format_error(worst);
    return r;
}

CheckResult check_metric_oracle(std::uint64_t seed) {
    CheckResult r{"metric report vs per-pixel recount", false, ""};
    Rng rng(seed);
    double worst = 0.0;

    // the frozen hand case first
    LabelMap pred2{2, 2, {0, 0, 1, 1}};
    LabelMap gt2{2, 2, {0, 1, 0, 1}};
    ConfusionAccumulator acc2(4);
    accumulate(pred2, gt2, acc2);
    MetricsReport rep2 = report(acc2);
    worst = std::max({worst, std::abs(rep2.miou - 1.0 / 3.0), std::abs(rep2.mdice - 0.5),
                      std::abs(rep2.mrecall - 0.5)});

    for (int trial = 0; trial < 50; ++trial) {
        LabelMap pred{8, 8, std::vector<std::uint8_t>(64)};
        LabelMap gt{8, 8, std::vector<std::uint8_t>(64)};
        for (auto& l : pred.labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 3));
        for (auto& l : gt.labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 3));

        ConfusionAccumulator acc(4);
        accumulate(pred, gt, acc);
        MetricsReport rep = report(acc);

        double iou_sum = 0, dice_sum = 0, rec_sum = 0;
        std::size_t iou_n = 0, rec_n = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < 64; ++i) {
                bool p = pred.labels[i] == c, g = gt.labels[i] == c;
                if (p && g) ++tp;
                if (p && !g) ++fp;
                if (!p && g) ++fn;
            }
            if (tp + fp + fn > 0) {
                double iou = double(tp) / double(tp + fp + fn);
                double dice = 2.0 * double(tp) / double(2 * tp + fp + fn);
                if (dice < iou - 1e-15) {
                    r.detail = "Dice fell below IoU";
                    return r;
                }
                iou_sum += iou;
                dice_sum += dice;
                ++iou_n;
            }
            if (tp + fn > 0) {
                rec_sum += double(tp) / double(tp + fn);
                ++rec_n;
            }
        }
        worst = std::max({worst, std::abs(rep.miou - iou_sum / double(iou_n)),
                          std::abs(rep.mdice - dice_sum / double(iou_n)),
                          std::abs(rep.mrecall - rec_sum / double(rec_n))});
    }

    r.pass = worst < 1e-12;
    r.detail = format_error(worst);
    return r;
}

CheckResult check_gate_bridge(std::uint64_t seed) {
    CheckResult r{"gate range and bridge endpoints", false, ""};
    Rng rng(seed);

    BridgePairParams pair;
    pair.gate_fine = Tensor::zeros({3});
    pair.gate_coarse = Tensor::zeros({3});
    Tensor zi = Tensor::full({3, 2, 2}, 0.7);
    Tensor zj = Tensor::full({3, 2, 2}, -0.2);
    if (gate_alpha(zi, zj, pair).item() != 0.5) {
        r.detail = "zero gates did not give exactly 0.5";
        return r;
    }

    for (int trial = 0; trial < 25; ++trial) {
        for (Tensor* t : {&pair.gate_fine, &pair.gate_coarse})
            for (double& v : t->values_mut()) v = rng.uniform(-3.0, 3.0);
        std::vector<double> a(12), b(12);
        for (double& v : a) v = rng.uniform(-2.0, 2.0);
        for (double& v : b) v = rng.uniform(-2.0, 2.0);
        Tensor fine = Tensor::from_vector({3, 2, 2}, a);
        Tensor coarse = Tensor::from_vector({3, 2, 2}, b);
        double alpha = gate_alpha(fine, coarse, pair).item();
        if (!(alpha > 0.0 && alpha < 1.0)) {
            r.detail = "alpha left (0,1)";
            return r;
        }

        // endpoints reproduce the inputs exactly; interior stays bounded
        if (bridge_pair(fine, coarse, Tensor::scalar(1.0)).values() != fine.values() ||
            bridge_pair(fine, coarse, Tensor::scalar(0.0)).values() != coarse.values()) {
            r.detail = "endpoint did not reproduce its input";
            return r;
        }
        Tensor mid = bridge_pair(fine, coarse, Tensor::scalar(alpha));
        for (std::size_t i = 0; i < 12; ++i) {
            double lo = std::min(a[i], b[i]) - 1e-12, hi = std::max(a[i], b[i]) + 1e-12;
            if (mid.values()[i] < lo || mid.values()[i] > hi) {
                r.detail = "blend escaped the elementwise bounds";
                return r;
            }
        }
    }

    r.pass = true;
    r.detail = "exact";
    return r;
}

CheckResult check_residual_identities(std::uint64_t seed) {
    CheckResult r{"zero-weight residual identities", false, ""};
    Rng rng(seed);
    double worst = 0.0;

    EncoderBlock block = init_encoder_block(4, 2, 3, rng);
    for (Tensor* t : {&block.wq, &block.wk, &block.wv, &block.wo, &block.mlp_w1, &block.mlp_b1,
                      &block.mlp_w2, &block.mlp_b2})
        for (double& v : t->values_mut()) v = 0.0;
    std::vector<double> fv(24);
    for (double& v : fv) v = rng.uniform(-1.0, 1.0);
    Tensor f = Tensor::from_vector({4, 2, 3}, fv);
    Tensor z = encode_scale(f, block);
    for (std::size_t i = 0; i < fv.size(); ++i)
        worst = std::max(worst, std::abs(z.values()[i] - fv[i]));

    DecoderParams dec = init_decoder(2, 4, 2, 3, 1, rng);
    DecoderRound& round = dec.rounds[0];
    for (Tensor* t : {&round.cross_wq, &round.cross_wk, &round.cross_wv, &round.cross_wo,
                      &round.self_wq, &round.self_wk, &round.self_wv, &round.self_wo,
                      &round.mlp_w1, &round.mlp_b1, &round.mlp_w2, &round.mlp_b2})
        for (double& v : t->values_mut()) v = 0.0;
    std::vector<double> qv(8);
    for (double& v : qv) v = rng.uniform(-1.0, 1.0);
    Tensor queries = Tensor::from_vector({2, 4}, qv);
    Tensor tokens = Tensor::from_vector({2, 3}, {0.3, -0.1, 0.5, 0.2, 0.9, -0.4});
    Tensor out = decode_step(queries, tokens, round);
    for (std::size_t i = 0; i < qv.size(); ++i)
        worst = std::max(worst, std::abs(out.values()[i] - qv[i]));

    r.pass = worst == 0.0;
    r.detail = worst == 0.0 ? "exact" : format_error(worst);
    return r;
}

std::vector<CheckResult> run_all(bool inject_fault) {
    debug::corrupt_sigmoid_backward = inject_fault;
    std::vector<CheckResult> results;
    results.push_back(check_conv_oracle(101));
    results.push_back(check_sobel_analytics());
    results.push_back(check_gradients(5));
    results.push_back(check_metric_oracle(102));
    results.push_back(check_gate_bridge(103));
    results.push_back(check_residual_identities(104));
    debug::corrupt_sigmoid_backward = false;
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

}  // namespace befseg::verify
