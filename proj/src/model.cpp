#include "befseg/model.hpp"

#include <stdexcept>
#include <string>

namespace befseg {

void ModelConfig::validate() const {
    backbone().validate();
    if (num_classes < 2)
        throw std::invalid_argument("model: num_classes must be at least 2, got " +
                                    std::to_string(num_classes));
    if (num_queries != num_classes)
        throw std::invalid_argument(
            "model: num_queries must equal num_classes under the fixed query-class "
            "assignment, got " + std::to_string(num_queries) + " queries for " +
            std::to_string(num_classes) + " classes");
    if (query_dim == 0)
        throw std::invalid_argument("model: query_dim must be positive");
    if (decoder_rounds == 0)
        throw std::invalid_argument("model: decoder_rounds must be positive");
}

BackboneConfig ModelConfig::backbone() const {
    BackboneConfig b;
    b.num_scales = num_scales;
    b.channels = channels;
    b.height = image_size;
    b.width = image_size;
    return b;
}

std::vector<std::pair<std::size_t, std::size_t>> ModelConfig::scale_dims() const {
    BackboneConfig b = backbone();
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    for (std::size_t l = 1; l <= num_scales; ++l)
        dims.emplace_back(b.level_height(l), b.level_width(l));
    return dims;
}

Model::Model(ModelConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    BackboneConfig bc = config_.backbone();

    backbone_ = init_backbone(bc, rng);
    for (std::size_t l = 1; l <= config_.num_scales; ++l)
        encoders_.push_back(init_encoder_block(config_.channels[l - 1], bc.level_height(l),
                                               bc.level_width(l), rng));
    bridge_ = init_bridge(bc, rng);
    boundary_ = init_boundary_head(bc, rng);
    // the decoder consumes the finest bridged level, whose width is the
    // finest scale's channel count
    decoder_ = init_decoder(config_.num_queries, config_.query_dim, config_.num_classes,
                            config_.channels[0], config_.decoder_rounds, rng);
    register_params();
}

void Model::register_params() {
    auto put = [&](const std::string& name, Tensor& t) { params_.emplace_back(name, &t); };

    put("backbone.stem1.weight", backbone_.stem1.weight);
    put("backbone.stem1.bias", backbone_.stem1.bias);
    put("backbone.stem2.weight", backbone_.stem2.weight);
    put("backbone.stem2.bias", backbone_.stem2.bias);
    for (std::size_t l = 0; l < backbone_.levels.size(); ++l) {
        std::string base = "backbone.level" + std::to_string(l + 1);
        put(base + ".weight", backbone_.levels[l].weight);
        put(base + ".bias", backbone_.levels[l].bias);
    }
    for (std::size_t l = 0; l < encoders_.size(); ++l) {
        std::string base = "encoder.l" + std::to_string(l + 1);
        EncoderBlock& b = encoders_[l];
        put(base + ".wq", b.wq);
        put(base + ".wk", b.wk);
        put(base + ".wv", b.wv);
        put(base + ".wo", b.wo);
        put(base + ".mlp_w1", b.mlp_w1);
        put(base + ".mlp_b1", b.mlp_b1);
        put(base + ".mlp_w2", b.mlp_w2);
        put(base + ".mlp_b2", b.mlp_b2);
    }
    for (std::size_t i = 0; i < bridge_.pairs.size(); ++i) {
        std::string base = "befbm.pair" + std::to_string(i + 1);
        BridgePairParams& p = bridge_.pairs[i];
        put(base + ".gate_fine", p.gate_fine);
        put(base + ".gate_coarse", p.gate_coarse);
        put(base + ".proj_fine", p.proj_fine);
        put(base + ".proj_coarse", p.proj_coarse);
    }
    for (std::size_t l = 0; l < boundary_.projections.size(); ++l)
        put("befbm.boundary.l" + std::to_string(l + 1) + ".weight", boundary_.projections[l]);
    for (std::size_t t = 0; t < decoder_.rounds.size(); ++t) {
        std::string base = "decoder.round" + std::to_string(t + 1);
        DecoderRound& r = decoder_.rounds[t];
        put(base + ".cross_wq", r.cross_wq);
        put(base + ".cross_wk", r.cross_wk);
        put(base + ".cross_wv", r.cross_wv);
        put(base + ".cross_wo", r.cross_wo);
        put(base + ".self_wq", r.self_wq);
        put(base + ".self_wk", r.self_wk);
        put(base + ".self_wv", r.self_wv);
        put(base + ".self_wo", r.self_wo);
        put(base + ".mlp_w1", r.mlp_w1);
        put(base + ".mlp_b1", r.mlp_b1);
        put(base + ".mlp_w2", r.mlp_w2);
        put(base + ".mlp_b2", r.mlp_b2);
    }
    put("maskhead.w3", decoder_.mask_w3);
    put("maskhead.pixel", decoder_.pixel_kernel);
    put("clshead.weight", decoder_.cls_weight);
    put("queries.init", decoder_.query_init);
}

ForwardResult Model::forward(const Image& image) const {
    ForwardResult out;
    FeaturePyramid raw = extract_features(image, backbone_, config_.backbone());
    out.encoded = encode_pyramid(raw, encoders_);
    out.bridged = build_bridged_pyramid(out.encoded, bridge_);

    const Tensor& finest = out.bridged.levels[0];
    const Shape& fs = finest.shape();
    Tensor tokens = transpose(reshape(finest, {fs[0], fs[1] * fs[2]}));  // [N, C]
    out.queries = run_decoder(tokens, decoder_);

    out.predictions.masks = predict_masks(out.queries, finest, decoder_);
    out.predictions.class_probs = predict_classes(out.queries, decoder_);
    out.masks_full = upsample_masks_to(out.predictions.masks, config_.image_size,
                                       config_.image_size);
    return out;
}

Tensor Model::loss(const ForwardResult& fwd, const LabelMap& gt, const EdgePyramid& edges,
                   const LossWeights& weights, LossBreakdown* breakdown) const {
    Tensor cls = cls_loss(fwd.predictions.class_probs, gt);
    Tensor mask = mask_loss(fwd.masks_full, gt);
    Tensor edge = edge_loss(fwd.encoded, edges, boundary_);
    Tensor total = total_loss(cls, mask, edge, weights);
    if (breakdown) {
        breakdown->cls = cls.item();
        breakdown->mask = mask.item();
        breakdown->edge = edge.item();
        breakdown->total = total.item();
    }
    return total;
}

EdgePyramid Model::edge_targets(const Image& image) const {
    return build_edge_pyramid(sobel_edge(image), config_.scale_dims());
}

void Model::save(const std::string& path) const { save_checkpoint(path, params_); }

void Model::load(const std::string& path) { load_checkpoint(path, params_); }

void Model::zero_grad() {
    for (auto& [name, tensor] : params_) {
        (void)name;
        tensor->zero_grad();
    }
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, tensor] : params_) {
        (void)name;
        n += tensor->size();
    }
    return n;
}

}  // namespace befseg
