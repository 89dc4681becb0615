#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "befseg/data.hpp"
#include "befseg/model.hpp"
#include "befseg/train.hpp"

namespace befseg {

// One JSON file drives every command. Every key is optional and falls back
// to the default shown here; unknown keys are rejected by name so typos
// cannot silently revert a run to defaults.
struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t image_size = 64;
    std::size_t num_classes = 4;
    std::size_t num_scales = 3;
    std::vector<std::size_t> channels = {16, 32, 64};
    std::size_t queries = 4;
    std::size_t query_dim = 32;
    std::size_t decoder_rounds = 2;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 0.1;
    double lr = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    std::size_t train_size = 200;
    std::size_t val_size = 50;
    std::size_t test_size = 50;
    double grad_clip_norm = 10.0;
    std::string data_dir = "data";
    std::string out_dir = "out";

    static RunConfig from_json_text(const std::string& text, const std::string& origin);
    static RunConfig from_json_file(const std::string& path);

    ModelConfig model() const;
    TrainConfig train() const;
    DatasetConfig dataset() const;

    std::string to_json() const;
};

}  // namespace befseg
