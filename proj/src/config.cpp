#include "befseg/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace befseg {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& origin, const std::string& what) {
    throw std::invalid_argument("config " + origin + ": " + what);
}

std::uint64_t as_uint(const json& v, const std::string& origin, const std::string& key) {
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0))
        bad(origin, "key '" + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& origin, const std::string& key) {
    if (!v.is_number()) bad(origin, "key '" + key + "' must be a number");
    return v.get<double>();
}

std::string as_string(const json& v, const std::string& origin, const std::string& key) {
    if (!v.is_string()) bad(origin, "key '" + key + "' must be a string");
    return v.get<std::string>();
}

std::vector<std::size_t> as_uint_array(const json& v, const std::string& origin,
                                       const std::string& key) {
    if (!v.is_array()) bad(origin, "key '" + key + "' must be an array of integers");
    std::vector<std::size_t> out;
    for (const json& e : v) out.push_back(static_cast<std::size_t>(as_uint(e, origin, key)));
    return out;
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        bad(origin, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) bad(origin, "top level must be an object");

    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "seed")
            cfg.seed = as_uint(value, origin, key);
        else if (key == "image_size")
            cfg.image_size = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "num_classes")
            cfg.num_classes = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "num_scales")
            cfg.num_scales = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "channels")
            cfg.channels = as_uint_array(value, origin, key);
        else if (key == "queries")
            cfg.queries = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "query_dim")
            cfg.query_dim = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "decoder_rounds")
            cfg.decoder_rounds = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "lambda1")
            cfg.lambda1 = as_double(value, origin, key);
        else if (key == "lambda2")
            cfg.lambda2 = as_double(value, origin, key);
        else if (key == "lambda3")
            cfg.lambda3 = as_double(value, origin, key);
        else if (key == "lr")
            cfg.lr = as_double(value, origin, key);
        else if (key == "epochs")
            cfg.epochs = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "batch_size")
            cfg.batch_size = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "train_size")
            cfg.train_size = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "val_size")
            cfg.val_size = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "test_size")
            cfg.test_size = static_cast<std::size_t>(as_uint(value, origin, key));
        else if (key == "grad_clip_norm")
            cfg.grad_clip_norm = as_double(value, origin, key);
        else if (key == "data_dir")
            cfg.data_dir = as_string(value, origin, key);
        else if (key == "out_dir")
            cfg.out_dir = as_string(value, origin, key);
        else
            bad(origin, "unknown key '" + key + "'");
    }
    return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("config '" + path + "': cannot open");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text, "'" + path + "'");
}

ModelConfig RunConfig::model() const {
    ModelConfig mc;
    mc.image_size = image_size;
    mc.num_classes = num_classes;
    mc.num_scales = num_scales;
    mc.channels = channels;
    mc.num_queries = queries;
    mc.query_dim = query_dim;
    mc.decoder_rounds = decoder_rounds;
    mc.validate();
    return mc;
}

TrainConfig RunConfig::train() const {
    TrainConfig tc;
    tc.seed = seed;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.lr = lr;
    tc.weights = LossWeights{lambda1, lambda2, lambda3};
    tc.grad_clip_norm = grad_clip_norm;
    tc.out_dir = out_dir;
    tc.validate();
    return tc;
}

DatasetConfig RunConfig::dataset() const {
    DatasetConfig dc;
    dc.seed = seed;
    dc.scene.height = image_size;
    dc.scene.width = image_size;
    dc.scene.num_classes = num_classes;
    dc.train_size = train_size;
    dc.val_size = val_size;
    dc.test_size = test_size;
    dc.out_dir = data_dir;
    dc.validate();
    return dc;
}

std::string RunConfig::to_json() const {
    json j{{"seed", seed},
           {"image_size", image_size},
           {"num_classes", num_classes},
           {"num_scales", num_scales},
           {"channels", channels},
           {"queries", queries},
           {"query_dim", query_dim},
           {"decoder_rounds", decoder_rounds},
           {"lambda1", lambda1},
           {"lambda2", lambda2},
           {"lambda3", lambda3},
           {"lr", lr},
           {"epochs", epochs},
           {"batch_size", batch_size},
           {"train_size", train_size},
           {"val_size", val_size},
           {"test_size", test_size},
           {"grad_clip_norm", grad_clip_norm},
           {"data_dir", data_dir},
           {"out_dir", out_dir}};
    return j.dump(2);
}

}  // namespace befseg
