#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "befseg/image.hpp"
#include "befseg/rng.hpp"

namespace befseg {

// Recipe for one synthetic scene: a textured background (class 0) with a
// horizontal road band (class 1), rectangular buildings (class 2), and
// small bright discs (class 3) rasterized in that order, so later shapes
// occlude earlier ones. Classes at or above num_classes are skipped, which
// keeps every label below the alphabet size.
struct SceneSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t num_classes = 4;
    std::size_t num_roads = 1;
    std::size_t num_boxes = 2;
    std::size_t num_discs = 3;

    void validate() const;
};

struct DatasetConfig {
    std::uint64_t seed = 0;
    SceneSpec scene;
    std::size_t train_size = 200;
    std::size_t val_size = 50;
    std::size_t test_size = 50;
    std::string out_dir;

    void validate() const;
};

// Draws one scene from the generator state. Deterministic: the sample is a
// pure function of the rng seed and the spec.
Sample generate_scene(const SceneSpec& spec, Rng& rng);

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;

    const std::vector<Sample>& split(const std::string& name) const;
};

// Writes image/label pairs for all three splits plus a manifest listing
// them, and returns the manifest path. Each sample draws from its own
// stream keyed by (seed, split index, sample index), so regeneration is
// byte-identical and parallel generation would partition cleanly.
std::string generate_dataset(const DatasetConfig& config);

// Reads a manifest produced by generate_dataset and every file it names.
// Label values must stay below num_classes; violations name the file.
Dataset load_dataset(const std::string& manifest_path, std::size_t num_classes);

}  // namespace befseg
