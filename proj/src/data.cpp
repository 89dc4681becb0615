#include "befseg/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace befseg {

namespace {

constexpr const char* kSplitNames[3] = {"train", "val", "test"};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Base palette; every instance jitters around these and every pixel adds
// low-amplitude noise so edges are never perfectly clean.
struct Paint {
    double r, g, b;
    double pixel_noise;
};

void splat(Image& img, LabelMap& labels, std::size_t y, std::size_t x, const Paint& p,
           std::uint8_t cls, Rng& rng) {
    img.at(0, y, x) = clamp01(p.r + rng.uniform(-p.pixel_noise, p.pixel_noise));
    img.at(1, y, x) = clamp01(p.g + rng.uniform(-p.pixel_noise, p.pixel_noise));
    img.at(2, y, x) = clamp01(p.b + rng.uniform(-p.pixel_noise, p.pixel_noise));
    labels.at(y, x) = cls;
}

// inclusive size range clamped so the shape always fits the canvas
std::size_t draw_extent(Rng& rng, std::size_t lo, std::size_t hi, std::size_t limit) {
    hi = std::min(hi, limit);
    lo = std::min(lo, hi);
    return static_cast<std::size_t>(rng.uniform_int(static_cast<long>(lo), static_cast<long>(hi)));
}

}  // namespace

void SceneSpec::validate() const {
    if (height < 16 || width < 16)
        throw std::invalid_argument("scene: canvas must be at least 16x16, got " +
                                    std::to_string(height) + "x" + std::to_string(width));
    if (num_classes < 2 || num_classes > 4)
        throw std::invalid_argument("scene: num_classes must be in [2,4], got " +
                                    std::to_string(num_classes));
    if (num_roads + num_boxes + num_discs == 0)
        throw std::invalid_argument("scene: needs at least one foreground instance");
}

void DatasetConfig::validate() const {
    scene.validate();
    if (train_size == 0 || val_size == 0 || test_size == 0)
        throw std::invalid_argument("dataset: every split needs at least one sample");
    if (out_dir.empty()) throw std::invalid_argument("dataset: output directory not set");
}

Sample generate_scene(const SceneSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t h = spec.height, w = spec.width;
    Sample sample;
    sample.image = Image{h, w, std::vector<double>(3 * h * w)};
    sample.labels = LabelMap{h, w, std::vector<std::uint8_t>(h * w, 0)};

    // background: mid-gray texture
    Paint bg{0.30, 0.31, 0.29, 0.05};
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) splat(sample.image, sample.labels, y, x, bg, 0, rng);

    // road bands: full-width dark horizontal strips
    if (spec.num_classes > 1) {
        for (std::size_t i = 0; i < spec.num_roads; ++i) {
            std::size_t thickness = draw_extent(rng, 6, 12, h / 2);
            std::size_t top = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<long>(h - thickness)));
            double shade = rng.uniform(0.10, 0.20);
            Paint paint{shade, shade, shade + rng.uniform(0.0, 0.02), 0.02};
            for (std::size_t y = top; y < top + thickness; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    splat(sample.image, sample.labels, y, x, paint, 1, rng);
        }
    }

    // boxes: mid-tone rectangles, occluding the road where they overlap
    if (spec.num_classes > 2) {
        for (std::size_t i = 0; i < spec.num_boxes; ++i) {
            std::size_t bh = draw_extent(rng, 10, 22, h - 2);
            std::size_t bw = draw_extent(rng, 10, 22, w - 2);
            std::size_t top =
                static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(h - bh)));
            std::size_t left =
                static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(w - bw)));
            Paint paint{rng.uniform(0.45, 0.65), rng.uniform(0.45, 0.65), rng.uniform(0.45, 0.65),
                        0.03};
            for (std::size_t y = top; y < top + bh; ++y)
                for (std::size_t x = left; x < left + bw; ++x)
                    splat(sample.image, sample.labels, y, x, paint, 2, rng);
        }
    }

    // discs: small bright targets, drawn last so nothing hides them
    if (spec.num_classes > 3) {
        for (std::size_t i = 0; i < spec.num_discs; ++i) {
            std::size_t radius = draw_extent(rng, 2, 5, std::min(h, w) / 4);
            std::size_t cy = static_cast<std::size_t>(
                rng.uniform_int(static_cast<long>(radius), static_cast<long>(h - 1 - radius)));
            std::size_t cx = static_cast<std::size_t>(
                rng.uniform_int(static_cast<long>(radius), static_cast<long>(w - 1 - radius)));
            Paint paint{rng.uniform(0.75, 0.95), rng.uniform(0.75, 0.95), rng.uniform(0.75, 0.95),
                        0.03};
            const long r = static_cast<long>(radius);
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx) {
                    if (dy * dy + dx * dx > r * r) continue;
                    splat(sample.image, sample.labels,
                          static_cast<std::size_t>(static_cast<long>(cy) + dy),
                          static_cast<std::size_t>(static_cast<long>(cx) + dx), paint, 3, rng);
                }
        }
    }
    return sample;
}

const std::vector<Sample>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("dataset: unknown split '" + name +
                                "', expected train, val, or test");
}

std::string generate_dataset(const DatasetConfig& config) {
    config.validate();
    const std::size_t sizes[3] = {config.train_size, config.val_size, config.test_size};

    fs::path root(config.out_dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec)
        throw std::runtime_error("dataset: cannot create '" + root.string() +
                                 "': " + ec.message());

    std::ostringstream manifest;
    for (std::size_t s = 0; s < 3; ++s) {
        fs::create_directories(root / kSplitNames[s], ec);
        if (ec)
            throw std::runtime_error("dataset: cannot create '" +
                                     (root / kSplitNames[s]).string() + "': " + ec.message());
        for (std::size_t i = 0; i < sizes[s]; ++i) {
            Rng rng(mix_seed(config.seed, s, i));
            Sample sample = generate_scene(config.scene, rng);

            char name[32];
            std::snprintf(name, sizeof(name), "%s_%04zu", kSplitNames[s], i);
            std::string img_rel = std::string(kSplitNames[s]) + "/" + name + ".ppm";
            std::string lab_rel = std::string(kSplitNames[s]) + "/" + name + ".pgm";
            write_ppm((root / img_rel).string(), sample.image);
            write_pgm((root / lab_rel).string(), sample.labels);
            manifest << kSplitNames[s] << '\t' << img_rel << '\t' << lab_rel << '\n';
        }
    }

    fs::path manifest_path = root / "manifest.tsv";
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw std::runtime_error("dataset: cannot write '" + manifest_path.string() + "'");
    out << manifest.str();
    out.close();
    if (!out) throw std::runtime_error("dataset: failed writing '" + manifest_path.string() + "'");
    return manifest_path.string();
}

Dataset load_dataset(const std::string& manifest_path, std::size_t num_classes) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw std::runtime_error("dataset: cannot open manifest '" + manifest_path + "'");
    fs::path root = fs::path(manifest_path).parent_path();

    Dataset data;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t tab1 = line.find('\t');
        std::size_t tab2 = tab1 == std::string::npos ? std::string::npos
                                                     : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos)
            throw std::runtime_error("dataset: malformed manifest line " +
                                     std::to_string(line_no) + " in '" + manifest_path + "'");
        std::string split = line.substr(0, tab1);
        std::string img_rel = line.substr(tab1 + 1, tab2 - tab1 - 1);
        std::string lab_rel = line.substr(tab2 + 1);

        Sample sample;
        std::string img_path = (root / img_rel).string();
        std::string lab_path = (root / lab_rel).string();
        sample.image = read_ppm(img_path);
        sample.labels = read_pgm_labels(lab_path);
        sample.id = fs::path(img_rel).stem().string();
        if (sample.labels.height != sample.image.height ||
            sample.labels.width != sample.image.width)
            throw std::runtime_error("dataset: '" + lab_path + "' is " +
                                     std::to_string(sample.labels.height) + "x" +
                                     std::to_string(sample.labels.width) + " but '" + img_path +
                                     "' is " + std::to_string(sample.image.height) + "x" +
                                     std::to_string(sample.image.width));
        for (std::uint8_t l : sample.labels.labels)
            if (l >= num_classes)
                throw std::runtime_error("dataset: '" + lab_path + "' holds label " +
                                         std::to_string(l) + " outside the " +
                                         std::to_string(num_classes) + "-class alphabet");

        if (split == "train")
            data.train.push_back(std::move(sample));
        else if (split == "val")
            data.val.push_back(std::move(sample));
        else if (split == "test")
            data.test.push_back(std::move(sample));
        else
            throw std::runtime_error("dataset: unknown split '" + split + "' on manifest line " +
                                     std::to_string(line_no));
    }
    return data;
}

}  // namespace befseg
