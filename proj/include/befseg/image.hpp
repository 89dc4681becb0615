#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "befseg/rng.hpp"
#include "befseg/tensor.hpp"

namespace befseg {

// RGB image with values in [0,1], stored planar ([3][H][W] row-major) so it
// maps directly onto the convolution input layout.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return pixels[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return pixels[(c * height + y) * width + x];
    }
};

// Per-pixel class indices.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> labels;

    std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
};

// Normalized edge magnitudes in [0,1].
struct EdgeMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

using EdgePyramid = std::vector<EdgeMap>;

struct Sample {
    Image image;
    LabelMap labels;
    std::string id;
};

// ---- PPM / PGM binary I/O (maxval 255) ----
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

// Label maps hold raw class indices per byte; edge maps quantize as
// round(255 * value).
void write_pgm(const std::string& path, const LabelMap& labels);
void write_pgm(const std::string& path, const EdgeMap& edge);
LabelMap read_pgm_labels(const std::string& path);
EdgeMap read_pgm_gray(const std::string& path);

// Edge magnitude of the channel-mean grayscale via 3x3 horizontal/vertical
// gradient kernels with replicate padding, normalized by the maximum
// attainable magnitude 4*sqrt(2) so the output lies in [0,1].
EdgeMap sobel_edge(const Image& image);

// Repeatedly max-pools `edge` down to each requested (h,w). Every target
// must divide the source dims by the same power of two.
EdgePyramid build_edge_pyramid(const EdgeMap& edge,
                               const std::vector<std::pair<std::size_t, std::size_t>>& scale_dims);

// Crop/scale jitter. Parameters are drawn in a fixed order (scale, then row
// offset, then column offset) so a seeded generator reproduces the exact
// geometry.
struct AugmentParams {
    double scale = 1.0;
    std::size_t offset_y = 0;
    std::size_t offset_x = 0;
};

// Scale is uniform in [0.75, 1.25], with the lower bound raised when needed
// so the scaled source always contains an out-sized window.
AugmentParams draw_augment_params(Rng& rng, std::size_t src_h, std::size_t src_w,
                                  std::size_t out_h, std::size_t out_w);

// Nearest-neighbor rescale of image and labels by params.scale, then a crop
// of out_h x out_w at the params offset. Identical geometry is applied to
// pixels and labels.
Sample augment_crop_scale(const Sample& sample, const AugmentParams& params, std::size_t out_h,
                          std::size_t out_w);

// Fixed visualization palette: class 0 is black, the remaining classes take
// evenly spaced fully saturated hues. Injective for any class count <= 256.
std::array<std::uint8_t, 3> class_color(std::size_t cls, std::size_t num_classes);
Image colorize_labels(const LabelMap& labels, std::size_t num_classes);

// [3,H,W] tensor view of an image (no gradient tracking).
Tensor to_tensor(const Image& image);

}  // namespace befseg
