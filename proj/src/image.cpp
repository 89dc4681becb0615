#include "befseg/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace befseg {

namespace {

std::uint8_t quantize(double v) {
    double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(q);
}

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("image '" + path + "': " + what);
}

struct NetpbmHeader {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t payload_offset = 0;
};

// Parses "P6"/"P5" headers: magic, then whitespace-separated width, height,
// maxval with '#' comments allowed, then one whitespace byte before the
// payload.
NetpbmHeader parse_header(const std::string& path, const std::string& bytes,
                          const char* magic) {
    if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1])
        io_fail(path, std::string("bad magic, expected ") + magic);
    std::size_t pos = 2;
    auto next_int = [&]() -> std::size_t {
        while (pos < bytes.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
            io_fail(path, "truncated or malformed header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            ++pos;
        }
        return v;
    };
    NetpbmHeader h;
    h.width = next_int();
    h.height = next_int();
    std::size_t maxval = next_int();
    if (h.width == 0 || h.height == 0) io_fail(path, "zero image dimensions");
    if (maxval != 255)
        io_fail(path, "unsupported maxval " + std::to_string(maxval) + ", expected 255");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        io_fail(path, "truncated or malformed header");
    h.payload_offset = pos + 1;
    return h;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail(path, "cannot open for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail(path, "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) io_fail(path, "write failed");
}

std::string header_text(const char* magic, std::size_t w, std::size_t h) {
    std::ostringstream out;
    out << magic << '\n' << w << ' ' << h << '\n' << 255 << '\n';
    return std::move(out).str();
}

}  // namespace

void write_ppm(const std::string& path, const Image& image) {
    std::string bytes = header_text("P6", image.width, image.height);
    bytes.reserve(bytes.size() + image.height * image.width * 3);
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                bytes.push_back(static_cast<char>(quantize(image.at(c, y, x))));
    spit(path, bytes);
}

Image read_ppm(const std::string& path) {
    std::string bytes = slurp(path);
    NetpbmHeader h = parse_header(path, bytes, "P6");
    std::size_t need = h.height * h.width * 3;
    if (bytes.size() - h.payload_offset < need) io_fail(path, "truncated pixel payload");
    Image img{h.height, h.width, std::vector<double>(need)};
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
    for (std::size_t y = 0; y < h.height; ++y)
        for (std::size_t x = 0; x < h.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<double>(*p++) / 255.0;
    return img;
}

void write_pgm(const std::string& path, const LabelMap& labels) {
    std::string bytes = header_text("P5", labels.width, labels.height);
    bytes.reserve(bytes.size() + labels.labels.size());
    for (std::uint8_t v : labels.labels) bytes.push_back(static_cast<char>(v));
    spit(path, bytes);
}

void write_pgm(const std::string& path, const EdgeMap& edge) {
    std::string bytes = header_text("P5", edge.width, edge.height);
    bytes.reserve(bytes.size() + edge.values.size());
    for (double v : edge.values) bytes.push_back(static_cast<char>(quantize(v)));
    spit(path, bytes);
}

LabelMap read_pgm_labels(const std::string& path) {
    std::string bytes = slurp(path);
    NetpbmHeader h = parse_header(path, bytes, "P5");
    std::size_t need = h.height * h.width;
    if (bytes.size() - h.payload_offset < need) io_fail(path, "truncated pixel payload");
    LabelMap lm{h.height, h.width, std::vector<std::uint8_t>(need)};
    std::copy_n(reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset, need,
                lm.labels.begin());
    return lm;
}

EdgeMap read_pgm_gray(const std::string& path) {
    std::string bytes = slurp(path);
    NetpbmHeader h = parse_header(path, bytes, "P5");
    std::size_t need = h.height * h.width;
    if (bytes.size() - h.payload_offset < need) io_fail(path, "truncated pixel payload");
    EdgeMap em{h.height, h.width, std::vector<double>(need)};
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
    for (std::size_t i = 0; i < need; ++i) em.values[i] = static_cast<double>(p[i]) / 255.0;
    return em;
}

EdgeMap sobel_edge(const Image& image) {
    const std::size_t h = image.height, w = image.width;
    std::vector<double> gray(h * w);
    for (std::size_t i = 0; i < h * w; ++i)
        gray[i] = (image.pixels[i] + image.pixels[h * w + i] + image.pixels[2 * h * w + i]) / 3.0;

    auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(h) - 1);
        x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(w) - 1);
        return gray[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
    };

    // Each gradient is a difference of two identically ordered weighted
    // sums, so a constant image cancels to exactly zero with no float
    // residue. Border pixels replicate their nearest neighbor.
    const double inv_max = 1.0 / (4.0 * std::sqrt(2.0));
    EdgeMap edge{h, w, std::vector<double>(h * w)};
    for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(h); ++y)
        for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(w); ++x) {
            double right = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1);
            double left = at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1);
            double bottom = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1);
            double top = at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1);
            double gx = right - left;
            double gy = bottom - top;
            edge.values[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] =
                std::sqrt(gx * gx + gy * gy) * inv_max;
        }
    return edge;
}

EdgePyramid build_edge_pyramid(
    const EdgeMap& edge, const std::vector<std::pair<std::size_t, std::size_t>>& scale_dims) {
    EdgePyramid pyramid;
    pyramid.reserve(scale_dims.size());
    for (auto [th, tw] : scale_dims) {
        if (th == 0 || tw == 0 || edge.height % th != 0 || edge.width % tw != 0)
            throw std::invalid_argument("build_edge_pyramid: target " + std::to_string(th) + "x" +
                                        std::to_string(tw) + " does not divide source " +
                                        std::to_string(edge.height) + "x" +
                                        std::to_string(edge.width));
        std::size_t ry = edge.height / th, rx = edge.width / tw;
        if (ry != rx || (ry & (ry - 1)) != 0)
            throw std::invalid_argument(
                "build_edge_pyramid: reduction to " + std::to_string(th) + "x" +
                std::to_string(tw) + " is not a uniform power-of-2 downscale");

        EdgeMap cur = edge;
        while (cur.height > th) {
            EdgeMap next{cur.height / 2, cur.width / 2,
                         std::vector<double>((cur.height / 2) * (cur.width / 2))};
            for (std::size_t y = 0; y < next.height; ++y)
                for (std::size_t x = 0; x < next.width; ++x)
                    next.at(y, x) = std::max({cur.at(2 * y, 2 * x), cur.at(2 * y, 2 * x + 1),
                                              cur.at(2 * y + 1, 2 * x), cur.at(2 * y + 1, 2 * x + 1)});
            cur = std::move(next);
        }
        pyramid.push_back(std::move(cur));
    }
    return pyramid;
}

AugmentParams draw_augment_params(Rng& rng, std::size_t src_h, std::size_t src_w,
                                  std::size_t out_h, std::size_t out_w) {
    if (src_h == 0 || src_w == 0 || out_h == 0 || out_w == 0)
        throw std::invalid_argument("draw_augment_params: zero dimension");
    // Smallest scale whose rounded dims still fit the output window.
    double feasible = std::max(static_cast<double>(out_h) / static_cast<double>(src_h),
                               static_cast<double>(out_w) / static_cast<double>(src_w));
    double lo = std::max(0.75, feasible);
    double hi = std::max(lo, 1.25);
    AugmentParams p;
    p.scale = rng.uniform(lo, hi);
    auto scaled = [&](std::size_t d) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                            static_cast<double>(d) * p.scale)));
    };
    std::size_t sh = std::max(scaled(src_h), out_h);
    std::size_t sw = std::max(scaled(src_w), out_w);
    p.offset_y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(sh - out_h)));
    p.offset_x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(sw - out_w)));
    return p;
}

Sample augment_crop_scale(const Sample& sample, const AugmentParams& params, std::size_t out_h,
                          std::size_t out_w) {
    const std::size_t src_h = sample.image.height, src_w = sample.image.width;
    if (sample.labels.height != src_h || sample.labels.width != src_w)
        throw std::invalid_argument("augment_crop_scale: image and labels disagree on size");
    auto scaled = [&](std::size_t d) {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(d) * params.scale)));
    };
    std::size_t sh = scaled(src_h), sw = scaled(src_w);
    if (out_h > sh || out_w > sw || params.offset_y + out_h > sh || params.offset_x + out_w > sw)
        throw std::invalid_argument(
            "augment_crop_scale: window " + std::to_string(out_h) + "x" + std::to_string(out_w) +
            " at (" + std::to_string(params.offset_y) + "," + std::to_string(params.offset_x) +
            ") exceeds scaled source " + std::to_string(sh) + "x" + std::to_string(sw));

    Sample out;
    out.id = sample.id;
    out.image = Image{out_h, out_w, std::vector<double>(3 * out_h * out_w)};
    out.labels = LabelMap{out_h, out_w, std::vector<std::uint8_t>(out_h * out_w)};
    // Nearest-neighbor: scaled pixel y reads source row y*src/scaled, an
    // exact identity when scale == 1.
    for (std::size_t y = 0; y < out_h; ++y) {
        std::size_t sy = ((params.offset_y + y) * src_h) / sh;
        for (std::size_t x = 0; x < out_w; ++x) {
            std::size_t sx = ((params.offset_x + x) * src_w) / sw;
            for (std::size_t c = 0; c < 3; ++c)
                out.image.at(c, y, x) = sample.image.at(c, sy, sx);
            out.labels.at(y, x) = sample.labels.at(sy, sx);
        }
    }
    return out;
}

std::array<std::uint8_t, 3> class_color(std::size_t cls, std::size_t num_classes) {
    if (cls == 0 || num_classes < 2) return {0, 0, 0};
    // Fully saturated hue wheel positions at 360*(k-1)/(C-1) degrees; the
    // last class stays short of wrapping back onto class 1's red.
    double hue = 360.0 * static_cast<double>(cls - 1) / static_cast<double>(num_classes - 1);
    double hp = hue / 60.0;
    double x = 1.0 - std::abs(std::fmod(hp, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = 1; g = x; }
    else if (hp < 2) { r = x; g = 1; }
    else if (hp < 3) { g = 1; b = x; }
    else if (hp < 4) { g = x; b = 1; }
    else if (hp < 5) { r = x; b = 1; }
    else             { r = 1; b = x; }
    return {static_cast<std::uint8_t>(std::round(r * 255.0)),
            static_cast<std::uint8_t>(std::round(g * 255.0)),
            static_cast<std::uint8_t>(std::round(b * 255.0))};
}

Image colorize_labels(const LabelMap& labels, std::size_t num_classes) {
    Image img{labels.height, labels.width, std::vector<double>(3 * labels.height * labels.width)};
    for (std::size_t y = 0; y < labels.height; ++y)
        for (std::size_t x = 0; x < labels.width; ++x) {
            auto rgb = class_color(labels.at(y, x), num_classes);
            for (std::size_t c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<double>(rgb[c]) / 255.0;
        }
    return img;
}

Tensor to_tensor(const Image& image) {
    NoGradGuard ng;
    return Tensor::from_vector({3, image.height, image.width}, image.pixels);
}

}  // namespace befseg
