#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "befseg/image.hpp"
#include "befseg/rng.hpp"

using namespace befseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* leaf) {
    fs::path dir = fs::temp_directory_path() / "befseg_imaging" / leaf;
    fs::create_directories(dir);
    return dir;
}

Image constant_image(std::size_t h, std::size_t w, double v) {
    return Image{h, w, std::vector<double>(3 * h * w, v)};
}

// all three channels equal zero left of `split`, one from it onward
Image vertical_step(std::size_t h, std::size_t w, std::size_t split) {
    Image img = constant_image(h, w, 0.0);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = split; x < w; ++x) img.at(c, y, x) = 1.0;
    return img;
}

}  // namespace

TEST_CASE("ppm round trip within 8-bit quantization") {
    fs::path dir = scratch_dir("ppm");
    Rng rng(11);
    Image img{5, 7, {}};
    img.pixels.resize(3 * 5 * 7);
    for (double& v : img.pixels) v = rng.uniform();

    std::string path = (dir / "img.ppm").string();
    write_ppm(path, img);
    Image back = read_ppm(path);
    REQUIRE(back.height == 5);
    REQUIRE(back.width == 7);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        max_diff = std::max(max_diff, std::abs(img.pixels[i] - back.pixels[i]));
    CHECK(max_diff <= 0.5 / 255.0 + 1e-12);

    // a second read-write cycle is exact: quantization is idempotent
    std::string path2 = (dir / "img2.ppm").string();
    write_ppm(path2, back);
    Image back2 = read_ppm(path2);
    CHECK(back2.pixels == back.pixels);
    fs::remove_all(dir);
}

TEST_CASE("pgm gray decoding hits exact quantization levels") {
    fs::path dir = scratch_dir("pgm");
    std::string path = (dir / "levels.pgm").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n2 2\n255\n";
        unsigned char payload[4] = {0, 85, 170, 255};
        out.write(reinterpret_cast<const char*>(payload), 4);
    }
    EdgeMap em = read_pgm_gray(path);
    REQUIRE(em.values.size() == 4);
    CHECK(em.values[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(em.values[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(em.values[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(em.values[3] == doctest::Approx(1.0).epsilon(1e-15));
    fs::remove_all(dir);
}

TEST_CASE("pgm label maps store raw class indices") {
    fs::path dir = scratch_dir("labels");
    LabelMap lm{2, 3, {0, 1, 2, 3, 2, 1}};
    std::string path = (dir / "labels.pgm").string();
    write_pgm(path, lm);
    LabelMap back = read_pgm_labels(path);
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    CHECK(back.labels == lm.labels);

    // raw bytes after the header are the indices themselves
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes.substr(bytes.size() - 6) == std::string("\x00\x01\x02\x03\x02\x01", 6));
    fs::remove_all(dir);
}

TEST_CASE("netpbm errors are distinct and descriptive") {
    fs::path dir = scratch_dir("errors");
    auto write_bytes = [&](const char* name, const std::string& bytes) {
        std::string path = (dir / name).string();
        std::ofstream out(path, std::ios::binary);
        out << bytes;
        return path;
    };

    std::string magic = write_bytes("magic.ppm", "P7\n2 2\n255\n0000");
    CHECK_THROWS_WITH_AS(read_ppm(magic), doctest::Contains("bad magic"), std::runtime_error);

    std::string maxval = write_bytes("maxval.pgm", "P5\n2 2\n128\n0000");
    CHECK_THROWS_WITH_AS(read_pgm_gray(maxval), doctest::Contains("maxval"), std::runtime_error);

    std::string trunc = write_bytes("trunc.ppm", "P6\n4 4\n255\nxx");
    CHECK_THROWS_WITH_AS(read_ppm(trunc), doctest::Contains("truncated"), std::runtime_error);

    std::string header = write_bytes("header.ppm", "P6\n2");
    CHECK_THROWS_AS(read_ppm(header), std::runtime_error);

    CHECK_THROWS_AS(read_ppm((dir / "missing.ppm").string()), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("edge extraction on flat and step images") {
    // constant image: zero gradient everywhere
    EdgeMap flat = sobel_edge(constant_image(6, 6, 0.4));
    for (double v : flat.values) CHECK(v == 0.0);

    // offset invariance: shifting all pixels leaves the edge map unchanged
    Rng rng(3);
    Image base = constant_image(8, 8, 0.0);
    for (double& v : base.pixels) v = rng.uniform(0.0, 0.5);
    Image shifted = base;
    for (double& v : shifted.pixels) v += 0.25;
    EdgeMap e1 = sobel_edge(base);
    EdgeMap e2 = sobel_edge(shifted);
    for (std::size_t i = 0; i < e1.values.size(); ++i)
        CHECK(e1.values[i] == doctest::Approx(e2.values[i]).epsilon(1e-12));

    // vertical 0->1 step at column 3 of a 6-wide image: the two columns
    // beside the step read 4/(4*sqrt(2)), everything else is flat
    EdgeMap step = sobel_edge(vertical_step(6, 6, 3));
    const double kStepMag = 0.7071067811865476;  // 1/sqrt(2)
    for (std::size_t y = 0; y < 6; ++y) {
        CHECK(step.at(y, 2) == doctest::Approx(kStepMag).epsilon(1e-12));
        CHECK(step.at(y, 3) == doctest::Approx(kStepMag).epsilon(1e-12));
        CHECK(step.at(y, 0) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(step.at(y, 5) == doctest::Approx(0.0).epsilon(1e-12));
    }

    // horizontal step gives the same magnitudes through the transposed kernel
    Image horizontal = constant_image(6, 6, 0.0);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 3; y < 6; ++y)
            for (std::size_t x = 0; x < 6; ++x) horizontal.at(c, y, x) = 1.0;
    EdgeMap hstep = sobel_edge(horizontal);
    for (std::size_t x = 0; x < 6; ++x) {
        CHECK(hstep.at(2, x) == doctest::Approx(kStepMag).epsilon(1e-12));
        CHECK(hstep.at(3, x) == doctest::Approx(kStepMag).epsilon(1e-12));
    }

    // every output stays inside [0,1]
    for (double v : step.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("edge map of a mirrored image is the mirrored edge map") {
    Rng rng(17);
    Image img = constant_image(7, 9, 0.0);
    for (double& v : img.pixels) v = rng.uniform();

    Image mirrored = img;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x)
                mirrored.at(c, y, x) = img.at(c, y, img.width - 1 - x);

    EdgeMap e = sobel_edge(img);
    EdgeMap em = sobel_edge(mirrored);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            CHECK(em.at(y, x) == doctest::Approx(e.at(y, img.width - 1 - x)).epsilon(1e-12));
}

TEST_CASE("edge pyramid downscaling") {
    // a single lit pixel survives max-pooling exactly once per level
    EdgeMap em{4, 4, std::vector<double>(16, 0.0)};
    em.at(1, 2) = 1.0;
    EdgePyramid pyr = build_edge_pyramid(em, {{4, 4}, {2, 2}, {1, 1}});
    REQUIRE(pyr.size() == 3);
    CHECK(pyr[0].values == em.values);
    CHECK(pyr[1].height == 2);
    int lit = 0;
    for (double v : pyr[1].values) lit += (v == 1.0) ? 1 : 0;
    CHECK(lit == 1);
    CHECK(pyr[1].at(0, 1) == 1.0);
    CHECK(pyr[2].values == std::vector<double>{1.0});

    // all-zero input stays zero at every scale
    EdgeMap zero{8, 8, std::vector<double>(64, 0.0)};
    for (const EdgeMap& level : build_edge_pyramid(zero, {{4, 4}, {2, 2}}))
        for (double v : level.values) CHECK(v == 0.0);

    // max never grows while pooling
    Rng rng(5);
    EdgeMap rnd{8, 8, std::vector<double>(64)};
    for (double& v : rnd.values) v = rng.uniform();
    double src_max = *std::max_element(rnd.values.begin(), rnd.values.end());
    for (const EdgeMap& level : build_edge_pyramid(rnd, {{4, 4}, {2, 2}, {1, 1}})) {
        double m = *std::max_element(level.values.begin(), level.values.end());
        CHECK(m <= src_max + 1e-15);
    }

    CHECK_THROWS_AS(build_edge_pyramid(em, {{4, 2}}), std::invalid_argument);  // nonuniform
    CHECK_THROWS_AS(build_edge_pyramid(em, {{3, 3}}), std::invalid_argument);  // not a divisor
}

TEST_CASE("augmentation identity, consistency, determinism") {
    Rng rng(29);
    Sample s;
    s.image = constant_image(16, 16, 0.0);
    for (double& v : s.image.pixels) v = rng.uniform();
    s.labels = LabelMap{16, 16, std::vector<std::uint8_t>(256)};
    for (auto& l : s.labels.labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 3));

    // scale 1 with a full-frame window is the identity
    Sample same = augment_crop_scale(s, AugmentParams{1.0, 0, 0}, 16, 16);
    CHECK(same.image.pixels == s.image.pixels);
    CHECK(same.labels.labels == s.labels.labels);

    // image and labels crop through the same geometry: a label sentinel
    // planted at a known source pixel travels with its image value
    Sample marked = s;
    marked.labels.at(5, 6) = 3;
    marked.image.at(0, 5, 6) = 0.123;
    Sample crop = augment_crop_scale(marked, AugmentParams{1.0, 5, 6}, 4, 4);
    CHECK(crop.labels.at(0, 0) == 3);
    CHECK(crop.image.at(0, 0, 0) == 0.123);

    // the output alphabet is a subset of the input alphabet
    std::set<int> in_alpha(s.labels.labels.begin(), s.labels.labels.end());
    Rng draw(101);
    for (int trial = 0; trial < 20; ++trial) {
        AugmentParams p = draw_augment_params(draw, 16, 16, 12, 12);
        Sample aug = augment_crop_scale(s, p, 12, 12);
        CHECK(aug.image.height == 12);
        CHECK(aug.labels.width == 12);
        for (auto l : aug.labels.labels) CHECK(in_alpha.count(l) == 1);
    }

    // a reseeded generator reproduces parameters and output exactly
    Rng d1(7), d2(7);
    AugmentParams p1 = draw_augment_params(d1, 16, 16, 12, 12);
    AugmentParams p2 = draw_augment_params(d2, 16, 16, 12, 12);
    CHECK(p1.scale == p2.scale);
    CHECK(p1.offset_y == p2.offset_y);
    CHECK(p1.offset_x == p2.offset_x);
    Sample a1 = augment_crop_scale(s, p1, 12, 12);
    Sample a2 = augment_crop_scale(s, p2, 12, 12);
    CHECK(a1.image.pixels == a2.image.pixels);
    CHECK(a1.labels.labels == a2.labels.labels);

    // equal source and output sizes force the scale draw to stay >= 1
    Rng d3(13);
    for (int trial = 0; trial < 50; ++trial) {
        AugmentParams p = draw_augment_params(d3, 16, 16, 16, 16);
        CHECK(p.scale >= 1.0);
        Sample aug = augment_crop_scale(s, p, 16, 16);  // must not throw
        CHECK(aug.image.height == 16);
    }

    // an infeasible window is rejected with the geometry in the message
    CHECK_THROWS_AS(augment_crop_scale(s, AugmentParams{1.0, 0, 0}, 20, 20),
                    std::invalid_argument);
    CHECK_THROWS_AS(augment_crop_scale(s, AugmentParams{1.0, 8, 8}, 12, 12),
                    std::invalid_argument);
}

TEST_CASE("label colorization round trips through the palette") {
    const std::size_t num_classes = 4;
    CHECK(class_color(0, num_classes) == std::array<std::uint8_t, 3>{0, 0, 0});

    // palette must be injective
    std::set<std::array<std::uint8_t, 3>> seen;
    for (std::size_t k = 0; k < num_classes; ++k) seen.insert(class_color(k, num_classes));
    CHECK(seen.size() == num_classes);

    // inverse lookup over quantized pixels recovers the labels exactly
    LabelMap lm{2, 4, {0, 1, 2, 3, 3, 2, 1, 0}};
    Image img = colorize_labels(lm, num_classes);
    std::map<std::array<std::uint8_t, 3>, std::uint8_t> inverse;
    for (std::size_t k = 0; k < num_classes; ++k)
        inverse[class_color(k, num_classes)] = static_cast<std::uint8_t>(k);
    for (std::size_t y = 0; y < lm.height; ++y)
        for (std::size_t x = 0; x < lm.width; ++x) {
            std::array<std::uint8_t, 3> rgb{
                static_cast<std::uint8_t>(std::round(img.at(0, y, x) * 255.0)),
                static_cast<std::uint8_t>(std::round(img.at(1, y, x) * 255.0)),
                static_cast<std::uint8_t>(std::round(img.at(2, y, x) * 255.0))};
            REQUIRE(inverse.count(rgb) == 1);
            CHECK(inverse[rgb] == lm.at(y, x));
        }

    // all-zero labels paint an all-black image
    LabelMap zeros{3, 3, std::vector<std::uint8_t>(9, 0)};
    for (double v : colorize_labels(zeros, num_classes).pixels) CHECK(v == 0.0);

    // palettes stay injective for wider alphabets too
    std::set<std::array<std::uint8_t, 3>> wide;
    for (std::size_t k = 0; k < 16; ++k) wide.insert(class_color(k, 16));
    CHECK(wide.size() == 16);
}

TEST_CASE("image tensor view is planar") {
    Image img = constant_image(2, 2, 0.0);
    img.at(0, 0, 0) = 0.1;  // red plane
    img.at(1, 1, 1) = 0.2;  // green plane
    img.at(2, 0, 1) = 0.3;  // blue plane
    Tensor t = to_tensor(img);
    CHECK(t.shape() == Shape{3, 2, 2});
    CHECK(t.values()[0] == 0.1);
    CHECK(t.values()[4 + 3] == 0.2);
    CHECK(t.values()[8 + 1] == 0.3);
    CHECK_FALSE(t.requires_grad());
}
