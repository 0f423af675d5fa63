#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "dumlab/data.hpp"

using namespace dumlab;
using namespace dumlab::data;

namespace {
Dataset ones_image_dataset(size_t n) {
    Dataset d;
    d.inputs = Tensor({n, 784}, 1.0);
    d.labels.assign(n, 0);
    d.num_classes = 10;
    d.name = "ones";
    d.role = Role::Train;
    return d;
}
}  // namespace

TEST_CASE("collapse toy: means, grid, balance") {
    ToySpec spec;
    auto toy = make_collapse_toy(spec, 0);
    CHECK(toy.dataset.num_classes == 2);
    CHECK(toy.dataset.size() == 1000);
    // class means within 3*std/sqrt(n) of the centers
    const double tol = 3.0 * spec.stddev / std::sqrt(static_cast<double>(spec.per_class));
    for (size_t k = 0; k < 2; ++k) {
        double mx = 0.0, my = 0.0;
        size_t cnt = 0;
        for (size_t i = 0; i < toy.dataset.size(); ++i)
            if (toy.dataset.labels[i] == k) {
                mx += toy.dataset.inputs.at(i, 0);
                my += toy.dataset.inputs.at(i, 1);
                ++cnt;
            }
        CHECK(cnt == spec.per_class);
        CHECK(std::abs(mx / cnt - spec.centers[k][0]) < tol);
        CHECK(std::abs(my / cnt - spec.centers[k][1]) < tol);
    }
    CHECK(toy.grid.shape() == Shape{2500, 2});

    auto toy1 = make_collapse_toy(spec, 1);
    CHECK(toy1.dataset.inputs.data() != toy.dataset.inputs.data());
    CHECK(toy1.dataset.labels == toy.dataset.labels);  // identical class balance/order

    // purity: re-invocation is bit identical
    auto again = make_collapse_toy(spec, 0);
    CHECK(again.dataset.inputs.data() == toy.dataset.inputs.data());
    CHECK(again.grid.data() == toy.grid.data());
}

TEST_CASE("idx round trip and error paths") {
    const std::string img = "/tmp/dumlab_test_images.idx";
    const std::string lab = "/tmp/dumlab_test_labels.idx";
    std::vector<uint8_t> pix(4 * 28 * 28, 0);
    for (size_t i = 0; i < pix.size(); ++i) pix[i] = static_cast<uint8_t>(i % 251);
    write_idx(img, lab, pix, 4, 28, 28, {0, 1, 2, 3});

    Dataset d = read_idx(img, lab);
    CHECK(d.inputs.shape() == Shape{4, 784});
    CHECK(d.labels == std::vector<size_t>{0, 1, 2, 3});
    CHECK(d.inputs.at(0, 1) == doctest::Approx(1.0 / 255.0));

    // all-zero image standardizes to -mu/sigma per pixel
    Standardizer s = fit_standardizer(d);
    Dataset zeroed = d;
    zeroed.inputs = Tensor({4, 784}, 0.0);
    Dataset z = standardize(zeroed, s);
    for (size_t j = 0; j < 784; ++j) CHECK(z.inputs.at(2, j) == doctest::Approx(-s.mean[j] / s.stddev[j]));

    // truncated image payload
    {
        std::ofstream out("/tmp/dumlab_trunc.idx", std::ios::binary);
        std::ifstream in(img, std::ios::binary);
        std::vector<char> head(100);
        in.read(head.data(), 100);
        out.write(head.data(), 100);
    }
    CHECK_THROWS_AS(read_idx("/tmp/dumlab_trunc.idx", lab), FormatError);
    // label magic where an image magic is expected
    CHECK_THROWS_AS(read_idx(lab, lab), FormatError);
    // count mismatch
    write_idx("/tmp/dumlab_img5.idx", "/tmp/dumlab_lab5.idx", std::vector<uint8_t>(5 * 784, 0), 5, 28, 28,
              std::vector<uint8_t>(5, 0));
    CHECK_THROWS_AS(read_idx(img, "/tmp/dumlab_lab5.idx"), FormatError);
}

TEST_CASE("cmnist construction") {
    Dataset ones = ones_image_dataset(12);
    Dataset c = make_cmnist(ones, 0);
    CHECK(c.dim() == 3 * 784);
    // exactly 2/3 of entries stay 1
    size_t kept = 0;
    for (double v : c.inputs.data()) kept += v == 1.0;
    CHECK(kept == 12 * 2 * 784);

    // zeroed-channel frequencies ~ uniform over 10k samples (chi^2, df=2, alpha=0.01)
    Dataset big = ones_image_dataset(10000);
    Dataset cb = make_cmnist(big, 42);
    size_t counts[3] = {0, 0, 0};
    for (size_t i = 0; i < 10000; ++i)
        for (size_t ch = 0; ch < 3; ++ch)
            if (cb.inputs.data()[i * 3 * 784 + ch * 784] == 0.0) counts[ch]++;
    const double expect = 10000.0 / 3.0;
    double chi2 = 0.0;
    for (size_t ch = 0; ch < 3; ++ch) chi2 += (counts[ch] - expect) * (counts[ch] - expect) / expect;
    CHECK(chi2 < 9.21);

    // determinism and wrong input dimensionality
    Dataset cb2 = make_cmnist(big, 42);
    CHECK(cb2.inputs.data() == cb.inputs.data());
    Dataset bad = ones;
    bad.inputs = Tensor({12, 100}, 1.0);
    CHECK_THROWS_AS(make_cmnist(bad, 0), ShapeError);
}

TEST_CASE("oodom scaling") {
    Dataset d = ones_image_dataset(3);
    d.inputs = Tensor({3, 784}, 0.5);
    Dataset o = make_oodom(d);
    CHECK(o.role == Role::Ood);
    CHECK(o.inputs.at(0, 0) == doctest::Approx(127.5));
    double m0 = 0.0, m1 = 0.0;
    for (double v : d.inputs.data()) m0 += v;
    for (double v : o.inputs.data()) m1 += v;
    CHECK(m1 == doctest::Approx(255.0 * m0));
    Dataset twice = make_oodom(o);
    CHECK(twice.inputs.at(0, 0) == doctest::Approx(0.5 * 255.0 * 255.0));
    // input untouched
    CHECK(d.inputs.at(0, 0) == 0.5);
}

TEST_CASE("label noise") {
    Dataset d = ones_image_dataset(1000);
    for (size_t i = 0; i < 1000; ++i) d.labels[i] = i % 10;

    Dataset same = inject_label_noise(d, 0.0, 3);
    CHECK(same.labels == d.labels);

    Dataset touched = inject_label_noise(d, 0.1, 3);
    // exactly ceil(0.1*1000)=100 indices are resampled (some may keep their class)
    size_t changed = 0;
    for (size_t i = 0; i < 1000; ++i) changed += touched.labels[i] != d.labels[i];
    CHECK(changed <= 100);
    CHECK(changed >= 80);  // ~10% of the 100 resamples repeat the original

    // rho=1, C=10: about 10% coincide with the original label (binomial CI over 10k)
    Dataset big = ones_image_dataset(10000);
    for (size_t i = 0; i < 10000; ++i) big.labels[i] = i % 10;
    Dataset noisy = inject_label_noise(big, 1.0, 7);
    size_t unchanged = 0;
    for (size_t i = 0; i < 10000; ++i) unchanged += noisy.labels[i] == big.labels[i];
    // p=0.1, n=10000: mean 1000, sd = sqrt(n p (1-p)) = 30; 4 sigma band
    CHECK(unchanged > 1000 - 120);
    CHECK(unchanged < 1000 + 120);

    CHECK_THROWS_AS(inject_label_noise(d, 1.5, 0), ConfigError);
    Dataset test_role = d;
    test_role.role = Role::Test;
    CHECK_THROWS_AS(inject_label_noise(test_role, 0.1, 0), ConfigError);
}

TEST_CASE("train/val split") {
    Dataset d = ones_image_dataset(100);
    for (size_t i = 0; i < 100; ++i) {
        d.labels[i] = i % 10;
        d.inputs.at(i, 0) = static_cast<double>(i);  // row identity marker
    }
    auto [tr, va] = split(d, 0);
    CHECK(tr.size() == 80);
    CHECK(va.size() == 20);
    CHECK(tr.role == Role::Train);
    CHECK(va.role == Role::Val);

    // disjoint and union-complete over the identity marker
    std::vector<bool> seen(100, false);
    for (size_t i = 0; i < tr.size(); ++i) seen[static_cast<size_t>(tr.inputs.at(i, 0))] = true;
    for (size_t i = 0; i < va.size(); ++i) {
        const size_t id = static_cast<size_t>(va.inputs.at(i, 0));
        CHECK(!seen[id]);
        seen[id] = true;
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));

    auto [tr2, va2] = split(d, 0);
    CHECK(tr2.inputs.data() == tr.inputs.data());
    CHECK(va2.labels == va.labels);

    Dataset tiny = ones_image_dataset(5);
    auto [t5, v5] = split(tiny, 1);
    CHECK(t5.size() == 4);
    CHECK(v5.size() == 1);
    Dataset too_small = ones_image_dataset(4);
    CHECK_THROWS_AS(split(too_small, 0), ConfigError);
}

TEST_CASE("synthetic glyph corpus is deterministic and balanced") {
    write_synth_glyphs("/tmp/dumlab_g1.idx", "/tmp/dumlab_g1l.idx", "digits", 200, 0);
    write_synth_glyphs("/tmp/dumlab_g2.idx", "/tmp/dumlab_g2l.idx", "digits", 200, 0);
    Dataset a = read_idx("/tmp/dumlab_g1.idx", "/tmp/dumlab_g1l.idx");
    Dataset b = read_idx("/tmp/dumlab_g2.idx", "/tmp/dumlab_g2l.idx");
    CHECK(a.inputs.data() == b.inputs.data());
    size_t per_class[10] = {};
    for (size_t y : a.labels) per_class[y]++;
    for (size_t k = 0; k < 10; ++k) CHECK(per_class[k] == 20);
    // different family, different images
    write_synth_glyphs("/tmp/dumlab_g3.idx", "/tmp/dumlab_g3l.idx", "kana", 200, 0);
    Dataset c = read_idx("/tmp/dumlab_g3.idx", "/tmp/dumlab_g3l.idx");
    CHECK(c.inputs.data() != a.inputs.data());
}
