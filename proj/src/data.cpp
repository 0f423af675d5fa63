#include "dumlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dumlab::data {

std::string role_name(Role r) {
    switch (r) {
        case Role::Train: return "train";
        case Role::Val: return "val";
        case Role::Test: return "test";
        case Role::Ood: return "ood";
    }
    return "?";
}

Role role_from_name(const std::string& s) {
    if (s == "train") return Role::Train;
    if (s == "val") return Role::Val;
    if (s == "test") return Role::Test;
    if (s == "ood") return Role::Ood;
    throw ConfigError("unknown dataset role '" + s + "'");
}

void Dataset::validate() const {
    if (inputs.rank() != 2) throw ShapeError("dataset inputs must be rank 2");
    if (inputs.shape()[0] != labels.size()) throw FormatError("dataset row/label count mismatch");
    for (size_t y : labels)
        if (y >= num_classes) throw FormatError("label out of range");
}

CollapseToy make_collapse_toy(const ToySpec& spec, uint64_t seed) {
    if (spec.centers.size() < 2) throw ConfigError("toy spec needs at least 2 centers");
    if (spec.stddev <= 0.0) throw ConfigError("toy spec needs stddev > 0");
    Rng rng(seed);
    const size_t c = spec.centers.size();
    const size_t n = c * spec.per_class;
    std::vector<double> x(n * 2);
    std::vector<size_t> labels(n);
    size_t row = 0;
    for (size_t k = 0; k < c; ++k)
        for (size_t i = 0; i < spec.per_class; ++i, ++row) {
            x[row * 2] = spec.centers[k][0] + spec.stddev * rng.normal();
            x[row * 2 + 1] = spec.centers[k][1] + spec.stddev * rng.normal();
            labels[row] = k;
        }
    Dataset d;
    d.inputs = Tensor({n, 2}, std::move(x));
    d.labels = std::move(labels);
    d.num_classes = c;
    d.name = "collapse_toy";
    d.role = Role::Train;

    const size_t res = spec.grid_resolution;
    std::vector<double> g(res * res * 2);
    for (size_t i = 0; i < res; ++i)
        for (size_t j = 0; j < res; ++j) {
            const double fx = res == 1 ? 0.5 : static_cast<double>(j) / (res - 1);
            const double fy = res == 1 ? 0.5 : static_cast<double>(i) / (res - 1);
            g[(i * res + j) * 2] = -spec.grid_extent + 2.0 * spec.grid_extent * fx;
            g[(i * res + j) * 2 + 1] = -spec.grid_extent + 2.0 * spec.grid_extent * fy;
        }
    return {std::move(d), Tensor({res * res, 2}, std::move(g))};
}

// ------------------------------------------------------------------ IDX

namespace {

uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated IDX file while reading " + what);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset read_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open IDX image file: " + images_path);
    if (read_be32(img, "image magic") != 0x00000803u) throw FormatError("bad IDX image magic in " + images_path);
    const uint32_t n = read_be32(img, "image count");
    const uint32_t rows = read_be32(img, "rows");
    const uint32_t cols = read_be32(img, "cols");
    std::vector<unsigned char> pix(static_cast<size_t>(n) * rows * cols);
    img.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    if (static_cast<size_t>(img.gcount()) != pix.size()) throw FormatError("truncated IDX image payload");

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open IDX label file: " + labels_path);
    if (read_be32(lab, "label magic") != 0x00000801u) throw FormatError("bad IDX label magic in " + labels_path);
    const uint32_t nl = read_be32(lab, "label count");
    if (nl != n) throw FormatError("IDX image/label count mismatch");
    std::vector<unsigned char> raw(nl);
    lab.read(reinterpret_cast<char*>(raw.data()), nl);
    if (static_cast<size_t>(lab.gcount()) != raw.size()) throw FormatError("truncated IDX label payload");

    const size_t d = static_cast<size_t>(rows) * cols;
    std::vector<double> x(pix.size());
    for (size_t i = 0; i < pix.size(); ++i) x[i] = pix[i] / 255.0;
    Dataset out;
    out.inputs = Tensor({n, d}, std::move(x));
    out.labels.assign(raw.begin(), raw.end());
    out.num_classes = 10;
    out.name = images_path;
    out.role = Role::Train;
    out.validate();
    return out;
}

void write_idx(const std::string& images_path, const std::string& labels_path,
               const std::vector<uint8_t>& pixels, size_t n, size_t rows, size_t cols,
               const std::vector<uint8_t>& labels) {
    if (pixels.size() != n * rows * cols || labels.size() != n) throw FormatError("write_idx size mismatch");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot write " + images_path);
    write_be32(img, 0x00000803u);
    write_be32(img, static_cast<uint32_t>(n));
    write_be32(img, static_cast<uint32_t>(rows));
    write_be32(img, static_cast<uint32_t>(cols));
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot write " + labels_path);
    write_be32(lab, 0x00000801u);
    write_be32(lab, static_cast<uint32_t>(n));
    lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

// ------------------------------------------------------------------ transforms

Standardizer fit_standardizer(const Dataset& train) {
    const size_t n = train.size(), d = train.dim();
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) s.mean[j] += train.inputs.data()[i * d + j];
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) {
            const double c = train.inputs.data()[i * d + j] - s.mean[j];
            s.stddev[j] += c * c;
        }
    for (double& v : s.stddev) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
    return s;
}

Dataset standardize(const Dataset& d, const Standardizer& s) {
    if (s.mean.size() != d.dim()) throw ShapeError("standardizer dimension mismatch");
    Dataset out = d;
    std::vector<double> x = d.inputs.data();
    const size_t dim = d.dim();
    for (size_t i = 0; i < d.size(); ++i)
        for (size_t j = 0; j < dim; ++j) x[i * dim + j] = (x[i * dim + j] - s.mean[j]) / s.stddev[j];
    out.inputs = Tensor({d.size(), dim}, std::move(x));
    return out;
}

Dataset make_cmnist(const Dataset& d, uint64_t seed) {
    if (d.dim() != 28 * 28) throw ShapeError("make_cmnist expects 1x28x28 inputs (D=784)");
    Rng rng(seed);
    const size_t n = d.size(), dim = d.dim();
    std::vector<double> x(n * 3 * dim);
    for (size_t i = 0; i < n; ++i) {
        const size_t zeroed = rng.integer(3);
        for (size_t ch = 0; ch < 3; ++ch) {
            double* dst = x.data() + i * 3 * dim + ch * dim;
            if (ch == zeroed) {
                std::fill(dst, dst + dim, 0.0);
            } else {
                std::memcpy(dst, d.inputs.data().data() + i * dim, dim * sizeof(double));
            }
        }
    }
    Dataset out = d;
    out.inputs = Tensor({n, 3 * dim}, std::move(x));
    out.name = d.name + "+cmnist";
    return out;
}

Dataset make_oodom(const Dataset& d) {
    Dataset out = d;
    std::vector<double> x = d.inputs.data();
    for (double& v : x) v *= 255.0;
    out.inputs = Tensor(d.inputs.shape(), std::move(x));
    out.role = Role::Ood;
    out.name = d.name + "+oodom";
    return out;
}

Dataset inject_label_noise(const Dataset& d, double rho, uint64_t seed) {
    if (rho < 0.0 || rho > 1.0) throw ConfigError("label noise fraction must be in [0,1]");
    if (d.role != Role::Train) throw ConfigError("label noise applies to the train split only");
    Dataset out = d;
    if (rho == 0.0) return out;
    Rng rng(seed);
    const size_t n = d.size();
    const size_t count = static_cast<size_t>(std::ceil(rho * static_cast<double>(n)));
    auto perm = rng.permutation(n);
    for (size_t i = 0; i < count; ++i)
        out.labels[perm[i]] = rng.integer(d.num_classes);  // may repeat the original class
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& d, uint64_t seed) {
    if (d.role != Role::Train) throw ConfigError("split expects the training pool");
    const size_t n = d.size();
    if (n < 5) throw ConfigError("split needs at least 5 samples");
    Rng rng(seed);
    auto perm = rng.permutation(n);
    const size_t n_val = n / 5;  // floor of 20%
    const size_t n_train = n - n_val;
    const size_t dim = d.dim();

    auto take = [&](size_t begin, size_t count, Role role, const char* suffix) {
        Dataset part;
        std::vector<double> x(count * dim);
        part.labels.resize(count);
        for (size_t i = 0; i < count; ++i) {
            const size_t src = perm[begin + i];
            std::memcpy(x.data() + i * dim, d.inputs.data().data() + src * dim, dim * sizeof(double));
            part.labels[i] = d.labels[src];
        }
        part.inputs = Tensor({count, dim}, std::move(x));
        part.num_classes = d.num_classes;
        part.name = d.name + suffix;
        part.role = role;
        return part;
    };
    return {take(0, n_train, Role::Train, "/train"), take(n_train, n_val, Role::Val, "/val")};
}

// ------------------------------------------------------------------ synthetic glyphs

namespace {

struct Segment {
    double x0, y0, x1, y1;
};

uint64_t family_seed(const std::string& family) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : family) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

// fixed stroke template per (family, class)
std::vector<Segment> glyph_template(const std::string& family, size_t cls) {
    Rng rng(family_seed(family) + 7919 * cls);
    const size_t strokes = 3 + rng.integer(3);
    std::vector<Segment> segs(strokes);
    for (auto& s : segs) {
        s.x0 = rng.uniform(6.0, 22.0);
        s.y0 = rng.uniform(6.0, 22.0);
        const double angle = rng.uniform(0.0, 6.2831853);
        const double len = rng.uniform(8.0, 16.0);
        s.x1 = std::clamp(s.x0 + len * std::cos(angle), 2.0, 26.0);
        s.y1 = std::clamp(s.y0 + len * std::sin(angle), 2.0, 26.0);
    }
    return segs;
}

void stamp(std::vector<double>& img, double cx, double cy, double intensity) {
    const int x0 = std::max(0, static_cast<int>(cx) - 2), x1 = std::min(27, static_cast<int>(cx) + 2);
    const int y0 = std::max(0, static_cast<int>(cy) - 2), y1 = std::min(27, static_cast<int>(cy) + 2);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            img[y * 28 + x] = std::max(img[y * 28 + x], intensity * std::exp(-d2 / 1.6));
        }
}

}  // namespace

void write_synth_glyphs(const std::string& images_path, const std::string& labels_path,
                        const std::string& family, size_t n, uint64_t seed) {
    Rng rng(seed ^ family_seed(family));
    std::vector<uint8_t> pixels(n * 784);
    std::vector<uint8_t> labels(n);
    std::vector<double> img(784);
    for (size_t i = 0; i < n; ++i) {
        const size_t cls = i % 10;  // balanced classes
        labels[i] = static_cast<uint8_t>(cls);
        std::fill(img.begin(), img.end(), 0.0);
        const auto segs = glyph_template(family, cls);
        // per-sample jitter: shift, rotation, scale, brightness
        const double dx = rng.uniform(-2.5, 2.5), dy = rng.uniform(-2.5, 2.5);
        const double theta = rng.uniform(-0.25, 0.25);
        const double scale = rng.uniform(0.85, 1.15);
        const double bright = rng.uniform(0.75, 1.0);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (const auto& s : segs) {
            auto tf = [&](double x, double y, double& ox, double& oy) {
                const double rx = (x - 14.0) * scale, ry = (y - 14.0) * scale;
                ox = 14.0 + ct * rx - st * ry + dx;
                oy = 14.0 + st * rx + ct * ry + dy;
            };
            double ax, ay, bx, by;
            tf(s.x0, s.y0, ax, ay);
            tf(s.x1, s.y1, bx, by);
            const double len = std::hypot(bx - ax, by - ay);
            const int steps = std::max(2, static_cast<int>(len * 2.0));
            for (int t = 0; t <= steps; ++t) {
                const double f = static_cast<double>(t) / steps;
                stamp(img, ax + f * (bx - ax), ay + f * (by - ay), 255.0 * bright);
            }
        }
        for (size_t p = 0; p < 784; ++p) {
            const double noisy = img[p] + 18.0 * rng.normal();
            pixels[i * 784 + p] = static_cast<uint8_t>(std::clamp(noisy, 0.0, 255.0));
        }
    }
    write_idx(images_path, labels_path, pixels, n, 28, 28, labels);
}

}  // namespace dumlab::data
