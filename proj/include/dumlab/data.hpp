#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dumlab/tensor.hpp"

namespace dumlab::data {

enum class Role { Train, Val, Test, Ood };

std::string role_name(Role r);
Role role_from_name(const std::string& s);

struct Dataset {
    Tensor inputs;               // N x D
    std::vector<size_t> labels;  // N entries in [0, num_classes)
    size_t num_classes = 0;
    std::string name;
    Role role = Role::Train;

    size_t size() const { return labels.size(); }
    size_t dim() const { return inputs.shape()[1]; }
    void validate() const;  // label range and row count invariants
};

struct ToySpec {
    // classes differ only along x: shared y center triggers latent collapse
    std::vector<std::array<double, 2>> centers = {{-2.0, 0.0}, {2.0, 0.0}};
    size_t per_class = 500;
    double stddev = 0.5;
    double grid_extent = 6.0;  // probe lattice over [-extent, extent]^2
    size_t grid_resolution = 50;
};

struct CollapseToy {
    Dataset dataset;
    Tensor grid;  // resolution^2 x 2 unlabeled probe points
};

CollapseToy make_collapse_toy(const ToySpec& spec, uint64_t seed);

// IDX ingest: pixels scaled to [0,1]. Standardization to train statistics is
// a separate step so the same statistics can be reused for val/test/OOD.
Dataset read_idx(const std::string& images_path, const std::string& labels_path);

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;  // floored at 1e-8
};

Standardizer fit_standardizer(const Dataset& train);
Dataset standardize(const Dataset& d, const Standardizer& s);

// 1x28x28 -> 3x28x28 with one channel zeroed uniformly at random per sample
Dataset make_cmnist(const Dataset& d, uint64_t seed);

// scale already-normalized inputs by 255; result role is Ood
Dataset make_oodom(const Dataset& d);

// reassign ceil(rho*N) uniformly chosen train labels to uniform random classes
Dataset inject_label_noise(const Dataset& d, double rho, uint64_t seed);

// 80/20 split of a training pool, permutation keyed by seed, floor on val
std::pair<Dataset, Dataset> split(const Dataset& d, uint64_t seed);

void write_idx(const std::string& images_path, const std::string& labels_path,
               const std::vector<uint8_t>& pixels, size_t n, size_t rows, size_t cols,
               const std::vector<uint8_t>& labels);

// Deterministic 10-class 28x28 stroke-glyph corpus. Different family names
// give geometrically different glyph sets, which is how the desk-scale
// MNIST-class ID/OOD pairs are produced without shipping image corpora.
void write_synth_glyphs(const std::string& images_path, const std::string& labels_path,
                        const std::string& family, size_t n, uint64_t seed);

}  // namespace dumlab::data
