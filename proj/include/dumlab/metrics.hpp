#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dumlab/tensor.hpp"

namespace dumlab::eval {

// fraction of exact label matches
double accuracy(const std::vector<size_t>& pred, const std::vector<size_t>& truth);

// multiclass Brier score (1/N) sum_i sum_c (p_ic - 1[y_i = c])^2; callers
// multiply by 100 for table-style reporting
double brier(const Tensor& probs, const std::vector<size_t>& truth);

// AUROC for ranking OOD (positives) above ID by uncertainty score, computed
// as a Mann-Whitney rank statistic with ties contributing 1/2
double auroc(const std::vector<double>& id_uncertainty, const std::vector<double>& ood_uncertainty);

struct GridExport {
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
    size_t resolution = 0;
    std::vector<double> values;  // row-major, resolution^2 entries
    std::string to_csv() const;
};

// evaluate a scalar field (log-density or predictive entropy) over the
// [-extent, extent]^2 lattice; `field` maps R^2 points (n x 2) to n values
GridExport uncertainty_grid(const std::function<Tensor(const Tensor&)>& field, double extent,
                            size_t resolution);

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
    bool has_std = false;  // needs >= 2 seeds
    std::string render(int precision = 2) const;  // "71.12 ± 0.18"
};

MetricSummary aggregate(const std::vector<double>& values);

}  // namespace dumlab::eval
