#include "dumlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dumlab::eval {

double accuracy(const std::vector<size_t>& pred, const std::vector<size_t>& truth) {
    if (pred.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
    if (pred.empty()) throw ShapeError("accuracy: empty input");
    size_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double brier(const Tensor& probs, const std::vector<size_t>& truth) {
    if (probs.rank() != 2) throw ShapeError("brier expects N x C probabilities");
    const size_t n = probs.rows(), c = probs.cols();
    if (truth.size() != n) throw ShapeError("brier: length mismatch");
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (size_t j = 0; j < c; ++j) row_sum += probs.at(i, j);
        if (std::abs(row_sum - 1.0) > 1e-6)
            throw DomainError("brier: probability row " + std::to_string(i) + " sums to " +
                              std::to_string(row_sum));
        if (truth[i] >= c) throw ShapeError("brier: label out of range");
        for (size_t j = 0; j < c; ++j) {
            const double target = truth[i] == j ? 1.0 : 0.0;
            const double d = probs.at(i, j) - target;
            total += d * d;
        }
    }
    return total / static_cast<double>(n);
}

double auroc(const std::vector<double>& id_uncertainty, const std::vector<double>& ood_uncertainty) {
    const size_t n = id_uncertainty.size(), m = ood_uncertainty.size();
    if (n == 0 || m == 0) throw ShapeError("auroc needs nonempty score sets");

    struct Entry {
        double score;
        bool ood;
    };
    std::vector<Entry> all;
    all.reserve(n + m);
    for (double s : id_uncertainty) all.push_back({s, false});
    for (double s : ood_uncertainty) all.push_back({s, true});
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // average ranks over tie groups, then the Mann-Whitney statistic
    double ood_rank_sum = 0.0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (size_t k = i; k < j; ++k)
            if (all[k].ood) ood_rank_sum += avg_rank;
        i = j;
    }
    const double u = ood_rank_sum - 0.5 * static_cast<double>(m) * static_cast<double>(m + 1);
    return u / (static_cast<double>(n) * static_cast<double>(m));
}

GridExport uncertainty_grid(const std::function<Tensor(const Tensor&)>& field, double extent,
                            size_t resolution) {
    if (resolution < 2) throw ConfigError("grid resolution must be at least 2");
    GridExport g;
    g.x_min = g.y_min = -extent;
    g.x_max = g.y_max = extent;
    g.resolution = resolution;
    const double step = 2.0 * extent / static_cast<double>(resolution - 1);
    std::vector<double> pts;
    pts.reserve(resolution * resolution * 2);
    for (size_t i = 0; i < resolution; ++i)
        for (size_t j = 0; j < resolution; ++j) {
            pts.push_back(-extent + static_cast<double>(j) * step);
            pts.push_back(-extent + static_cast<double>(i) * step);
        }
    Tensor values = field(Tensor({resolution * resolution, 2}, std::move(pts)));
    if (values.numel() != resolution * resolution) throw ShapeError("grid field returned wrong count");
    g.values = values.data();
    return g;
}

std::string GridExport::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "x_min,x_max,y_min,y_max,resolution\n"
        << x_min << ',' << x_max << ',' << y_min << ',' << y_max << ',' << resolution << "\nvalue\n";
    for (double v : values) out << v << '\n';
    return out.str();
}

MetricSummary aggregate(const std::vector<double>& values) {
    if (values.empty()) throw ShapeError("aggregate needs at least one value");
    MetricSummary s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
        s.has_std = true;
    }
    return s;
}

std::string MetricSummary::render(int precision) const {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(precision);
    out << mean;
    if (has_std) out << " ± " << std;
    return out.str();
}

}  // namespace dumlab::eval
