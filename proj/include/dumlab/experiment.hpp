#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dumlab/data.hpp"
#include "dumlab/encoder.hpp"
#include "dumlab/gp.hpp"
#include "dumlab/natpn.hpp"
#include "dumlab/trainer.hpp"

#include "json.hpp"

namespace dumlab {

inline constexpr int kSchemaVersion = 1;

// Extra evaluation corpus ranked against the in-distribution test set.
// kind "idx" reads image/label files, "synth" writes a glyph corpus to the
// paths first if missing, "oodom" scales the normalized test inputs by 255,
// and "grid" (toy only) uses the far probe-lattice points.
struct OodSpec {
    std::string name;
    std::string kind = "idx";
    std::string images, labels;
    std::string family;  // synth
    size_t count = 2000;
    uint64_t seed = 1;
    double min_radius = 4.0;  // grid: keep points with Chebyshev norm >= this
};

struct DatasetConfig {
    std::string kind = "toy";  // toy | idx | synth
    data::ToySpec toy;
    std::string train_images, train_labels, test_images, test_labels;
    std::string family = "digits";  // synth
    size_t train_count = 4000, test_count = 1000;
    uint64_t synth_seed = 1;
    bool standardize = true;
    std::vector<OodSpec> ood;
};

struct HeadConfig {
    std::string type = "natpn";  // natpn | due
    // natpn
    size_t flow_layers = 8;
    double n_prior = 0.0;  // <= 0 means "number of classes"
    std::vector<double> chi_prior;
    double entropy_lambda = 0.0;
    BudgetConfig budget;
    // due
    size_t num_inducing = 20;
    size_t train_samples = 8, eval_samples = 32;
    KernelConfig kernel;
};

struct EvalConfig {
    std::vector<std::string> metrics;  // empty selects every computed metric
    bool grid_export = false;
    double grid_extent = 6.0;
    size_t grid_resolution = 50;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string name;
    DatasetConfig dataset;
    EncoderConfig encoder;
    HeadConfig head;
    TrainPlan train;  // the seed field is overwritten per run seed
    EvalConfig eval;
    bool checkpoints = true;
    std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
    std::string output_dir;

    void validate() const;  // schema-level; dataset files are checked at run time
    nlohmann::json to_json() const;
    // throws ConfigError naming the dotted field path on any violation
    static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_config(const std::string& path);

struct RunOptions {
    std::vector<uint64_t> seeds;  // nonempty overrides the config list
    bool force = false;
    std::string out;  // nonempty overrides the config output_dir
};

// Per-seed build -> train -> evaluate -> CSV, then summary.json.
// Exit codes: 0 success, 1 diagnostic failure (e.g. existing results dir
// without --force), 2 config schema violation, 3 numerical failure.
int run_experiment(const std::string& config_path, const RunOptions& opts = {});

// One run_experiment per value with the dot-path leaf `axis` replaced, plus a
// combined long-format CSV keyed by (axis, value, seed). Unknown axis -> 2.
int run_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<std::string>& values, const RunOptions& opts = {});

// Write the canonical study configs into out_dir; unwritable dir -> 4.
int emit_recipes(const std::string& out_dir);
std::vector<std::string> recipe_names();

// seed-level evaluation result, also used by the aggregation step
struct SeedResult {
    uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> metrics;
};

std::string seed_csv(const SeedResult& r);
SeedResult parse_seed_csv(uint64_t seed, const std::string& csv);

// pure aggregation: summary.json content recomputed from per-seed rows
nlohmann::json summarize(const std::vector<SeedResult>& results);

// library entry point used by run_experiment and the tests; throws instead of
// returning exit codes
SeedResult run_seed(const ExperimentConfig& cfg, uint64_t seed, const std::string& out_dir);

}  // namespace dumlab
