#include "dumlab/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <map>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "dumlab/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dumlab {

namespace {

// ---------------------------------------------------------------------------
// schema helpers: every violation names the dotted path of the offending field

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

std::string join_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

template <typename T>
T get_field(const json& j, const std::string& prefix, const std::string& key) {
    if (!j.is_object() || !j.contains(key)) schema_error(join_path(prefix, key), "missing field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        schema_error(join_path(prefix, key), "wrong type");
    }
}

template <typename T>
T get_or(const json& j, const std::string& prefix, const std::string& key, T def) {
    if (!j.is_object() || !j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        schema_error(join_path(prefix, key), "wrong type");
    }
}

// ---------------------------------------------------------------------------
// train-plan serialization

json schedule_to_json(const Schedule& s) {
    return {{"kind", schedule_name(s.kind)},
            {"eta_min", s.eta_min},
            {"milestones", s.milestones},
            {"factor", s.factor}};
}

Schedule schedule_from_json(const json& j, const std::string& prefix) {
    Schedule s;
    s.kind = schedule_from_name(get_or<std::string>(j, prefix, "kind", "constant"));
    s.eta_min = get_or<double>(j, prefix, "eta_min", 0.0);
    s.milestones = get_or<std::vector<double>>(j, prefix, "milestones", {0.7, 0.9});
    s.factor = get_or<double>(j, prefix, "factor", 0.2);
    return s;
}

std::string trainable_name(Trainable t) {
    switch (t) {
        case Trainable::EncoderHead: return "encoder_head";
        case Trainable::HeadOnly: return "head_only";
        case Trainable::EncoderOnly: return "encoder_only";
    }
    throw ConfigError("unknown trainable kind");
}

Trainable trainable_from_name(const std::string& s, const std::string& path) {
    if (s == "encoder_head") return Trainable::EncoderHead;
    if (s == "head_only") return Trainable::HeadOnly;
    if (s == "encoder_only") return Trainable::EncoderOnly;
    schema_error(path, "must be encoder_head, head_only or encoder_only");
}

json phase_to_json(const Phase& p) {
    return {{"name", p.name},
            {"epochs", p.epochs},
            {"encoder_lr", p.encoder_lr},
            {"head_lr", p.head_lr},
            {"encoder_optimizer", optimizer_name(p.encoder_optimizer)},
            {"head_optimizer", optimizer_name(p.head_optimizer)},
            {"encoder_schedule", schedule_to_json(p.encoder_schedule)},
            {"head_schedule", schedule_to_json(p.head_schedule)},
            {"encoder_weight_decay", p.encoder_weight_decay},
            {"head_weight_decay", p.head_weight_decay},
            {"trainable", trainable_name(p.trainable)},
            {"scheme", p.scheme},
            {"reset_last_layer", p.reset_last_layer}};
}

Phase phase_from_json(const json& j, const std::string& prefix) {
    Phase p;
    p.name = get_field<std::string>(j, prefix, "name");
    p.epochs = get_field<size_t>(j, prefix, "epochs");
    p.encoder_lr = get_or<double>(j, prefix, "encoder_lr", p.encoder_lr);
    p.head_lr = get_or<double>(j, prefix, "head_lr", p.head_lr);
    p.encoder_optimizer =
        optimizer_from_name(get_or<std::string>(j, prefix, "encoder_optimizer", "adamw"));
    p.head_optimizer = optimizer_from_name(get_or<std::string>(j, prefix, "head_optimizer", "adamw"));
    if (j.contains("encoder_schedule"))
        p.encoder_schedule = schedule_from_json(j.at("encoder_schedule"), prefix + ".encoder_schedule");
    if (j.contains("head_schedule"))
        p.head_schedule = schedule_from_json(j.at("head_schedule"), prefix + ".head_schedule");
    p.encoder_weight_decay = get_or<double>(j, prefix, "encoder_weight_decay", p.encoder_weight_decay);
    p.head_weight_decay = get_or<double>(j, prefix, "head_weight_decay", p.head_weight_decay);
    p.trainable = trainable_from_name(get_or<std::string>(j, prefix, "trainable", "encoder_head"),
                                      join_path(prefix, "trainable"));
    p.scheme = get_or<std::string>(j, prefix, "scheme", "joint");
    p.reset_last_layer = get_or<bool>(j, prefix, "reset_last_layer", false);
    return p;
}

json plan_to_json(const TrainPlan& plan) {
    json phases = json::array();
    for (const auto& p : plan.phases) phases.push_back(phase_to_json(p));
    return {{"batch_size", plan.batch_size}, {"phases", phases}};
}

TrainPlan plan_from_json(const json& j, const std::string& prefix) {
    TrainPlan plan;
    plan.batch_size = get_or<size_t>(j, prefix, "batch_size", 64);
    if (!j.is_object() || !j.contains("phases") || !j.at("phases").is_array())
        schema_error(join_path(prefix, "phases"), "missing phase list");
    size_t i = 0;
    for (const auto& pj : j.at("phases"))
        plan.phases.push_back(phase_from_json(pj, prefix + ".phases[" + std::to_string(i++) + "]"));
    return plan;
}

// ---------------------------------------------------------------------------
// dataset / head / eval blocks

json toy_to_json(const data::ToySpec& t) {
    json centers = json::array();
    for (const auto& c : t.centers) centers.push_back({c[0], c[1]});
    return {{"centers", centers},
            {"per_class", t.per_class},
            {"stddev", t.stddev},
            {"grid_extent", t.grid_extent},
            {"grid_resolution", t.grid_resolution}};
}

data::ToySpec toy_from_json(const json& j, const std::string& prefix) {
    data::ToySpec t;
    if (j.contains("centers")) {
        t.centers.clear();
        for (const auto& c : j.at("centers")) {
            if (!c.is_array() || c.size() != 2) schema_error(join_path(prefix, "centers"), "expects [x, y] pairs");
            t.centers.push_back({c[0].get<double>(), c[1].get<double>()});
        }
    }
    t.per_class = get_or<size_t>(j, prefix, "per_class", t.per_class);
    t.stddev = get_or<double>(j, prefix, "stddev", t.stddev);
    t.grid_extent = get_or<double>(j, prefix, "grid_extent", t.grid_extent);
    t.grid_resolution = get_or<size_t>(j, prefix, "grid_resolution", t.grid_resolution);
    return t;
}

json ood_to_json(const OodSpec& o) {
    return {{"name", o.name},       {"kind", o.kind}, {"images", o.images},
            {"labels", o.labels},   {"family", o.family}, {"count", o.count},
            {"seed", o.seed},       {"min_radius", o.min_radius}};
}

OodSpec ood_from_json(const json& j, const std::string& prefix) {
    OodSpec o;
    o.name = get_field<std::string>(j, prefix, "name");
    o.kind = get_or<std::string>(j, prefix, "kind", "idx");
    if (o.kind != "idx" && o.kind != "synth" && o.kind != "oodom" && o.kind != "grid")
        schema_error(join_path(prefix, "kind"), "must be idx, synth, oodom or grid");
    o.images = get_or<std::string>(j, prefix, "images", "");
    o.labels = get_or<std::string>(j, prefix, "labels", "");
    o.family = get_or<std::string>(j, prefix, "family", "");
    o.count = get_or<size_t>(j, prefix, "count", o.count);
    o.seed = get_or<uint64_t>(j, prefix, "seed", o.seed);
    o.min_radius = get_or<double>(j, prefix, "min_radius", o.min_radius);
    return o;
}

json dataset_to_json(const DatasetConfig& d) {
    json oods = json::array();
    for (const auto& o : d.ood) oods.push_back(ood_to_json(o));
    return {{"kind", d.kind},
            {"toy", toy_to_json(d.toy)},
            {"train_images", d.train_images},
            {"train_labels", d.train_labels},
            {"test_images", d.test_images},
            {"test_labels", d.test_labels},
            {"family", d.family},
            {"train_count", d.train_count},
            {"test_count", d.test_count},
            {"synth_seed", d.synth_seed},
            {"standardize", d.standardize},
            {"ood", oods}};
}

DatasetConfig dataset_from_json(const json& j, const std::string& prefix) {
    DatasetConfig d;
    d.kind = get_field<std::string>(j, prefix, "kind");
    if (d.kind != "toy" && d.kind != "idx" && d.kind != "synth")
        schema_error(join_path(prefix, "kind"), "must be toy, idx or synth");
    if (j.contains("toy")) d.toy = toy_from_json(j.at("toy"), prefix + ".toy");
    d.train_images = get_or<std::string>(j, prefix, "train_images", "");
    d.train_labels = get_or<std::string>(j, prefix, "train_labels", "");
    d.test_images = get_or<std::string>(j, prefix, "test_images", "");
    d.test_labels = get_or<std::string>(j, prefix, "test_labels", "");
    d.family = get_or<std::string>(j, prefix, "family", d.family);
    d.train_count = get_or<size_t>(j, prefix, "train_count", d.train_count);
    d.test_count = get_or<size_t>(j, prefix, "test_count", d.test_count);
    d.synth_seed = get_or<uint64_t>(j, prefix, "synth_seed", d.synth_seed);
    d.standardize = get_or<bool>(j, prefix, "standardize", true);
    if (j.contains("ood")) {
        size_t i = 0;
        for (const auto& oj : j.at("ood"))
            d.ood.push_back(ood_from_json(oj, prefix + ".ood[" + std::to_string(i++) + "]"));
    }
    if (d.kind != "toy") {
        for (const auto* f : {&d.train_images, &d.train_labels, &d.test_images, &d.test_labels})
            if (f->empty())
                schema_error(join_path(prefix, f == &d.train_images  ? "train_images"
                                               : f == &d.train_labels ? "train_labels"
                                               : f == &d.test_images  ? "test_images"
                                                                      : "test_labels"),
                             "required for kind '" + d.kind + "'");
    }
    return d;
}

json kernel_to_json(const KernelConfig& k) {
    return {{"family", kernel_name(k.family)},
            {"lengthscale", k.lengthscale},
            {"outputscale", k.outputscale},
            {"rq_alpha", k.rq_alpha}};
}

KernelConfig kernel_from_json(const json& j, const std::string& prefix) {
    KernelConfig k;
    try {
        k.family = kernel_from_name(get_or<std::string>(j, prefix, "family", "rbf"));
    } catch (const ConfigError&) {
        schema_error(join_path(prefix, "family"), "unknown kernel family");
    }
    k.lengthscale = get_or<double>(j, prefix, "lengthscale", 1.0);
    k.outputscale = get_or<double>(j, prefix, "outputscale", 1.0);
    k.rq_alpha = get_or<double>(j, prefix, "rq_alpha", 1.0);
    return k;
}

json head_to_json(const HeadConfig& h) {
    return {{"type", h.type},
            {"flow_layers", h.flow_layers},
            {"n_prior", h.n_prior},
            {"chi_prior", h.chi_prior},
            {"entropy_lambda", h.entropy_lambda},
            {"budget", h.budget.to_json()},
            {"num_inducing", h.num_inducing},
            {"train_samples", h.train_samples},
            {"eval_samples", h.eval_samples},
            {"kernel", kernel_to_json(h.kernel)}};
}

HeadConfig head_from_json(const json& j, const std::string& prefix) {
    HeadConfig h;
    h.type = get_field<std::string>(j, prefix, "type");
    if (h.type != "natpn" && h.type != "due")
        schema_error(join_path(prefix, "type"), "must be natpn or due");
    h.flow_layers = get_or<size_t>(j, prefix, "flow_layers", h.flow_layers);
    h.n_prior = get_or<double>(j, prefix, "n_prior", 0.0);
    h.chi_prior = get_or<std::vector<double>>(j, prefix, "chi_prior", {});
    h.entropy_lambda = get_or<double>(j, prefix, "entropy_lambda", 0.0);
    if (j.contains("budget")) {
        try {
            h.budget = BudgetConfig::from_json(j.at("budget"));
        } catch (const std::exception&) {
            schema_error(join_path(prefix, "budget"), "invalid budget block");
        }
    }
    h.num_inducing = get_or<size_t>(j, prefix, "num_inducing", h.num_inducing);
    h.train_samples = get_or<size_t>(j, prefix, "train_samples", h.train_samples);
    h.eval_samples = get_or<size_t>(j, prefix, "eval_samples", h.eval_samples);
    if (j.contains("kernel")) h.kernel = kernel_from_json(j.at("kernel"), prefix + ".kernel");
    return h;
}

json eval_to_json(const EvalConfig& e) {
    return {{"metrics", e.metrics},
            {"grid_export", e.grid_export},
            {"grid_extent", e.grid_extent},
            {"grid_resolution", e.grid_resolution}};
}

EvalConfig eval_from_json(const json& j, const std::string& prefix) {
    EvalConfig e;
    e.metrics = get_or<std::vector<std::string>>(j, prefix, "metrics", {});
    e.grid_export = get_or<bool>(j, prefix, "grid_export", false);
    e.grid_extent = get_or<double>(j, prefix, "grid_extent", 6.0);
    e.grid_resolution = get_or<size_t>(j, prefix, "grid_resolution", 50);
    return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

void ExperimentConfig::validate() const {
    if (schema_version != kSchemaVersion)
        schema_error("schema_version",
                     "expected " + std::to_string(kSchemaVersion) + ", got " +
                         std::to_string(schema_version));
    if (name.empty()) schema_error("name", "must be nonempty");
    if (output_dir.empty()) schema_error("output_dir", "must be nonempty");
    if (seeds.empty()) schema_error("seeds", "must be nonempty");
    encoder.validate();
    train.validate();
    if (head.type == "natpn" && head.flow_layers == 0)
        schema_error("head.flow_layers", "must be positive");
    if (head.type == "due" && head.num_inducing == 0)
        schema_error("head.num_inducing", "must be positive");
    for (const auto& o : dataset.ood) {
        if (o.name.empty()) schema_error("dataset.ood.name", "must be nonempty");
        if (o.kind == "grid" && dataset.kind != "toy")
            schema_error("dataset.ood", "grid probes require the toy dataset");
    }
}

json ExperimentConfig::to_json() const {
    return {{"schema_version", schema_version},
            {"name", name},
            {"dataset", dataset_to_json(dataset)},
            {"encoder", encoder.to_json()},
            {"head", head_to_json(head)},
            {"train", plan_to_json(train)},
            {"eval", eval_to_json(eval)},
            {"checkpoints", checkpoints},
            {"seeds", seeds},
            {"output_dir", output_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    c.schema_version = get_field<int>(j, "", "schema_version");
    c.name = get_field<std::string>(j, "", "name");
    if (!j.contains("dataset")) schema_error("dataset", "missing block");
    c.dataset = dataset_from_json(j.at("dataset"), "dataset");
    if (!j.contains("encoder")) schema_error("encoder", "missing block");
    try {
        c.encoder = EncoderConfig::from_json(j.at("encoder"));
    } catch (const ConfigError& e) {
        schema_error("encoder", e.what());
    } catch (const json::exception& e) {
        schema_error("encoder", e.what());
    }
    if (!j.contains("head")) schema_error("head", "missing block");
    c.head = head_from_json(j.at("head"), "head");
    if (!j.contains("train")) schema_error("train", "missing block");
    c.train = plan_from_json(j.at("train"), "train");
    if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"), "eval");
    c.checkpoints = get_or<bool>(j, "", "checkpoints", true);
    c.seeds = get_or<std::vector<uint64_t>>(j, "", "seeds", {0, 1, 2, 3, 4});
    c.output_dir = get_field<std::string>(j, "", "output_dir");
    try {
        c.train.validate();
    } catch (const ConfigError& e) {
        schema_error("train", e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not readable: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return ExperimentConfig::from_json(j);
}

// ---------------------------------------------------------------------------
// data materialization and per-seed corpora

namespace {

constexpr uint64_t kToyTestSalt = 0x517cc1b727220a95ull;

void require_file(const std::string& path, const std::string& field) {
    if (!fs::exists(path)) schema_error(field, "file not found: " + path);
}

size_t idx_image_count(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char hdr[8] = {};
    if (!in.read(reinterpret_cast<char*>(hdr), 8)) return 0;
    return (size_t(hdr[4]) << 24) | (size_t(hdr[5]) << 16) | (size_t(hdr[6]) << 8) | size_t(hdr[7]);
}

void ensure_synth(const std::string& images, const std::string& labels, const std::string& family,
                  size_t n, uint64_t seed) {
    // regenerate when missing or when the on-disk corpus has a stale size
    if (fs::exists(images) && fs::exists(labels) && idx_image_count(images) == n) return;
    const fs::path dir = fs::path(images).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    data::write_synth_glyphs(images, labels, family, n, seed);
}

// generate any synthetic IDX corpora the config references; called once
// before the (possibly parallel) seed workers so file writes never race
void materialize_data(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind == "synth") {
        ensure_synth(cfg.dataset.train_images, cfg.dataset.train_labels, cfg.dataset.family,
                     cfg.dataset.train_count, cfg.dataset.synth_seed);
        ensure_synth(cfg.dataset.test_images, cfg.dataset.test_labels, cfg.dataset.family,
                     cfg.dataset.test_count, cfg.dataset.synth_seed ^ kToyTestSalt);
    }
    for (const auto& o : cfg.dataset.ood)
        if (o.kind == "synth") ensure_synth(o.images, o.labels, o.family, o.count, o.seed);
}

struct BuiltData {
    data::Dataset train, test;
    std::vector<std::pair<std::string, Tensor>> ood_inputs;
};

Tensor far_grid_points(const Tensor& grid, double min_radius) {
    std::vector<double> pts;
    for (size_t i = 0; i < grid.rows(); ++i) {
        const double x = grid.at(i, 0), y = grid.at(i, 1);
        if (std::max(std::abs(x), std::abs(y)) >= min_radius) {
            pts.push_back(x);
            pts.push_back(y);
        }
    }
    if (pts.empty()) throw ConfigError("dataset.ood: min_radius excludes every grid point");
    const size_t n = pts.size() / 2;
    return Tensor({n, 2}, std::move(pts));
}

BuiltData build_data(const ExperimentConfig& cfg, uint64_t seed) {
    BuiltData out;
    if (cfg.dataset.kind == "toy") {
        data::CollapseToy train_toy = data::make_collapse_toy(cfg.dataset.toy, seed);
        data::CollapseToy test_toy = data::make_collapse_toy(cfg.dataset.toy, seed ^ kToyTestSalt);
        out.train = std::move(train_toy.dataset);
        out.test = std::move(test_toy.dataset);
        out.test.role = data::Role::Test;
        for (const auto& o : cfg.dataset.ood) {
            if (o.kind != "grid")
                schema_error("dataset.ood." + o.name + ".kind", "toy datasets support grid probes only");
            out.ood_inputs.emplace_back(o.name, far_grid_points(train_toy.grid, o.min_radius));
        }
        return out;
    }

    require_file(cfg.dataset.train_images, "dataset.train_images");
    require_file(cfg.dataset.train_labels, "dataset.train_labels");
    require_file(cfg.dataset.test_images, "dataset.test_images");
    require_file(cfg.dataset.test_labels, "dataset.test_labels");
    out.train = data::read_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
    out.test = data::read_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
    out.test.role = data::Role::Test;

    data::Standardizer stats;
    if (cfg.dataset.standardize) stats = data::fit_standardizer(out.train);

    for (const auto& o : cfg.dataset.ood) {
        data::Dataset d;
        if (o.kind == "oodom") {
            d = data::make_oodom(out.test);
        } else {
            const std::string base = "dataset.ood." + o.name;
            require_file(o.images, base + ".images");
            require_file(o.labels, base + ".labels");
            d = data::read_idx(o.images, o.labels);
            d.role = data::Role::Ood;
        }
        if (cfg.dataset.standardize) d = data::standardize(d, stats);
        out.ood_inputs.emplace_back(o.name, d.inputs);
    }
    if (cfg.dataset.standardize) {
        out.train = data::standardize(out.train, stats);
        out.test = data::standardize(out.test, stats);
    }
    return out;
}

// ---------------------------------------------------------------------------
// model construction and scoring

struct BuiltHead {
    std::unique_ptr<NatpnHead> natpn;
    std::unique_ptr<GpHead> gp;
    std::unique_ptr<TrainableHead> trainable;
    json to_json() const { return natpn ? natpn->to_json() : gp->to_json(); }
};

BuiltHead build_head(const ExperimentConfig& cfg, size_t num_classes, uint64_t seed) {
    BuiltHead out;
    if (cfg.head.type == "natpn") {
        PriorConfig prior;
        prior.n_prior = cfg.head.n_prior;
        prior.chi_prior = cfg.head.chi_prior;
        prior.entropy_lambda = cfg.head.entropy_lambda;
        out.natpn = std::make_unique<NatpnHead>(cfg.encoder.latent_dim, num_classes,
                                                cfg.head.flow_layers, prior, cfg.head.budget,
                                                seed ^ 0xc2b2ae3d27d4eb4full);
        out.trainable = std::make_unique<NatpnTrainable>(*out.natpn);
    } else {
        GpConfig gc;
        gc.latent_dim = cfg.encoder.latent_dim;
        gc.num_classes = num_classes;
        gc.num_inducing = cfg.head.num_inducing;
        gc.kernel = cfg.head.kernel.family;
        gc.rq_alpha = cfg.head.kernel.rq_alpha;
        gc.init_lengthscale = cfg.head.kernel.lengthscale;
        gc.init_outputscale = cfg.head.kernel.outputscale;
        gc.train_samples = cfg.head.train_samples;
        gc.eval_samples = cfg.head.eval_samples;
        out.gp = std::make_unique<GpHead>(gc, seed ^ 0xc2b2ae3d27d4eb4full);
        out.trainable = std::make_unique<DueTrainable>(*out.gp, seed ^ 0x165667b19e3779f9ull);
    }
    return out;
}

struct HeadScores {
    std::vector<size_t> labels;
    Tensor probs;                     // N x C
    std::vector<double> predictive;   // entropy of the mean categorical
    std::vector<double> epistemic;    // uncertainty: higher on OOD
};

std::vector<double> row_entropy(const Tensor& probs) {
    std::vector<double> out(probs.rows(), 0.0);
    for (size_t i = 0; i < probs.rows(); ++i)
        for (size_t j = 0; j < probs.cols(); ++j) {
            const double p = probs.at(i, j);
            if (p > 0.0) out[i] -= p * std::log(p);
        }
    return out;
}

HeadScores score_head(const BuiltHead& head, const Tensor& z) {
    HeadScores out;
    if (head.natpn) {
        EvidentialPosterior post = head.natpn->forward(z);
        UncertaintyScores sc = scores(post);
        out.labels = sc.labels;
        out.probs = post.chi_post.detach();
        out.predictive = sc.predictive_entropy.data();
        // n_post counts evidence (a certainty), so negate it for ranking
        out.epistemic.reserve(z.rows());
        for (double v : sc.epistemic.data()) out.epistemic.push_back(-v);
    } else {
        GpHead::Prediction pred = head.gp->predict(z);
        out.probs = pred.probs.detach();
        out.labels.resize(z.rows());
        for (size_t i = 0; i < z.rows(); ++i) {
            size_t best = 0;
            for (size_t j = 1; j < out.probs.cols(); ++j)
                if (out.probs.at(i, j) > out.probs.at(i, best)) best = j;
            out.labels[i] = best;
        }
        out.predictive = row_entropy(out.probs);
        out.epistemic.assign(z.rows(), 0.0);
        for (size_t i = 0; i < z.rows(); ++i) {
            double s = 0.0;
            for (size_t j = 0; j < pred.var.cols(); ++j) s += pred.var.at(i, j);
            out.epistemic[i] = s / static_cast<double>(pred.var.cols());
        }
    }
    return out;
}

bool metric_selected(const std::vector<std::string>& wanted, const std::string& name) {
    if (wanted.empty()) return true;
    for (const auto& w : wanted)
        if (name == w || name.rfind(w + "_", 0) == 0) return true;
    return false;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

}  // namespace

// ---------------------------------------------------------------------------
// seed-level run and CSV plumbing

std::string seed_csv(const SeedResult& r) {
    std::ostringstream out;
    out.precision(17);
    out << "metric,value\n";
    for (const auto& [name, value] : r.metrics) out << name << ',' << value << '\n';
    return out.str();
}

SeedResult parse_seed_csv(uint64_t seed, const std::string& csv) {
    SeedResult r;
    r.seed = seed;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "metric,value")
        throw FormatError("seed CSV header mismatch: " + line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t comma = line.rfind(',');
        if (comma == std::string::npos) throw FormatError("seed CSV row without comma: " + line);
        r.metrics.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
    }
    return r;
}

SeedResult run_seed(const ExperimentConfig& cfg, uint64_t seed, const std::string& out_dir) {
    materialize_data(cfg);
    BuiltData data = build_data(cfg, seed);

    EncoderConfig enc_cfg = cfg.encoder;
    enc_cfg.input_dim = data.train.dim();
    Encoder encoder(enc_cfg, seed ^ 0x9e3779b97f4a7c15ull);
    BuiltHead head = build_head(cfg, data.train.num_classes, seed);

    TrainPlan plan = cfg.train;
    plan.seed = seed;

    const std::string prefix = "seed_" + std::to_string(seed);
    PhaseCallback on_phase_end;
    if (cfg.checkpoints && !out_dir.empty()) {
        on_phase_end = [&](const std::string& phase) {
            json ckpt = {{"phase", phase}, {"encoder", encoder.to_json()}, {"head", head.to_json()}};
            write_text(fs::path(out_dir) / (prefix + "_ckpt_" + phase + ".json"), ckpt.dump());
        };
    }
    TrainResult trained = run(plan, encoder, *head.trainable, data.train, on_phase_end);
    if (!out_dir.empty())
        write_text(fs::path(out_dir) / (prefix + "_train_log.csv"), train_log_csv(trained.log));

    // evaluation
    Tensor z_test = encoder.forward(data.test.inputs, Mode::Eval).z.detach();
    HeadScores id = score_head(head, z_test);

    SeedResult result;
    result.seed = seed;
    auto push = [&](const std::string& name, double value) {
        if (metric_selected(cfg.eval.metrics, name)) result.metrics.emplace_back(name, value);
    };
    push("accuracy", eval::accuracy(id.labels, data.test.labels));
    push("brier", 100.0 * eval::brier(id.probs, data.test.labels));
    double mean_pred = 0.0;
    for (double v : id.predictive) mean_pred += v;
    push("mean_predictive_entropy", mean_pred / static_cast<double>(id.predictive.size()));
    if (head.natpn) {
        Tensor ent = dirichlet_entropy(head.natpn->forward(z_test).alpha);
        double s = 0.0;
        for (double v : ent.data()) s += v;
        push("mean_posterior_entropy", s / static_cast<double>(ent.numel()));
    }
    if (enc_cfg.latent_dim == 2) {
        // collapse probe: pooled within-class covariance of the test latents,
        // minor over major eigenvalue. Subtracting class means removes the
        // discriminative separation, so a collapsed representation (only the
        // class direction survives) drives this ratio toward zero while a
        // geometry-preserving one keeps it well away from it
        const size_t n = z_test.rows();
        std::map<size_t, std::array<double, 3>> class_stats;  // label -> mean x, mean y, count
        for (size_t i = 0; i < n; ++i) {
            auto& s = class_stats[data.test.labels[i]];
            s[0] += z_test.at(i, 0);
            s[1] += z_test.at(i, 1);
            s[2] += 1.0;
        }
        for (auto& [label, s] : class_stats) {
            s[0] /= s[2];
            s[1] /= s[2];
        }
        double cxx = 0.0, cyy = 0.0, cxy = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const auto& s = class_stats[data.test.labels[i]];
            const double dx = z_test.at(i, 0) - s[0], dy = z_test.at(i, 1) - s[1];
            cxx += dx * dx;
            cyy += dy * dy;
            cxy += dx * dy;
        }
        const double tr = cxx + cyy;
        const double disc = std::sqrt(std::max(0.0, (cxx - cyy) * (cxx - cyy) + 4.0 * cxy * cxy));
        const double major = 0.5 * (tr + disc), minor = std::max(0.5 * (tr - disc), 0.0);
        push("latent_variance_ratio", major > 0.0 ? minor / major : 0.0);
    }
    for (const auto& [name, inputs] : data.ood_inputs) {
        Tensor z_ood = encoder.forward(inputs, Mode::Eval).z.detach();
        HeadScores ood = score_head(head, z_ood);
        push("auroc_epistemic_" + name, eval::auroc(id.epistemic, ood.epistemic));
        push("auroc_predictive_" + name, eval::auroc(id.predictive, ood.predictive));
    }

    if (cfg.eval.grid_export && enc_cfg.input_dim == 2 && !out_dir.empty()) {
        auto field = [&](const Tensor& pts) {
            Tensor z = encoder.forward(pts, Mode::Eval).z;
            if (head.natpn) return head.natpn->flow_log_prob(z);
            Tensor var = head.gp->predict(z).var;
            return mul_scalar(sum(var, 1), 1.0 / static_cast<double>(var.cols()));
        };
        eval::GridExport grid =
            eval::uncertainty_grid(field, cfg.eval.grid_extent, cfg.eval.grid_resolution);
        write_text(fs::path(out_dir) / (prefix + "_grid.csv"), grid.to_csv());
    }

    if (!out_dir.empty()) write_text(fs::path(out_dir) / (prefix + ".csv"), seed_csv(result));
    return result;
}

json summarize(const std::vector<SeedResult>& results) {
    if (results.empty()) throw ConfigError("summarize needs at least one seed result");
    json seeds = json::array();
    for (const auto& r : results) seeds.push_back(r.seed);
    json metrics = json::object();
    for (const auto& [name, first_value] : results.front().metrics) {
        (void)first_value;
        std::vector<double> values;
        for (const auto& r : results) {
            auto it = std::find_if(r.metrics.begin(), r.metrics.end(),
                                   [&](const auto& kv) { return kv.first == name; });
            if (it == r.metrics.end())
                throw FormatError("metric " + name + " missing for seed " + std::to_string(r.seed));
            values.push_back(it->second);
        }
        eval::MetricSummary s = eval::aggregate(values);
        json entry = {{"mean", s.mean}, {"values", values}, {"rendered", s.render()}};
        if (s.has_std) entry["std"] = s.std;
        metrics[name] = entry;
    }
    return {{"seeds", seeds}, {"metrics", metrics}};
}

// ---------------------------------------------------------------------------
// experiment drivers

namespace {

size_t worker_cap() {
    if (const char* env = std::getenv("DUM_LAB_THREADS")) {
        const long v = std::atol(env);
        if (v >= 1) return static_cast<size_t>(v);
    }
    return 1;
}

ExperimentConfig apply_overrides(ExperimentConfig cfg, const RunOptions& opts) {
    if (!opts.seeds.empty()) cfg.seeds = opts.seeds;
    if (!opts.out.empty()) cfg.output_dir = opts.out;
    return cfg;
}

// shared by run_experiment and run_sweep: guard the directory, run every seed
// (optionally in worker threads), then aggregate
int run_config(const ExperimentConfig& cfg, bool force, std::vector<SeedResult>* collected) {
    const fs::path dir(cfg.output_dir);
    if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        std::cerr << "error: results directory " << dir
                  << " already exists; pass --force to overwrite\n";
        return 1;
    }
    try {
        fs::create_directories(dir);
        materialize_data(cfg);
        write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    const size_t n = cfg.seeds.size();
    std::vector<SeedResult> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                results[i] = run_seed(cfg, cfg.seeds[i], cfg.output_dir);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const size_t threads = std::min(worker_cap(), n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (size_t i = 0; i < n; ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const NumericalError& e) {
            std::cerr << "error (seed " << cfg.seeds[i] << "): " << e.what() << '\n';
            return 3;
        } catch (const ConfigError& e) {
            std::cerr << "error (seed " << cfg.seeds[i] << "): " << e.what() << '\n';
            return 2;
        } catch (const std::exception& e) {
            std::cerr << "error (seed " << cfg.seeds[i] << "): " << e.what() << '\n';
            return 1;
        }
    }

    write_text(dir / "summary.json", summarize(results).dump(2) + "\n");
    if (collected) *collected = std::move(results);
    return 0;
}

std::string sanitized(std::string s) {
    for (char& c : s)
        if (c == '/' || c == '\\' || c == ' ') c = '_';
    return s;
}

}  // namespace

int run_experiment(const std::string& config_path, const RunOptions& opts) {
    ExperimentConfig cfg;
    try {
        cfg = apply_overrides(load_config(config_path), opts);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    const int code = run_config(cfg, opts.force, nullptr);
    if (code == 0)
        std::cout << cfg.name << ": " << cfg.seeds.size() << " seed(s) -> " << cfg.output_dir << '\n';
    return code;
}

int run_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<std::string>& values, const RunOptions& opts) {
    if (values.empty()) {
        std::cerr << "error: sweep needs at least one value\n";
        return 2;
    }
    json base;
    try {
        base = apply_overrides(load_config(config_path), opts).to_json();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    // resolve the axis against the canonical serialized config
    std::vector<std::string> keys;
    {
        std::istringstream in(axis);
        std::string part;
        while (std::getline(in, part, '.')) keys.push_back(part);
    }
    auto descend = [](const json* node, const std::string& k) -> const json* {
        if (node->is_object() && node->contains(k)) return &node->at(k);
        if (node->is_array() && !k.empty() &&
            std::all_of(k.begin(), k.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            const size_t idx = std::stoul(k);
            if (idx < node->size()) return &(*node)[idx];
        }
        return nullptr;
    };
    const json* leaf = &base;
    for (const auto& k : keys) {
        leaf = descend(leaf, k);
        if (!leaf) {
            std::cerr << "error: unknown sweep axis: " << axis << '\n';
            return 2;
        }
    }
    if (leaf->is_object() || leaf->is_array()) {
        std::cerr << "error: sweep axis must name a scalar leaf: " << axis << '\n';
        return 2;
    }

    const std::string base_out = base.at("output_dir").get<std::string>();
    const fs::path base_dir(base_out);
    if (fs::exists(base_dir) && !fs::is_empty(base_dir) && !opts.force) {
        std::cerr << "error: results directory " << base_dir
                  << " already exists; pass --force to overwrite\n";
        return 1;
    }

    std::ostringstream combined;
    combined.precision(17);
    combined << "axis,value,seed,metric,result\n";
    for (const auto& value : values) {
        json variant = base;
        json* slot = &variant;
        for (const auto& k : keys)
            slot = const_cast<json*>(descend(slot, k));
        try {
            if (leaf->is_string())
                *slot = value;
            else if (leaf->is_boolean())
                *slot = value == "true" || value == "1";
            else if (leaf->is_number_integer() || leaf->is_number_unsigned())
                *slot = static_cast<int64_t>(std::stoll(value));
            else
                *slot = std::stod(value);
        } catch (const std::exception&) {
            std::cerr << "error: value '" << value << "' does not fit axis " << axis << '\n';
            return 2;
        }
        variant["output_dir"] = base_out + "/" + sanitized(axis) + "=" + sanitized(value);
        variant["name"] = base.at("name").get<std::string>() + "_" + sanitized(value);

        ExperimentConfig cfg;
        try {
            cfg = ExperimentConfig::from_json(variant);
        } catch (const ConfigError& e) {
            std::cerr << "error (value " << value << "): " << e.what() << '\n';
            return 2;
        }
        std::vector<SeedResult> results;
        const int code = run_config(cfg, true, &results);
        if (code != 0) return code;
        for (const auto& r : results)
            for (const auto& [metric, v] : r.metrics)
                combined << axis << ',' << value << ',' << r.seed << ',' << metric << ',' << v << '\n';
        std::cout << axis << '=' << value << " done\n";
    }
    try {
        fs::create_directories(base_dir);
        write_text(base_dir / ("sweep_" + sanitized(axis) + ".csv"), combined.str());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// recipe catalogue: one ready-to-run config per study axis

namespace {

Phase main_phase(const std::string& scheme, size_t epochs, double encoder_lr, double head_lr) {
    Phase p;
    p.name = "main";
    p.scheme = scheme;
    p.epochs = epochs;
    p.encoder_lr = encoder_lr;
    p.head_lr = head_lr;
    return p;
}

ExperimentConfig toy_recipe(const std::string& name, const std::string& head_type) {
    ExperimentConfig cfg;
    cfg.name = name;
    cfg.output_dir = "results/" + name;
    cfg.dataset.kind = "toy";
    cfg.dataset.toy.per_class = 100;
    cfg.dataset.ood.push_back({.name = "far_grid", .kind = "grid", .min_radius = 4.0});
    cfg.encoder.input_dim = 2;
    cfg.encoder.hidden_dim = 64;
    cfg.encoder.num_layers = 4;
    cfg.encoder.latent_dim = 2;
    cfg.encoder.constraint = Constraint::None;
    cfg.head.type = head_type;
    cfg.head.flow_layers = 8;
    cfg.head.num_inducing = 20;
    cfg.train.batch_size = 64;
    // long cross-entropy pretrain: unconstrained encoders collapse the
    // non-discriminative latent direction here, which is what the collapse
    // studies measure; the head warmup keeps the joint phase away from the
    // zero-evidence fixed point on those collapsed latents
    Phase pre;
    pre.name = "pretrain";
    pre.epochs = 300;
    pre.trainable = Trainable::EncoderOnly;
    Phase warm;
    warm.name = "warmup";
    warm.epochs = 20;
    warm.trainable = Trainable::HeadOnly;
    cfg.train.phases = {pre, warm, main_phase("joint", 30, 1e-3, 5e-3)};
    cfg.eval.grid_export = true;
    return cfg;
}

ExperimentConfig glyph_recipe(const std::string& name, const std::string& head_type,
                              const std::string& scheme) {
    ExperimentConfig cfg;
    cfg.name = name;
    cfg.output_dir = "results/" + name;
    cfg.dataset.kind = "synth";
    cfg.dataset.family = "digits";
    cfg.dataset.train_count = 10000;
    cfg.dataset.test_count = 1000;
    cfg.dataset.train_images = "data/digits_train.images.idx";
    cfg.dataset.train_labels = "data/digits_train.labels.idx";
    cfg.dataset.test_images = "data/digits_test.images.idx";
    cfg.dataset.test_labels = "data/digits_test.labels.idx";
    cfg.dataset.ood.push_back({.name = "kana",
                               .kind = "synth",
                               .images = "data/kana_test.images.idx",
                               .labels = "data/kana_test.labels.idx",
                               .family = "kana",
                               .count = 1000,
                               .seed = 2});
    cfg.dataset.ood.push_back({.name = "oodom", .kind = "oodom"});
    cfg.encoder.input_dim = 784;
    cfg.encoder.hidden_dim = 128;
    cfg.encoder.num_layers = 4;
    cfg.encoder.latent_dim = 16;
    cfg.encoder.constraint = Constraint::Bilipschitz;
    cfg.encoder.lipschitz_c = head_type == "due" ? 4.0 : 5.0;
    cfg.head.type = head_type;
    cfg.head.flow_layers = 16;
    cfg.head.num_inducing = 50;
    cfg.train.batch_size = 128;
    Phase pre;
    pre.name = "pretrain";
    pre.epochs = 10;
    pre.encoder_lr = 1e-3;
    pre.head_lr = 1e-3;
    Phase warm;
    warm.name = "warmup";
    warm.epochs = 20;
    warm.head_lr = 5e-3;
    warm.trainable = Trainable::HeadOnly;
    cfg.train.phases = {pre, warm, main_phase(scheme, 30, 1e-3, 5e-3)};
    return cfg;
}

std::vector<std::pair<std::string, ExperimentConfig>> build_recipes() {
    std::vector<std::pair<std::string, ExperimentConfig>> out;
    auto add = [&](ExperimentConfig cfg) { out.emplace_back(cfg.name, std::move(cfg)); };

    // collapse studies: sweep encoder.constraint (none / residual / bilipschitz)
    add(toy_recipe("toy_collapse_natpn", "natpn"));
    add(toy_recipe("toy_collapse_due", "due"));
    {
        ExperimentConfig cfg = toy_recipe("toy_reconstruction", "natpn");
        cfg.encoder.recon_lambda = 0.1;  // sweep encoder.recon_lambda over {0.1, 1}
        add(cfg);
    }

    // training-scheme grid: {joint, sequential} x {batchnorm, reset, none}
    for (const std::string scheme : {"joint", "sequential"}) {
        for (const std::string variant : {"bn", "reset", "none"}) {
            ExperimentConfig cfg =
                glyph_recipe("mnist_" + scheme + "_" + variant, "natpn", scheme);
            if (variant == "bn") cfg.encoder.use_final_batchnorm = true;
            if (variant == "reset") cfg.train.phases.back().reset_last_layer = true;
            add(cfg);
        }
    }

    // decoupled learning rates: sweep train.phases.0.head_lr against the
    // fixed encoder rate (dot paths accept numeric array indices)
    {
        ExperimentConfig cfg = glyph_recipe("mnist_decoupled_lr_grid", "natpn", "joint");
        cfg.train.phases[0].encoder_lr = 1e-3;
        cfg.train.phases[0].head_lr = 1e-2;
        add(cfg);
    }

    // prior studies: sweep head.entropy_lambda / head.n_prior
    {
        ExperimentConfig cfg = glyph_recipe("mnist_prior_lambda", "natpn", "joint");
        cfg.head.entropy_lambda = 1e-5;
        add(cfg);
    }
    {
        ExperimentConfig cfg = glyph_recipe("mnist_prior_evidence", "natpn", "joint");
        cfg.head.n_prior = 10.0;
        add(cfg);
    }

    // kernel study: sweep head.kernel.family over the five families
    add(glyph_recipe("mnist_kernels", "due", "joint"));

    return out;
}

}  // namespace

std::vector<std::string> recipe_names() {
    std::vector<std::string> names;
    for (const auto& [name, cfg] : build_recipes()) {
        (void)cfg;
        names.push_back(name);
    }
    return names;
}

int emit_recipes(const std::string& out_dir) {
    try {
        fs::create_directories(out_dir);
        for (const auto& [name, cfg] : build_recipes()) {
            cfg.validate();
            const json j = cfg.to_json();
            ExperimentConfig::from_json(j);  // every emitted recipe must parse back
            write_text(fs::path(out_dir) / (name + ".json"), j.dump(2) + "\n");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: cannot write recipes to " << out_dir << ": " << e.what() << '\n';
        return 4;
    }
    std::cout << build_recipes().size() << " recipes -> " << out_dir << '\n';
    return 0;
}

}  // namespace dumlab
