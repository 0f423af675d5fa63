#include <cstdint>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dumlab/data.hpp"
#include "dumlab/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"dum-lab: deterministic uncertainty methods laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis;
    std::vector<uint64_t> seeds;
    std::vector<std::string> values;
    bool force = false;

    CLI::App* run_cmd = app.add_subcommand("run", "train and evaluate one experiment config");
    run_cmd->add_option("config", config_path, "experiment config (JSON)")->required();
    run_cmd->add_option("--seeds", seeds, "override the config seed list")->delimiter(',');
    run_cmd->add_flag("--force", force, "overwrite an existing results directory");
    run_cmd->add_option("--out", out_dir, "override the config output directory");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "rerun a config across values of one axis");
    sweep_cmd->add_option("config", config_path, "experiment config (JSON)")->required();
    sweep_cmd->add_option("--axis", axis, "dot path of the config leaf to vary")->required();
    sweep_cmd->add_option("--values", values, "comma-separated axis values")
        ->required()
        ->delimiter(',');
    sweep_cmd->add_option("--seeds", seeds, "override the config seed list")->delimiter(',');
    sweep_cmd->add_flag("--force", force, "overwrite an existing results directory");
    sweep_cmd->add_option("--out", out_dir, "override the config output directory");

    CLI::App* recipes_cmd = app.add_subcommand("recipes", "write the canonical study configs");
    std::string recipes_out = "configs";
    recipes_cmd->add_option("--out", recipes_out, "directory for the recipe files");

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic glyph corpus (IDX)");
    std::string family = "digits";
    size_t count = 4000;
    uint64_t synth_seed = 1;
    std::string images_path, labels_path;
    synth_cmd->add_option("--family", family, "glyph family (e.g. digits, kana)");
    synth_cmd->add_option("--count", count, "number of images");
    synth_cmd->add_option("--seed", synth_seed, "generation seed");
    synth_cmd->add_option("--images", images_path, "output IDX image file")->required();
    synth_cmd->add_option("--labels", labels_path, "output IDX label file")->required();

    CLI11_PARSE(app, argc, argv);

    dumlab::RunOptions opts;
    opts.seeds = seeds;
    opts.force = force;
    opts.out = out_dir;

    if (run_cmd->parsed()) return dumlab::run_experiment(config_path, opts);
    if (sweep_cmd->parsed()) return dumlab::run_sweep(config_path, axis, values, opts);
    if (recipes_cmd->parsed()) return dumlab::emit_recipes(recipes_out);
    if (synth_cmd->parsed()) {
        try {
            dumlab::data::write_synth_glyphs(images_path, labels_path, family, count, synth_seed);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
        return 0;
    }
    return 1;
}
