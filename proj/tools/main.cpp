#include <exception>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace cscf::cli;

namespace {

// Every option lives on the top-level app so a single flat config file can
// set any of them; subcommands fall through to it.
void add_options(CLI::App &app, Options &o) {
    app.option_defaults()->always_capture_default();
    app.add_option("--in", o.in, "Input directory");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--seed", o.seed, "Random seed");
    app.add_option("--threads", o.threads, "Worker threads (0 = all cores)");

    app.add_option("--patch-size", o.patch_size, "Patch edge length in pixels")->check(CLI::PositiveNumber);
    app.add_option("--patch-count", o.patch_count, "Patches per image pair");

    app.add_option("--atoms", o.atoms, "Dictionary atoms K")->check(CLI::PositiveNumber);
    app.add_option("--kernel", o.kernel, "Atom size k (odd)")->check(CLI::PositiveNumber);
    app.add_option("--inner-blocks", o.inner_blocks, "Blocks per pair per sweep")->check(CLI::PositiveNumber);
    app.add_option("--outer-iters", o.outer_iters, "Training sweeps");
    app.add_option("--mu1", o.params.mu1, "Visible coefficient coupling");
    app.add_option("--mu2", o.params.mu2, "Infrared coefficient coupling");
    app.add_option("--mu3", o.params.mu3, "Dictionary coupling");
    app.add_option("--beta1", o.params.beta1, "Visible proximal weight");
    app.add_option("--beta2", o.params.beta2, "Infrared proximal weight");
    app.add_option("--beta3", o.params.beta3, "Dictionary proximal weight");
    app.add_option("--lambda1", o.params.lambda1, "Visible sparsity weight");
    app.add_option("--lambda2", o.params.lambda2, "Infrared sparsity weight");
    app.add_option("--lambda3", o.params.lambda3, "Dictionary prior weight");
    app.add_option("--growth", o.growth, "Per-stage geometric growth of mu and beta");
    app.add_option("--init", o.init, "Initial dictionary file");
    app.add_flag("--checkpoint", o.checkpoint, "Write the dictionary after every sweep");

    app.add_option("--encode-iters", o.encode_iters, "Encoder iterations");
    app.add_option("--ridge", o.ridge, "Transfer ridge strength")->check(CLI::NonNegativeNumber);
    app.add_flag("--calibrate-film", o.calibrate, "Fit and write a FiLM calibration");
    app.add_option("--dict", o.dict, "Dictionary file");
    app.add_option("--transfer", o.transfer, "Transfer operator file");
    app.add_option("--reference-transfer", o.reference_transfer, "Known transfer operator to compare against");
    app.add_option("--provider", o.provider, "Semantic provider")
        ->check(CLI::IsMember({"identity", "calibrated", "file"}));
    app.add_option("--provider-file", o.provider_file, "FiLM calibration or semantic provider file");
    app.add_option("--gate-window", o.gate.window, "Saliency window (odd)");
    app.add_option("--gate-temperature", o.gate.temperature, "Gate softmax temperature");
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Convolutional sparse coding fusion toolkit"};
    app.set_config("--config", "", "Flat key=value configuration file");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1, 1);

    Options opt;
    add_options(app, opt);

    struct Command {
        const char *name;
        const char *help;
        int (*run)(const Options &, Logger &);
    };
    const Command commands[] = {
        {"patches", "Cut aligned random patches from image pairs", cmd_patches},
        {"learn", "Learn a shared dictionary from image pairs", cmd_learn},
        {"fit-transfer", "Fit the visible-to-infrared coefficient transfer", cmd_fit_transfer},
        {"infer-ir", "Synthesize pseudo-infrared images", cmd_infer_ir},
        {"fuse", "Fuse visible images with their pseudo-infrared branch", cmd_fuse},
        {"metrics", "Compute AG, EN, SF and EI", cmd_metrics},
        {"pipeline", "learn, fit-transfer, fuse and metrics in one run", cmd_pipeline},
    };
    for (const auto &c : commands) {
        auto *sub = app.add_subcommand(c.name, c.help)->fallthrough();
        if (std::string(c.name) == "metrics") sub->add_option("files", opt.files, "Image files");
    }

    CLI11_PARSE(app, argc, argv);

    Logger log;
    const auto *sub = app.get_subcommands().front();
    log.info("command: " + sub->get_name());
    std::istringstream effective(app.config_to_str(true, false));
    for (std::string line; std::getline(effective, line);)
        if (!line.empty()) log.info("config: " + line);

    try {
        for (const auto &c : commands)
            if (sub->get_name() == c.name) return c.run(opt, log);
    } catch (const std::exception &e) {
        log.error(e.what());
    }
    return 1;
}
