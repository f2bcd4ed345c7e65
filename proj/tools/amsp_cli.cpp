#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"

namespace {

using amsp::cli::RunConfig;

int fail(const char* kind, const std::string& message, int status) {
    std::cerr << nlohmann::json{{"error", message}, {"kind", kind}}.dump() << '\n';
    return status;
}

void add_seed(CLI::App* cmd, RunConfig& run) { cmd->add_option("--seed", run.seed, "RNG seed (all randomness derives from it)"); }

void add_nms_flags(CLI::App* cmd, RunConfig& run) {
    cmd->add_option("--nt", run.nt, "IoU threshold N_t")->capture_default_str();
    cmd->add_option("--ns", run.ns, "aspect similarity threshold N_s")->capture_default_str();
    cmd->add_option("--sigma", run.sigma, "Gaussian decay sigma")->capture_default_str();
    cmd->add_option("--floor", run.floor, "score floor")->capture_default_str();
    cmd->add_option("--mode", run.mode, "NMS-Similar gating: literal or dense-preserve")->capture_default_str();
}

void add_shape_flags(CLI::App* cmd, RunConfig& run) {
    cmd->add_option("--b", run.b, "batch");
    cmd->add_option("--c", run.c, "channels");
    cmd->add_option("--h", run.h, "height");
    cmd->add_option("--w", run.w, "width");
    cmd->add_option("--g", run.g, "vortex groups");
    cmd->add_option("--t", run.t, "group width (vortex: c/2 = g*t; GFA shuffle row width)");
    cmd->add_option("--r", run.r, "GFA reduction ratio");
    cmd->add_option("--n", run.n, "RepBottleneck split count");
    cmd->add_option("--k", run.k, "vortex kernel size");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AMSP-VConv / FAD-CSP kernels and NMS-Similar suppression"};
    app.set_help_flag("--help", "print help");  // -h would clash with --h (height)
    app.require_subcommand(1);
    RunConfig run;
    int (*handler)(const RunConfig&, std::ostream&) = nullptr;

    auto* nms = app.add_subcommand("nms", "suppress a JSON-lines detection file");
    nms->add_option("--input", run.input, "detections, one JSON object per line")->required();
    nms->add_option("--output", run.output, "survivors (JSON lines)")->required();
    nms->add_option("--variant", run.variant, "hard, soft or similar")->capture_default_str();
    add_nms_flags(nms, run);
    add_seed(nms, run);
    nms->callback([&] { handler = amsp::cli::cmd_nms; });

    auto* block = app.add_subcommand("block", "single-block forward, gradient check or parameter count");
    block->require_subcommand(1);
    for (auto [name, fn] : {std::pair{"forward", amsp::cli::cmd_block_forward},
                            std::pair{"gradcheck", amsp::cli::cmd_block_gradcheck},
                            std::pair{"params", amsp::cli::cmd_block_params}}) {
        auto* sub = block->add_subcommand(name);
        sub->add_option("--block", run.block, "amsp-vconv, fad-csp, gfa or rep-bottleneck")->capture_default_str();
        sub->add_option("--input", run.input, "input tensor (AMSPT1 container or tensor JSON)");
        sub->add_option("--output", run.output, "output tensor container");
        sub->add_option("--save-weights", run.save_weights, "write <prefix>.json and <prefix>.amspw");
        add_shape_flags(sub, run);
        add_seed(sub, run);
        sub->callback([&handler, fn = fn] { handler = fn; });
    }

    auto* bench = app.add_subcommand("bench", "time hard, soft and similar suppression");
    bench->add_option("--synthetic", run.synthetic, "boxes in a seeded dense synthetic corpus");
    bench->add_option("--input", run.input, "detections file instead of a synthetic corpus");
    bench->add_option("--reps", run.reps, "repetitions (>= 3)")->capture_default_str();
    add_nms_flags(bench, run);
    add_seed(bench, run);
    bench->callback([&] { handler = amsp::cli::cmd_bench; });

    auto* probe = app.add_subcommand("noise-probe", "output deviation under input noise, vortex vs standard block");
    probe->add_option("--levels", run.levels, "noise levels, comma separated (units of 1/255)");
    probe->add_option("--seeds", run.seeds, "seeds averaged per level")->capture_default_str();
    probe->add_option("--output", run.output, "also write the report here");
    add_shape_flags(probe, run);
    add_seed(probe, run);
    probe->callback([&] { handler = amsp::cli::cmd_noise_probe; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        return handler(run, std::cout);
    } catch (const amsp::cli::UsageError& e) {
        return fail("usage", e.what(), 2);
    } catch (const amsp::ContractError& e) {
        return fail("contract", e.what(), 1);
    } catch (const amsp::FormatError& e) {
        return fail("format", e.what(), 1);
    } catch (const amsp::NonFiniteError& e) {
        return fail("non-finite", e.what(), 1);
    } catch (const std::exception& e) {
        return fail("io", e.what(), 1);
    }
}
