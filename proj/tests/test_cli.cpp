#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "commands.hpp"

using namespace amsp;
using amsp::cli::RunConfig;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = AMSP_FIXTURE_DIR;

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "amsp_cli_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

template <class Cmd>
json run_cmd(Cmd cmd, const RunConfig& run) {
    std::ostringstream out;
    EXPECT_EQ(cmd(run, out), 0);
    return json::parse(out.str());
}

std::vector<json> read_lines(const std::filesystem::path& p) {
    std::ifstream is(p);
    std::vector<json> out;
    std::string line;
    while (std::getline(is, line)) out.push_back(json::parse(line));
    return out;
}

}  // namespace

TEST(CliNms, SixBoxFixtureMatchesHandTrace) {
    RunConfig run;
    run.input = (kFixtures / "six_boxes.jsonl").string();
    run.output = scratch("six_similar.jsonl").string();
    const json stats = run_cmd(cli::cmd_nms, run);
    EXPECT_EQ(stats["stats"]["decay_evals"], 4);
    EXPECT_EQ(stats["stats"]["hard_removals"], 2);
    EXPECT_EQ(stats["stats"]["iterations"], 4);
    EXPECT_EQ(stats["survivors"], 4);

    const auto lines = read_lines(run.output);
    ASSERT_EQ(lines.size(), 4u);
    const double x1[] = {0, 20, 12, 28};
    const double adjusted[] = {0.95, 0.8, 0.7, 0.5 * std::exp(-2.0 / 81.0)};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(lines[i]["x1"].get<double>(), x1[i]);
        EXPECT_NEAR(lines[i]["adjusted_score"].get<double>(), adjusted[i], 1e-15);
        EXPECT_EQ(lines[i]["image"], "img0");
    }
    EXPECT_EQ(lines[3]["score"], 0.5);
}

TEST(CliNms, SimilarWithUnitThresholdEqualsHard) {
    RunConfig run;
    run.input = (kFixtures / "six_boxes.jsonl").string();
    run.variant = "hard";
    run.output = scratch("six_hard.jsonl").string();
    run_cmd(cli::cmd_nms, run);
    run.variant = "nms-similar";
    run.ns = 1.0;
    run.output = scratch("six_ns1.jsonl").string();
    run_cmd(cli::cmd_nms, run);
    EXPECT_EQ(read_file(scratch("six_hard.jsonl")), read_file(scratch("six_ns1.jsonl")));
}

TEST(CliNms, EmptyInputGivesEmptyOutputAndZeroStats) {
    write_file_atomic(scratch("empty.jsonl"), "");
    RunConfig run;
    run.input = scratch("empty.jsonl").string();
    run.output = scratch("empty_out.jsonl").string();
    const json stats = run_cmd(cli::cmd_nms, run);
    EXPECT_EQ(stats["stats"]["decay_evals"], 0);
    EXPECT_EQ(stats["survivors"], 0);
    EXPECT_EQ(read_file(run.output), "");
}

TEST(CliNms, ImagesAreSuppressedSeparately) {
    write_file_atomic(scratch("two_images.jsonl"),
                      "{\"x1\":0,\"y1\":0,\"x2\":10,\"y2\":10,\"score\":0.9,\"class\":0,\"image\":1}\n"
                      "{\"x1\":0,\"y1\":0,\"x2\":10,\"y2\":10,\"score\":0.8,\"class\":0,\"image\":2}\n");
    RunConfig run;
    run.input = scratch("two_images.jsonl").string();
    run.output = scratch("two_images_out.jsonl").string();
    run.variant = "hard";
    EXPECT_EQ(run_cmd(cli::cmd_nms, run)["survivors"], 2);
}

TEST(CliNms, MalformedLineNamesTheLine) {
    write_file_atomic(scratch("bad.jsonl"), "{\"x1\":0,\"y1\":0,\"x2\":10,\"y2\":10,\"score\":0.9,\"class\":0}\n{oops\n");
    RunConfig run;
    run.input = scratch("bad.jsonl").string();
    run.output = scratch("bad_out.jsonl").string();
    std::ostringstream out;
    try {
        cli::cmd_nms(run, out);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("line 2:", 0), 0u);
    }
    EXPECT_FALSE(std::filesystem::exists(run.output));
}

TEST(CliBlock, ParamsReport) {
    RunConfig run;
    run.c = 64;
    run.k = 3;
    run.g = 4;
    const json r = run_cmd(cli::cmd_block_params, run);
    EXPECT_EQ(r["vconv_params"], 19008);
    EXPECT_EQ(r["standard_params"], 36864);
    run.g.reset();
    run.t = 8;
    EXPECT_EQ(run_cmd(cli::cmd_block_params, run)["g"], 4);
    run.g = 2;
    std::ostringstream out;
    EXPECT_THROW(cli::cmd_block_params(run, out), ContractError);
}

TEST(CliBlock, GradcheckPassesForEveryBlock) {
    for (const char* name : {"amsp-vconv", "fad-csp", "gfa", "rep-bottleneck"}) {
        RunConfig run;
        run.block = name;
        run.b = 2;
        run.c = 8;
        run.h = 6;
        run.w = 6;
        const json r = run_cmd(cli::cmd_block_gradcheck, run);
        EXPECT_TRUE(r["pass"].get<bool>()) << name << " " << r.dump();
        EXPECT_LE(r["max_rel_error"].get<double>(), 1e-5);
    }
}

TEST(CliBlock, ForwardIsBitIdenticalForSameSeedAndReloadable) {
    RunConfig run;
    run.block = "fad-csp";
    run.seed = 42;
    run.b = 2;
    run.output = scratch("fwd_a.bin").string();
    run.save_weights = scratch("fad_weights").string();
    const json r = run_cmd(cli::cmd_block_forward, run);
    EXPECT_EQ(r["output"]["shape"], json({2, 8, 8, 8}));
    run.output = scratch("fwd_b.bin").string();
    run_cmd(cli::cmd_block_forward, run);
    EXPECT_EQ(read_file(scratch("fwd_a.bin")), read_file(scratch("fwd_b.bin")));

    // Saved weights reproduce the same output.
    const FADCSPParams p = load_fad_csp(load_archive(scratch("fad_weights.json")));
    const Tensor x = cli::block_input(run, cli::block_shape(run));
    EXPECT_EQ(fad_csp_forward(x, p), load_tensor(scratch("fwd_a.bin")));

    run.seed = 43;
    run.output = scratch("fwd_c.bin").string();
    run_cmd(cli::cmd_block_forward, run);
    EXPECT_NE(read_file(scratch("fwd_a.bin")), read_file(scratch("fwd_c.bin")));
}

TEST(CliBlock, ForwardReadsInputTensor) {
    Rng rng(1);
    const Tensor x = random_normal(Shape{1, 8, 5, 3}, rng);
    write_file_atomic(scratch("in.json"), tensor_to_json(x).dump());
    RunConfig run;
    run.input = scratch("in.json").string();
    run.output = scratch("in_out.bin").string();
    run_cmd(cli::cmd_block_forward, run);
    const AMSPVConvBlock b = make_amsp_vconv_block({8, 4, 3, 0});
    EXPECT_EQ(load_tensor(run.output), amsp_vconv_forward(x, b));
}

TEST(CliBlock, DivisibilityErrorsNameTheConstraint) {
    RunConfig run;
    run.block = "fad-csp";
    run.c = 8;
    run.r = 3;
    std::ostringstream out;
    try {
        cli::cmd_block_forward(run, out);
        FAIL();
    } catch (const ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("r = 3 must divide c = 8"), std::string::npos) << e.what();
    }
    run.block = "transformer";
    EXPECT_THROW(cli::cmd_block_forward(run, out), cli::UsageError);
}

TEST(CliBench, ReportsAllVariantsWithVerdicts) {
    RunConfig run;
    run.synthetic = 400;
    run.reps = 3;
    const json r = run_cmd(cli::cmd_bench, run);
    for (const char* v : {"hard", "soft", "similar"}) {
        EXPECT_TRUE(r["variants"][v]["deterministic"].get<bool>());
        EXPECT_EQ(r["variants"][v]["times_ms"].size(), 3u);
    }
    EXPECT_TRUE(r["economy"]["holds"].get<bool>());
    EXPECT_TRUE(r["ordering"].contains("holds"));
}

TEST(CliBench, RejectsBadArguments) {
    std::ostringstream out;
    RunConfig run;
    run.synthetic = 0;
    EXPECT_THROW(cli::cmd_bench(run, out), ContractError);
    run.synthetic = 100;
    run.reps = 2;
    EXPECT_THROW(cli::cmd_bench(run, out), ContractError);
    run.reps = 3;
    run.input = "x.jsonl";
    EXPECT_THROW(cli::cmd_bench(run, out), cli::UsageError);
}

TEST(CliBench, FileCorpus) {
    RunConfig run;
    run.input = (kFixtures / "six_boxes.jsonl").string();
    run.reps = 3;
    const json r = run_cmd(cli::cmd_bench, run);
    EXPECT_EQ(r["corpus"]["boxes"], 6);
    EXPECT_EQ(r["variants"]["similar"]["decay_evals"], 4);
    EXPECT_EQ(r["variants"]["similar"]["survivors"], 4);
}

TEST(CliNoiseProbe, ZeroLevelAndDeterminism) {
    RunConfig run;
    run.levels = "0,2,4";
    run.seeds = 4;
    run.c = 8;
    run.h = 8;
    run.w = 8;
    std::ostringstream a, b;
    cli::cmd_noise_probe(run, a);
    cli::cmd_noise_probe(run, b);
    EXPECT_EQ(a.str(), b.str());
    const json r = json::parse(a.str());
    EXPECT_EQ(r["amsp_vconv"]["mean"][0], 0.0);
    EXPECT_EQ(r["standard_conv"]["mean"][0], 0.0);
    EXPECT_EQ(r["levels"], json({0.0, 2.0, 4.0}));
}

TEST(CliNoiseProbe, LevelParsing) {
    EXPECT_EQ(cli::parse_levels("0, 1.5,3"), (std::vector<double>{0, 1.5, 3}));
    EXPECT_THROW((void)cli::parse_levels("1,-2"), ContractError);
    EXPECT_THROW((void)cli::parse_levels("1,x"), cli::UsageError);
    EXPECT_THROW((void)cli::parse_levels("1,2abc"), cli::UsageError);
    EXPECT_THROW((void)cli::parse_levels(""), cli::UsageError);
}
