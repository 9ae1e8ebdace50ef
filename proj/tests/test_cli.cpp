#include <cstdlib>

#include <catch_amalgamated.hpp>

#include "segparse/synthdata.hpp"
#include "test_util.hpp"

using namespace segparse;

namespace {

struct CliResult {
    int exit_code;
    std::string output;
};

CliResult run_cli(const std::string& args, const std::string& log_path) {
    const std::string cmd =
        std::string(SEGPARSE_CLI_PATH) + " " + args + " > " + log_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    const auto bytes = testutil::read_file_bytes(log_path);
    result.output.assign(bytes.begin(), bytes.end());
    return result;
}

bool directories_equal(const std::string& a, const std::string& b) {
    namespace fs = std::filesystem;
    std::vector<std::string> names_a, names_b;
    for (const auto& e : fs::directory_iterator(a)) {
        names_a.push_back(e.path().filename().string());
    }
    for (const auto& e : fs::directory_iterator(b)) {
        names_b.push_back(e.path().filename().string());
    }
    std::sort(names_a.begin(), names_a.end());
    std::sort(names_b.begin(), names_b.end());
    if (names_a != names_b) return false;
    for (const auto& name : names_a) {
        if (fs::is_directory(a + "/" + name)) {
            if (!directories_equal(a + "/" + name, b + "/" + name)) return false;
        } else if (testutil::read_file_bytes(a + "/" + name) !=
                   testutil::read_file_bytes(b + "/" + name)) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("unknown subcommands fail with usage text", "[cli]") {
    testutil::TempDir dir("segparse-cli");
    const auto result = run_cli("unknowncmd", dir.file("log.txt"));
    CHECK(result.exit_code != 0);
    CHECK(result.output.find("Usage") != std::string::npos);
}

TEST_CASE("help exits zero on every subcommand", "[cli]") {
    testutil::TempDir dir("segparse-cli-help");
    CHECK(run_cli("--help", dir.file("l0")).exit_code == 0);
    for (const std::string sub : {"generate", "oracle", "train", "eval", "render"}) {
        const auto result = run_cli(sub + " --help", dir.file("log.txt"));
        CHECK(result.exit_code == 0);
        CHECK(result.output.find("--") != std::string::npos);
    }
}

TEST_CASE("generate is byte-identical under a fixed seed", "[cli]") {
    testutil::TempDir dir("segparse-cli-gen");
    const std::string args = "generate --n 4 --side 16 --seed 7 --out ";
    CHECK(run_cli(args + dir.file("a"), dir.file("l1")).exit_code == 0);
    CHECK(run_cli(args + dir.file("b"), dir.file("l2")).exit_code == 0);
    CHECK(directories_equal(dir.file("a"), dir.file("b")));
}

TEST_CASE("missing config files are reported with their path", "[cli]") {
    testutil::TempDir dir("segparse-cli-cfg");
    const auto result = run_cli(
        "train --data " + dir.path() + " --config missing.cfg --out " + dir.file("out"),
        dir.file("log.txt"));
    CHECK(result.exit_code != 0);
    CHECK(result.output.find("missing.cfg") != std::string::npos);
}

TEST_CASE("oracle, eval and render pipelines run end to end", "[cli]") {
    testutil::TempDir dir("segparse-cli-pipe");
    REQUIRE(run_cli("generate --n 3 --side 16 --seed 3 --out " + dir.file("data"),
                    dir.file("l1"))
                .exit_code == 0);
    REQUIRE(run_cli("oracle --data " + dir.file("data") + " --depth 5 --out-trees " +
                        dir.file("trees") + " --out-render " + dir.file("render"),
                    dir.file("l2"))
                .exit_code == 0);
    CHECK(std::filesystem::exists(dir.file("trees/item0000.tree.json")));
    CHECK(std::filesystem::exists(dir.file("render/item0000.png")));

    // tiny training run, then evaluate the checkpoint
    std::ofstream cfg(dir.file("train.cfg"));
    cfg << "algorithm = bc\nepochs = 2\nbatch_size = 4\nmax_depth = 3\n"
        << "feature_side = 4\nconv = none\ndense = 6\neval_every = 0\n";
    cfg.close();
    const auto train = run_cli("train --data " + dir.file("data") + " --config " +
                                   dir.file("train.cfg") + " --seed 5 --out " +
                                   dir.file("run"),
                               dir.file("l3"));
    INFO(train.output);
    REQUIRE(train.exit_code == 0);
    CHECK(std::filesystem::exists(dir.file("run/fold0/policy.ckpt")));
    CHECK(std::filesystem::exists(dir.file("run/fold0/train_log.csv")));
    CHECK(std::filesystem::exists(dir.file("run/report.csv")));

    const auto eval = run_cli("eval --data " + dir.file("data") + " --checkpoint " +
                                  dir.file("run/fold0/policy.ckpt") + " --report " +
                                  dir.file("eval.csv"),
                              dir.file("l4"));
    INFO(eval.output);
    REQUIRE(eval.exit_code == 0);
    CHECK(eval.output.find("mean accuracy") != std::string::npos);
    CHECK(std::filesystem::exists(dir.file("eval.csv")));

    const auto render = run_cli("render --tree " + dir.file("trees/item0000.tree.json") +
                                    " --image " + dir.file("data/item0000.png") +
                                    " --out " + dir.file("overlay.png"),
                                dir.file("l5"));
    INFO(render.output);
    REQUIRE(render.exit_code == 0);
    CHECK(std::filesystem::exists(dir.file("overlay.png")));
}

TEST_CASE("training runs are byte-identical under a fixed seed", "[cli]") {
    testutil::TempDir dir("segparse-cli-det");
    REQUIRE(run_cli("generate --n 3 --side 16 --seed 11 --out " + dir.file("data"),
                    dir.file("l1"))
                .exit_code == 0);
    std::ofstream cfg(dir.file("train.cfg"));
    cfg << "algorithm = drag\nepochs = 2\nbatch_size = 4\nmax_depth = 3\n"
        << "feature_side = 4\nconv = none\ndense = 6\neval_every = 1\n";
    cfg.close();
    const std::string args = "train --data " + dir.file("data") + " --config " +
                             dir.file("train.cfg") + " --seed 13 --out ";
    REQUIRE(run_cli(args + dir.file("runa"), dir.file("l2")).exit_code == 0);
    REQUIRE(run_cli(args + dir.file("runb"), dir.file("l3")).exit_code == 0);
    CHECK(directories_equal(dir.file("runa"), dir.file("runb")));
}

TEST_CASE("bad io paths exit with the io code", "[cli]") {
    testutil::TempDir dir("segparse-cli-io");
    const auto result =
        run_cli("oracle --data " + dir.file("nope"), dir.file("log.txt"));
    CHECK(result.exit_code == 2);

    const auto eval = run_cli(
        "eval --data " + dir.file("nope") + " --checkpoint x.ckpt", dir.file("l2"));
    CHECK(eval.exit_code == 2);
}
