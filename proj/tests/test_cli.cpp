#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args)
{
    const std::string cmd = std::string(ZSDGEN_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / "zsd_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("exit codes")
    {
        const auto dir = scratch("cli");
        const std::string data = (dir / "data").string();
        CHECK(run("--seed 2 --out-dir " + data + " synth-data --images 30") == 0);
        CHECK(fs::exists(dir / "data" / "semantics.csv"));
        CHECK(fs::exists(dir / "data" / "manifest.json"));

        // Parse and validation failures.
        CHECK(run("no-such-command") == 2);
        CHECK(run("--out-dir " + data + " synth-data --n-unseen 40") == 2);
        CHECK(run("--preset nowhere train --data-dir " + data) == 2);
        CHECK(run("--set epochs=-3 train --data-dir " + data) == 2);
        CHECK(run("train") == 2);
        CHECK(run("evaluate --data-dir " + data + " --head " + (dir / "missing.json").string()) == 2);

        // Identical semantic vectors make the margin matrix degenerate: a numeric failure.
        const auto bad = dir / "bad";
        fs::create_directories(bad);
        for (const char* f : {"split.json", "train_seen.csv", "train_background.csv"}) {
            fs::copy_file(dir / "data" / f, bad / f);
        }
        std::ifstream sem(dir / "data" / "semantics.csv");
        std::ofstream flat(bad / "semantics.csv");
        std::string line;
        std::getline(sem, line);
        flat << line << '\n';
        while (std::getline(sem, line)) {
            const auto first = line.find(',');
            const auto second = line.find(',', first + 1);
            flat << line.substr(0, second);
            for (std::size_t k = 0; k < 16; ++k) {
                flat << ",1";
            }
            flat << '\n';
        }
        flat.close();
        CHECK(run("--preset desk --set epochs=1 --set mapper_epochs=1 --set cls_epochs=1 --out-dir " +
                  (dir / "bad_run").string() + " train --data-dir " + bad.string()) == 3);
    }

    TEST_CASE("full chain through the command line")
    {
        const auto dir = scratch("cli_chain");
        const std::string data = (dir / "data").string();
        const std::string run_dir = (dir / "run").string();
        const std::string quick = "--preset desk --set epochs=2 --set hidden=32 --set n_per_class=40 ";
        REQUIRE(run("--seed 1 --out-dir " + data + " synth-data --images 40") == 0);
        REQUIRE(run(quick + "--out-dir " + run_dir + " train --data-dir " + data) == 0);
        for (const char* f : {"mapper.json", "seen_classifier.json", "seen_head.json", "margins.csv", "synthesizer.json",
                              "loss_log.csv"}) {
            CHECK(fs::exists(dir / "run" / f));
        }
        REQUIRE(run(quick + "--out-dir " + run_dir + " generate --data-dir " + data + " --synthesizer " + run_dir +
                    "/synthesizer.json") == 0);
        REQUIRE(run(quick + "--out-dir " + run_dir + " build-head --data-dir " + data + " --synthesizer " + run_dir +
                    "/synthesizer.json --seen-head " + run_dir + "/seen_head.json --features " + run_dir +
                    "/features.csv") == 0);
        REQUIRE(run(quick + "--out-dir " + run_dir + " evaluate --data-dir " + data + " --head " + run_dir +
                    "/head.json") == 0);
        const auto report = nlohmann::json::parse(slurp(dir / "run" / "report.json"));
        CHECK(report["zsd"]["map"].get<double>() >= 0.0);
        CHECK(report["gzsd"].contains("hm"));
        CHECK(fs::exists(dir / "run" / "detections_zsd.csv"));

        REQUIRE(run(quick + "--out-dir " + run_dir + "/sweep generate --data-dir " + data + " --synthesizer " +
                    run_dir + "/synthesizer.json --seen-head " + run_dir + "/seen_head.json --sweep 5,10") == 0);
        std::ifstream sweep(dir / "run" / "sweep" / "sweep.csv");
        std::string header;
        std::getline(sweep, header);
        CHECK(header == "n_per_class,zsd_map,recall100,gzsd_seen,gzsd_unseen,gzsd_hm");
        CHECK(run(quick + "generate --data-dir " + data + " --synthesizer " + run_dir +
                  "/synthesizer.json --sweep 5,x --seen-head " + run_dir + "/seen_head.json") == 2);
    }
}
