#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <doctest.h>

#include "test_util.hpp"
#include "trajmask/cli.hpp"
#include "trajmask/csv.hpp"
#include "trajmask/dataset.hpp"
#include "trajmask/svgplot.hpp"

using namespace trajmask;
using tmtest::read_file_bytes;
using tmtest::scratch_dir;

namespace fs = std::filesystem;

namespace {

struct CapturedRun {
    int exit_code;
    std::string err;
};

CapturedRun run(const std::vector<std::string>& args) {
    std::ostringstream err;
    std::streambuf* old = std::cerr.rdbuf(err.rdbuf());
    int code = run_cli(args);
    std::cerr.rdbuf(old);
    return {code, err.str()};
}

std::string strip_wall_ms(const std::string& csv_path) {
    CsvTable t = read_csv(csv_path);
    int wall = t.col("wall_ms");
    std::string out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            if (static_cast<int>(c) == wall) continue;
            out += t.rows[r][c];
            out += ',';
        }
        out += '\n';
    }
    return out;
}

}  // namespace

TEST_CASE("usage and flag errors exit with code 2") {
    CHECK(run({}).exit_code == 2);
    CHECK(run({"frobnicate"}).exit_code == 2);

    CapturedRun unknown = run({"collect", "--tier", "random", "--transitions", "10", "--out",
                               "/tmp/x.rpmd", "--bogus", "1"});
    CHECK(unknown.exit_code == 2);
    CHECK(unknown.err.find("--bogus") != std::string::npos);
    CHECK(unknown.err.find("usage:") != std::string::npos);

    CapturedRun missing = run({"collect", "--tier", "random"});
    CHECK(missing.exit_code == 2);
    CHECK(missing.err.find("--transitions") != std::string::npos);

    CapturedRun missing_file = run({"pretrain", "--data", "/nonexistent/d.rpmd", "--out", "/tmp/o"});
    CHECK(missing_file.exit_code == 2);
    CHECK(missing_file.err.find("/nonexistent/d.rpmd") != std::string::npos);
}

TEST_CASE("mask.p validation names the key and range") {
    std::string dir = scratch_dir("cli_maskp");
    CHECK(run({"collect", "--tier", "random", "--transitions", "60", "--seed", "1", "--out",
               dir + "/d.rpmd"})
              .exit_code == 0);
    CapturedRun bad = run({"pretrain", "--data", dir + "/d.rpmd", "--out", dir + "/run",
                           "--mask.p", "1.5"});
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("mask.p") != std::string::npos);
    CHECK(bad.err.find("(0,1)") != std::string::npos);
}

TEST_CASE("collect writes dataset plus manifest") {
    std::string dir = scratch_dir("cli_collect");
    CapturedRun r = run({"collect", "--tier", "random", "--layout", "2", "--transitions", "120",
                         "--seed", "9", "--out", dir + "/d.rpmd"});
    CHECK(r.exit_code == 0);
    TrajectoryDataset ds = load_dataset(dir + "/d.rpmd");
    CHECK(ds.total_transitions == 120);
    CHECK(ds.spec.layout_id == 2);

    std::ifstream mf(dir + "/d.rpmd.manifest");
    REQUIRE(mf.is_open());
    std::string content((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    CHECK(content.find("meta.command = collect") != std::string::npos);
    CHECK(content.find("tier = random") != std::string::npos);
    CHECK(content.find("seed = 9") != std::string::npos);
}

TEST_CASE("pretrain command end to end, manifests replay byte-identically") {
    std::string dir = scratch_dir("cli_pretrain");
    REQUIRE(run({"collect", "--tier", "random", "--transitions", "400", "--seed", "3", "--out",
                 dir + "/d.rpmd"})
                .exit_code == 0);

    std::vector<std::string> common = {
        "--data", dir + "/d.rpmd", "--steps", "8",  "--batch", "2",  "--K", "6",
        "--d-model", "16", "--d-proj", "8", "--heads", "2", "--ff", "32", "--blocks", "1",
        "--scale", "small", "--eval-interval", "4", "--seed", "12"};
    std::vector<std::string> a1 = {"pretrain", "--out", dir + "/run1"};
    a1.insert(a1.end(), common.begin(), common.end());
    CHECK(run(a1).exit_code == 0);
    CHECK(fs::exists(dir + "/run1/ckpt_final.rpmc"));
    CHECK(fs::exists(dir + "/run1/metrics.csv"));
    CHECK(fs::exists(dir + "/run1/manifest"));

    // replay the manifest into a second directory
    std::vector<std::string> a2 = {"pretrain", "--config", dir + "/run1/manifest",
                                   "--out", dir + "/run2"};
    CHECK(run(a2).exit_code == 0);
    CHECK(strip_wall_ms(dir + "/run1/metrics.csv") == strip_wall_ms(dir + "/run2/metrics.csv"));
    CHECK(read_file_bytes(dir + "/run1/ckpt_final.rpmc") ==
          read_file_bytes(dir + "/run2/ckpt_final.rpmc"));
}

TEST_CASE("config file values apply and flags override them") {
    std::string dir = scratch_dir("cli_config");
    REQUIRE(run({"collect", "--tier", "random", "--transitions", "120", "--seed", "2", "--out",
                 dir + "/d.rpmd"})
                .exit_code == 0);
    {
        std::ofstream cfg(dir + "/base.cfg");
        cfg << "# base config\n";
        cfg << "mask.p = 0.2\n";
        cfg << "steps = 4\n";
    }
    CHECK(run({"pretrain", "--config", dir + "/base.cfg", "--data", dir + "/d.rpmd", "--out",
               dir + "/run", "--K", "5", "--d-model", "16", "--d-proj", "8", "--heads", "2",
               "--ff", "32", "--blocks", "1", "--batch", "2", "--eval-interval", "2",
               "--mask.p", "0.15"})
              .exit_code == 0);
    std::ifstream mf(dir + "/run/manifest");
    std::string content((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    CHECK(content.find("mask.p = 0.15") != std::string::npos);  // flag wins
    CHECK(content.find("steps = 4") != std::string::npos);      // config applies
}

TEST_CASE("plot command validates input") {
    std::string dir = scratch_dir("cli_plot");
    {
        CsvWriter w(dir + "/empty.csv", {"horizon", "encoder", "seed", "mse"});
        w.close();
    }
    CapturedRun empty = run({"plot", "--kind", "probe", "--csv", dir + "/empty.csv", "--out",
                             dir + "/x.svg"});
    CHECK(empty.exit_code == 2);
    CHECK(empty.err.find("no data rows") != std::string::npos);

    {
        CsvWriter w(dir + "/badcols.csv", {"a", "b"});
        w.row({"1", "2"});
        w.close();
    }
    CapturedRun bad = run({"plot", "--kind", "probe", "--csv", dir + "/badcols.csv", "--out",
                           dir + "/x.svg"});
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("horizon") != std::string::npos);
    CHECK(bad.err.find("a") != std::string::npos);

    CHECK(run({"plot", "--kind", "waffle", "--csv", dir + "/badcols.csv", "--out", dir + "/x.svg"})
              .exit_code == 2);
}

TEST_CASE("probe chart has one line per encoder and five points") {
    std::string dir = scratch_dir("cli_plot_probe");
    {
        CsvWriter w(dir + "/probe.csv", {"horizon", "encoder", "seed", "mse"});
        for (const char* enc : {"pretrained", "random"})
            for (int h : {1, 2, 5, 10, 20})
                for (int s : {1, 2, 3})
                    w.row({std::to_string(h), enc, std::to_string(s),
                           format_double(0.01 * h + (enc[0] == 'r' ? 0.05 : 0.0) + 0.001 * s)});
        w.close();
    }
    CHECK(run({"plot", "--kind", "probe", "--csv", dir + "/probe.csv", "--out", dir + "/p.svg"})
              .exit_code == 0);
    std::string svg(read_file_bytes(dir + "/p.svg").data(),
                    read_file_bytes(dir + "/p.svg").size());
    CHECK(svg.find("<svg") != std::string::npos);
    std::size_t lines = 0, pos = 0;
    while ((pos = svg.find("class=\"line\"", pos)) != std::string::npos) {
        ++lines;
        pos += 10;
    }
    CHECK(lines == 2);
}

TEST_CASE("rl chart band spans min and max across seeds at each step") {
    std::string dir = scratch_dir("cli_plot_rl");
    // three seeds with known spread at each logged step
    std::vector<int> steps = {0, 500, 1000};
    {
        CsvWriter w(dir + "/rl.csv", {"layout", "mode", "seed", "step", "return"});
        for (int s : {1, 2, 3})
            for (int st : steps)
                w.row({"0", "frozen", std::to_string(s), std::to_string(st),
                       format_double(0.1 * s + 0.001 * st)});
        w.close();
    }
    CsvTable t = read_csv(dir + "/rl.csv");
    auto series = build_plot_series("rl", t, dir + "/rl.csv");
    REQUIRE(series.size() == 1);
    REQUIRE(series[0].x.size() == steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        double lo_expect = 0.1 * 1 + 0.001 * steps[i];
        double hi_expect = 0.1 * 3 + 0.001 * steps[i];
        CHECK(series[0].lo[i] == doctest::Approx(lo_expect));
        CHECK(series[0].hi[i] == doctest::Approx(hi_expect));
        CHECK(series[0].y[i] == doctest::Approx(0.1 * 2 + 0.001 * steps[i]));
    }
    CHECK(run({"plot", "--kind", "rl", "--csv", dir + "/rl.csv", "--out", dir + "/rl.svg"})
              .exit_code == 0);
    std::string svg(read_file_bytes(dir + "/rl.svg").data(), read_file_bytes(dir + "/rl.svg").size());
    CHECK(svg.find("class=\"band\"") != std::string::npos);
}

TEST_CASE("the installed binary behaves like the in-process cli") {
    std::string bin = TRAJMASK_BIN;
    if (!fs::exists(bin)) return;  // binary not built in this configuration
    CHECK(std::system((bin + " help > /dev/null").c_str()) == 0);
    int code = std::system((bin + " frobnicate 2> /dev/null").c_str());
    CHECK(WEXITSTATUS(code) == 2);
}
