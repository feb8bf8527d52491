#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// Drives the installed binary end to end through std::system; the build
// injects its location.
#ifndef CAFORMER_CLI_PATH
#error "CAFORMER_CLI_PATH must point at the caformer binary"
#endif

namespace fs = std::filesystem;

namespace {

const std::string kScratch = "/tmp/caformer_cli_scratch";

struct ScratchDir {
    ScratchDir() {
        fs::remove_all(kScratch);
        fs::create_directories(kScratch);
    }
} scratch_once;

std::string at(const std::string& rel) { return kScratch + "/" + rel; }

int run(const std::string& args) {
    const std::string cmd =
        std::string(CAFORMER_CLI_PATH) + " " + args + " > " + at("last_stdout.txt") + " 2>&1";
    const int st = std::system(cmd.c_str());
    if (st == -1) return -1;
    return WEXITSTATUS(st);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Micro model settings shared by the training-flavored cases: one fast epoch
// over a short synthetic series.
std::string micro_train_args(const std::string& out_dir, int seed) {
    std::ostringstream s;
    s << "--synth coupled_ar --set synth.M=2 --set synth.L=120 --set synth.seed=9"
      << " --set split.train_end=60 --set split.val_end=90"
      << " --set model.L_in=16 --set model.P=8 --set model.S=4 --set model.E=4"
      << " --set model.k=4 --set model.blocks=1"
      << " --task forecast --set task.horizon=8"
      << " --epochs 1 --set train.batch_size=8 --seed " << seed << " --out " << out_dir;
    return s.str();
}

} // namespace

TEST_CASE("help exits clean, junk exits with usage errors") {
    CHECK(run("--help") == 0);
    CHECK(run("train --help") == 0);
    CHECK(run("") == 2);                       // a subcommand is required
    CHECK(run("train --frobnicate 3") == 2);   // unknown flag
    CHECK(run("transmogrify") == 2);           // unknown subcommand
}

TEST_CASE("config errors exit 2 before any work happens") {
    CHECK(run("train --set bogus.key=1 " + micro_train_args(at("never"), 1)) == 2);
    CHECK(run("train --task warp --synth coupled_ar --out " + at("never2")) == 2);
    CHECK(run("train --set model.P=notanumber --synth coupled_ar --out " + at("never3")) == 2);
    CHECK_FALSE(fs::exists(at("never")));
}

TEST_CASE("synth writes series files") {
    CHECK(run("synth --kind coupled_ar --M 3 --L 120 --seed 4 --out " + at("series.csv")) == 0);
    CHECK(fs::exists(at("series.csv")));

    CHECK(run("synth --kind spiked --M 2 --L 128 --seed 5 --n-anomalies 4 --out " +
              at("spiked.csv")) == 0);
    CHECK(fs::exists(at("spiked.csv")));
    const std::string flags = slurp(at("spiked.csv.anomaly.csv"));
    std::size_t lines = 0, ones = 0;
    for (char c : flags) {
        if (c == '\n') ++lines;
        if (c == '1') ++ones;
    }
    CHECK(lines == 128);
    CHECK(ones == 4);

    CHECK(run("synth --kind two_class --M 2 --L 64 --seed 6 --n-series 4 --out " +
              at("corpus")) == 0);
    CHECK(fs::exists(at("corpus/series_000.csv")));
    CHECK(fs::exists(at("corpus/series_003.csv")));
    CHECK(fs::exists(at("corpus/labels.csv")));

    CHECK(run("synth --kind warp --M 2 --L 64 --out " + at("never4.csv")) == 2);
}

TEST_CASE("training emits the full artifact set") {
    REQUIRE(run("train " + micro_train_args(at("run1"), 7)) == 0);
    for (const char* f : {"resolved_config.txt", "log.jsonl", "model.ckpt", "metrics.json",
                          "forecast_dim0.svg", "forecast_dim0.csv", "forecast_dim1.svg",
                          "forecast_dim1.csv", "forecast_all.csv",
                          "dynamic_adjacency_block0.svg", "causal_aligner_block0.svg"})
        CHECK(fs::exists(at(std::string("run1/") + f)));

    // combined overlay: one step column plus truth/pred per dimension
    std::ifstream all(at("run1/forecast_all.csv"));
    std::string header;
    std::getline(all, header);
    std::size_t cols = 1;
    for (char c : header)
        if (c == ',') ++cols;
    CHECK(cols == 1 + 2 * 2);

    // the aligner heatmap paints its zeroed upper triangle pure white
    const std::string svg = slurp(at("run1/causal_aligner_block0.svg"));
    CHECK(svg.find("rgb(255,255,255)") != std::string::npos);

    // the resolved config records what actually ran
    const std::string resolved = slurp(at("run1/resolved_config.txt"));
    CHECK(resolved.find("train.epochs=1") != std::string::npos);
    CHECK(resolved.find("task=long_forecast") != std::string::npos);
}

TEST_CASE("reruns are byte-identical; evaluate reproduces training metrics") {
    REQUIRE(run("train " + micro_train_args(at("det_a"), 7)) == 0);
    REQUIRE(run("train " + micro_train_args(at("det_b"), 7)) == 0);
    const std::string a = slurp(at("det_a/metrics.json"));
    REQUIRE_FALSE(a.empty());
    CHECK(a == slurp(at("det_b/metrics.json")));

    REQUIRE(run("evaluate " + micro_train_args(at("det_eval"), 7) + " --checkpoint " +
                at("det_a/model.ckpt")) == 0);
    CHECK(slurp(at("det_eval/metrics.json")) == a);
}

TEST_CASE("evaluate without a usable checkpoint fails by class") {
    // no checkpoint given at all: a configuration error
    CHECK(run("evaluate " + micro_train_args(at("ev1"), 7)) == 2);
    // a path that does not exist: a runtime error
    CHECK(run("evaluate " + micro_train_args(at("ev2"), 7) + " --checkpoint " +
              at("missing.ckpt")) == 1);
}

TEST_CASE("precedence: dedicated flags beat --set beats the config file") {
    std::ofstream cfg(at("run.cfg"));
    cfg << "# comment line\n";
    cfg << "train.epochs=5\n";
    cfg << "train.batch_size=4\n";
    cfg.close();

    REQUIRE(run("train --config " + at("run.cfg") +
                " --set train.epochs=2 --epochs 3"
                " --synth coupled_ar --set synth.M=2 --set synth.L=120 --set synth.seed=9"
                " --set split.train_end=60 --set split.val_end=90"
                " --set model.L_in=16 --set model.P=8 --set model.S=4 --set model.E=4"
                " --set model.k=4 --set model.blocks=1 --task forecast --set task.horizon=8"
                " --seed 7 --out " +
                at("prec")) == 0);
    const std::string resolved = slurp(at("prec/resolved_config.txt"));
    CHECK(resolved.find("train.epochs=3") != std::string::npos);  // flag wins
    CHECK(resolved.find("train.batch_size=4") != std::string::npos); // file-only key survives

    CHECK(run("train --config " + at("nonexistent.cfg") + " --out " + at("never5")) == 2);
}

TEST_CASE("ablate writes per-variant runs and the comparison table") {
    REQUIRE(run("ablate " + micro_train_args(at("abl"), 7)) == 0);
    for (const char* v : {"full", "no_dep", "no_dyn", "no_env"}) {
        CHECK(fs::exists(at(std::string("abl/") + v + "/metrics.json")));
        CHECK(fs::exists(at(std::string("abl/") + v + "/model.ckpt")));
    }
    CHECK(fs::exists(at("abl/ablation_table.json")));
    const std::string table = slurp(at("abl/table.txt"));
    CHECK(table.find("variant") != std::string::npos);
    CHECK(table.find("no_env") != std::string::npos);
    // a switched-off environment learner leaves no aligner to draw; the
    // dynamic learner's identity fallback still gets its picture
    CHECK_FALSE(fs::exists(at("abl/no_env/causal_aligner_block0.svg")));
    CHECK(fs::exists(at("abl/no_env/dynamic_adjacency_block0.svg")));
    CHECK(fs::exists(at("abl/no_dyn/dynamic_adjacency_block0.svg")));
    CHECK(fs::exists(at("abl/no_dyn/causal_aligner_block0.svg")));
}

TEST_CASE("verify-backdoor reports equivalence and rule fixtures") {
    REQUIRE(run("verify-backdoor --trials 5 --seed 3 --out " + at("bd")) == 0);
    const std::string rep = slurp(at("bd/backdoor_report.json"));
    CHECK(rep.find("\"equivalence_pass\": true") != std::string::npos);
    CHECK(rep.find("\"chain\"") != std::string::npos);
    CHECK(rep.find("\"fork\"") != std::string::npos);
    CHECK(rep.find("\"disconnected\"") != std::string::npos);

    const std::string console = slurp(at("last_stdout.txt"));
    CHECK(console.find("PASS") != std::string::npos);
}

TEST_CASE("gradcheck subcommand passes at its default tolerance") {
    REQUIRE(run("gradcheck --seed 1 --out " + at("gc")) == 0);
    const std::string rep = slurp(at("gc/gradcheck.json"));
    CHECK(rep.find("max_rel_err") != std::string::npos);
    CHECK(rep.find("\"reproducible\": true") != std::string::npos);
}
