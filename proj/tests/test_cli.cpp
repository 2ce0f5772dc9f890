#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* path = std::getenv("LATENTG_CLI");
    REQUIRE(path != nullptr);
    return path;
}

int run(const std::string& args, const std::string& stderr_file = "") {
    std::string cmd = cli() + " " + args + " > /dev/null";
    cmd += stderr_file.empty() ? " 2> /dev/null" : " 2> " + stderr_file;
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fresh_dir(const std::string& name) {
    std::string dir = "/tmp/latentg_cli_" + name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::string kTinyNet =
    " --set net.embed_dim=8 --set net.conv_channels=6 --set net.latent_dim=4"
    " --set vocab.max_len=16 --set loss.gamma=1";

}  // namespace

TEST_CASE("synth is byte-identical under a fixed seed") {
    auto d1 = fresh_dir("synth1");
    auto d2 = fresh_dir("synth2");
    CHECK(run("synth --n 70 --seed 3 --out " + d1) == 0);
    CHECK(run("synth --n 70 --seed 3 --out " + d2) == 0);
    const auto a = slurp(d1 + "/synth.csv");
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(d2 + "/synth.csv"));
    auto d3 = fresh_dir("synth3");
    CHECK(run("synth --n 70 --seed 4 --out " + d3) == 0);
    CHECK(a != slurp(d3 + "/synth.csv"));
}

TEST_CASE("prep produces the corpus and stats artifacts") {
    auto dir = fresh_dir("prep");
    REQUIRE(run("synth --n 42 --seed 1 --out " + dir) == 0);
    CHECK(run("prep --input " + dir + "/synth.csv --out " + dir) == 0);
    CHECK(fs::exists(dir + "/corpus.csv"));
    CHECK(fs::exists(dir + "/class_counts.csv"));
    CHECK(fs::exists(dir + "/length_hist.csv"));
    CHECK(fs::exists(dir + "/effective_config.txt"));
    const auto effective = slurp(dir + "/effective_config.txt");
    CHECK(effective.find("digest") != std::string::npos);
    CHECK(effective.find("loss.alpha = 0.56") != std::string::npos);
    const auto corpus = slurp(dir + "/corpus.csv");
    CHECK(corpus.rfind("id,statement,status,clean", 0) == 0);
}

TEST_CASE("missing artifacts fail with exit 1 and name the producing step") {
    auto dir = fresh_dir("missing");
    // nothing prepared yet
    const std::string err = dir + "/err.txt";
    CHECK(run("stats --out " + dir, err) == 1);
    CHECK(slurp(err).find("prep") != std::string::npos);

    REQUIRE(run("synth --n 42 --seed 1 --out " + dir) == 0);
    REQUIRE(run("prep --input " + dir + "/synth.csv --out " + dir) == 0);
    CHECK(run("train-student --out " + dir, err) == 1);
    CHECK(slurp(err).find("algorithm1") != std::string::npos);
    CHECK(run("evaluate --out " + dir, err) == 1);
    CHECK(slurp(err).find("train-student") != std::string::npos);
}

TEST_CASE("config errors exit with code 1") {
    auto dir = fresh_dir("cfgerr");
    const std::string err = dir + "/err.txt";
    CHECK(run("synth --out " + dir + " --set loss.gama=1", err) == 1);
    CHECK(slurp(err).find("loss.gama") != std::string::npos);
    CHECK(run("synth --out " + dir + " --set nonsense", err) == 1);
}

TEST_CASE("full tiny pipeline runs end to end") {
    auto dir = fresh_dir("pipeline");
    REQUIRE(run("synth --n 84 --seed 2 --out " + dir) == 0);
    REQUIRE(run("prep --input " + dir + "/synth.csv --out " + dir) == 0);
    REQUIRE(run("train-teacher --seed 2 --out " + dir + kTinyNet +
                " --set trainer.teacher_epochs=2") == 0);
    CHECK(fs::exists(dir + "/teacher.ckpt"));
    CHECK(fs::exists(dir + "/vocab.txt"));
    CHECK(fs::exists(dir + "/teacher_training_log.csv"));
    const auto log = slurp(dir + "/teacher_training_log.csv");
    CHECK(log.rfind("epoch,base,latentg_mean,mse,total,modulation_factor", 0) == 0);

    REQUIRE(run("algorithm1 --seed 2 --out " + dir + kTinyNet) == 0);
    CHECK(fs::exists(dir + "/teacher_features.bin"));
    CHECK(fs::exists(dir + "/gmm.bin"));
    CHECK(fs::exists(dir + "/gmm_report.json"));

    REQUIRE(run("train-student --seed 2 --out " + dir + kTinyNet +
                " --set trainer.student_epochs=2") == 0);
    CHECK(fs::exists(dir + "/student.ckpt"));
    CHECK(fs::exists(dir + "/student_training_log.csv"));

    REQUIRE(run("evaluate --seed 2 --out " + dir + kTinyNet) == 0);
    CHECK(fs::exists(dir + "/metrics.json"));
    CHECK(fs::exists(dir + "/confusion.csv"));
    const auto metrics = slurp(dir + "/metrics.json");
    CHECK(metrics.find("accuracy") != std::string::npos);
    CHECK(metrics.find("config_digest") != std::string::npos);
    CHECK(metrics.find("\"split\": \"test\"") != std::string::npos);

    CHECK(run("evaluate --seed 2 --out " + dir + kTinyNet + " --split train") == 0);
    CHECK(run("evaluate --seed 2 --out " + dir + kTinyNet + " --split bogus") != 0);

    CHECK(run("baseline --seed 2 --out " + dir) == 0);
    CHECK(fs::exists(dir + "/baseline_metrics.json"));
    const auto baseline = slurp(dir + "/baseline_metrics.json");
    CHECK(baseline.find("logreg") != std::string::npos);
    CHECK(baseline.find("naive_bayes") != std::string::npos);

    CHECK(run("tfidf --out " + dir) == 0);
    CHECK(fs::exists(dir + "/tfidf.csv"));
}

TEST_CASE("evaluate refuses a vocabulary that differs from the checkpoint") {
    auto dir = fresh_dir("vocabmismatch");
    REQUIRE(run("synth --n 84 --seed 5 --out " + dir) == 0);
    REQUIRE(run("prep --input " + dir + "/synth.csv --out " + dir) == 0);
    REQUIRE(run("train-teacher --seed 5 --out " + dir + kTinyNet +
                " --set trainer.teacher_epochs=1") == 0);
    // overwrite the vocabulary with something else
    {
        std::ofstream out(dir + "/vocab.txt");
        out << "completely\ndifferent\nwords\n";
    }
    const std::string err = dir + "/err.txt";
    CHECK(run("evaluate --seed 5 --out " + dir + kTinyNet + " --checkpoint " + dir +
                  "/teacher.ckpt",
              err) == 1);
    CHECK(slurp(err).find("vocabulary") != std::string::npos);
}
