#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string cli = PMBP_CLI_PATH;

struct Workdir {
    fs::path dir;
    Workdir() {
        dir = fs::temp_directory_path() / ("pmbp_cli_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                           "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
        write("h2.json", R"({"d":2,"e":0,"theta":[[1,1],[1,1]],"alpha":[[0.3,0.2],[0.2,0.3]],"gamma":[0,0],"nu":[1,1]})");
        write("p21.json", R"({"d":2,"e":1,"theta":[[1,1],[0.2,0.5]],"alpha":[[0.3,0.2],[0.2,0.3]],"gamma":[0,0],"nu":[1,1]})");
    }
    ~Workdir() { fs::remove_all(dir); }
    [[nodiscard]] std::string path(const std::string& f) const { return (dir / f).string(); }
    void write(const std::string& f, const std::string& text) const { std::ofstream(dir / f) << text; }
    [[nodiscard]] std::string read(const std::string& f) const {
        std::ifstream is(dir / f, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    }
    int run(const std::string& args) const {
        const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + args + " 2>>stderr.log";
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
};

}  // namespace

TEST(Cli, FlagsOverrideConfig) {
    Workdir w;
    w.write("cfg.json", R"({"params":"h2.json","T":10,"seed":5})");
    ASSERT_EQ(w.run("sample-hawkes --config cfg.json --out a.jsonl"), 0);
    ASSERT_EQ(w.run("sample-hawkes --config cfg.json --T 5 --out b.jsonl"), 0);
    EXPECT_EQ(w.read("a.jsonl").substr(0, 16), R"({"T":10.0,"d":2})");
    EXPECT_EQ(w.read("b.jsonl").substr(0, 15), R"({"T":5.0,"d":2})");
}

TEST(Cli, ExitCodes) {
    Workdir w;
    EXPECT_NE(w.run(""), 0);
    EXPECT_NE(w.run("no-such-command"), 0);
    EXPECT_EQ(w.run("sample-hawkes --params h2.json"), 1);           // missing T
    EXPECT_EQ(w.run("sample-hawkes --params h2.json --T abc"), 1);   // bad number
    EXPECT_EQ(w.run("sample-hawkes --params missing.json --T 1"), 1);
    EXPECT_EQ(w.run("sample-pmbp --params p21.json --T 5 --bound ub3"), 1);
    EXPECT_EQ(w.run("sample-hawkes --params h2.json --T 1 --out /nonexistent/dir/x"), 1);
}

TEST(Cli, PipelineProducesParseableOutputs) {
    Workdir w;
    ASSERT_EQ(w.run("sample-hawkes --params h2.json --T 20 --seed 1 --out ev.jsonl"), 0);
    ASSERT_EQ(w.run("censor --events ev.jsonl --dims 0 --width 1 --out ds.json"), 0);
    ASSERT_EQ(w.run("fit --data ds.json --n-starts 1 --max-iterations 20 --seed 1 --out fit.json"), 0);
    EXPECT_NE(w.read("fit.json").find("\"regularity\""), std::string::npos);
    ASSERT_EQ(w.run("evaluate --params p21.json --events ev.jsonl --times 0,1,2.5 --step 0.05 --out ev.csv"), 0);
    EXPECT_EQ(w.read("ev.csv").substr(0, 24), "t,xi_1,xi_2,Xi_1,Xi_2\n0,");
    ASSERT_EQ(w.run("predict --params p21.json --events ev.jsonl --t-test 22 --n-samples 20 --step 0.05 --out pr.csv"), 0);
    EXPECT_EQ(w.read("pr.csv").substr(0, 41), "interval_start,interval_end,dim,mean,sd\n2");
    ASSERT_EQ(w.run("gof --params p21.json --data ds.json --step 0.05 --n-draws 100 --out gof.json"), 0);
    ASSERT_EQ(w.run("grad-check --params p21.json --data ds.json --step 0.05 --out gc.csv"), 0);
    ASSERT_EQ(w.run("recover --params h2.json --T 10 --n-sequences 1 --group-size 1 --widths 1 --n-starts 1 "
                    "--max-iterations 20 --out rec.csv --summary sum.csv"),
              0);
    EXPECT_EQ(w.read("rec.csv").substr(0, 59), "param_name,true_value,likelihood_mode,group_index,estimate\n");
    EXPECT_EQ(w.read("sum.csv").substr(0, 54), "param_name,likelihood_mode,true_value,mean,median,iqr\n");
}

TEST(Cli, GradCheckFailsAboveTolerance) {
    Workdir w;
    ASSERT_EQ(w.run("sample-hawkes --params h2.json --T 10 --seed 1 --out ev.jsonl"), 0);
    ASSERT_EQ(w.run("censor --events ev.jsonl --dims 0 --width 1 --out ds.json"), 0);
    EXPECT_NE(w.run("grad-check --params p21.json --data ds.json --step 0.05 --tol 0 --fd-step 0.1 --out gc.csv"), 0);
}
