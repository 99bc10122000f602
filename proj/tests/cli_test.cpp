#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dorm/io.hpp"
#include "test_util.hpp"

namespace dorm {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dorm_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(path(name));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write_dataset_file(const std::string& name, const Dataset& d) const {
    std::ofstream out(path(name));
    write_dataset(out, d);
  }

  // Runs the CLI with stdout to `out` and stderr to `err` (inside the temp
  // dir); returns the exit status.
  int run(const std::string& args, const std::string& out = "stdout.txt",
          const std::string& err = "stderr.txt") const {
    const std::string cmd = std::string(DORM_CLI_PATH) + " " + args + " > " +
                            path(out) + " 2> " + path(err);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  // Value of "<name>\t<value>" in an eval output file.
  double metric(const std::string& file, const std::string& name) const {
    std::istringstream in(read(file));
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind(name + "\t", 0) == 0) return std::stod(line.substr(name.size() + 1));
    }
    ADD_FAILURE() << name << " missing from " << file;
    return -1.0;
  }

  fs::path dir_;
};

Dataset rankable_data() {
  testing::SyntheticSpec spec;
  spec.queries = 15;
  spec.docs = 10;
  spec.dim = 4;
  spec.gap = 0.15;
  return testing::synthetic_dataset(spec, 51);
}

TEST_F(CliTest, PerfectlyRankableSetScoresHundred) {
  write_dataset_file("train.txt", rankable_data());
  ASSERT_EQ(run("train --data " + path("train.txt") + " --model " + path("m.txt") +
                " --C 10 --eps 1e-3 --report " + path("report.txt")),
            0)
      << read("stderr.txt");
  EXPECT_EQ(read("m.txt").rfind("dorm-model v1\n", 0), 0u);
  EXPECT_EQ(read("report.txt").rfind("iter=1 dual=", 0), 0u);
  ASSERT_EQ(run("eval --data " + path("train.txt") + " --model " + path("m.txt")), 0)
      << read("stderr.txt");
  EXPECT_NE(read("stdout.txt").find("NDCG@10\t100.00\n"), std::string::npos)
      << read("stdout.txt");
}

TEST_F(CliTest, PredictIsDeterministicAndCoversEveryDocument) {
  const Dataset d = rankable_data();
  write_dataset_file("train.txt", d);
  ASSERT_EQ(run("train --data " + path("train.txt") + " --model " + path("m.txt")), 0);
  ASSERT_EQ(run("predict --data " + path("train.txt") + " --model " + path("m.txt"),
                "p1.txt"),
            0);
  ASSERT_EQ(run("predict --data " + path("train.txt") + " --model " + path("m.txt") +
                    " --output " + path("p2.txt"),
                "unused.txt"),
            0);
  const std::string p1 = read("p1.txt");
  EXPECT_FALSE(p1.empty());
  EXPECT_EQ(p1, read("p2.txt"));
  std::size_t lines = 0;
  for (char ch : p1) lines += ch == '\n' ? 1 : 0;
  std::size_t docs = 0;
  for (const auto& q : d.queries) docs += q.size();
  EXPECT_EQ(lines, docs);
}

TEST_F(CliTest, TrainedModelBeatsZeroModel) {
  testing::SyntheticSpec spec;
  spec.queries = 30;
  spec.docs = 10;
  spec.noise_rate = 0.1;
  write_dataset_file("train.txt", testing::synthetic_dataset(spec, 52));
  write_dataset_file("test.txt", testing::synthetic_dataset(spec, 53));
  ASSERT_EQ(run("train --data " + path("train.txt") + " --model " + path("m.txt") +
                " --C 1 --standardize"),
            0);
  ASSERT_EQ(run("eval --data " + path("test.txt") + " --model " + path("m.txt"),
                "trained.txt"),
            0);
  ASSERT_EQ(run("eval --data " + path("test.txt"), "zero.txt"), 0);
  EXPECT_GT(metric("trained.txt", "NDCG@10"), metric("zero.txt", "NDCG@10"));
}

TEST_F(CliTest, EvalReportsExtraMeasureAndWarnings) {
  write("d.txt",
        "2 qid:1 1:1\n2 qid:1 1:0.5\n0 qid:1 1:0\n0 qid:2 1:1\n0 qid:2 1:2\n");
  ASSERT_EQ(run("eval --data " + path("d.txt") + " --measure prec@2"), 0);
  const std::string out = read("stdout.txt");
  EXPECT_NE(out.find("queries\t1\n"), std::string::npos);
  EXPECT_NE(out.find("prec@2\t"), std::string::npos);
  EXPECT_NE(out.find("MRR\t100.00\n"), std::string::npos) << out;
  const std::string err = read("stderr.txt");
  EXPECT_NE(err.find("dropped 1"), std::string::npos) << err;
  EXPECT_NE(err.find("MRR"), std::string::npos) << err;
}

TEST_F(CliTest, DiversityModes) {
  write("d.txt",
        "2 qid:1 1:3 # block:a\n2 qid:1 1:2 # block:a\n1 qid:1 1:1 # block:b\n");
  ASSERT_EQ(run("train --data " + path("d.txt") + " --model " + path("m.txt") +
                " --diversity train --measure ndcg@2"),
            0)
      << read("stderr.txt");
  write("m1.txt", "dorm-model v1\nmeasure=ndcg@10\ndecay=pow:0.5\nC=1\neps=0.001\ndim=1\n1\n");
  ASSERT_EQ(run("predict --data " + path("d.txt") + " --model " + path("m1.txt") +
                " --diversity filter --depth 2"),
            0);
  EXPECT_EQ(read("stdout.txt"), "1\t1\t1\t3\n1\t2\t3\t1\n1\t3\t2\t2\n");
  EXPECT_EQ(run("predict --data " + path("d.txt") + " --model " + path("m1.txt") +
                " --diversity train"),
            2);
}

TEST_F(CliTest, ExitCodes) {
  write("d.txt", "1 qid:1 1:1\n0 qid:1 1:2\n");
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("train --data " + path("d.txt")), 2);
  EXPECT_EQ(run("train --data " + path("d.txt") + " --model " + path("m.txt") +
                " --measure bogus"),
            2);
  EXPECT_EQ(run("train --data " + path("d.txt") + " --model " + path("m.txt") +
                " --decay nope"),
            2);
  EXPECT_EQ(run("train --data " + path("d.txt") + " --model " + path("m.txt") + " --C -1"),
            2);
  EXPECT_EQ(run("train --data " + path("d.txt") + " --model " + path("m.txt") +
                " --diversity sometimes"),
            2);
  EXPECT_EQ(run("frobnicate"), 2);

  EXPECT_EQ(run("eval --data " + path("missing.txt")), 1);
  write("bad.txt", "1 qid:1 1:1\nnot a line\n");
  EXPECT_EQ(run("eval --data " + path("bad.txt")), 1);
  EXPECT_NE(read("stderr.txt").find("line 2"), std::string::npos);
  write("trunc.txt", "dorm-model v1\nmeasure=ndcg\n");
  EXPECT_EQ(run("predict --data " + path("d.txt") + " --model " + path("trunc.txt")), 1);
  EXPECT_NE(read("stderr.txt").find("byte offset"), std::string::npos);
  write("wide.txt", "dorm-model v1\nmeasure=ndcg\ndecay=log\nC=1\neps=0.1\ndim=1\n1\n");
  write("d2.txt", "1 qid:1 1:1 2:1\n0 qid:1 1:2\n");
  EXPECT_EQ(run("predict --data " + path("d2.txt") + " --model " + path("wide.txt")), 1);
  EXPECT_NE(read("stderr.txt").find("dimension"), std::string::npos);

  EXPECT_EQ(run("train --data " + path("d.txt") + " --model " + path("m.txt")), 0);
  EXPECT_EQ(run("predict --data " + path("d.txt") + " --model " + path("m.txt")), 0);
  EXPECT_EQ(run("--help"), 0);
}

}  // namespace
}  // namespace dorm
