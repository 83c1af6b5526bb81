#include "hbac/io.hpp"

#include "fixtures.hpp"

#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr combined
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(HBAC_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void write_config(const fixture::TempDir& dir) {
  const nlohmann::json j = {{"seed", 1},
                            {"k", 3},
                            {"paths", {{"eeg_dir", "data/eeg"}, {"manifest", "data/manifest.csv"}}},
                            {"model", {{"mlp_hidden", {8}}}},
                            {"train", {{"stage1_epochs", 1}, {"stage2_epochs", 1}}}};
  hbac::io::write_atomic(dir / "cfg.json", j.dump(2));
}

}  // namespace

TEST(Cli, HelpAndUnknownCommand) {
  const auto help = cli("--help");
  EXPECT_EQ(help.code, 0);
  for (const char* sub : {"synth", "preprocess", "spectrogram", "split", "train", "evaluate", "report", "gradcheck"})
    EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
  EXPECT_NE(cli("frobnicate").code, 0);
}

TEST(Cli, GradcheckPasses) {
  const auto r = cli("gradcheck --case dense");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("dense"), std::string::npos);
  EXPECT_EQ(cli("gradcheck --case nope").code, 1);
}

TEST(Cli, PipelineAndErrorExits) {
  fixture::TempDir dir("cli");
  write_config(dir);
  const std::string cfg = "--config " + (dir / "cfg.json").string();
  ASSERT_EQ(cli("synth --patients 6 --rows 1 --out " + (dir / "data").string()).code, 0);
  const auto pre = cli("preprocess " + cfg);
  ASSERT_EQ(pre.code, 0) << pre.out;

  const auto missing = cli("train " + cfg + " --model mlp --folds " + (dir / "nope.json").string() + " --out " +
                            (dir / "run").string());
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(lines(missing.out), 1u) << missing.out;
  EXPECT_NE(missing.out.find("hbac split"), std::string::npos) << missing.out;

  const auto lr = cli("spectrogram " + cfg + " --mode lr --in " + (dir / "data" / "eeg" / "100000.f32").string() +
                       " --out " + (dir / "spec").string());
  EXPECT_EQ(lr.code, 1);
  EXPECT_EQ(lines(lr.out), 1u) << lr.out;
  EXPECT_NE(lr.out.find("600 s"), std::string::npos) << lr.out;

  ASSERT_EQ(cli("split " + cfg + " --out " + (dir / "folds.json").string()).code, 0);
  const auto tr = cli("train " + cfg + " --model mlp --folds " + (dir / "folds.json").string() + " --out " +
                       (dir / "run").string());
  ASSERT_EQ(tr.code, 0) << tr.out;
  const auto ev = cli("evaluate --run " + (dir / "run").string());
  ASSERT_EQ(ev.code, 0) << ev.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "report.json"));
  EXPECT_EQ(cli("report --run " + (dir / "run").string()).code, 0);
}

TEST(Cli, BadConfigIsOneLine) {
  fixture::TempDir dir("clibad");
  hbac::io::write_atomic(dir / "cfg.json", "{\"sede\": 1}");
  const auto r = cli("preprocess --config " + (dir / "cfg.json").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(lines(r.out), 1u) << r.out;
  EXPECT_NE(r.out.find("sede"), std::string::npos);
}
