#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "comkd/checkpoint.hpp"
#include "comkd/trainer.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace comkd;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result comkd_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::vector<std::string> kTiny{"--input-dim", "8", "--teacher-hidden", "16", "--teacher-dim", "8",
                                     "--student-hidden", "8", "--student-dim", "4", "--attn-dim", "8",
                                     "--prompt-len", "2", "--prompt-width", "1", "--epochs-teacher", "5",
                                     "--epochs-student", "4", "--batch-size", "16"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

std::vector<std::string> gen_args(const fixtures::TempDir& dir, const std::string& name, int stream = 0) {
  return {"gen-data", "--classes", "4", "--dim", "8", "--per-class", "12", "--seed", "3",
          "--stream", std::to_string(stream), "--out", (dir / name).string()};
}

}  // namespace

TEST_CASE("edit distance suggestions") {
  CHECK(cli::edit_distance("seed", "sead") == 1);
  CHECK(cli::edit_distance("", "abc") == 3);
  CHECK(cli::suggest("--sead", {"--seed", "--data"}) == "--seed");
  CHECK(cli::suggest("--zzzzzzzz", {"--seed", "--data"}).empty());
}

TEST_CASE("gen-data is deterministic and matches the library") {
  fixtures::TempDir dir;
  REQUIRE(comkd_cli(gen_args(dir, "a.bin")).code == cli::kOk);
  REQUIRE(comkd_cli(gen_args(dir, "b.bin")).code == cli::kOk);
  CHECK(read_file(dir / "a.bin") == read_file(dir / "b.bin"));
  SyntheticSpec spec = fixtures::tiny_spec(3);
  save_dataset(dir / "lib.bin", gen_synthetic(spec));
  CHECK(read_file(dir / "a.bin") == read_file(dir / "lib.bin"));
}

TEST_CASE("full pipeline through the command line") {
  fixtures::TempDir dir;
  REQUIRE(comkd_cli(gen_args(dir, "train.bin", 0)).code == 0);
  REQUIRE(comkd_cli(gen_args(dir, "test.bin", 1)).code == 0);

  auto pre = comkd_cli(with_tiny({"pretrain-teacher", "--data", (dir / "train.bin").string(), "--out",
                                  (dir / "t.ckd").string(), "--seed", "3", "--csv",
                                  (dir / "t.csv").string()}));
  REQUIRE_MESSAGE(pre.code == 0, pre.err);
  const TrainConfig cfg = fixtures::tiny_config(3);
  const TeacherRun lib = pretrain_teacher(cfg, gen_synthetic(fixtures::tiny_spec(3)));
  CHECK(read_file(dir / "t.ckd") == encode_checkpoint(to_checkpoint(lib.model, cfg)));
  CHECK(slurp(dir / "t.csv").rfind("epoch,", 0) == 0);

  auto dist = comkd_cli({"distill", "--teacher", (dir / "t.ckd").string(), "--data",
                         (dir / "train.bin").string(), "--out", (dir / "s.ckd").string()});
  REQUIRE_MESSAGE(dist.code == 0, dist.err);
  CHECK(dist.out.find("l_final") != std::string::npos);
  const StudentRun student = distill_student(cfg, lib.model, gen_synthetic(fixtures::tiny_spec(3)).without_labels());
  CHECK(read_file(dir / "s.ckd") == encode_checkpoint(to_checkpoint(student.model, cfg)));

  auto ev = comkd_cli({"eval", "--model", (dir / "s.ckd").string(), "--data", (dir / "test.bin").string(),
                       "--csv", (dir / "m.csv").string()});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  const Metrics m = evaluate_base_novel(student.model, gen_synthetic(fixtures::tiny_spec(3, 1)), SplitSpec::halves(4));
  std::ostringstream expected;
  const std::vector<std::string> names{"base-novel"};
  write_metrics_csv(expected, names, std::span<const Metrics>(&m, 1));
  CHECK(slurp(dir / "m.csv") == expected.str());

  auto all = comkd_cli({"eval", "--model", (dir / "t.ckd").string(), "--data", (dir / "test.bin").string(),
                        "--split", "all"});
  CHECK(all.code == 0);
  CHECK(all.out.rfind("accuracy ", 0) == 0);

  auto ab = comkd_cli({"ablate", "--teacher", (dir / "t.ckd").string(), "--data", (dir / "train.bin").string(),
                       "--test", (dir / "test.bin").string(), "--grid", "full,kl-only", "--jobs", "2"});
  REQUIRE_MESSAGE(ab.code == 0, ab.err);
  CHECK(ab.out.find("kl-only") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with a suggestion") {
  auto r = comkd_cli({"gen-data", "--sead", "3", "--out", "x"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("did you mean '--seed'") != std::string::npos);
  r = comkd_cli({"distil"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("did you mean 'distill'") != std::string::npos);
  r = comkd_cli({});
  CHECK(r.code == cli::kUsage);
  r = comkd_cli({"pretrain-teacher", "--data", "d", "--out", "o", "--tau", "-1"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("tau") != std::string::npos);
  r = comkd_cli({"ablate", "--teacher", "t", "--data", "d", "--test", "e", "--grid", "bogus"});
  CHECK(r.code != cli::kOk);
}

TEST_CASE("runtime errors exit 2") {
  fixtures::TempDir dir;
  auto r = comkd_cli({"eval", "--model", (dir / "missing.ckd").string(), "--data", (dir / "missing.bin").string()});
  CHECK(r.code == cli::kRuntime);
  {
    std::ofstream junk(dir / "junk.ckd");
    junk << "not a checkpoint";
  }
  REQUIRE(comkd_cli(gen_args(dir, "d.bin")).code == 0);
  r = comkd_cli({"eval", "--model", (dir / "junk.ckd").string(), "--data", (dir / "d.bin").string()});
  CHECK(r.code == cli::kRuntime);
  CHECK(r.err.find("format error at byte 0") != std::string::npos);
}

TEST_CASE("COMKD_SEED is the fallback seed") {
  fixtures::TempDir dir;
  ::setenv("COMKD_SEED", "3", 1);
  auto r = comkd_cli({"gen-data", "--classes", "4", "--dim", "8", "--per-class", "12", "--out",
                      (dir / "env.bin").string()});
  ::unsetenv("COMKD_SEED");
  REQUIRE(r.code == 0);
  REQUIRE(comkd_cli(gen_args(dir, "flag.bin")).code == 0);
  CHECK(read_file(dir / "env.bin") == read_file(dir / "flag.bin"));
}

TEST_CASE("help lists every flag with its default") {
  auto r = comkd_cli({"distill", "--help"});
  CHECK(r.code == cli::kOk);
  for (const auto& k : config_keys()) {
    std::string flag = "--" + std::string(k.name);
    for (auto& c : flag) if (c == '_') c = '-';
    INFO(flag);
    CHECK(r.out.find(flag) != std::string::npos);
  }
  CHECK(r.out.find("0.05") != std::string::npos);
  CHECK(r.out.find("--ablation") != std::string::npos);
  CHECK(comkd_cli({"--help"}).out.find("gradcheck") != std::string::npos);
}

TEST_CASE("gradcheck subcommand") {
  auto r = comkd_cli({"gradcheck", "--instances", "2"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("student_pipeline") != std::string::npos);
}
