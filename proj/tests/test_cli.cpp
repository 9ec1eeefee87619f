#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hartree/cli.hpp"
#include "hartree/io.hpp"

using namespace hartree;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hartree_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json report(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "report.json")); }

const nlohmann::json* gate(const nlohmann::json& r, const std::string& name) {
  for (const auto& g : r["gates"])
    if (g["name"] == name) return &g;
  return nullptr;
}

int tool(const std::string& args) {
  const int st = std::system((std::string(HARTREE_TOOL) + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(st);
}

}  // namespace

TEST(ParseConfig, DefaultsAreFilled) {
  const RunConfig c = parse_config({"ground-state", "--n", "512", "--rmax", "30"});
  EXPECT_EQ(c.command, Command::ground_state);
  EXPECT_EQ(c.n, 512);
  EXPECT_EQ(c.rmax, 30.0);
  EXPECT_EQ(c.method, "both");
  EXPECT_EQ(c.scheme, "fv4");
  EXPECT_EQ(c.tol, 1e-8);
}

TEST(ParseConfig, RejectsBadValues) {
  EXPECT_THROW(parse_config({"ground-state", "--n", "-5"}), UsageError);
  EXPECT_THROW(parse_config({"ground-state", "--n", "12.5"}), UsageError);
  EXPECT_THROW(parse_config({"ground-state", "--rmax", "abc"}), UsageError);
  EXPECT_THROW(parse_config({"ground-state", "--tol", "0"}), UsageError);
  EXPECT_THROW(parse_config({"ground-state", "--method", "guess"}), UsageError);
  EXPECT_THROW(parse_config({"ground-state", "--toll", "1e-8"}), UsageError);
  EXPECT_THROW(parse_config({"ground-state", "stray"}), UsageError);
  EXPECT_THROW(parse_config({"solve"}), UsageError);
  EXPECT_THROW(parse_config({}), UsageError);
  EXPECT_THROW(parse_config({"evolve", "--kernel", "yukawa"}), UsageError);
  EXPECT_THROW(parse_config({"blowup", "--log", "x.csv"}), UsageError);
  EXPECT_THROW(parse_config({"bw", "--alpha", "0.5"}), UsageError);
}

TEST(ParseConfig, FlagsOverrideTheFile) {
  const fs::path dir = scratch("precedence");
  fs::create_directories(dir);
  const fs::path f = dir / "run.cfg";
  std::ofstream(f) << "# grid\nn = 256\nrmax = 12   # trailing comment\n\nt0 = -0.25\n";
  const RunConfig a = parse_config({"evolve", "--n", "512"}, f.string());
  EXPECT_EQ(a.n, 512);
  EXPECT_EQ(a.rmax, 12.0);
  EXPECT_EQ(a.t0, -0.25);
  const RunConfig b = parse_config({"evolve", "--config", f.string()});
  EXPECT_EQ(b.n, 256);

  std::ofstream(dir / "typo.cfg") << "nn = 256\n";
  EXPECT_THROW(parse_config({"evolve"}, (dir / "typo.cfg").string()), UsageError);
  std::ofstream(dir / "noeq.cfg") << "n 256\n";
  EXPECT_THROW(parse_config({"evolve"}, (dir / "noeq.cfg").string()), UsageError);
  EXPECT_THROW(parse_config({"evolve"}, (dir / "missing.cfg").string()), UsageError);
}

TEST(ParseConfig, EchoReadsBack) {
  const RunConfig c = parse_config({"blowup", "--frame", "direct", "--ta", "-0.1", "--tb", "-0.01", "--seed", "9"});
  const fs::path dir = scratch("echo");
  fs::create_directories(dir);
  std::ofstream(dir / "config.echo") << echo_config(c);
  const RunConfig d = parse_config({"blowup"}, (dir / "config.echo").string());
  EXPECT_EQ(echo_config(d), echo_config(c));
  EXPECT_EQ(d.seed, 9);
}

TEST(ParseConfig, FrameAndInitPickDefaults) {
  EXPECT_EQ(parse_config({"blowup"}).rmax, 20.0);
  EXPECT_EQ(parse_config({"blowup", "--frame", "exact"}).rmax, 8.0);
  EXPECT_EQ(parse_config({"blowup", "--frame", "exact", "--rmax", "9"}).rmax, 9.0);
  const RunConfig e = parse_config({"evolve", "--init", "S"});
  EXPECT_LT(e.t0, 0.0);
  EXPECT_EQ(parse_config({"evolve"}).t0, 0.0);
}

TEST(KernelSpecString, Forms) {
  EXPECT_EQ(parse_kernel_spec("newton").kind, KernelKind::newton);
  EXPECT_EQ(parse_kernel_spec("newton,coupling=0").coupling, 0.0);
  const KernelSpec d = parse_kernel_spec("deformed:k=3,t=50,phi=exp");
  EXPECT_EQ(d.kind, KernelKind::deformed);
  EXPECT_EQ(d.k, 3.0);
  EXPECT_EQ(d.t, 50.0);
  EXPECT_EQ(d.phi.choice(), Phi::Choice::exponential);
  EXPECT_THROW(parse_kernel_spec("deformed:k=3"), UsageError);
  EXPECT_THROW(parse_kernel_spec("deformed:k=3,t=50,psi=exp"), UsageError);
  EXPECT_THROW(parse_kernel_spec("newton,k=3"), UsageError);
  EXPECT_THROW(parse_kernel_spec("deformed:k=x,t=1"), UsageError);
}

TEST(Run, ConvolveCheckPasses) {
  const fs::path dir = scratch("convolve");
  RunConfig c = parse_config({"convolve-check", "--n", "128", "--samples", "5", "--out", dir.string()});
  EXPECT_EQ(run(c), kExitOk);
  ASSERT_TRUE(fs::exists(dir / "config.echo"));
  const auto r = report(dir);
  EXPECT_TRUE(r["pass"].get<bool>());
  ASSERT_NE(gate(r, "newton_equivalence"), nullptr);
  EXPECT_LE((*gate(r, "newton_equivalence"))["value"].get<double>(), 1e-8);
}

TEST(Run, GroundStateWritesTheProfile) {
  const fs::path dir = scratch("gs");
  RunConfig c = parse_config({"ground-state", "--n", "512", "--rmax", "20", "--out", (dir / "Q.csv").string()});
  EXPECT_EQ(run(c), kExitOk);
  const RadialField q = read_field_csv((dir / "Q.csv").string());
  EXPECT_EQ(q.size(), 512);
  EXPECT_TRUE(q.is_real());
  const auto s = nlohmann::json::parse(slurp(dir / "Q.json"));
  for (const char* k : {"mass", "energy", "eigenvalue", "residual", "center_value"}) EXPECT_TRUE(s.contains(k)) << k;
  EXPECT_NE(gate(report(dir), "profile_agreement"), nullptr);
}

TEST(Run, CorruptedProfileIsAParseError) {
  const fs::path dir = scratch("corrupt");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.csv") << "r,Q\n0.1,1.0\n0.3,oops\n";
  RunConfig c = parse_config({"spectrum", "--profile", (dir / "bad.csv").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(run(c), kExitUsage);
  const auto r = report(dir / "o");
  EXPECT_EQ(r["exit_code"], kExitUsage);
  EXPECT_EQ(r["error"]["kind"], "config");
}

TEST(Run, MissingInputIsAnIoError) {
  const fs::path dir = scratch("missing");
  RunConfig c = parse_config({"evolve", "--init", (dir / "nope.csv").string(), "--out", dir.string()});
  EXPECT_EQ(run(c), kExitIo);
  EXPECT_EQ(report(dir)["error"]["kind"], "io");
}

TEST(Run, UnwritableOutput) {
  const fs::path dir = scratch("unwritable");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  RunConfig c = parse_config({"convolve-check", "--n", "32", "--out", (dir / "file" / "sub").string()});
  EXPECT_EQ(run(c), kExitIo);
}

TEST(Run, BlowupReportsExponentAndWindow) {
  const fs::path dir = scratch("blowup");
  RunConfig c = parse_config({"blowup", "--init", "S", "--frame", "exact", "--n", "256", "--out", dir.string()});
  EXPECT_EQ(run(c), kExitOk);
  const auto r = report(dir);
  const auto& fit = r["results"]["fit"];
  EXPECT_NEAR(fit["exponent"].get<double>(), -1.0, 0.05);
  EXPECT_LT(fit["t_a"].get<double>(), fit["t_b"].get<double>());
  EXPECT_LT(fit["max_proxy"].get<double>(), 0.5);

  // the same fit from the log alone, on an explicit window
  const fs::path again = scratch("blowup_log");
  RunConfig l = parse_config({"blowup", "--log", (dir / "log.csv").string(), "--ta",
                              fmt_double(fit["t_a"].get<double>()), "--tb", fmt_double(fit["t_b"].get<double>()),
                              "--out", again.string()});
  EXPECT_EQ(run(l), kExitOk);
  EXPECT_NEAR(report(again)["results"]["fit"]["exponent"].get<double>(), fit["exponent"].get<double>(), 1e-12);
}

TEST(Run, OutputsAreDeterministic) {
  std::string logs[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = scratch("det" + std::to_string(i));
    RunConfig c = parse_config({"evolve", "--n", "128", "--t1", "0.05", "--snapshot-every", "2", "--out", dir.string()});
    EXPECT_EQ(run(c), kExitOk);
    logs[i] = slurp(dir / "log.csv") + slurp(dir / "snap_0001.csv") + slurp(dir / "final.csv");
  }
  EXPECT_FALSE(logs[0].empty());
  EXPECT_EQ(logs[0], logs[1]);
}

TEST(Run, VirialFromAnEvolveLog) {
  const fs::path dir = scratch("virial");
  RunConfig c = parse_config({"virial", "--out", dir.string()});
  EXPECT_EQ(run(c), kExitOk);
  const fs::path post = scratch("virial_post");
  RunConfig p = parse_config({"virial", "--log", (dir / "log.csv").string(), "--out", post.string()});
  EXPECT_EQ(run(p), kExitOk);
  EXPECT_NEAR(report(post)["results"]["virial"]["deviation"].get<double>(),
              report(dir)["results"]["virial"]["deviation"].get<double>(), 1e-9);
}

TEST(Run, GateFailureExitCode) {
  // the splitting cannot hold energy to round-off
  const fs::path dir = scratch("gate");
  RunConfig c = parse_config({"evolve", "--n", "128", "--t1", "0.05", "--energy-gate", "1e-14", "--out", dir.string()});
  EXPECT_EQ(run(c), kExitGate);
  const auto r = report(dir);
  EXPECT_FALSE(r["pass"].get<bool>());
  EXPECT_FALSE((*gate(r, "energy_drift"))["pass"].get<bool>());
}

TEST(Tool, ExitCodes) {
  const fs::path dir = scratch("tool");
  EXPECT_EQ(tool("--help"), 0);
  EXPECT_EQ(tool(""), kExitUsage);
  EXPECT_EQ(tool("ground-state --n -5"), kExitUsage);
  EXPECT_EQ(tool("ground-state --bogus 1"), kExitUsage);
  EXPECT_EQ(tool("convolve-check --n 64 --samples 3 --out " + dir.string()), kExitOk);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "config.echo"));
}
