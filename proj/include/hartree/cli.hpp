#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hartree/kernels.hpp"

namespace hartree {

enum class Command { ground_state, convolve_check, spectrum, qt_family, evolve, virial, blowup, bw };
std::string to_string(Command c);

struct UsageError : ConfigError {
  using ConfigError::ConfigError;
};

// Exit codes of the front end
inline constexpr int kExitOk = 0, kExitUsage = 2, kExitGate = 3, kExitIo = 4;

// Every key of the flat configuration.  parse_config starts from the defaults
// of the selected command (and blowup frame / evolve init), so the values
// below only matter for code that builds a RunConfig by hand.
struct RunConfig {
  Command command = Command::ground_state;

  int n = 512;
  double rmax = 30;
  std::string spacing = "uniform";
  double stretch = 1.0;
  std::string scheme = "fv4";  // evolve-type commands always use fv2
  std::string kernel = "newton";
  std::string kernel_cache;
  int threads = 0;
  double tol = 1e-8;
  long long seed = 1;
  std::string out = "out";

  std::string method = "both";  // ground-state
  int samples = 20;             // convolve-check densities, qt-family t samples

  std::string profile;      // spectrum
  int spectral_n = 256;     // spectrum: grid of the dense eigenproblem
  double spectral_rmax = 20;
  std::string t = "inf";    // spectrum: inf or a number
  double k = 5.0;
  std::string phi = "rational";
  double tmin = 10, tmax = 1000;  // qt-family

  std::string init = "gaussian:2";  // FILE | S | soliton | gaussian:A
  double t0 = 0, t1 = 0.3, dt = 1e-3;
  double monitor_every = 0.01;
  int snapshot_every = 0;
  double adaptive_tol = 0;
  double mass_gate = 1e-6, energy_gate = 1e-4;

  std::string log;        // virial / blowup post-processing
  // fit window; unset picks the resolved window
  double ta = std::numeric_limits<double>::quiet_NaN();
  double tb = std::numeric_limits<double>::quiet_NaN();
  std::string frame = "v";  // blowup: v | direct | exact

  std::string psi = "poly:6";  // bw
  double alpha = 1e-2, alpha0 = 1e-2;
  double s0 = 20, s1 = 200, ds = 0.02;
  int N = 6;
};

// flags override the file, the file overrides the defaults; unknown keys,
// bad types and out-of-range values raise UsageError.  A `--config FILE`
// flag among the arguments acts like `file`.
RunConfig parse_config(const std::vector<std::string>& args, const std::optional<std::string>& file = {});
// the effective configuration as `key = value` lines, readable by parse_config
std::string echo_config(const RunConfig& cfg);

// "newton", "newton,coupling=C" or "deformed:k=K,t=T,phi=NAME[,coupling=C]"
KernelSpec parse_kernel_spec(const std::string& s);

RunConfig defaults_for(Command c, const std::string& frame = "v", const std::string& init = "");

// runs the pipeline, writes config.echo and report.json into the output directory
int run(const RunConfig& cfg);
int cli_main(int argc, char** argv);

}  // namespace hartree
