#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stmp/config_file.hpp"
#include "stmp/denoiser.hpp"
#include "stmp/engine.hpp"
#include "stmp/pilot.hpp"

namespace stmp {

enum class SweepAxis { none, snr_db, k, lambda, t };

/// Accepts "snr.db", "system.k", "system.lambda", "system.t" (and the short
/// forms snr_db, K, lambda, T). Throws InvalidConfig.
SweepAxis parse_sweep_axis(std::string_view text);
std::string_view to_string(SweepAxis axis);

struct ExperimentSpec {
  Settings base;
  SweepAxis axis = SweepAxis::none;
  std::vector<double> values;  ///< ignored for SweepAxis::none
  unsigned workers = 1;
  bool timing = false;         ///< wall-time columns are 0 unless set
  std::filesystem::path trace_dir;       ///< per-trial trace CSVs when non-empty
  std::filesystem::path dump_channels;   ///< CHNL file of every sampled channel when non-empty
  std::filesystem::path dump_pilot;      ///< PILT file of the first trial's pilot when non-empty
};

/// Number of sweep points (1 for SweepAxis::none).
std::size_t point_count(const ExperimentSpec& spec);
/// Base settings with the sweep value of `point` applied.
Settings settings_for_point(const ExperimentSpec& spec, std::size_t point);

struct TrialResult {
  bool ok = false;
  std::string error;
  bool bridge_failure = false;
  bool has_nmse = false;      ///< false when no device was active
  double nmse = 0.0;          ///< linear, effective channels vs module-B posterior
  double nmse_db_first = 0.0; ///< after the first iteration
  std::uint32_t missed = 0;
  std::uint32_t false_alarms = 0;
  double pe = 0.0;
  std::uint32_t iterations = 0;
  bool converged = false;
  double ms = 0.0;
  std::uint32_t active = 0;
};

struct TrialOutput {
  TrialResult result;
  IterationTrace trace;
  CTensor3 channels;                    ///< filled when keep_data is set
  std::optional<PilotOperator> pilot;   ///< filled when keep_data is set
};

/// sample_realization -> pilot -> observe -> run -> metrics, seeded from
/// (seed, point, trial). Errors propagate.
TrialOutput run_trial(const ExperimentSpec& spec, std::size_t point, std::uint32_t trial,
                      const ChannelDenoiser& denoiser, bool keep_data = false);

struct PointSummary {
  double value = 0.0;
  std::uint32_t trials = 0;       ///< successful trials
  std::uint32_t failures = 0;
  std::uint32_t nmse_trials = 0;  ///< successful trials with at least one active device
  double nmse_db_mean = 0.0;
  double nmse_db_stderr = 0.0;
  double pe_mean = 0.0;
  double pe_stderr = 0.0;
  double iters_mean = 0.0;
  double ms_mean = 0.0;
};

struct ExperimentResult {
  SweepAxis axis = SweepAxis::none;
  std::vector<PointSummary> points;
  std::vector<std::vector<TrialResult>> trials;  ///< [point][trial]
};

/// Reduces trial results in index order.
PointSummary summarize(double value, const std::vector<TrialResult>& trials);

/// Runs every trial of every sweep point on `spec.workers` threads. A failed
/// trial is recorded and excluded; more than 10% failures at any point
/// throws Error. The denoiser defaults to make_denoiser(spec.base).
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                std::shared_ptr<const ChannelDenoiser> denoiser = nullptr);

/// axis,value,trials,nmse_db_mean,nmse_db_stderr,pe_mean,pe_stderr,iters_mean,ms_mean
void write_results_csv(std::ostream& os, const ExperimentResult& result);

// ---- standalone denoising -------------------------------------------------

struct DenoiseTestOptions {
  std::vector<double> snr_db = {-10, 0, 10, 20, 30};  ///< tau = 10^(-snr/10); inf gives tau = 0
  std::uint32_t devices = 100;
  std::uint32_t n = 8;
  std::uint32_t m = 4;
  std::uint64_t seed = 1;
  /// Entries are drawn i.i.d. from this mixture.
  std::vector<MixtureComponent> data_prior = {{1.0, cplx{}, 1.0}};
  /// Closed-form Gaussian NMSE 10 log10(tau / (sigma2 + tau)) when set.
  std::optional<double> gaussian_sigma2;
  /// Compare the first entries against brute-force integration under this prior.
  std::optional<std::vector<MixtureComponent>> oracle_prior;
  std::size_t oracle_entries = 8;
};

struct DenoiseTestRow {
  double snr_db = 0.0;
  double tau = 0.0;
  double nmse_db = 0.0;
  double expected_db = 0.0;  ///< NaN without gaussian_sigma2
  double oracle_gap = 0.0;   ///< max |mean error| vs quadrature, NaN without oracle_prior
};

/// AWGN in, NMSE out: draws channels, adds CN(0, tau) noise per SNR point and
/// denoises them in one batch.
std::vector<DenoiseTestRow> denoise_test(const ChannelDenoiser& denoiser, const DenoiseTestOptions& options);

/// snr_db,tau,nmse_db,expected_db,oracle_gap
void write_denoise_csv(std::ostream& os, const std::vector<DenoiseTestRow>& rows);

/// Builds the channel denoiser selected by the settings. A bridge denoiser
/// opens its connection here.
std::shared_ptr<const ChannelDenoiser> make_denoiser(const Settings& s);

}  // namespace stmp
