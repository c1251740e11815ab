// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mimodl/config.hpp"

namespace mimodl {

enum class Algorithm { Pmse, PdetMse, Dpc, Zf, Bd, ZfSelect, BdSelect };

std::string to_string(Algorithm a);
std::optional<Algorithm> algorithm_from_string(std::string_view name);

enum class ModulationMode { Off, Naive, Probabilistic };

/// One batch experiment: a system configuration swept over an SNR grid with
/// a set of algorithms and Monte-Carlo channel trials. SNR is realized by
/// fixing P_max and varying the noise power, sigma2 = P_max / 10^(snr/10).
struct ExperimentSpec {
    SystemConfig<double> base;
    std::vector<double> snr_db;
    std::vector<Algorithm> algorithms;
    int trials = 1;
    std::uint64_t seed = 0;
    ModulationMode modulation = ModulationMode::Off;
    double ber_target = 1e-2;
    long modulation_trials = 5000;
    int pmse_starts = 1;
    int pdetmse_starts = 4;
};

/// Outcome of one (snr, algorithm, trial) cell. Failed cells carry the error
/// text in status and leave the numeric fields unset.
struct ResultRow {
    double snr_db = 0;
    Algorithm algorithm = Algorithm::Pmse;
    int trial = 0;
    double sum_rate_bits = 0;
    std::vector<double> user_rate_bits;
    int iterations = 0;
    bool converged = false;
    double wall_time_s = 0;  // captured always; emitted only on request
    bool modulated = false;
    double avg_bits_per_tx = 0;
    double avg_ber = 0;
    std::string status = "ok";

    bool failed() const { return status != "ok"; }
};

/// Parses the flat key/value experiment format (one `key = value` per line,
/// `[a, b, c]` lists, `#` comments). Throws std::invalid_argument naming the
/// offending key on any unknown key, type mismatch, or invariant violation.
ExperimentSpec parse_experiment(std::string_view text);

std::optional<std::string> validate_spec(const ExperimentSpec& spec);

/// Runs every (snr, algorithm, trial) cell on a worker pool. Deterministic
/// for a fixed spec and seed, independent of thread count and scheduling.
/// n_threads <= 0 picks the hardware concurrency.
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec,
                                      int n_threads = 0);

/// CSV with one header line and one line per row, floats at 9 significant
/// digits. Throws on rows with non-finite numeric fields.
std::string format_csv(const std::vector<ResultRow>& rows,
                       bool include_timing = false);
void emit_csv(const std::vector<ResultRow>& rows, const std::string& path,
              bool include_timing = false);

}  // namespace mimodl
