// SPDX-License-Identifier: Apache-2.0
#include "mimodl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mimodl/channel.hpp"
#include "mimodl/dpc.hpp"
#include "mimodl/modulation.hpp"
#include "mimodl/orthogonal.hpp"
#include "mimodl/pdetmse.hpp"
#include "mimodl/pmse.hpp"

namespace mimodl {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::Pmse: return "pmse";
        case Algorithm::PdetMse: return "pdetmse";
        case Algorithm::Dpc: return "dpc";
        case Algorithm::Zf: return "zf";
        case Algorithm::Bd: return "bd";
        case Algorithm::ZfSelect: return "zf-select";
        case Algorithm::BdSelect: return "bd-select";
    }
    return "?";
}

std::optional<Algorithm> algorithm_from_string(std::string_view name) {
    static const std::map<std::string, Algorithm, std::less<>> table = {
        {"pmse", Algorithm::Pmse},         {"pdetmse", Algorithm::PdetMse},
        {"dpc", Algorithm::Dpc},           {"zf", Algorithm::Zf},
        {"bd", Algorithm::Bd},             {"zf-select", Algorithm::ZfSelect},
        {"bd-select", Algorithm::BdSelect}};
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(const std::string& value) {
    std::string inner = value;
    if (!inner.empty() && inner.front() == '[') {
        if (inner.back() != ']')
            throw std::invalid_argument("unterminated list value");
        inner = inner.substr(1, inner.size() - 2);
    }
    std::vector<std::string> out;
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": expected a number, got '" + value + "'");
    }
}

long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": expected an integer, got '" + value + "'");
    }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    for (const auto& item : split_list(value))
        out.push_back(static_cast<int>(parse_int(key, item)));
    return out;
}

}  // namespace

ExperimentSpec parse_experiment(std::string_view text) {
    ExperimentSpec spec;
    spec.base.power_budget = 1.0;
    spec.base.noise_var = 0.1;  // overwritten per SNR point
    bool have_k = false, have_m = false, have_n = false, have_l = false;
    bool have_snr = false, have_algs = false;

    std::stringstream ss{std::string(text)};
    std::string line;
    while (std::getline(ss, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos)
            line = line.substr(0, hash);
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("expected 'key = value', got '" + trimmed + "'");
        const std::string key = trim(trimmed.substr(0, eq));
        const std::string value = trim(trimmed.substr(eq + 1));
        if (value.empty() && key != "snr" && key != "algs")
            throw std::invalid_argument(key + ": empty value");

        if (key == "K") {
            spec.base.num_users = static_cast<int>(parse_int(key, value));
            have_k = true;
        } else if (key == "M") {
            spec.base.tx_antennas = static_cast<int>(parse_int(key, value));
            have_m = true;
        } else if (key == "N") {
            spec.base.rx_antennas = parse_int_list(key, value);
            have_n = true;
        } else if (key == "L") {
            spec.base.streams = parse_int_list(key, value);
            have_l = true;
        } else if (key == "P_max") {
            spec.base.power_budget = parse_double(key, value);
        } else if (key == "epsilon") {
            spec.base.epsilon = parse_double(key, value);
        } else if (key == "max_iters") {
            spec.base.max_iters = static_cast<int>(parse_int(key, value));
        } else if (key == "snr") {
            for (const auto& item : split_list(value))
                spec.snr_db.push_back(parse_double(key, item));
            have_snr = true;
        } else if (key == "algs") {
            for (const auto& item : split_list(value)) {
                auto alg = algorithm_from_string(item);
                if (!alg)
                    throw std::invalid_argument("algs: unknown algorithm '" + item + "'");
                spec.algorithms.push_back(*alg);
            }
            have_algs = true;
        } else if (key == "trials") {
            spec.trials = static_cast<int>(parse_int(key, value));
        } else if (key == "seed") {
            spec.seed = static_cast<std::uint64_t>(parse_int(key, value));
        } else if (key == "modulation") {
            if (value == "off")
                spec.modulation = ModulationMode::Off;
            else if (value == "naive")
                spec.modulation = ModulationMode::Naive;
            else if (value == "prob")
                spec.modulation = ModulationMode::Probabilistic;
            else
                throw std::invalid_argument("modulation: expected off|naive|prob, got '" +
                                            value + "'");
        } else if (key == "ber_target") {
            spec.ber_target = parse_double(key, value);
        } else if (key == "mod_trials") {
            spec.modulation_trials = parse_int(key, value);
        } else if (key == "pmse_starts") {
            spec.pmse_starts = static_cast<int>(parse_int(key, value));
        } else if (key == "pdetmse_starts") {
            spec.pdetmse_starts = static_cast<int>(parse_int(key, value));
        } else {
            throw std::invalid_argument("unknown key '" + key + "'");
        }
    }
    if (!have_k || !have_m || !have_n || !have_l)
        throw std::invalid_argument("missing required key(s): K, M, N, L");
    if (!have_snr) throw std::invalid_argument("missing required key: snr");
    if (!have_algs) throw std::invalid_argument("missing required key: algs");
    if (auto err = validate_spec(spec)) throw std::invalid_argument(*err);
    return spec;
}

std::optional<std::string> validate_spec(const ExperimentSpec& spec) {
    SystemConfig<double> probe = spec.base;
    probe.noise_var = 1.0;  // per-SNR value; only positivity is fixed here
    if (auto err = validate_config(probe)) return err;
    if (spec.snr_db.empty()) return "snr: empty grid";
    if (spec.algorithms.empty()) return "algs: empty algorithm list";
    if (spec.trials < 1) return "trials: must be >= 1";
    if (!(spec.ber_target > 0.0 && spec.ber_target < 1.0))
        return "ber_target: must be in (0, 1)";
    if (spec.modulation_trials < 1) return "mod_trials: must be >= 1";
    if (spec.pmse_starts < 1) return "pmse_starts: must be >= 1";
    if (spec.pdetmse_starts < 1) return "pdetmse_starts: must be >= 1";
    return std::nullopt;
}

namespace {

// rng purpose tags; the channel stream must not depend on the SNR point so
// one trial sees the same fading across the whole sweep. The other purposes
// get disjoint substream ids per (purpose, snr, algorithm) cell.
constexpr std::uint64_t kPurposeChannel = 0;
constexpr std::uint64_t kPurposeSolver = 1;
constexpr std::uint64_t kPurposePlan = 2;
constexpr std::uint64_t kPurposeBerSim = 3;

std::uint64_t tagged(std::uint64_t purpose, std::size_t snr_idx,
                     std::size_t alg_idx) {
    return purpose + 4 * (snr_idx * 64 + alg_idx + 1);
}

struct CellOutcome {
    DesignState<double> state;
    bool has_state = false;
    double rate_nats = 0;
    std::vector<double> user_rate_nats;
    int iterations = 0;
    bool converged = false;
};

CellOutcome solve_cell(const ExperimentSpec& spec, Algorithm alg,
                       const SystemConfig<double>& cfg,
                       const ChannelSet<double>& ch, RngStream solver_stream) {
    CellOutcome out;
    switch (alg) {
        case Algorithm::Pmse: {
            auto sol = pmse_solve(cfg, ch, solver_stream, spec.pmse_starts);
            out.state = std::move(sol.state);
            out.has_state = true;
            out.iterations = sol.trace.iterations;
            out.converged = sol.trace.converged;
            for (int k = 0; k < cfg.num_users; ++k)
                out.user_rate_nats.push_back(user_rate_linear(
                    k, ch, out.state.tx, out.state.dl_power, cfg.streams,
                    cfg.noise_var));
            break;
        }
        case Algorithm::PdetMse: {
            // seed one start from the scalar solver's design; the joint
            // descent can only improve on it, so the reference never trails
            // an under-converged random start
            auto scalar = pmse_solve(cfg, ch, solver_stream.substream(1000), 4);
            const MatC<double> warm =
                scalar.state.tx *
                scalar.state.dl_power.cwiseSqrt().asDiagonal();
            auto sol = pdetmse_solve(cfg, ch, solver_stream,
                                     spec.pdetmse_starts, &warm);
            out.state = std::move(sol.state);
            out.has_state = true;
            out.iterations = sol.iterations;
            out.converged = sol.converged;
            for (int k = 0; k < cfg.num_users; ++k)
                out.user_rate_nats.push_back(user_rate_linear(
                    k, ch, out.state.tx, out.state.dl_power, cfg.streams,
                    cfg.noise_var));
            break;
        }
        case Algorithm::Dpc: {
            auto sol = dpc_sum_capacity(ch, cfg.power_budget, cfg.noise_var);
            out.rate_nats = sol.rate;
            out.iterations = sol.iterations;
            out.converged = sol.converged;
            return out;  // no per-user split, no transceiver design
        }
        case Algorithm::Zf:
        case Algorithm::Bd: {
            auto design = alg == Algorithm::Zf
                              ? zf_precoder(ch, full_subset(cfg.rx_antennas),
                                            cfg.power_budget, cfg.noise_var)
                              : bd_precoder(ch, full_subset(cfg.rx_antennas),
                                            cfg.power_budget, cfg.noise_var);
            out.state = std::move(design.state);
            out.has_state = true;
            out.converged = true;
            out.rate_nats = design.rate;
            int off = 0;
            for (int k = 0; k < out.state.num_users(); ++k) {
                double r = 0;
                for (int j = 0; j < out.state.streams[k]; ++j, ++off)
                    r += std::log(1.0 + design.gains[off] *
                                            out.state.dl_power[off] /
                                            cfg.noise_var);
                out.user_rate_nats.push_back(r);
            }
            return out;
        }
        case Algorithm::ZfSelect:
        case Algorithm::BdSelect: {
            auto search = best_subset_orthogonal(
                ch, alg == Algorithm::ZfSelect ? OrthoScheme::Zf : OrthoScheme::Bd,
                cfg.power_budget, cfg.noise_var);
            out.state = std::move(search.design.state);
            out.has_state = true;
            out.converged = true;
            out.iterations = static_cast<int>(search.candidates);
            out.rate_nats = search.design.rate;
            int off = 0;
            for (int k = 0; k < out.state.num_users(); ++k) {
                double r = 0;
                for (int j = 0; j < out.state.streams[k]; ++j, ++off)
                    r += std::log(1.0 + search.design.gains[off] *
                                            out.state.dl_power[off] /
                                            cfg.noise_var);
                out.user_rate_nats.push_back(r);
            }
            return out;
        }
    }
    // MSE-based solvers: sum rate from the recovered downlink variables
    out.rate_nats = 0;
    for (double r : out.user_rate_nats) out.rate_nats += r;
    return out;
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, int n_threads) {
    if (auto err = validate_spec(spec)) throw std::invalid_argument(*err);
    const std::size_t n_snr = spec.snr_db.size();
    const std::size_t n_alg = spec.algorithms.size();
    const std::size_t n_tasks = n_snr * static_cast<std::size_t>(spec.trials);
    std::vector<ResultRow> rows(n_tasks * n_alg);
    const double log2e = 1.0 / std::log(2.0);

    auto run_task = [&](std::size_t task) {
        const std::size_t snr_idx = task / spec.trials;
        const int trial = static_cast<int>(task % spec.trials);
        SystemConfig<double> cfg = spec.base;
        cfg.noise_var =
            cfg.power_budget / std::pow(10.0, spec.snr_db[snr_idx] / 10.0);
        const RngStream trial_stream{spec.seed, static_cast<std::uint64_t>(trial)};
        ChannelSet<double> ch;
        bool channel_ok = true;
        std::string channel_error;
        try {
            ch = generate_channels(cfg, trial_stream.substream(kPurposeChannel));
        } catch (const std::exception& e) {
            channel_ok = false;
            channel_error = e.what();
        }

        for (std::size_t a = 0; a < n_alg; ++a) {
            ResultRow& row = rows[task * n_alg + a];
            row.snr_db = spec.snr_db[snr_idx];
            row.algorithm = spec.algorithms[a];
            row.trial = trial;
            if (!channel_ok) {
                row.status = channel_error;
                continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            try {
                CellOutcome cell = solve_cell(
                    spec, spec.algorithms[a], cfg, ch,
                    trial_stream.substream(tagged(kPurposeSolver, snr_idx, a)));
                row.sum_rate_bits = cell.rate_nats * log2e;
                for (double r : cell.user_rate_nats)
                    row.user_rate_bits.push_back(r * log2e);
                row.iterations = cell.iterations;
                row.converged = cell.converged;
                if (spec.modulation != ModulationMode::Off && cell.has_state) {
                    StreamRng plan_rng(
                        trial_stream.substream(tagged(kPurposePlan, snr_idx, a)));
                    auto plan = make_modulation_plan(
                        ch, cell.state, cfg.noise_var, spec.ber_target,
                        spec.modulation == ModulationMode::Naive
                            ? BitLoading::Naive
                            : BitLoading::Probabilistic,
                        BerModelConstants<double>{}, plan_rng);
                    StreamRng sim_rng(
                        trial_stream.substream(tagged(kPurposeBerSim, snr_idx, a)));
                    auto report = simulate_ber(ch, cell.state, plan,
                                               spec.modulation_trials,
                                               cfg.noise_var, sim_rng);
                    row.modulated = true;
                    row.avg_bits_per_tx = report.bits_per_transmission;
                    row.avg_ber = report.avg_ber;
                }
            } catch (const std::exception& e) {
                row.status = e.what();
            }
            row.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
        }
    };

    int workers = n_threads > 0
                      ? n_threads
                      : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min<int>(workers, static_cast<int>(n_tasks)));
    if (workers == 1) {
        for (std::size_t t = 0; t < n_tasks; ++t) run_task(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t t = next.fetch_add(1); t < n_tasks;
                     t = next.fetch_add(1))
                    run_task(t);
            });
        for (auto& th : pool) th.join();
    }

    // stable output order: snr, algorithm (spec order), trial
    std::vector<ResultRow> ordered;
    ordered.reserve(rows.size());
    for (std::size_t s = 0; s < n_snr; ++s)
        for (std::size_t a = 0; a < n_alg; ++a)
            for (int t = 0; t < spec.trials; ++t)
                ordered.push_back(std::move(
                    rows[(s * spec.trials + static_cast<std::size_t>(t)) * n_alg + a]));
    return ordered;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void require_finite(double v, const char* field) {
    if (!std::isfinite(v))
        throw std::invalid_argument(std::string("emit_csv: non-finite field ") + field);
}

}  // namespace

std::string format_csv(const std::vector<ResultRow>& rows, bool include_timing) {
    if (rows.empty()) throw std::invalid_argument("format_csv: no rows");
    const bool modulated =
        std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.modulated; });
    std::string out = "snr_db,algorithm,trial,sum_rate_bits,user_rates_bits,"
                      "iterations,converged";
    if (include_timing) out += ",wall_time_s";
    if (modulated) out += ",avg_bits_per_tx,avg_ber";
    out += ",status\n";
    for (const auto& r : rows) {
        require_finite(r.snr_db, "snr_db");
        out += fmt_double(r.snr_db);
        out += ',';
        out += to_string(r.algorithm);
        out += ',';
        out += std::to_string(r.trial);
        out += ',';
        if (!r.failed()) {
            require_finite(r.sum_rate_bits, "sum_rate_bits");
            out += fmt_double(r.sum_rate_bits);
            out += ',';
            for (std::size_t i = 0; i < r.user_rate_bits.size(); ++i) {
                require_finite(r.user_rate_bits[i], "user_rates_bits");
                if (i) out += ';';
                out += fmt_double(r.user_rate_bits[i]);
            }
            out += ',';
            out += std::to_string(r.iterations);
            out += ',';
            out += r.converged ? "true" : "false";
        } else {
            out += ",,,";
        }
        if (include_timing) {
            require_finite(r.wall_time_s, "wall_time_s");
            out += ',';
            out += fmt_double(r.wall_time_s);
        }
        if (modulated) {
            if (r.modulated) {
                require_finite(r.avg_bits_per_tx, "avg_bits_per_tx");
                require_finite(r.avg_ber, "avg_ber");
                out += ',';
                out += fmt_double(r.avg_bits_per_tx);
                out += ',';
                out += fmt_double(r.avg_ber);
            } else {
                out += ",,";
            }
        }
        out += ',';
        out += r.failed() ? "failed: " + r.status : r.status;
        out += '\n';
    }
    return out;
}

void emit_csv(const std::vector<ResultRow>& rows, const std::string& path,
              bool include_timing) {
    const std::string body = format_csv(rows, include_timing);
    std::ofstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("emit_csv: cannot open '" + path + "'");
    file << body;
    if (!file.good()) throw std::runtime_error("emit_csv: write failed for '" + path + "'");
}

}  // namespace mimodl
