// SPDX-License-Identifier: Apache-2.0
//
// Batch experiment driver: reads a flat key/value spec, sweeps SNR x
// algorithm x trial on a worker pool, and writes one CSV row per cell.
#include <CLI11.hpp>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mimodl/experiment.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open spec file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_csv_arg(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        while (!item.empty() && item.front() == ' ') item.erase(item.begin());
        while (!item.empty() && item.back() == ' ') item.pop_back();
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiuser MIMO downlink sum-throughput simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment spec, emit CSV");
    std::string spec_path, out_path;
    std::string algs_arg, snr_arg, modulation_arg, force_streams_arg;
    std::uint64_t seed = 0;
    int trials = -1;
    double ber_target = -1;
    int threads = 0;
    bool timing = false;
    bool have_seed = false;
    run->add_option("spec", spec_path, "experiment spec file")->required();
    run->add_option("--out", out_path, "output CSV path")->required();
    run->add_option("--seed", seed, "override the spec seed")
        ->each([&](const std::string&) { have_seed = true; });
    run->add_option("--trials", trials, "override the channel-trial count");
    run->add_option("--algs", algs_arg, "override the algorithm list (comma separated)");
    run->add_option("--snr", snr_arg, "override the SNR grid in dB (comma separated)");
    run->add_option("--modulation", modulation_arg, "off | naive | prob");
    run->add_option("--ber-target", ber_target, "per-stream BER target");
    run->add_option("--force-streams", force_streams_arg,
                    "override the per-user stream counts, e.g. \"3,1\"");
    run->add_option("--threads", threads, "worker threads (default: hardware)");
    run->add_flag("--timing", timing, "include wall_time_s in the CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        mimodl::ExperimentSpec spec = mimodl::parse_experiment(read_file(spec_path));
        if (have_seed) spec.seed = seed;
        if (trials >= 0) spec.trials = trials;
        if (!algs_arg.empty()) {
            spec.algorithms.clear();
            for (const auto& name : split_csv_arg(algs_arg)) {
                auto alg = mimodl::algorithm_from_string(name);
                if (!alg) throw std::runtime_error("unknown algorithm '" + name + "'");
                spec.algorithms.push_back(*alg);
            }
        }
        if (!snr_arg.empty()) {
            spec.snr_db.clear();
            for (const auto& v : split_csv_arg(snr_arg))
                spec.snr_db.push_back(std::stod(v));
        }
        if (!modulation_arg.empty()) {
            if (modulation_arg == "off")
                spec.modulation = mimodl::ModulationMode::Off;
            else if (modulation_arg == "naive")
                spec.modulation = mimodl::ModulationMode::Naive;
            else if (modulation_arg == "prob")
                spec.modulation = mimodl::ModulationMode::Probabilistic;
            else
                throw std::runtime_error("--modulation must be off, naive, or prob");
        }
        if (ber_target > 0) spec.ber_target = ber_target;
        if (!force_streams_arg.empty()) {
            spec.base.streams.clear();
            for (const auto& v : split_csv_arg(force_streams_arg))
                spec.base.streams.push_back(std::stoi(v));
        }
        if (auto err = mimodl::validate_spec(spec))
            throw std::runtime_error(*err);

        const auto rows = mimodl::run_experiment(spec, threads);
        mimodl::emit_csv(rows, out_path, timing);

        long failed = 0;
        for (const auto& r : rows)
            if (r.failed()) ++failed;
        std::cerr << rows.size() << " rows -> " << out_path;
        if (failed > 0) std::cerr << " (" << failed << " failed)";
        std::cerr << "\n";
        return failed == static_cast<long>(rows.size()) ? 2 : 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
