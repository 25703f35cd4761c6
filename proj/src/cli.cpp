/*
 * Copyright (C) 2026 The kvmvp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "kvmvp/cli.hpp"

#include "kvmvp/config.hpp"
#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"
#include "kvmvp/platform.hpp"
#include "kvmvp/samples.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <map>
#include <ostream>
#include <sstream>

namespace kvmvp {
namespace {

// Flags mirror config keys; unset ones leave the file's value alone.
struct Overrides {
    std::optional<unsigned> cores;
    std::optional<std::string> quantum;
    std::optional<std::string> parallel;
    std::optional<std::string> backend;
    std::optional<std::string> csv;
    std::optional<std::string> uart_capture;
    std::optional<std::string> max_sim_time;
    std::optional<std::uint64_t> max_instructions;
    std::optional<std::string> clock_hz;
    std::optional<std::string> wfi_annotation;
    std::optional<std::string> idle_symbol;
    std::optional<std::string> watchdog;
    bool uart_stdout = false;
    bool trace_irqs = false;
};

bool parse_on_off(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1")
        return true;
    if (v == "off" || v == "false" || v == "0")
        return false;
    throw ConfigError(key + ": expected on or off, got '" + v + "'");
}

void add_overrides(CLI::App& cmd, Overrides& o) {
    cmd.add_option("--cores", o.cores, "core count (1-8)");
    cmd.add_option("--quantum", o.quantum, "quantum, e.g. 1ms or 250us");
    cmd.add_option("--parallel", o.parallel, "run cores on worker threads (on|off)");
    cmd.add_option("--backend", o.backend, "interpreter or hardware");
    cmd.add_option("--csv", o.csv, "append metrics to this CSV file");
    cmd.add_option("--uart-capture", o.uart_capture, "write UART output to this file");
    cmd.add_option("--max-sim-time", o.max_sim_time, "stop at this simulated time");
    cmd.add_option("--max-instructions", o.max_instructions, "stop each core after this many instructions");
    cmd.add_option("--clock-hz", o.clock_hz, "core clock in Hz, comma separated per core");
    cmd.add_option("--wfi-annotation", o.wfi_annotation, "breakpoint the idle loop's WFI (on|off)");
    cmd.add_option("--idle-symbol", o.idle_symbol, "idle loop function name");
    cmd.add_option("--watchdog", o.watchdog, "auto, on or off");
    cmd.add_flag("--uart-stdout", o.uart_stdout, "echo UART output to stdout");
    cmd.add_flag("--trace-irqs", o.trace_irqs, "log interrupt deliveries");
}

void apply(const Overrides& o, PlatformConfig& cfg) {
    if (o.cores)
        cfg.cores = *o.cores;
    if (o.quantum)
        cfg.quantum = parse_sim_time(*o.quantum);
    if (o.parallel)
        cfg.parallel = parse_on_off("parallel", *o.parallel);
    if (o.backend) {
        try {
            cfg.backend = parse_backend(*o.backend);
        } catch (const Error&) {
            throw ConfigError("backend: expected interpreter or hardware, got '" + *o.backend + "'");
        }
    }
    if (o.csv)
        cfg.csv = *o.csv;
    if (o.uart_capture)
        cfg.uart_capture = *o.uart_capture;
    if (o.max_sim_time)
        cfg.max_sim_time = parse_sim_time(*o.max_sim_time);
    if (o.max_instructions)
        cfg.max_instructions = *o.max_instructions;
    if (o.clock_hz) {
        cfg.clock_hz.clear();
        std::stringstream ss(*o.clock_hz);
        for (std::string part; std::getline(ss, part, ',');)
            cfg.clock_hz.push_back(parse_size(part));
    }
    if (o.wfi_annotation)
        cfg.wfi_annotation = parse_on_off("wfi_annotation", *o.wfi_annotation);
    if (o.idle_symbol)
        cfg.idle_symbol = *o.idle_symbol;
    if (o.watchdog) {
        if (*o.watchdog == "auto")
            cfg.watchdog = WatchdogMode::automatic;
        else
            cfg.watchdog = parse_on_off("watchdog", *o.watchdog) ? WatchdogMode::on : WatchdogMode::off;
    }
    if (o.uart_stdout)
        cfg.uart_stdout = true;
    if (o.trace_irqs)
        cfg.trace_irqs = true;
    validate(cfg);
}

PlatformConfig load_with(const std::string& path, const Overrides& o) {
    PlatformConfig cfg = load_config(path);
    apply(o, cfg);
    return cfg;
}

void print_cores(const RunMetrics& m, std::ostream& out) {
    for (const auto& c : m.per_core)
        out << "  core " << c.id << ": instructions=" << c.instructions << " state=" << c.state
            << " suspensions=" << c.suspensions << " mmio=" << c.stats.mmio_exits
            << " idle_hints=" << c.stats.idle_hints << "\n";
}

samples::Program make_sample(const std::string& name, GuestAddr origin, std::uint64_t count) {
    if (name == "hello")
        return samples::uart_hello(origin);
    if (name == "print")
        return samples::uart_print(origin, "hello from guest\n");
    if (name == "counted-loop")
        return samples::counted_loop(origin, count);
    if (name == "busy-loop")
        return samples::busy_loop(origin, origin + 0x10'0000);
    if (name == "wfi-idle") {
        samples::IdleParams p;
        p.counter = origin + 0x10'0000;
        return samples::wfi_idle(origin, p);
    }
    throw ConfigError("unknown image '" + name + "' (hello, print, counted-loop, busy-loop, wfi-idle)");
}

} // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"kvmvp: virtual platform with hypervisor-backed and interpreted cores", "kvmvp"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "debug, info, warn or error")
        ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

    std::string config_path;
    Overrides overrides;
    bool per_core = false;

    auto* run = app.add_subcommand("run", "run one configuration");
    run->add_option("config", config_path, "JSON configuration file")->required();
    add_overrides(*run, overrides);
    run->add_flag("--per-core", per_core, "print per-core counters");

    auto* sweep = app.add_subcommand("sweep", "run once per quantum and append CSV rows");
    std::vector<std::string> quanta;
    unsigned repeat = 1;
    sweep->add_option("config", config_path, "JSON configuration file")->required();
    sweep->add_option("--quanta", quanta, "quantum list, e.g. 100us,1ms,5ms")->required()->delimiter(',');
    sweep->add_option("--repeat", repeat, "runs per quantum")->check(CLI::PositiveNumber);
    add_overrides(*sweep, overrides);

    auto* image = app.add_subcommand("image", "write a built-in toy guest image");
    std::string image_name, image_out, image_format = "elf";
    std::string origin_text = "0x4000_0000";
    std::uint64_t count = 1'000'000;
    image->add_option("name", image_name, "hello, print, counted-loop, busy-loop or wfi-idle")->required();
    image->add_option("out", image_out, "output file")->required();
    image->add_option("--format", image_format, "elf or flat")->check(CLI::IsMember({"elf", "flat"}));
    image->add_option("--origin", origin_text, "load address");
    image->add_option("--count", count, "instructions retired by counted-loop");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "kvmvp: " << e.what() << "\n";
        return 2;
    }

    static const std::map<std::string, log::Level> levels{
        {"debug", log::Level::debug}, {"info", log::Level::info}, {"warn", log::Level::warn}, {"error", log::Level::error}};
    log::set_level(levels.at(log_level));

    // startup: configuration, image loading, backend creation
    try {
        if (image->parsed()) {
            const auto prog = make_sample(image_name, parse_size(origin_text), count);
            write_file(image_out, image_format == "elf" ? prog.elf_bytes() : prog.flat_bytes());
            out << "wrote " << image_name << " (" << image_format << ", entry " << log::hex(prog.entry) << ") to "
                << image_out << "\n";
            return 0;
        }

        PlatformConfig cfg = load_with(config_path, overrides);
        if (run->parsed()) {
            Platform platform(cfg);
            RunMetrics m;
            try {
                m = platform.run();
                if (cfg.csv)
                    emit_csv(m, *cfg.csv, cfg.csv_append);
            } catch (const std::exception& e) {
                err << "kvmvp: run failed: " << e.what() << "\n";
                return 1;
            }
            out << summary(m) << "\n";
            if (per_core)
                print_cores(m, out);
            return 0;
        }

        std::vector<SimTime> qs;
        for (const auto& q : quanta)
            qs.push_back(parse_sim_time(q));
        for (const SimTime q : qs) {
            for (unsigned r = 0; r < repeat; ++r) {
                PlatformConfig c = cfg;
                c.quantum = q;
                validate(c);
                Platform platform(c);
                RunMetrics m;
                try {
                    m = platform.run();
                    if (c.csv)
                        emit_csv(m, *c.csv, true);
                } catch (const std::exception& e) {
                    err << "kvmvp: run failed: " << e.what() << "\n";
                    return 1;
                }
                out << summary(m) << "\n";
            }
        }
        return 0;
    } catch (const std::exception& e) {
        err << "kvmvp: " << e.what() << "\n";
        return 2;
    }
}

} // namespace kvmvp
