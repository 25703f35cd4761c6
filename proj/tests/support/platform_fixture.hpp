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

#ifndef KVMVP_TESTS_PLATFORM_FIXTURE_HPP
#define KVMVP_TESTS_PLATFORM_FIXTURE_HPP

#include "kvmvp/config.hpp"
#include "kvmvp/platform.hpp"
#include "kvmvp/samples.hpp"

#include <string>
#include <vector>

namespace kvmvp::testing {

inline ImageSpec elf_image(const samples::Program& p) {
    return ImageSpec{p.name, ImageFormat::elf, std::nullopt, p.elf_bytes()};
}

inline PlatformConfig single_image(const samples::Program& p) {
    PlatformConfig cfg;
    cfg.images.push_back(elf_image(p));
    return cfg;
}

// Four cores with different workloads sharing the UART, the interrupt
// controller and the timer: a printer, a counted loop, a busy loop and an
// interrupt-driven idle loop.
struct MixedWorkload {
    static constexpr GuestAddr kPrint = kDefaultRamBase;
    static constexpr GuestAddr kLoop = kDefaultRamBase + 0x1'0000;
    static constexpr GuestAddr kBusy = kDefaultRamBase + 0x2'0000;
    static constexpr GuestAddr kIdle = kDefaultRamBase + 0x3'0000;
    static constexpr GuestAddr kBusyCounter = kDefaultRamBase + 0x8'0000;
    static constexpr GuestAddr kIdleCounter = kDefaultRamBase + 0x8'0100;
    static constexpr std::uint64_t kLoopInstructions = 300'000;
    inline static const std::string kText = "mixed workload: core 0 says hello\n";

    static PlatformConfig config(bool parallel, SimTime limit, SimTime quantum = SimTime::us(100)) {
        samples::IdleParams idle;
        idle.counter = kIdleCounter;
        idle.target = 3;
        idle.first = SimTime::us(50);
        idle.period = SimTime::us(200);
        PlatformConfig cfg;
        cfg.cores = 4;
        cfg.parallel = parallel;
        cfg.quantum = quantum;
        cfg.max_sim_time = limit;
        cfg.clock_hz = {1'000'000'000, 500'000'000, 2'000'000'000, 100'000'000};
        cfg.images = {elf_image(samples::uart_print(kPrint, kText)), elf_image(samples::counted_loop(kLoop, kLoopInstructions)),
                      elf_image(samples::busy_loop(kBusy, kBusyCounter)),
                      elf_image(samples::wfi_idle(kIdle, idle))};
        cfg.entry_points = {kPrint, kLoop, kBusy, kIdle};
        return cfg;
    }
};

// Observable outcome of a run, compared across execution modes.
struct RunOutcome {
    std::string uart;
    std::vector<std::string> uart_per_core;
    std::vector<Cycles> instructions;
    std::uint64_t ram_digest = 0;
    SimTime sim_time;
    ExitCause exit_cause = ExitCause::drained;
    std::uint64_t off_coordinator = 0;
    RunMetrics metrics;

    bool same_as(const RunOutcome& o) const {
        return uart == o.uart && uart_per_core == o.uart_per_core && instructions == o.instructions &&
               ram_digest == o.ram_digest && sim_time == o.sim_time && exit_cause == o.exit_cause;
    }
};

inline RunOutcome run_outcome(const PlatformConfig& cfg) {
    Platform p(cfg);
    RunOutcome r;
    r.metrics = p.run();
    if (p.uart() != nullptr) {
        r.uart = p.uart()->tx();
        for (CoreId c = 0; c < cfg.cores; ++c)
            r.uart_per_core.push_back(p.uart()->tx_of(c));
    }
    for (const auto& c : r.metrics.per_core)
        r.instructions.push_back(c.instructions);
    r.ram_digest = p.ram_digest();
    r.sim_time = r.metrics.sim_time;
    r.exit_cause = r.metrics.exit_cause;
    r.off_coordinator = p.bus().off_coordinator_transports();
    return r;
}

} // namespace kvmvp::testing

#endif
