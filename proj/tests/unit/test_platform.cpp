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

#include "platform_fixture.hpp"
#include "temp_dir.hpp"

#include "kvmvp/errors.hpp"
#include "kvmvp/kvm_backend.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace kvmvp;
using namespace kvmvp::testing;

namespace {

std::vector<std::string> lines_of(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

std::size_t columns(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

} // namespace

TEST_CASE("counted loop: a million instructions at 1 GHz take exactly 1 ms") {
    auto cfg = single_image(samples::counted_loop(kDefaultRamBase, 1'000'000));
    Platform p(cfg);
    const auto m = p.run();
    CHECK(m.exit_cause == ExitCause::halted);
    CHECK(m.instructions == 1'000'000);
    CHECK_FALSE(m.instructions_estimated);
    CHECK(m.sim_time == SimTime::ms(1));
    CHECK(m.per_core.at(0).state == "halted");
    CHECK(m.per_core.at(0).local_time == SimTime::ms(1));
    CHECK(p.bus().off_coordinator_transports() == 0);
    CHECK_THROWS_AS(p.run(), ContractError);
}

TEST_CASE("quantum does not change an interpreter result") {
    for (const auto q : {SimTime::us(1), SimTime::us(37), SimTime::ms(5)}) {
        auto cfg = single_image(samples::counted_loop(kDefaultRamBase, 100'000));
        cfg.quantum = q;
        const auto r = run_outcome(cfg);
        CHECK(r.instructions.at(0) == 100'000);
        CHECK(r.sim_time == SimTime::us(100));
    }
}

TEST_CASE("four cores, sequential and parallel") {
    for (const bool parallel : {false, true}) {
        auto cfg = single_image(samples::counted_loop(kDefaultRamBase, 1'000'000));
        cfg.cores = 4;
        cfg.parallel = parallel;
        const auto r = run_outcome(cfg);
        CHECK(r.exit_cause == ExitCause::halted);
        CHECK(r.metrics.instructions == 4'000'000);
        CHECK(r.sim_time == SimTime::ms(1));
        CHECK(r.off_coordinator == 0);
    }
}

TEST_CASE("UART output reaches the platform log and the capture file") {
    TempDir dir;
    auto cfg = single_image(samples::uart_print(kDefaultRamBase, "HI\n"));
    cfg.uart_capture = dir.file("uart.txt");
    {
        const auto r = run_outcome(cfg);
        CHECK(r.uart == "HI\n");
        CHECK(r.uart_per_core.at(0) == "HI\n");
        CHECK(r.exit_cause == ExitCause::halted);
        CHECK(r.metrics.per_core.at(0).stats.mmio_exits == 3);
    }
    std::ifstream in(dir.file("uart.txt"));
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "HI\n");
}

TEST_CASE("limits") {
    SUBCASE("zero time limit runs nothing") {
        auto cfg = single_image(samples::counted_loop(kDefaultRamBase, 1000));
        cfg.max_sim_time = SimTime::zero();
        const auto r = run_outcome(cfg);
        CHECK(r.metrics.instructions == 0);
        CHECK(r.exit_cause == ExitCause::time_limit);
    }
    SUBCASE("zero instruction limit runs nothing") {
        auto cfg = single_image(samples::counted_loop(kDefaultRamBase, 1000));
        cfg.max_instructions = 0;
        const auto r = run_outcome(cfg);
        CHECK(r.metrics.instructions == 0);
        CHECK(r.exit_cause == ExitCause::instruction_limit);
    }
    SUBCASE("time limit stops a busy loop exactly") {
        auto cfg = single_image(samples::busy_loop(kDefaultRamBase, kDefaultRamBase + 0x1'0000));
        cfg.max_sim_time = SimTime::us(250);
        cfg.quantum = SimTime::us(100);
        const auto r = run_outcome(cfg);
        CHECK(r.exit_cause == ExitCause::time_limit);
        CHECK(r.sim_time == SimTime::us(250));
        CHECK(r.instructions.at(0) == 250'000);
    }
    SUBCASE("per-core instruction limit") {
        auto cfg = single_image(samples::busy_loop(kDefaultRamBase, kDefaultRamBase + 0x1'0000));
        cfg.cores = 2;
        cfg.max_instructions = 12'345;
        const auto r = run_outcome(cfg);
        CHECK(r.exit_cause == ExitCause::instruction_limit);
        CHECK(r.instructions == std::vector<Cycles>{12'345, 12'345});
    }
}

TEST_CASE("idle guest: one handled interrupt per timer period") {
    samples::IdleParams idle;
    idle.counter = kDefaultRamBase + 0x10'0000;
    std::uint64_t digest[2] = {};
    for (const bool annotate : {true, false}) {
        auto cfg = single_image(samples::wfi_idle(kDefaultRamBase, idle));
        cfg.wfi_annotation = annotate;
        cfg.quantum = SimTime::us(100);
        cfg.max_sim_time = SimTime::ms(10);
        Platform p(cfg);
        const auto m = p.run();
        CHECK(m.exit_cause == ExitCause::time_limit);
        CHECK(p.read_ram32(idle.counter) == 10);
        const auto& c = m.per_core.at(0);
        CHECK(c.idle_effort == 0);
        if (annotate) {
            CHECK(c.suspensions == 11);
            CHECK(c.stats.breakpoint_exits == 11);
            CHECK(c.instructions < 1000);
        } else {
            // the core spins on WFI instead of sleeping
            CHECK(c.suspensions == 0);
            CHECK(c.instructions > 9'000'000);
        }
        digest[annotate ? 0 : 1] = p.ram_digest();
    }
    CHECK(digest[0] == digest[1]);
}

TEST_CASE("guest that waits for an interrupt nobody sends deadlocks") {
    auto cfg = single_image(samples::uart_hello(kDefaultRamBase));
    const auto r = run_outcome(cfg);
    CHECK(r.uart == "hello from guest\n");
    CHECK(r.exit_cause == ExitCause::deadlock);
    CHECK(r.metrics.per_core.at(0).state == "suspended");
}

TEST_CASE("mixed workload completes deterministically") {
    const auto a = run_outcome(MixedWorkload::config(false, SimTime::ms(2)));
    const auto b = run_outcome(MixedWorkload::config(false, SimTime::ms(2)));
    CHECK(a.same_as(b));
    CHECK(a.uart_per_core.at(0) == MixedWorkload::kText);
    CHECK(a.instructions.at(1) == MixedWorkload::kLoopInstructions);
    CHECK(a.exit_cause == ExitCause::time_limit);
    const auto c = run_outcome(MixedWorkload::config(true, SimTime::ms(2)));
    CHECK(a.same_as(c));
    CHECK(c.off_coordinator == 0);
}

TEST_CASE("CSV output") {
    TempDir dir;
    const auto path = dir.file("m.csv");
    auto cfg = single_image(samples::counted_loop(kDefaultRamBase, 10'000));
    cfg.csv = path;
    run_platform(cfg);
    auto lines = lines_of(path);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].rfind("cores,", 0) == 0);
    CHECK(columns(lines[0]) == columns(lines[1]));
    CHECK(lines[0].find("instructions") != std::string::npos);
    CHECK(lines[0].find("instructions_estimated") == std::string::npos);

    run_platform(cfg);
    CHECK(lines_of(path).size() == 3);

    cfg.csv_append = false;
    run_platform(cfg);
    CHECK(lines_of(path).size() == 2);

    std::ofstream(path) << "something,else\n1,2\n";
    cfg.csv_append = true;
    CHECK_THROWS_AS(run_platform(cfg), IoError);

    RunMetrics est;
    est.instructions_estimated = true;
    CHECK(csv_header(est).find("instructions_estimated") != std::string::npos);
    CHECK(columns(csv_header(est)) == columns(csv_row(est)));
}

TEST_CASE("summary and derived rates") {
    auto cfg = single_image(samples::counted_loop(kDefaultRamBase, 200'000));
    const auto m = run_outcome(cfg).metrics;
    REQUIRE(m.wall_s > 0);
    CHECK(m.mips == doctest::Approx(static_cast<double>(m.instructions) / m.wall_s / 1e6));
    CHECK(m.rtf == doctest::Approx(m.sim_s / m.wall_s));
    const auto s = summary(m);
    CHECK(s.find("cores=1") != std::string::npos);
    CHECK(s.find("exit=halted") != std::string::npos);
    CHECK(s.find("instructions=200000") != std::string::npos);
    CHECK(to_string(ExitCause::instruction_limit) == "instruction-limit");
}

TEST_CASE("hardware backend needs the hypervisor") {
    if (hardware_backend_compiled() && hardware_backend_unavailable_reason().empty())
        return;
    auto cfg = single_image(samples::counted_loop(kDefaultRamBase, 1000));
    cfg.backend = BackendKind::hardware;
    CHECK_THROWS_AS(Platform{cfg}, CapabilityError);
    CHECK_FALSE(hardware_backend_unavailable_reason().empty());
}
