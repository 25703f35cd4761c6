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

#ifndef KVMVP_PLATFORM_HPP
#define KVMVP_PLATFORM_HPP

#include "kvmvp/bus.hpp"
#include "kvmvp/config.hpp"
#include "kvmvp/cpu.hpp"
#include "kvmvp/kernel.hpp"
#include "kvmvp/kvm_backend.hpp"
#include "kvmvp/peripherals.hpp"
#include "kvmvp/watchdog.hpp"

#include <atomic>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace kvmvp {

enum class ExitCause { halted, time_limit, instruction_limit, breakpoint, deadlock, drained };

std::string_view to_string(ExitCause c);

struct CoreMetrics {
    CoreId id = 0;
    Cycles instructions = 0;
    std::string state;
    CoreStats stats;
    std::uint64_t suspensions = 0;
    /// Instructions retired while the core was suspended; zero by design.
    Cycles idle_effort = 0;
    SimTime local_time;
};

struct RunMetrics {
    unsigned cores = 0;
    SimTime quantum;
    bool parallel = false;
    BackendKind backend = BackendKind::interpreter;
    double wall_s = 0.0;
    double sim_s = 0.0;
    SimTime sim_time;
    Cycles instructions = 0;
    /// Wall-clock approximations rather than counted instructions.
    bool instructions_estimated = false;
    double mips = 0.0;
    double rtf = 0.0;
    ExitCause exit_cause = ExitCause::drained;
    std::vector<CoreMetrics> per_core;
};

/// CSV header for `m`; the count column reads `instructions_estimated`
/// when counts are wall-clock approximations.
std::string csv_header(const RunMetrics& m);
std::string csv_row(const RunMetrics& m);

/// Writes header plus one row, or appends a row to an existing file with
/// the same header. Throws IoError.
void emit_csv(const RunMetrics& m, const std::string& path, bool append);

/// The assembled virtual platform: kernel, bus, devices, cores and, when
/// needed, the watchdog and per-core workers.
class Platform {
public:
    explicit Platform(PlatformConfig cfg);
    ~Platform();

    Platform(const Platform&) = delete;
    Platform& operator=(const Platform&) = delete;

    /// Simulates until the run limit, all cores halted, a user breakpoint
    /// or deadlock. Call once.
    RunMetrics run();

    const PlatformConfig& config() const { return cfg_; }
    Kernel& kernel() { return kernel_; }
    Bus& bus() { return bus_; }
    std::size_t core_count() const { return cores_.size(); }
    Core& core(CoreId id) { return *cores_.at(id); }
    Uart* uart() { return uart_.get(); }
    IrqController* irqctl() { return irqctl_.get(); }
    Timer* timer(std::size_t index = 0) { return index < timers_.size() ? timers_[index].get() : nullptr; }
    Rtc* rtc() { return rtc_.get(); }
    Ram& ram(std::size_t index = 0) { return *rams_.at(index).ram; }
    Watchdog* watchdog() { return watchdog_.get(); }

    /// 32-bit little-endian RAM word at a guest address.
    std::uint32_t read_ram32(GuestAddr addr) const;
    /// Combined digest of every RAM region.
    std::uint64_t ram_digest() const;

private:
    struct RamRegion {
        GuestAddr base;
        std::unique_ptr<Ram> ram;
    };

    struct CoreSlot {
        bool finished = false;       // halted or out of instructions
        bool suspended = false;
        Cycles suspend_mark = 0;
        std::uint64_t suspensions = 0;
        Cycles idle_effort = 0;
        std::exception_ptr error;
    };

    struct Worker {
        std::thread thread;
        std::mutex mutex;
        std::condition_variable cv;
        std::optional<Cycles> job;
        bool quit = false;
        std::atomic<bool> started{false};
        std::atomic<bool> done{true}; // no job in flight
        std::exception_ptr error;
    };

    void build_devices();
    void load_images(SymbolTable& symbols, GuestAddr& default_entry);
    void build_cores(const SymbolTable& symbols, GuestAddr default_entry);
    void start_workers();
    void stop_workers() noexcept;
    void worker_loop(CoreId id);

    void activate(CoreId id);
    void dispatch(CoreId id, Cycles budget);
    std::optional<SimTime> after_run(CoreId id);
    void on_resume(CoreId id);
    bool all_finished() const;
    RamRegion* ram_at(GuestAddr addr, std::uint64_t len);
    const RamRegion* ram_at(GuestAddr addr, std::uint64_t len) const;

    PlatformConfig cfg_;
    Kernel kernel_;
    Bus bus_;
    std::vector<RamRegion> rams_;
    std::unique_ptr<IrqController> irqctl_;
    std::unique_ptr<Uart> uart_;
    std::unique_ptr<Rtc> rtc_;
    std::vector<std::unique_ptr<Timer>> timers_;
    std::ofstream uart_capture_;
    std::unique_ptr<Watchdog> watchdog_;
    std::shared_ptr<KvmVm> vm_;
    std::vector<std::unique_ptr<Core>> cores_;
    std::vector<CoreSlot> slots_;
    std::vector<std::unique_ptr<Worker>> workers_;
    bool breakpoint_hit_ = false;
    bool ran_ = false;
};

/// Builds a platform from `cfg`, runs it and writes the CSV if configured.
RunMetrics run_platform(const PlatformConfig& cfg);

/// One-line human summary of a run.
std::string summary(const RunMetrics& m);

} // namespace kvmvp

#endif
