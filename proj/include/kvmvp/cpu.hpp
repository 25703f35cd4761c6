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

#ifndef KVMVP_CPU_HPP
#define KVMVP_CPU_HPP

#include "kvmvp/bus.hpp"
#include "kvmvp/exec_backend.hpp"
#include "kvmvp/kernel.hpp"
#include "kvmvp/sim_time.hpp"
#include "kvmvp/watchdog.hpp"
#include "kvmvp/wfi_annotator.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace kvmvp {

/// Wall-clock window for `cycles` at `clock_hz`, rounded up to whole
/// picoseconds and never zero. Throws ContractError on zero arguments.
WallDuration budget_to_window(Cycles cycles, std::uint64_t clock_hz);

/// round-half-up(elapsed x clock_hz), capped at `budget`.
Cycles elapsed_to_cycles(WallDuration elapsed, std::uint64_t clock_hz, Cycles budget);

/// Receives interrupt line levels from the interrupt controller.
class IrqSink {
public:
    virtual void raise_irq(IrqLine line, bool high) = 0;

protected:
    ~IrqSink() = default;
};

enum class CoreState {
    runnable,
    mmio_pending,    // completes at the start of the next simulate()
    idle,            // last run ended on an idle hint
    halted,
    breakpoint_stop, // stopped at a user breakpoint
};

std::string_view to_string(CoreState s);

struct CoreOptions {
    CoreId id = 0;
    std::uint64_t clock_hz = 1'000'000'000;
    /// Arm the shared watchdog before each backend run.
    bool arm_watchdog = true;
    unsigned irq_lines = 32;
    /// Record (time, line) for every raised line.
    bool trace_irqs = false;
};

struct CoreStats {
    std::uint64_t runs = 0;
    std::uint64_t mmio_exits = 0;
    std::uint64_t idle_hints = 0;
    std::uint64_t kicked_exits = 0;
    std::uint64_t budget_exits = 0;
    std::uint64_t breakpoint_exits = 0;
    std::uint64_t spurious_breakpoints = 0;
    /// Kicked exits that consumed nothing (stop request left over from a previous run).
    std::uint64_t empty_kicked_runs = 0;
    std::uint64_t kicks_delivered = 0;
    std::uint64_t kicks_rejected = 0;
    /// Kicked exits whose delivering kick was armed for a different run; must stay 0.
    std::uint64_t stale_interruptions = 0;
    SimTime max_sync_offset;
};

/// Processor model: turns cycle budgets into backend runs under the
/// watchdog, approximates consumed cycles from wall time where the backend
/// cannot count, and dispatches the exit reason.
class Core final : public Kickable, public IrqSink {
public:
    Core(CoreOptions options, std::unique_ptr<ExecBackend> backend, Kernel& kernel, Bus& bus,
         Watchdog* watchdog = nullptr);
    ~Core();

    Core(const Core&) = delete;
    Core& operator=(const Core&) = delete;

    /// One backend run of at most `cycles`. Completes a pending MMIO access
    /// first (on the coordinator), then arms the watchdog, injects pending
    /// interrupts and runs. Returns consumed cycles (<= cycles).
    Cycles simulate(Cycles cycles);

    void raise_irq(IrqLine line, bool high) override;
    bool has_pending_irq() const;
    std::optional<IrqLine> first_pending_irq() const;
    std::set<IrqLine> pending_irqs() const;

    void insert_breakpoint(GuestAddr addr);
    void remove_breakpoint(GuestAddr addr);
    const std::set<GuestAddr>& breakpoints() const { return user_breakpoints_; }

    /// Arms a breakpoint at the annotated WFI; nothing disables annotation.
    void set_idle_annotation(std::optional<IdleAnnotation> annotation);
    const std::optional<IdleAnnotation>& idle_annotation() const { return annotation_; }

    bool kick(KickId id) override;
    KickId kick_id() const { return KickId{kick_id_.load(std::memory_order_acquire)}; }
    /// Ends the current run's identity; kicks armed with older ids become inert.
    KickId bump_id();

    CoreId id() const { return options_.id; }
    std::uint64_t clock_hz() const { return options_.clock_hz; }
    Cycles instruction_counter() const { return instructions_; }

    /// Time run ahead of the last synchronization point.
    SimTime local_time() const { return cycles_to_time(cycles_since_sync_, options_.clock_hz); }
    SimTime current_time() const { return sync_base_ + local_time(); }
    /// Folds local time into `now`, which must not precede current_time().
    void sync_to(SimTime now);

    CoreState state() const { return state_; }
    /// Clears an idle or breakpoint stop so the next simulate() runs.
    void resume();
    const ExitReason& last_exit() const { return last_exit_; }
    const CoreStats& stats() const { return stats_; }
    const std::vector<std::pair<SimTime, IrqLine>>& irq_log() const { return irq_log_; }

    ExecBackend& backend() { return *backend_; }
    const ExecBackend& backend() const { return *backend_; }

    /// Called on the simulating thread right before the backend starts.
    void set_run_start_hook(std::function<void()> hook) { run_start_hook_ = std::move(hook); }

private:
    void arm_run();
    void dispatch(const BackendRunResult& result, Cycles& consumed, Cycles budget);

    CoreOptions options_;
    std::unique_ptr<ExecBackend> backend_;
    Kernel& kernel_;
    Bus& bus_;
    Watchdog* watchdog_;

    std::mutex run_mutex_;
    bool running_ = false;
    std::atomic<std::uint64_t> kick_id_{0};
    std::optional<std::uint64_t> stop_delivered_for_;

    mutable std::mutex irq_mutex_;
    std::set<IrqLine> pending_irqs_;
    std::vector<std::pair<SimTime, IrqLine>> irq_log_;

    std::set<GuestAddr> user_breakpoints_;
    std::optional<IdleAnnotation> annotation_;
    std::optional<Transaction> pending_mmio_;

    CoreState state_ = CoreState::runnable;
    ExitReason last_exit_ = exit::BudgetExhausted{};
    Cycles instructions_ = 0;
    Cycles cycles_since_sync_ = 0;
    SimTime sync_base_;
    CoreStats stats_;
    std::function<void()> run_start_hook_;
};

} // namespace kvmvp

#endif
