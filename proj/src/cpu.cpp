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

#include "kvmvp/cpu.hpp"

#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

namespace kvmvp {

namespace {
__extension__ using u128 = unsigned __int128;
constexpr u128 kPsPerSecond = 1'000'000'000'000ULL;
} // namespace

WallDuration budget_to_window(Cycles cycles, std::uint64_t clock_hz) {
    if (cycles == 0 || clock_hz == 0)
        throw ContractError("budget_to_window needs a positive cycle count and clock");
    const u128 ps = (static_cast<u128>(cycles) * kPsPerSecond + clock_hz - 1) / clock_hz;
    if (ps > static_cast<u128>(std::numeric_limits<WallDuration::rep>::max()))
        throw ContractError("budget window exceeds the representable duration");
    return WallDuration(std::max<WallDuration::rep>(1, static_cast<WallDuration::rep>(ps)));
}

Cycles elapsed_to_cycles(WallDuration elapsed, std::uint64_t clock_hz, Cycles budget) {
    if (elapsed.count() <= 0)
        return 0;
    const u128 cycles = (static_cast<u128>(elapsed.count()) * clock_hz + kPsPerSecond / 2) / kPsPerSecond;
    return cycles >= budget ? budget : static_cast<Cycles>(cycles);
}

std::string_view to_string(CoreState s) {
    switch (s) {
    case CoreState::runnable:
        return "runnable";
    case CoreState::mmio_pending:
        return "mmio-pending";
    case CoreState::idle:
        return "idle";
    case CoreState::halted:
        return "halted";
    case CoreState::breakpoint_stop:
        return "breakpoint";
    }
    return "?";
}

Core::Core(CoreOptions options, std::unique_ptr<ExecBackend> backend, Kernel& kernel, Bus& bus, Watchdog* watchdog)
    : options_(options), backend_(std::move(backend)), kernel_(kernel), bus_(bus), watchdog_(watchdog) {
    if (options_.clock_hz == 0)
        throw ConfigError("core " + std::to_string(options_.id) + ": clock frequency must be positive");
    if (!backend_)
        throw ConfigError("core " + std::to_string(options_.id) + ": no execution backend");
}

Core::~Core() {
    if (watchdog_ != nullptr)
        watchdog_->forget(*this);
}

bool Core::kick(KickId id) {
    std::lock_guard lock(run_mutex_);
    if (!running_ || id.value != kick_id_.load(std::memory_order_relaxed)) {
        ++stats_.kicks_rejected;
        return false;
    }
    stop_delivered_for_ = id.value;
    backend_->request_stop();
    ++stats_.kicks_delivered;
    return true;
}

KickId Core::bump_id() {
    std::lock_guard lock(run_mutex_);
    running_ = false;
    return KickId{kick_id_.fetch_add(1, std::memory_order_acq_rel) + 1};
}

void Core::arm_run() {
    std::lock_guard lock(run_mutex_);
    // a stop that landed after the previous run ended must not hit this one
    backend_->clear_stop();
    stop_delivered_for_.reset();
    running_ = true;
}

void Core::sync_to(SimTime now) {
    if (now < current_time())
        throw ContractError("core " + std::to_string(options_.id) + ": sync to " + now.str() +
                            " before its local time " + current_time().str());
    sync_base_ = now;
    cycles_since_sync_ = 0;
}

void Core::resume() {
    if (state_ == CoreState::idle || state_ == CoreState::breakpoint_stop)
        state_ = CoreState::runnable;
}

Cycles Core::simulate(Cycles cycles) {
    if (cycles == 0)
        throw ContractError("simulate needs a positive cycle budget");
    if (state_ == CoreState::halted)
        return 0;

    if (pending_mmio_) {
        Transaction t = *pending_mmio_;
        pending_mmio_.reset();
        kernel_.execute_on_coordinator(options_.id, [&] { bus_.transport(t); });
        backend_->complete_mmio(t);
    }
    state_ = CoreState::runnable;

    const WallDuration window = budget_to_window(cycles, options_.clock_hz);
    const std::uint64_t run_id = kick_id_.load(std::memory_order_acquire);
    arm_run();
    if (watchdog_ != nullptr && options_.arm_watchdog)
        watchdog_->schedule_kick(*this, KickId{run_id}, window);
    backend_->set_interrupt_pending(has_pending_irq());
    if (run_start_hook_)
        run_start_hook_();

    BackendRunResult result{exit::BackendFailure{"backend did not return"}, std::nullopt};
    const auto start = std::chrono::steady_clock::now();
    try {
        result = backend_->run(cycles);
    } catch (...) {
        bump_id();
        throw;
    }
    const auto elapsed = std::chrono::steady_clock::now() - start;
    std::optional<std::uint64_t> delivered;
    {
        std::lock_guard lock(run_mutex_);
        delivered = stop_delivered_for_;
    }
    bump_id();
    ++stats_.runs;

    Cycles consumed = result.exact_instructions
                          ? std::min(*result.exact_instructions, cycles)
                          : elapsed_to_cycles(std::chrono::duration_cast<WallDuration>(elapsed), options_.clock_hz, cycles);

    if (std::holds_alternative<exit::Kicked>(result.exit) && delivered && *delivered != run_id)
        ++stats_.stale_interruptions;

    dispatch(result, consumed, cycles);

    instructions_ += consumed;
    cycles_since_sync_ += consumed;
    stats_.max_sync_offset = std::max(stats_.max_sync_offset, local_time());
    return consumed;
}

void Core::dispatch(const BackendRunResult& result, Cycles& consumed, Cycles budget) {
    last_exit_ = result.exit;
    std::visit(
        [&](const auto& why) {
            using T = std::decay_t<decltype(why)>;
            if constexpr (std::is_same_v<T, exit::Mmio>) {
                ++stats_.mmio_exits;
                Transaction t = why.kind == AccessKind::read
                                    ? Transaction::read(why.address, why.size, options_.id)
                                    : Transaction::write(why.address, why.size, why.data, options_.id);
                pending_mmio_ = t;
                state_ = CoreState::mmio_pending;
            } else if constexpr (std::is_same_v<T, exit::Breakpoint>) {
                ++stats_.breakpoint_exits;
                switch (classify_hit(why.pc, annotation_, user_breakpoints_)) {
                case HitKind::idle_hint:
                    // the WFI counts as retired; execution resumes after it
                    consumed = std::min(budget, consumed + backend_->retire_idle_instruction());
                    ++stats_.idle_hints;
                    state_ = CoreState::idle;
                    break;
                case HitKind::user_breakpoint:
                    state_ = CoreState::breakpoint_stop;
                    break;
                case HitKind::spurious:
                    ++stats_.spurious_breakpoints;
                    log::warn("core " + std::to_string(options_.id) + ": spurious breakpoint at " + log::hex(why.pc) +
                              ", resuming");
                    state_ = CoreState::runnable;
                    break;
                }
            } else if constexpr (std::is_same_v<T, exit::IdleHint>) {
                ++stats_.idle_hints;
                state_ = CoreState::idle;
            } else if constexpr (std::is_same_v<T, exit::Kicked>) {
                ++stats_.kicked_exits;
                if (consumed == 0)
                    ++stats_.empty_kicked_runs;
                state_ = CoreState::runnable;
            } else if constexpr (std::is_same_v<T, exit::BudgetExhausted>) {
                ++stats_.budget_exits;
                state_ = CoreState::runnable;
            } else if constexpr (std::is_same_v<T, exit::Halted>) {
                state_ = CoreState::halted;
            } else if constexpr (std::is_same_v<T, exit::BackendFailure>) {
                throw BackendError("core " + std::to_string(options_.id) + " (" + std::string(backend_->name()) +
                                   ") at pc " + log::hex(backend_->get_pc()) + ": " + why.detail);
            }
        },
        result.exit);
}

void Core::raise_irq(IrqLine line, bool high) {
    if (line >= options_.irq_lines)
        throw ConfigError("core " + std::to_string(options_.id) + ": unknown interrupt line " + std::to_string(line));
    {
        std::lock_guard lock(irq_mutex_);
        if (high) {
            pending_irqs_.insert(line);
            if (options_.trace_irqs)
                irq_log_.emplace_back(kernel_.now(), line);
        } else {
            pending_irqs_.erase(line);
        }
    }
    if (high)
        kernel_.notify_interrupt(options_.id, line);
}

bool Core::has_pending_irq() const {
    std::lock_guard lock(irq_mutex_);
    return !pending_irqs_.empty();
}

std::optional<IrqLine> Core::first_pending_irq() const {
    std::lock_guard lock(irq_mutex_);
    if (pending_irqs_.empty())
        return std::nullopt;
    return *pending_irqs_.begin();
}

std::set<IrqLine> Core::pending_irqs() const {
    std::lock_guard lock(irq_mutex_);
    return pending_irqs_;
}

void Core::insert_breakpoint(GuestAddr addr) {
    user_breakpoints_.insert(addr);
    backend_->insert_breakpoint(addr);
}

void Core::remove_breakpoint(GuestAddr addr) {
    if (user_breakpoints_.erase(addr) == 0) {
        log::warn("core " + std::to_string(options_.id) + ": no breakpoint at " + log::hex(addr));
        return;
    }
    if (!annotation_ || annotation_->wfi_address != addr)
        backend_->remove_breakpoint(addr);
}

void Core::set_idle_annotation(std::optional<IdleAnnotation> annotation) {
    if (annotation_ && !user_breakpoints_.contains(annotation_->wfi_address))
        backend_->remove_breakpoint(annotation_->wfi_address);
    annotation_ = std::move(annotation);
    if (annotation_)
        backend_->insert_breakpoint(annotation_->wfi_address);
}

} // namespace kvmvp
