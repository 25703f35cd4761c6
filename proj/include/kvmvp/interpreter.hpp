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

#ifndef KVMVP_INTERPRETER_HPP
#define KVMVP_INTERPRETER_HPP

#include "kvmvp/exec_backend.hpp"
#include "kvmvp/toy_isa.hpp"

#include <array>
#include <atomic>
#include <memory>
#include <optional>
#include <vector>

namespace kvmvp {

struct InterpreterOptions {
    /// WFI without a pending interrupt exits with IdleHint. When false, WFI
    /// spins in place (one counted instruction per step) until an interrupt
    /// is injected or the budget runs out.
    bool wfi_exits = true;
};

/// Deterministic toy-ISA backend with exact instruction counts.
class Interpreter final : public ExecBackend {
public:
    explicit Interpreter(InterpreterOptions options = {});

    BackendRunResult run(std::optional<Cycles> budget_hint) override;

    void request_stop() noexcept override { stop_.store(true, std::memory_order_release); }
    void clear_stop() noexcept override { stop_.store(false, std::memory_order_release); }

    GuestAddr get_pc() const override { return pc_; }
    void set_pc(GuestAddr pc) override;
    unsigned register_count() const override { return toy::kRegisterCount; }
    std::uint64_t read_reg(unsigned index) const override;
    void write_reg(unsigned index, std::uint64_t value) override;

    void map_guest_memory(const DmiGrant& grant, GuestAddr guest_base) override;
    void complete_mmio(const Transaction& response) override;
    Cycles retire_idle_instruction() override;
    void set_interrupt_pending(bool pending) override { irq_pending_ = pending; }

    void insert_breakpoint(GuestAddr addr) override;
    void remove_breakpoint(GuestAddr addr) override;

    bool exact_counts() const noexcept override { return true; }
    WfiPattern wfi_pattern() const override { return toy_wfi_pattern(); }
    std::string_view name() const noexcept override { return "interpreter"; }

    void set_wfi_exits(bool on) { options_.wfi_exits = on; }
    bool wfi_exits() const { return options_.wfi_exits; }
    bool interrupt_pending() const { return irq_pending_; }
    bool has_pending_mmio() const { return pending_mmio_.has_value(); }

    /// Instructions retired over the interpreter's lifetime.
    Cycles retired() const { return retired_; }

    std::array<std::uint64_t, toy::kRegisterCount> registers() const { return regs_; }

private:
    struct Region {
        GuestAddr base;
        std::uint64_t size;
        std::byte* host;
        bool writable;
        std::shared_ptr<const std::atomic<bool>> validity;
    };

    struct PendingAccess {
        exit::Mmio access;
        unsigned reg;
    };

    std::byte* translate(GuestAddr addr, std::uint64_t len, bool write);
    void drop_revoked_regions();
    bool breakpoint_at(GuestAddr addr) const;

    InterpreterOptions options_;
    std::array<std::uint64_t, toy::kRegisterCount> regs_{};
    GuestAddr pc_ = 0;
    std::vector<Region> regions_;
    std::size_t last_region_ = 0;
    std::vector<GuestAddr> breakpoints_; // sorted
    std::optional<GuestAddr> step_over_;
    std::optional<PendingAccess> pending_mmio_;
    std::atomic<bool> stop_{false};
    bool irq_pending_ = false;
    Cycles retired_ = 0;
};

} // namespace kvmvp

#endif
