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

#ifndef KVMVP_EXEC_BACKEND_HPP
#define KVMVP_EXEC_BACKEND_HPP

#include "kvmvp/bus.hpp"
#include "kvmvp/sim_time.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace kvmvp {

/// Byte pattern of the idle instruction and the alignment it must sit at.
struct WfiPattern {
    std::vector<std::uint8_t> bytes;
    std::uint32_t alignment = 4;
};

/// AArch64 WFI (0xd503207f) as stored in little-endian memory.
WfiPattern aarch64_wfi_pattern();
/// Toy-ISA WFI: opcode byte 7 at an 8-byte boundary.
WfiPattern toy_wfi_pattern();

namespace exit {

/// Guest touched an address without a direct mapping. The access is not
/// committed until the backend's complete_mmio() receives the response.
struct Mmio {
    GuestAddr address = 0;
    AccessKind kind = AccessKind::read;
    std::uint8_t size = 4;
    std::uint64_t data = 0; // write payload; filled by complete_mmio for reads
};
struct Breakpoint {
    GuestAddr pc = 0;
};
struct IdleHint {};
struct Kicked {};
struct BudgetExhausted {};
struct Halted {};
struct BackendFailure {
    std::string detail;
};

} // namespace exit

using ExitReason = std::variant<exit::Mmio, exit::Breakpoint, exit::IdleHint, exit::Kicked, exit::BudgetExhausted,
                                exit::Halted, exit::BackendFailure>;

std::string_view exit_name(const ExitReason& e);

struct BackendRunResult {
    ExitReason exit;
    std::optional<Cycles> exact_instructions;
};

/// Execution engine behind a core: the toy interpreter or a hardware vCPU.
///
/// All methods except request_stop() belong to the owning core's context and
/// are legal only between runs.
class ExecBackend {
public:
    virtual ~ExecBackend() = default;

    virtual BackendRunResult run(std::optional<Cycles> budget_hint) = 0;

    /// Asynchronous; callable from any thread.
    virtual void request_stop() noexcept = 0;
    virtual void clear_stop() noexcept = 0;

    virtual GuestAddr get_pc() const = 0;
    virtual void set_pc(GuestAddr pc) = 0;
    virtual unsigned register_count() const = 0;
    /// Throws ContractError for an out-of-range index.
    virtual std::uint64_t read_reg(unsigned index) const = 0;
    virtual void write_reg(unsigned index, std::uint64_t value) = 0;

    virtual void map_guest_memory(const DmiGrant& grant, GuestAddr guest_base) = 0;

    /// Finishes the access reported by the last Mmio exit with the bus response.
    virtual void complete_mmio(const Transaction& response) = 0;

    /// Retires the instruction at pc without executing it (the trapped WFI of
    /// an idle annotation); returns instructions retired.
    virtual Cycles retire_idle_instruction() = 0;

    /// Level of the core's interrupt input for the next run.
    virtual void set_interrupt_pending(bool pending) = 0;

    virtual void insert_breakpoint(GuestAddr addr) = 0;
    virtual void remove_breakpoint(GuestAddr addr) = 0;

    /// Whether run() reports exact instruction counts.
    virtual bool exact_counts() const noexcept = 0;
    virtual WfiPattern wfi_pattern() const = 0;
    virtual std::string_view name() const noexcept = 0;
};

} // namespace kvmvp

#endif
