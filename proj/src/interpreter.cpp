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

#include "kvmvp/interpreter.hpp"

#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace kvmvp {

WfiPattern aarch64_wfi_pattern() { return WfiPattern{{0x7F, 0x20, 0x03, 0xD5}, 4}; }

WfiPattern toy_wfi_pattern() { return WfiPattern{{static_cast<std::uint8_t>(toy::Opcode::wfi)}, toy::kInstructionSize}; }

std::string_view exit_name(const ExitReason& e) {
    struct Namer {
        std::string_view operator()(const exit::Mmio&) const { return "mmio"; }
        std::string_view operator()(const exit::Breakpoint&) const { return "breakpoint"; }
        std::string_view operator()(const exit::IdleHint&) const { return "idle-hint"; }
        std::string_view operator()(const exit::Kicked&) const { return "kicked"; }
        std::string_view operator()(const exit::BudgetExhausted&) const { return "budget-exhausted"; }
        std::string_view operator()(const exit::Halted&) const { return "halted"; }
        std::string_view operator()(const exit::BackendFailure&) const { return "backend-error"; }
    };
    return std::visit(Namer{}, e);
}

Interpreter::Interpreter(InterpreterOptions options) : options_(options) {}

void Interpreter::set_pc(GuestAddr pc) {
    if (pc % toy::kInstructionSize != 0)
        throw ContractError("toy pc must be 8-byte aligned: " + log::hex(pc));
    pc_ = pc;
    step_over_.reset();
}

std::uint64_t Interpreter::read_reg(unsigned index) const {
    if (index >= toy::kRegisterCount)
        throw ContractError("register index " + std::to_string(index) + " out of range");
    return regs_[index];
}

void Interpreter::write_reg(unsigned index, std::uint64_t value) {
    if (index >= toy::kRegisterCount)
        throw ContractError("register index " + std::to_string(index) + " out of range");
    regs_[index] = value;
}

void Interpreter::map_guest_memory(const DmiGrant& grant, GuestAddr guest_base) {
    if (!grant.valid())
        throw ContractError("cannot map a revoked DMI grant");
    if (grant.size == 0 || guest_base + (grant.size - 1) < guest_base)
        throw ContractError("invalid guest mapping size");
    drop_revoked_regions();
    const GuestAddr last = guest_base + (grant.size - 1);
    for (const auto& r : regions_) {
        if (guest_base <= r.base + (r.size - 1) && r.base <= last)
            throw ConfigError("guest mapping at " + log::hex(guest_base) + " overlaps mapping at " + log::hex(r.base));
    }
    regions_.push_back(Region{guest_base, grant.size, grant.host, grant.writable, grant.validity});
}

void Interpreter::drop_revoked_regions() {
    std::erase_if(regions_, [](const Region& r) { return !r.validity || !r.validity->load(std::memory_order_acquire); });
    last_region_ = 0;
}

std::byte* Interpreter::translate(GuestAddr addr, std::uint64_t len, bool write) {
    auto hit = [&](const Region& r) { return addr >= r.base && len <= r.size && addr - r.base <= r.size - len; };
    if (last_region_ < regions_.size() && hit(regions_[last_region_])) {
        const Region& r = regions_[last_region_];
        return write && !r.writable ? nullptr : r.host + (addr - r.base);
    }
    for (std::size_t i = 0; i < regions_.size(); ++i) {
        if (hit(regions_[i])) {
            last_region_ = i;
            const Region& r = regions_[i];
            return write && !r.writable ? nullptr : r.host + (addr - r.base);
        }
    }
    return nullptr;
}

bool Interpreter::breakpoint_at(GuestAddr addr) const {
    return std::binary_search(breakpoints_.begin(), breakpoints_.end(), addr);
}

void Interpreter::insert_breakpoint(GuestAddr addr) {
    auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), addr);
    if (it == breakpoints_.end() || *it != addr)
        breakpoints_.insert(it, addr);
}

void Interpreter::remove_breakpoint(GuestAddr addr) {
    auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), addr);
    if (it != breakpoints_.end() && *it == addr)
        breakpoints_.erase(it);
}

void Interpreter::complete_mmio(const Transaction& response) {
    if (!pending_mmio_)
        throw ContractError("complete_mmio without a pending access");
    const PendingAccess p = *pending_mmio_;
    if (response.address != p.access.address || response.kind != p.access.kind)
        throw ContractError("MMIO response does not match the pending access at " + log::hex(p.access.address));
    pending_mmio_.reset();
    if (response.status != TransactionStatus::ok) {
        log::warn("toy core: " + std::string(response.is_read() ? "load from " : "store to ") +
                  log::hex(response.address) + " failed with " + std::string(to_string(response.status)));
    }
    if (p.access.kind == AccessKind::read)
        regs_[p.reg] = response.status == TransactionStatus::ok ? (response.value() & 0xFFFF'FFFFULL) : 0;
    pc_ += toy::kInstructionSize;
}

Cycles Interpreter::retire_idle_instruction() {
    step_over_.reset();
    pc_ += toy::kInstructionSize;
    ++retired_;
    return 1;
}

BackendRunResult Interpreter::run(std::optional<Cycles> budget_hint) {
    if (pending_mmio_)
        throw ContractError("run() with an uncompleted MMIO access");
    drop_revoked_regions();

    const Cycles limit = budget_hint.value_or(std::numeric_limits<Cycles>::max());
    Cycles count = 0;
    bool skip_breakpoint = step_over_.has_value() && *step_over_ == pc_;
    step_over_.reset();

    auto finish = [&](ExitReason why) {
        retired_ += count;
        return BackendRunResult{std::move(why), count};
    };

    for (;;) {
        if (stop_.load(std::memory_order_relaxed))
            return finish(exit::Kicked{});
        if (count >= limit)
            return finish(exit::BudgetExhausted{});
        if (!breakpoints_.empty() && !skip_breakpoint && breakpoint_at(pc_)) {
            step_over_ = pc_;
            return finish(exit::Breakpoint{pc_});
        }
        skip_breakpoint = false;

        if (pc_ % toy::kInstructionSize != 0)
            return finish(exit::BackendFailure{"misaligned pc " + log::hex(pc_)});
        const std::byte* code = translate(pc_, toy::kInstructionSize, false);
        if (code == nullptr)
            return finish(exit::BackendFailure{"instruction fetch outside guest memory at " + log::hex(pc_)});
        toy::Encoded raw;
        std::memcpy(raw.data(), code, raw.size());
        const auto insn = toy::decode(raw);
        if (!insn)
            return finish(exit::BackendFailure{"malformed instruction at " + log::hex(pc_)});

        std::uint64_t& reg = regs_[insn->reg];
        switch (insn->op) {
        case toy::Opcode::nop:
            pc_ += toy::kInstructionSize;
            break;
        case toy::Opcode::halt:
            return finish(exit::Halted{});
        case toy::Opcode::ldi:
            reg = insn->imm;
            pc_ += toy::kInstructionSize;
            break;
        case toy::Opcode::ld: {
            if (const std::byte* p = translate(insn->imm, 4, false)) {
                std::uint32_t v;
                std::memcpy(&v, p, 4);
                reg = v;
                pc_ += toy::kInstructionSize;
                break;
            }
            ++count;
            pending_mmio_ = PendingAccess{exit::Mmio{insn->imm, AccessKind::read, 4, 0}, insn->reg};
            return finish(pending_mmio_->access);
        }
        case toy::Opcode::st: {
            const auto v = static_cast<std::uint32_t>(reg);
            if (std::byte* p = translate(insn->imm, 4, true)) {
                std::memcpy(p, &v, 4);
                pc_ += toy::kInstructionSize;
                break;
            }
            ++count;
            pending_mmio_ = PendingAccess{exit::Mmio{insn->imm, AccessKind::write, 4, v}, insn->reg};
            return finish(pending_mmio_->access);
        }
        case toy::Opcode::addi:
            reg += static_cast<std::uint64_t>(static_cast<std::int64_t>(static_cast<std::int32_t>(insn->imm)));
            pc_ += toy::kInstructionSize;
            break;
        case toy::Opcode::bnz:
            pc_ = reg != 0 ? GuestAddr{insn->imm} : pc_ + toy::kInstructionSize;
            break;
        case toy::Opcode::wfi:
            if (irq_pending_) {
                pc_ += toy::kInstructionSize;
            } else if (options_.wfi_exits) {
                pc_ += toy::kInstructionSize;
                ++count;
                return finish(exit::IdleHint{});
            }
            // otherwise spin in place until an interrupt is injected
            break;
        }
        ++count;
    }
}

} // namespace kvmvp
