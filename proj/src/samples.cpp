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

#include "kvmvp/samples.hpp"

#include "kvmvp/peripherals.hpp"
#include "kvmvp/toy_isa.hpp"

#include <stdexcept>

namespace kvmvp::samples {

namespace {

std::uint32_t addr32(GuestAddr a) {
    if (a > 0xFFFF'FFFFULL)
        throw std::invalid_argument("toy programs address only the low 4 GiB, got " + std::to_string(a));
    return static_cast<std::uint32_t>(a);
}

std::uint32_t ticks32(SimTime t) {
    if (t.ticks() > 0xFFFF'FFFFULL)
        throw std::invalid_argument("toy timer values must fit 32 bits of picoseconds: " + t.str());
    return static_cast<std::uint32_t>(t.ticks());
}

Program finish(std::string name, const toy::Assembler& a, std::vector<SymbolRecord> functions) {
    Program p;
    p.name = std::move(name);
    p.entry = a.origin();
    p.elf.machine = kToyMachine;
    p.elf.entry = a.origin();
    p.elf.segments.push_back({a.origin(), a.bytes(), 5});
    p.elf.functions = std::move(functions);
    return p;
}

void print(toy::Assembler& a, const std::string& text, const Layout& layout) {
    for (unsigned char c : text) {
        a.ldi(1, c);
        a.st(1, addr32(layout.uart + Uart::kData));
    }
}

} // namespace

GuestAddr Program::symbol(const std::string& want) const {
    for (const auto& f : elf.functions)
        if (f.name == want)
            return f.address;
    throw std::out_of_range("no symbol '" + want + "' in " + name);
}

Program uart_print(GuestAddr origin, const std::string& text, const Layout& layout) {
    toy::Assembler a(origin);
    a.label("_start");
    print(a, text, layout);
    a.halt();
    return finish("uart_print", a, {{"_start", origin, a.size() * toy::kInstructionSize}});
}

Program uart_hello(GuestAddr origin, const Layout& layout, const std::string& text) {
    toy::Assembler a(origin);
    a.label("_start");
    print(a, text, layout);
    const GuestAddr idle = a.here();
    a.label("cpu_do_idle").nop().wfi().jump("cpu_do_idle");
    const GuestAddr end = a.here();
    return finish("uart_hello", a, {{"_start", origin, idle - origin}, {"cpu_do_idle", idle, end - idle}});
}

Program counted_loop(GuestAddr origin, std::uint64_t instructions) {
    if (instructions < 3)
        throw std::invalid_argument("counted_loop needs at least 3 instructions");
    // ldi [nop] {addi, bnz} x n
    const bool pad = (instructions % 2) == 0;
    const std::uint64_t n = (instructions - (pad ? 2 : 1)) / 2;
    if (n > 0xFFFF'FFFFULL)
        throw std::invalid_argument("counted_loop iteration count exceeds 32 bits");
    toy::Assembler a(origin);
    a.label("_start").ldi(1, static_cast<std::uint32_t>(n));
    if (pad)
        a.nop();
    a.label("loop").addi(1, -1).bnz(1, "loop").halt();
    return finish("counted_loop", a, {{"_start", origin, a.size() * toy::kInstructionSize}});
}

Program busy_loop(GuestAddr origin, GuestAddr counter) {
    toy::Assembler a(origin);
    a.label("_start").ldi(1, 0);
    a.label("loop").addi(1, 1).st(1, addr32(counter)).jump("loop");
    return finish("busy_loop", a, {{"_start", origin, a.size() * toy::kInstructionSize}});
}

Program wfi_idle(GuestAddr origin, const IdleParams& p, const Layout& layout) {
    const auto ctl = addr32(layout.irqctl);
    const auto tmr = addr32(layout.timer);
    toy::Assembler a(origin);
    a.label("_start");
    a.ldi(1, p.target).st(1, ctl + static_cast<std::uint32_t>(IrqController::kTargetBase + 4 * p.line));
    a.ldi(1, 1U << p.line).st(1, ctl + static_cast<std::uint32_t>(IrqController::kEnableSet));
    if (p.program_timer) {
        a.ldi(1, ticks32(p.period)).st(1, tmr + static_cast<std::uint32_t>(Timer::kPeriod));
        a.ldi(1, ticks32(p.first)).st(1, tmr + static_cast<std::uint32_t>(Timer::kCompare));
        a.ldi(1, Timer::kEnable | Timer::kPeriodic).st(1, tmr + static_cast<std::uint32_t>(Timer::kControl));
    }
    const GuestAddr idle = a.here();
    a.label("cpu_do_idle").wfi();
    const GuestAddr handler = a.here();
    // 7 instructions per handled interrupt, plus the WFI
    a.label("irq_handler");
    a.ld(1, ctl + static_cast<std::uint32_t>(IrqController::kClaim));
    a.ld(2, addr32(p.counter)).addi(2, 1).st(2, addr32(p.counter));
    a.st(1, ctl + static_cast<std::uint32_t>(IrqController::kComplete));
    a.jump("cpu_do_idle");
    const GuestAddr end = a.here();
    return finish("wfi_idle", a,
                  {{"_start", origin, idle - origin},
                   {"cpu_do_idle", idle, handler - idle},
                   {"irq_handler", handler, end - handler}});
}

} // namespace kvmvp::samples
