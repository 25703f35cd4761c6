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

#ifndef KVMVP_SAMPLES_HPP
#define KVMVP_SAMPLES_HPP

#include "kvmvp/config.hpp"
#include "kvmvp/elf.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Toy-ISA guest programs used by the tests, the acceptance suite and the
// `image` subcommand. Each one comes as an ELF description with function
// symbols, so it exercises the same loader and annotation path as a real
// guest.
namespace kvmvp::samples {

inline constexpr std::uint16_t kToyMachine = 0; // EM_NONE

/// Device addresses a program talks to.
struct Layout {
    GuestAddr uart = kDefaultUartBase;
    GuestAddr irqctl = kDefaultIrqctlBase;
    GuestAddr timer = kDefaultTimerBase;
    GuestAddr rtc = kDefaultRtcBase;
};

struct Program {
    std::string name;
    ElfSpec elf;
    GuestAddr entry = 0;

    std::vector<std::byte> elf_bytes() const { return build_elf(elf); }
    std::vector<std::byte> flat_bytes() const { return flat_image(elf); }
    /// Address of a function symbol; throws std::out_of_range.
    GuestAddr symbol(const std::string& name) const;
};

/// Stores each byte of `text` to the UART, then halts.
Program uart_print(GuestAddr origin, const std::string& text, const Layout& layout = {});

/// Prints `text`, then parks in cpu_do_idle forever.
Program uart_hello(GuestAddr origin, const Layout& layout = {}, const std::string& text = "hello from guest\n");

/// Retires exactly `instructions` (>= 3) instructions, then halts.
Program counted_loop(GuestAddr origin, std::uint64_t instructions);

/// Endless loop bumping a RAM progress counter at `counter`.
Program busy_loop(GuestAddr origin, GuestAddr counter);

struct IdleParams {
    GuestAddr counter = 0;  // RAM word incremented once per handled interrupt
    IrqLine line = kDefaultTimerIrq;
    CoreId target = 0;
    SimTime first = SimTime::us(500);
    SimTime period = SimTime::ms(1);
    bool program_timer = true;
};

/// Routes the timer line to `target`, starts a periodic timer and then
/// loops {cpu_do_idle: WFI; claim; ++counter; complete}.
Program wfi_idle(GuestAddr origin, const IdleParams& params, const Layout& layout = {});

/// Instructions one iteration of the wfi_idle handler retires, WFI included.
inline constexpr std::uint64_t kIdleIterationInstructions = 8;

} // namespace kvmvp::samples

#endif
