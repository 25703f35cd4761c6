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

#ifndef KVMVP_TESTS_TOY_FIXTURE_HPP
#define KVMVP_TESTS_TOY_FIXTURE_HPP

#include "kvmvp/bus.hpp"
#include "kvmvp/interpreter.hpp"
#include "kvmvp/toy_isa.hpp"

#include <cstring>
#include <memory>

namespace kvmvp::testing {

inline constexpr GuestAddr kRamBase = 0x4000'0000;
inline constexpr std::uint64_t kRamSize = 1 << 20;

// An interpreter with 1 MiB of RAM at kRamBase and nothing else mapped.
struct ToyMachine {
    Ram ram{kRamSize};
    std::unique_ptr<Interpreter> cpu;

    explicit ToyMachine(InterpreterOptions opts = {}) : cpu(std::make_unique<Interpreter>(opts)) {
        DmiGrant g = *ram.dmi(0, kRamSize, kRamBase);
        cpu->map_guest_memory(g, kRamBase);
        cpu->set_pc(kRamBase);
    }

    void load(const toy::Assembler& a) {
        const auto bytes = a.bytes();
        std::memcpy(ram.bytes().data() + (a.origin() - kRamBase), bytes.data(), bytes.size());
    }

    std::uint32_t word(GuestAddr addr) const {
        std::uint32_t v;
        std::memcpy(&v, ram.bytes().data() + (addr - kRamBase), 4);
        return v;
    }
};

} // namespace kvmvp::testing

#endif
