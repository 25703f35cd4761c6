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

#ifndef KVMVP_TOY_ISA_HPP
#define KVMVP_TOY_ISA_HPP

#include "kvmvp/sim_time.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kvmvp::toy {

// Encoding, 8 bytes per instruction:
//   byte 0     opcode
//   byte 1     register (0-7)
//   bytes 2-3  reserved, zero
//   bytes 4-7  immediate, little-endian
enum class Opcode : std::uint8_t {
    nop = 0,
    halt = 1,
    ldi = 2,  // reg <- imm
    ld = 3,   // reg <- mem32[imm]
    st = 4,   // mem32[imm] <- reg
    addi = 5, // reg += sign-extended imm
    bnz = 6,  // if reg != 0: pc <- imm
    wfi = 7,
};

inline constexpr unsigned kRegisterCount = 8;
inline constexpr unsigned kInstructionSize = 8;

struct Instruction {
    Opcode op = Opcode::nop;
    std::uint8_t reg = 0;
    std::uint32_t imm = 0;
};

using Encoded = std::array<std::uint8_t, kInstructionSize>;

Encoded encode(const Instruction& insn);
/// Nothing for unknown opcodes, bad register numbers or nonzero reserved bytes.
std::optional<Instruction> decode(const Encoded& bytes);

/// Assembles toy programs with forward-referenced labels.
class Assembler {
public:
    explicit Assembler(GuestAddr origin) : origin_(origin) {}

    Assembler& nop();
    Assembler& halt();
    Assembler& ldi(unsigned reg, std::uint32_t imm);
    Assembler& ld(unsigned reg, std::uint32_t addr);
    Assembler& st(unsigned reg, std::uint32_t addr);
    Assembler& addi(unsigned reg, std::int32_t imm);
    Assembler& bnz(unsigned reg, const std::string& label);
    Assembler& bnz_abs(unsigned reg, std::uint32_t target);
    Assembler& wfi();
    /// Unconditional branch through `scratch` (clobbered).
    Assembler& jump(const std::string& label, unsigned scratch = 7);

    Assembler& label(const std::string& name);

    GuestAddr origin() const { return origin_; }
    GuestAddr here() const { return origin_ + code_.size() * kInstructionSize; }
    GuestAddr address_of(const std::string& label) const;
    std::size_t size() const { return code_.size(); }

    /// Resolves labels; throws std::invalid_argument for undefined ones.
    std::vector<std::uint8_t> bytes() const;

private:
    Assembler& emit(Opcode op, unsigned reg, std::uint32_t imm);

    GuestAddr origin_;
    std::vector<Instruction> code_;
    std::map<std::string, GuestAddr> labels_;
    std::vector<std::pair<std::size_t, std::string>> fixups_;
};

} // namespace kvmvp::toy

#endif
