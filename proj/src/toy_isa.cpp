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

#include "kvmvp/toy_isa.hpp"

#include <stdexcept>

namespace kvmvp::toy {

Encoded encode(const Instruction& insn) {
    Encoded b{};
    b[0] = static_cast<std::uint8_t>(insn.op);
    b[1] = insn.reg;
    for (unsigned i = 0; i < 4; ++i)
        b[4 + i] = static_cast<std::uint8_t>(insn.imm >> (8 * i));
    return b;
}

std::optional<Instruction> decode(const Encoded& b) {
    if (b[0] > static_cast<std::uint8_t>(Opcode::wfi) || b[1] >= kRegisterCount || b[2] != 0 || b[3] != 0)
        return std::nullopt;
    Instruction insn;
    insn.op = static_cast<Opcode>(b[0]);
    insn.reg = b[1];
    insn.imm = static_cast<std::uint32_t>(b[4]) | static_cast<std::uint32_t>(b[5]) << 8 |
               static_cast<std::uint32_t>(b[6]) << 16 | static_cast<std::uint32_t>(b[7]) << 24;
    return insn;
}

Assembler& Assembler::emit(Opcode op, unsigned reg, std::uint32_t imm) {
    if (reg >= kRegisterCount)
        throw std::invalid_argument("register r" + std::to_string(reg) + " does not exist");
    code_.push_back(Instruction{op, static_cast<std::uint8_t>(reg), imm});
    return *this;
}

Assembler& Assembler::nop() { return emit(Opcode::nop, 0, 0); }
Assembler& Assembler::halt() { return emit(Opcode::halt, 0, 0); }
Assembler& Assembler::ldi(unsigned reg, std::uint32_t imm) { return emit(Opcode::ldi, reg, imm); }
Assembler& Assembler::ld(unsigned reg, std::uint32_t addr) { return emit(Opcode::ld, reg, addr); }
Assembler& Assembler::st(unsigned reg, std::uint32_t addr) { return emit(Opcode::st, reg, addr); }
Assembler& Assembler::addi(unsigned reg, std::int32_t imm) {
    return emit(Opcode::addi, reg, static_cast<std::uint32_t>(imm));
}
Assembler& Assembler::bnz_abs(unsigned reg, std::uint32_t target) { return emit(Opcode::bnz, reg, target); }
Assembler& Assembler::wfi() { return emit(Opcode::wfi, 0, 0); }

Assembler& Assembler::bnz(unsigned reg, const std::string& label) {
    fixups_.emplace_back(code_.size(), label);
    return emit(Opcode::bnz, reg, 0);
}

Assembler& Assembler::jump(const std::string& label, unsigned scratch) {
    ldi(scratch, 1);
    return bnz(scratch, label);
}

Assembler& Assembler::label(const std::string& name) {
    if (!labels_.emplace(name, here()).second)
        throw std::invalid_argument("label '" + name + "' defined twice");
    return *this;
}

GuestAddr Assembler::address_of(const std::string& label) const {
    auto it = labels_.find(label);
    if (it == labels_.end())
        throw std::invalid_argument("undefined label '" + label + "'");
    return it->second;
}

std::vector<std::uint8_t> Assembler::bytes() const {
    std::vector<Instruction> code = code_;
    for (const auto& [index, label] : fixups_) {
        const GuestAddr target = address_of(label);
        if (target > 0xFFFF'FFFFULL)
            throw std::invalid_argument("label '" + label + "' is outside the 32-bit branch range");
        code[index].imm = static_cast<std::uint32_t>(target);
    }
    std::vector<std::uint8_t> out;
    out.reserve(code.size() * kInstructionSize);
    for (const auto& insn : code) {
        const auto enc = encode(insn);
        out.insert(out.end(), enc.begin(), enc.end());
    }
    return out;
}

} // namespace kvmvp::toy
