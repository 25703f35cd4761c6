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

#include "kvmvp/errors.hpp"
#include "toy_fixture.hpp"

#include <doctest.h>

using namespace kvmvp;
using kvmvp::testing::kRamBase;
using kvmvp::testing::ToyMachine;

namespace {

template <typename T>
bool is(const BackendRunResult& r) {
    return std::holds_alternative<T>(r.exit);
}

} // namespace

TEST_CASE("encode/decode round trip and rejects") {
    const toy::Instruction in{toy::Opcode::addi, 3, 0xFFFF'FFFF};
    const auto enc = toy::encode(in);
    const auto out = toy::decode(enc);
    REQUIRE(out);
    CHECK(out->op == toy::Opcode::addi);
    CHECK(out->reg == 3);
    CHECK(out->imm == 0xFFFF'FFFF);
    auto bad = enc;
    bad[0] = 0x42;
    CHECK_FALSE(toy::decode(bad));
    bad = enc;
    bad[1] = 9;
    CHECK_FALSE(toy::decode(bad));
    bad = enc;
    bad[2] = 1;
    CHECK_FALSE(toy::decode(bad));
}

TEST_CASE("assembler labels") {
    toy::Assembler a(0x1000);
    a.bnz(0, "end").nop().label("end").halt();
    CHECK(a.address_of("end") == 0x1010);
    const auto bytes = a.bytes();
    CHECK(bytes.size() == 24);
    CHECK(bytes[4] == 0x10);
    CHECK(bytes[5] == 0x10);
    toy::Assembler b(0);
    b.bnz(0, "nowhere");
    CHECK_THROWS_AS(b.bytes(), std::invalid_argument);
}

TEST_CASE("hand-stepped loop count") {
    ToyMachine m;
    toy::Assembler a(kRamBase);
    a.ldi(0, 3).label("loop").addi(0, -1).bnz(0, "loop").halt();
    m.load(a);
    const auto r = m.cpu->run(std::nullopt);
    CHECK(is<exit::Halted>(r));
    CHECK(r.exact_instructions == 1u + 3u * 2u);
    CHECK(m.cpu->read_reg(0) == 0);
    CHECK(m.cpu->get_pc() == a.address_of("loop") + 16);
}

TEST_CASE("budget splits resume where they stopped") {
    ToyMachine m;
    toy::Assembler a(kRamBase);
    for (int i = 0; i < 100; ++i)
        a.addi(1, 1);
    a.halt();
    m.load(a);
    SUBCASE("budget larger than the program") {
        const auto r = m.cpu->run(1'000'000);
        CHECK(is<exit::Halted>(r));
        CHECK(r.exact_instructions == 100u);
    }
    SUBCASE("budget 50 then the rest") {
        auto r = m.cpu->run(50);
        CHECK(is<exit::BudgetExhausted>(r));
        CHECK(r.exact_instructions == 50u);
        CHECK(m.cpu->read_reg(1) == 50);
        CHECK(m.cpu->get_pc() == kRamBase + 50 * 8);
        r = m.cpu->run(1'000);
        CHECK(is<exit::Halted>(r));
        CHECK(r.exact_instructions == 50u);
        CHECK(m.cpu->read_reg(1) == 100);
        CHECK(m.cpu->retired() == 100);
    }
    SUBCASE("zero budget runs nothing") {
        const auto r = m.cpu->run(0);
        CHECK(is<exit::BudgetExhausted>(r));
        CHECK(r.exact_instructions == 0u);
    }
}

TEST_CASE("MMIO store exits before it commits") {
    ToyMachine m;
    toy::Assembler a(kRamBase);
    a.ldi(0, 'A').st(0, 0x0900'0000).halt();
    m.load(a);
    auto r = m.cpu->run(100);
    REQUIRE(is<exit::Mmio>(r));
    const auto mmio = std::get<exit::Mmio>(r.exit);
    CHECK(mmio.address == 0x0900'0000);
    CHECK(mmio.kind == AccessKind::write);
    CHECK(mmio.size == 4);
    CHECK(mmio.data == 'A');
    CHECK(r.exact_instructions == 2u);
    CHECK(m.cpu->has_pending_mmio());
    CHECK(m.cpu->get_pc() == kRamBase + 8); // still at the store
    CHECK_THROWS_AS(m.cpu->run(100), ContractError);

    auto resp = Transaction::write(mmio.address, 4, mmio.data);
    resp.status = TransactionStatus::ok;
    m.cpu->complete_mmio(resp);
    CHECK(m.cpu->get_pc() == kRamBase + 16);
    r = m.cpu->run(100);
    CHECK(is<exit::Halted>(r));
    CHECK(r.exact_instructions == 0u);
}

TEST_CASE("MMIO load takes the response value") {
    ToyMachine m;
    toy::Assembler a(kRamBase);
    a.ld(2, 0x0A01'0000).halt();
    m.load(a);
    auto r = m.cpu->run(10);
    REQUIRE(is<exit::Mmio>(r));
    auto resp = Transaction::read(0x0A01'0000, 4);
    resp.set_value(0x1234);
    resp.status = TransactionStatus::ok;
    SUBCASE("matching response") {
        m.cpu->complete_mmio(resp);
        CHECK(m.cpu->read_reg(2) == 0x1234);
    }
    SUBCASE("mismatched response is a contract violation") {
        auto wrong = Transaction::read(0x0A01'0004, 4);
        CHECK_THROWS_AS(m.cpu->complete_mmio(wrong), ContractError);
    }
    SUBCASE("failed access reads zero") {
        resp.status = TransactionStatus::device_error;
        m.cpu->write_reg(2, 99);
        m.cpu->complete_mmio(resp);
        CHECK(m.cpu->read_reg(2) == 0);
    }
}

TEST_CASE("RAM round trip never exits") {
    ToyMachine m;
    toy::Assembler a(kRamBase);
    a.ldi(0, 0xBEEF).st(0, kRamBase + 0x800).ld(1, kRamBase + 0x800).halt();
    m.load(a);
    const auto r = m.cpu->run(100);
    CHECK(is<exit::Halted>(r));
    CHECK(m.cpu->read_reg(1) == 0xBEEF);
    CHECK(m.word(kRamBase + 0x800) == 0xBEEF);
}

TEST_CASE("WFI") {
    toy::Assembler a(kRamBase);
    a.wfi().addi(0, 1).halt();
    SUBCASE("first instruction gives an idle hint") {
        ToyMachine m;
        m.load(a);
        const auto r = m.cpu->run(100);
        CHECK(is<exit::IdleHint>(r));
        CHECK(r.exact_instructions == 1u);
        CHECK(m.cpu->get_pc() == kRamBase + 8);
    }
    SUBCASE("a pending interrupt is seen before the first instruction") {
        ToyMachine m;
        m.load(a);
        m.cpu->set_interrupt_pending(true);
        const auto r = m.cpu->run(100);
        CHECK(is<exit::Halted>(r));
        CHECK(r.exact_instructions == 2u);
    }
    SUBCASE("without idle exits it spins until the budget runs out") {
        ToyMachine m(InterpreterOptions{false});
        m.load(a);
        auto r = m.cpu->run(25);
        CHECK(is<exit::BudgetExhausted>(r));
        CHECK(r.exact_instructions == 25u);
        CHECK(m.cpu->get_pc() == kRamBase);
        m.cpu->set_interrupt_pending(true);
        r = m.cpu->run(25);
        CHECK(is<exit::Halted>(r));
        CHECK(r.exact_instructions == 2u);
    }
}

TEST_CASE("registers and pc") {
    Interpreter cpu;
    cpu.set_pc(0x1000);
    CHECK(cpu.get_pc() == 0x1000);
    cpu.write_reg(2, 7);
    CHECK(cpu.read_reg(2) == 7);
    CHECK_THROWS_AS(cpu.read_reg(9), ContractError);
    CHECK_THROWS_AS(cpu.write_reg(8, 1), ContractError);
    CHECK_THROWS_AS(cpu.set_pc(0x1004), ContractError);
    CHECK(cpu.register_count() == 8);
    CHECK(cpu.exact_counts());
}

TEST_CASE("guest memory mappings") {
    ToyMachine m;
    SUBCASE("overlap is rejected") {
        DmiGrant g = *m.ram.dmi(0, 0x1000, kRamBase);
        CHECK_THROWS_AS(m.cpu->map_guest_memory(g, kRamBase + 0x800), ConfigError);
    }
    SUBCASE("unmapped fetch fails the backend") {
        m.cpu->set_pc(0x10);
        const auto r = m.cpu->run(10);
        CHECK(is<exit::BackendFailure>(r));
    }
    SUBCASE("revoked grants fall back to MMIO") {
        toy::Assembler a(kRamBase);
        a.ld(0, kRamBase + 0x100);
        m.load(a);
        m.ram.revoke_dmi();
        // code fetch no longer has a direct path either
        const auto r = m.cpu->run(10);
        CHECK(is<exit::BackendFailure>(r));
    }
    SUBCASE("garbage instruction fails the backend") {
        m.ram.bytes()[0] = std::byte{0x77};
        CHECK(is<exit::BackendFailure>(m.cpu->run(10)));
    }
}

TEST_CASE("breakpoints") {
    ToyMachine m;
    toy::Assembler a(kRamBase);
    for (int i = 0; i < 10; ++i)
        a.addi(0, 1);
    a.halt();
    m.load(a);
    const GuestAddr bp = kRamBase + 5 * 8;
    SUBCASE("stop before instruction 5, then step over") {
        m.cpu->insert_breakpoint(bp);
        m.cpu->insert_breakpoint(bp); // idempotent
        auto r = m.cpu->run(100);
        REQUIRE(is<exit::Breakpoint>(r));
        CHECK(std::get<exit::Breakpoint>(r.exit).pc == bp);
        CHECK(r.exact_instructions == 5u);
        r = m.cpu->run(100);
        CHECK(is<exit::Halted>(r));
        CHECK(r.exact_instructions == 5u);
        m.cpu->remove_breakpoint(bp);
    }
    SUBCASE("removed breakpoint does not trap") {
        m.cpu->insert_breakpoint(bp);
        m.cpu->remove_breakpoint(bp);
        const auto r = m.cpu->run(100);
        CHECK(is<exit::Halted>(r));
        CHECK(r.exact_instructions == 10u);
    }
    SUBCASE("loop passes trap every time") {
        ToyMachine l;
        toy::Assembler b(kRamBase);
        b.ldi(0, 3).label("top").addi(0, -1).bnz(0, "top").halt();
        l.load(b);
        l.cpu->insert_breakpoint(b.address_of("top"));
        int hits = 0;
        for (;;) {
            const auto r = l.cpu->run(100);
            if (is<exit::Halted>(r))
                break;
            REQUIRE(is<exit::Breakpoint>(r));
            ++hits;
        }
        CHECK(hits == 3);
        CHECK(l.cpu->retired() == 7);
    }
}

TEST_CASE("stop requests") {
    ToyMachine m;
    toy::Assembler a(kRamBase);
    a.label("top").addi(0, 1).jump("top");
    m.load(a);
    m.cpu->request_stop();
    auto r = m.cpu->run(std::nullopt);
    CHECK(is<exit::Kicked>(r));
    CHECK(r.exact_instructions == 0u);
    m.cpu->clear_stop();
    r = m.cpu->run(1000);
    CHECK(is<exit::BudgetExhausted>(r));
}

TEST_CASE("exit names") {
    CHECK(exit_name(ExitReason{exit::Halted{}}) == "halted");
    CHECK(exit_name(ExitReason{exit::Mmio{}}) == "mmio");
    CHECK(exit_name(ExitReason{exit::Kicked{}}) == "kicked");
}

TEST_CASE("WFI patterns") {
    const auto arm = aarch64_wfi_pattern();
    CHECK(arm.bytes == std::vector<std::uint8_t>{0x7F, 0x20, 0x03, 0xD5});
    CHECK(arm.alignment == 4);
    const auto toy = toy_wfi_pattern();
    CHECK(toy.bytes.size() == 1);
    CHECK(toy.alignment == 8);
}
