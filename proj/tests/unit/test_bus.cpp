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

#include "kvmvp/bus.hpp"
#include "kvmvp/errors.hpp"
#include "kvmvp/kernel.hpp"
#include "kvmvp/peripherals.hpp"

#include <doctest.h>

#include <cstring>

using namespace kvmvp;

namespace {

struct Recorder final : Target {
    std::vector<std::pair<std::uint64_t, Transaction>> seen;
    void transport(Transaction& t, std::uint64_t offset) override {
        seen.emplace_back(offset, t);
        t.status = TransactionStatus::ok;
    }
    std::string_view name() const override { return "recorder"; }
};

} // namespace

TEST_CASE("transaction value helpers") {
    auto w = Transaction::write(0x10, 4, 0x11223344);
    CHECK(w.data[0] == 0x44);
    CHECK(w.data[3] == 0x11);
    CHECK(w.value() == 0x11223344);
    auto r = Transaction::read(0x10, 8);
    r.set_value(0x0102030405060708ULL);
    CHECK(r.value() == 0x0102030405060708ULL);
    CHECK(valid_access_size(1));
    CHECK(valid_access_size(8));
    CHECK_FALSE(valid_access_size(3));
    CHECK_THROWS_AS(Transaction::read(0, 3), ContractError);
}

TEST_CASE("routing subtracts the mapping base") {
    Bus bus;
    Recorder dev;
    bus.map_target(0x9000'0000, 0x1000, dev);
    auto t = Transaction::write(0x9000'0000, 4, 0x41);
    CHECK(bus.transport(t).status == TransactionStatus::ok);
    REQUIRE(dev.seen.size() == 1);
    CHECK(dev.seen[0].first == 0);
    auto t2 = Transaction::read(0x9000'0ffc, 4);
    bus.transport(t2);
    CHECK(dev.seen[1].first == 0xffc);
}

TEST_CASE("mapping errors") {
    Bus bus;
    Recorder a, b;
    bus.map_target(0x1000, 0x1000, a);
    CHECK_THROWS_AS(bus.map_target(0x1800, 0x1000, b), ConfigError);
    CHECK_THROWS_AS(bus.map_target(0x0800, 0x0801, b), ConfigError);
    CHECK_THROWS_AS(bus.map_target(0x5000, 0, b), ConfigError);
    CHECK_THROWS_AS(bus.map_target(~0ULL - 0xf, 0x20, b), ConfigError);
    CHECK_NOTHROW(bus.map_target(0x2000, 0x1000, b)); // adjacent is fine
    CHECK(bus.mappings().size() == 2);
}

TEST_CASE("unmapped and straddling accesses are address errors") {
    Bus bus;
    Recorder dev;
    bus.map_target(0x1000, 0x100, dev);
    auto t = Transaction::read(0xDEAD'0000, 4);
    CHECK(bus.transport(t).status == TransactionStatus::address_error);
    auto s = Transaction::read(0x10fe, 4);
    CHECK(bus.transport(s).status == TransactionStatus::address_error);
    CHECK(dev.seen.empty());
}

TEST_CASE("RAM reads back what was written") {
    Bus bus;
    Ram ram(0x1000);
    bus.map_target(0x4000'0000, 0x1000, ram);
    auto w = Transaction::write(0x4000'0010, 8, 0xCAFEBABE'12345678ULL);
    CHECK(bus.transport(w).status == TransactionStatus::ok);
    auto r = Transaction::read(0x4000'0014, 4);
    CHECK(bus.transport(r).value() == 0xCAFEBABE);
}

TEST_CASE("DMI grants") {
    Bus bus;
    Ram ram(128ULL << 20);
    Uart uart;
    bus.map_target(0x4000'0000, ram.size(), ram);
    bus.map_target(0x0900'0000, 0x1000, uart);

    auto g = bus.acquire_dmi(0x4000'0000, 64 << 10);
    REQUIRE(g);
    CHECK(g->base == 0x4000'0000);
    CHECK(g->size == (64u << 10));
    CHECK(g->valid());
    CHECK(g->host == ram.bytes().data());

    CHECK_FALSE(bus.acquire_dmi(0x4000'0000 + ram.size() - 16, 32));
    CHECK_FALSE(bus.acquire_dmi(0x0900'0000, 4));
    CHECK_FALSE(bus.acquire_dmi(0x8000'0000, 4));
    CHECK_FALSE(bus.acquire_dmi(0x4000'0000, 0));

    // direct writes are visible through transport
    std::uint32_t v = 0x5a5a1234;
    std::memcpy(g->host + 64, &v, 4);
    auto r = Transaction::read(0x4000'0040, 4);
    CHECK(bus.transport(r).value() == v);

    ram.revoke_dmi();
    CHECK_FALSE(g->valid());
    CHECK(bus.acquire_dmi(0x4000'0000, 16)->valid());
}

TEST_CASE("context probe counts off-coordinator transports") {
    Bus bus;
    Recorder dev;
    bus.map_target(0, 0x100, dev);
    bool on = true;
    bus.set_context_probe([&] { return on; });
    auto t = Transaction::read(0, 4);
    bus.transport(t);
    on = false;
    bus.transport(t);
    CHECK(bus.transports() == 2);
    CHECK(bus.off_coordinator_transports() == 1);
}

TEST_CASE("RAM digest tracks content") {
    Ram a(256), b(256);
    CHECK(a.digest() == b.digest());
    a.bytes()[7] = std::byte{1};
    CHECK(a.digest() != b.digest());
}
