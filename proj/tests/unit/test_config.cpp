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

#include "temp_dir.hpp"

#include "kvmvp/config.hpp"
#include "kvmvp/elf.hpp"
#include "kvmvp/errors.hpp"
#include "kvmvp/samples.hpp"

#include <doctest.h>

#include <fstream>

using namespace kvmvp;
using kvmvp::testing::TempDir;

namespace {

std::string error_of(const std::string& json, const std::filesystem::path& base = {}) {
    try {
        parse_config(json, base);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

bool contains(const std::string& s, const std::string& sub) { return s.find(sub) != std::string::npos; }

struct ImageDir {
    TempDir dir;
    ImageDir() {
        write_file(dir.file("loop.elf"), samples::counted_loop(kDefaultRamBase, 100).elf_bytes());
        write_file(dir.file("loop.bin"), samples::counted_loop(kDefaultRamBase, 100).flat_bytes());
    }
};

} // namespace

TEST_CASE("parse_size") {
    CHECK(parse_size("4096") == 4096);
    CHECK(parse_size("0x4000_0000") == 0x4000'0000);
    CHECK(parse_size("16MiB") == 16ULL << 20);
    CHECK(parse_size("2 GiB") == 2ULL << 30);
    CHECK(parse_size("4K") == 4096);
    CHECK_THROWS_AS(parse_size(""), ConfigError);
    CHECK_THROWS_AS(parse_size("ten"), ConfigError);
    CHECK_THROWS_AS(parse_size("1TiB"), ConfigError);
    CHECK_THROWS_AS(parse_size("0xFFFFFFFFFFFFFFFFGiB"), ConfigError);
}

TEST_CASE("minimal config takes the defaults") {
    ImageDir d;
    const auto cfg = parse_config(R"({"images": [{"path": "loop.elf"}]})", d.dir.path());
    CHECK(cfg.cores == 1);
    CHECK(cfg.quantum == SimTime::ms(1));
    CHECK(cfg.backend == BackendKind::interpreter);
    CHECK_FALSE(cfg.parallel);
    CHECK(cfg.clock_for(0) == 1'000'000'000);
    CHECK(cfg.memory_map.size() == default_memory_map().size());
    REQUIRE(cfg.images.size() == 1);
    CHECK(cfg.images[0].format == ImageFormat::elf);
    CHECK(cfg.images[0].path == d.dir.file("loop.elf"));
    CHECK(cfg.idle_symbol == "cpu_do_idle");
    CHECK(cfg.wfi_annotation);
    CHECK_FALSE(cfg.watchdog_enabled());
}

TEST_CASE("full config") {
    ImageDir d;
    const auto cfg = parse_config(R"({
        // comments are allowed
        "cores": 2, "clock_hz": ["100_000_000", 3700000000], "quantum": "250us",
        "parallel": "on", "backend": "interpreter", "watchdog": "on",
        "memory_map": [
            {"type": "ram", "base": "0x4000_0000", "size": "1MiB"},
            {"type": "uart", "base": "0x0900_0000"}
        ],
        "images": [{"path": "loop.bin", "load_address": "0x4000_0000"}],
        "entry_points": [1073741824, "0x4000_0000"],
        "max_sim_time": "2ms", "max_instructions": 1000,
        "csv": "out.csv", "csv_append": false, "uart_stdout": true, "trace_irqs": true
    })",
                                  d.dir.path());
    CHECK(cfg.cores == 2);
    CHECK(cfg.clock_for(0) == 100'000'000);
    CHECK(cfg.clock_for(1) == 3'700'000'000ULL);
    CHECK(cfg.quantum == SimTime::us(250));
    CHECK(cfg.parallel);
    CHECK(cfg.watchdog_enabled());
    CHECK(cfg.memory_map.size() == 2);
    CHECK(cfg.images[0].format == ImageFormat::flat);
    CHECK(cfg.entry_points == std::vector<GuestAddr>{0x4000'0000, 0x4000'0000});
    CHECK(cfg.max_sim_time == SimTime::ms(2));
    CHECK(cfg.max_instructions == 1000U);
    CHECK(cfg.csv == "out.csv");
    CHECK_FALSE(cfg.csv_append);
    CHECK(cfg.uart_stdout);
    CHECK(cfg.trace_irqs);
}

TEST_CASE("errors name the offending key") {
    ImageDir d;
    const auto& base = d.dir.path();
    const std::string img = R"("images": [{"path": "loop.elf"}])";
    CHECK(contains(error_of("{" + img + R"(, "cores": 0})", base), "cores"));
    CHECK(contains(error_of("{" + img + R"(, "cores": 9})", base), "cores"));
    CHECK(contains(error_of("{" + img + R"(, "bogus": 1})", base), "bogus: unknown key"));
    CHECK(contains(error_of("{" + img + R"(, "quantum": "0ms"})", base), "quantum"));
    CHECK(contains(error_of("{" + img + R"(, "quantum": 5})", base), "quantum"));
    CHECK(contains(error_of("{" + img + R"(, "clock_hz": [1, 2]})", base), "clock_hz"));
    CHECK(contains(error_of("{" + img + R"(, "clock_hz": 0})", base), "clock_hz[0]"));
    CHECK(contains(error_of("{" + img + R"(, "backend": "qemu"})", base), "backend"));
    CHECK(contains(error_of("{" + img + R"(, "watchdog": "maybe"})", base), "watchdog"));
    CHECK(contains(error_of("{" + img + R"(, "parallel": 3})", base), "parallel"));
    CHECK(contains(error_of("{" + img + R"(, "max_instructions": -1})", base), "max_instructions"));
    CHECK(contains(error_of("{" + img + R"(, "entry_points": [1, 2, 3]})", base), "entry_points"));
    CHECK(contains(error_of("{" + img + R"(, "idle_symbol": ""})", base), "idle_symbol"));
    CHECK(contains(error_of(R"({"images": []})", base), "images"));
    CHECK(contains(error_of("{}", base), "images"));
    CHECK(contains(error_of("[1]", base), "root"));
    CHECK(contains(error_of("{not json", base), "JSON"));
    CHECK(contains(error_of(R"({"images": [{"path": "missing.elf"}]})", base), "images[0].path"));
    CHECK(contains(error_of(R"({"images": [{"path": "loop.bin"}]})", base), "images[0].load_address"));
    CHECK(contains(error_of(R"({"images": [{"path": "loop.elf", "load_address": 0}]})", base),
                   "images[0].load_address"));
    CHECK(contains(error_of(R"({"images": [{"path": "loop.elf", "format": "hex"}]})", base), "images[0].format"));
    CHECK(contains(error_of(R"({"images": [{"path": "loop.elf", "extra": 1}]})", base), "images[0].extra"));
}

TEST_CASE("memory map validation") {
    ImageDir d;
    const auto& base = d.dir.path();
    const std::string img = R"("images": [{"path": "loop.elf"}])";
    auto with_map = [&](const std::string& map) { return error_of("{" + img + R"(, "memory_map": [)" + map + "]}", base); };
    CHECK(contains(with_map(R"({"type": "uart", "base": 0})"), "needs at least one ram"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0x4000_0000", "size": "1MiB"}, {"type": "dma", "base": 0})"),
                   "memory_map[1].type"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0x4000_0000", "size": "1MiB"}, {"type": "ram", "base": "0x400F_F000"})"),
                   "memory_map[1]: 'ram' [0x400ff000"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0x4000_0000", "size": 0})"), "memory_map[0].size"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0xFFFF_FFFF_FFFF_F000", "size": "8K"})"), "wraps"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0x4000_0000", "size": "1MiB"}, {"type": "timer", "base": 0})"),
                   "timers need an irqctl"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0x4000_0000", "size": "1MiB"}, {"type": "uart", "base": 0, "irq": 3})"),
                   "memory_map[1].irq"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0x4000_0000", "size": "1MiB"}, {"type": "irqctl", "base": 0}, {"type": "timer", "base": 4096, "irq": 32})"),
                   "memory_map[2].irq"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0x4000_0000", "size": "1MiB"}, {"type": "uart", "base": 0}, {"type": "uart", "base": 4096})"),
                   "only one uart"));
    CHECK(contains(with_map(R"({"type": "ram", "base": "0x5000_0000", "size": "1MiB"})"), "outside RAM"));
}

TEST_CASE("validate on structs") {
    PlatformConfig cfg;
    cfg.images.push_back({"loop", ImageFormat::elf, std::nullopt, samples::counted_loop(kDefaultRamBase, 10).elf_bytes()});
    CHECK_NOTHROW(validate(cfg));
    cfg.images[0] = {"far", ImageFormat::flat, GuestAddr{kDefaultRamBase + kDefaultRamSize - 4}, std::vector<std::byte>(8)};
    CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("outside RAM"), ConfigError);
    cfg.images[0].load_address = kDefaultRamBase + kDefaultRamSize - 8;
    CHECK_NOTHROW(validate(cfg));
}

TEST_CASE("load_config resolves against the file's directory") {
    ImageDir d;
    std::ofstream(d.dir.file("cfg.json")) << R"({"images": [{"path": "loop.elf"}], "cores": 3})";
    const auto cfg = load_config(d.dir.file("cfg.json"));
    CHECK(cfg.cores == 3);
    CHECK(cfg.images[0].path == d.dir.file("loop.elf"));
    CHECK_THROWS_AS(load_config(d.dir.file("nope.json")), ConfigError);
}
