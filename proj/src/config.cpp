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

#include "kvmvp/config.hpp"

#include "kvmvp/elf.hpp"
#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace kvmvp {

using nlohmann::json;

std::string_view to_string(BackendKind b) { return b == BackendKind::interpreter ? "interpreter" : "hardware"; }

std::string_view to_string(DeviceType d) {
    switch (d) {
    case DeviceType::ram:
        return "ram";
    case DeviceType::uart:
        return "uart";
    case DeviceType::timer:
        return "timer";
    case DeviceType::rtc:
        return "rtc";
    case DeviceType::irqctl:
        return "irqctl";
    }
    return "?";
}

BackendKind parse_backend(std::string_view text) {
    if (text == "interpreter")
        return BackendKind::interpreter;
    if (text == "hardware" || text == "kvm")
        return BackendKind::hardware;
    throw ConfigError("backend: expected 'interpreter' or 'hardware', got '" + std::string(text) + "'");
}

std::vector<DeviceSpec> default_memory_map() {
    return {
        {DeviceType::ram, "ram", kDefaultRamBase, kDefaultRamSize, 0},
        {DeviceType::irqctl, "irqctl", kDefaultIrqctlBase, 0x1000, 0},
        {DeviceType::uart, "uart", kDefaultUartBase, 0x1000, 0},
        {DeviceType::timer, "timer0", kDefaultTimerBase, 0x1000, kDefaultTimerIrq},
        {DeviceType::rtc, "rtc", kDefaultRtcBase, 0x1000, 0},
    };
}

std::uint64_t PlatformConfig::clock_for(CoreId core) const {
    if (clock_hz.empty())
        return 1'000'000'000;
    return clock_hz.size() == 1 ? clock_hz.front() : clock_hz.at(core);
}

bool PlatformConfig::watchdog_enabled() const {
    switch (watchdog) {
    case WatchdogMode::on:
        return true;
    case WatchdogMode::off:
        return false;
    case WatchdogMode::automatic:
        // the interpreter stops on its exact budget; wall-clock kicks would
        // only make its runs nondeterministic
        return backend == BackendKind::hardware;
    }
    return false;
}

std::uint64_t parse_size(std::string_view text) {
    std::string s;
    for (char c : text)
        if (c != '_' && !std::isspace(static_cast<unsigned char>(c)))
            s.push_back(c);
    if (s.empty())
        throw ConfigError("empty size");
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(s, &used, 0);
    } catch (const std::exception&) {
        throw ConfigError("not a number: '" + std::string(text) + "'");
    }
    const std::string suffix = s.substr(used);
    std::uint64_t mul = 1;
    if (suffix.empty() || suffix == "B")
        mul = 1;
    else if (suffix == "KiB" || suffix == "K")
        mul = 1ULL << 10;
    else if (suffix == "MiB" || suffix == "M")
        mul = 1ULL << 20;
    else if (suffix == "GiB" || suffix == "G")
        mul = 1ULL << 30;
    else
        throw ConfigError("unknown size suffix '" + suffix + "' in '" + std::string(text) + "'");
    if (v > UINT64_MAX / mul)
        throw ConfigError("size overflows: '" + std::string(text) + "'");
    return v * mul;
}

std::vector<std::byte> image_bytes(const ImageSpec& image) {
    if (!image.data.empty())
        return image.data;
    return read_file(image.path);
}

std::vector<ImageExtent> image_extents(const ImageSpec& image) {
    const auto bytes = image_bytes(image);
    std::vector<ImageExtent> out;
    if (image.format == ImageFormat::flat) {
        out.push_back({image.load_address.value_or(0), bytes.size()});
        return out;
    }
    for (const auto& seg : parse_elf(bytes).segments)
        if (seg.mem_size != 0)
            out.push_back({seg.paddr, seg.mem_size});
    return out;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

bool inside(const DeviceSpec& ram, GuestAddr addr, std::uint64_t size) {
    return addr >= ram.base && size <= ram.size && addr - ram.base <= ram.size - size;
}

} // namespace

void validate(const PlatformConfig& cfg) {
    if (cfg.cores < 1 || cfg.cores > 8)
        fail("cores", "must be between 1 and 8, got " + std::to_string(cfg.cores));
    if (cfg.clock_hz.size() != 1 && cfg.clock_hz.size() != cfg.cores)
        fail("clock_hz", "needs 1 or " + std::to_string(cfg.cores) + " entries, got " +
                             std::to_string(cfg.clock_hz.size()));
    for (std::size_t i = 0; i < cfg.clock_hz.size(); ++i)
        if (cfg.clock_hz[i] == 0)
            fail("clock_hz[" + std::to_string(i) + "]", "must be positive");
    if (cfg.quantum == SimTime::zero())
        fail("quantum", "must be positive");

    std::vector<const DeviceSpec*> rams;
    std::set<DeviceType> singletons;
    bool has_timer = false;
    for (std::size_t i = 0; i < cfg.memory_map.size(); ++i) {
        const auto& d = cfg.memory_map[i];
        const std::string key = "memory_map[" + std::to_string(i) + "]";
        if (d.size == 0)
            fail(key + ".size", "must be positive");
        if (d.base + (d.size - 1) < d.base)
            fail(key + ".size", "region wraps the address space");
        switch (d.type) {
        case DeviceType::ram:
            rams.push_back(&d);
            break;
        case DeviceType::timer:
            has_timer = true;
            if (d.irq >= 32)
                fail(key + ".irq", "line " + std::to_string(d.irq) + " out of range (0-31)");
            break;
        default:
            if (!singletons.insert(d.type).second)
                fail(key + ".type", "only one " + std::string(to_string(d.type)) + " is supported");
        }
        for (std::size_t j = 0; j < i; ++j) {
            const auto& o = cfg.memory_map[j];
            if (d.base <= o.base + (o.size - 1) && o.base <= d.base + (d.size - 1))
                fail(key, "'" + d.name + "' [" + log::hex(d.base) + ", +" + log::hex(d.size) + ") overlaps '" + o.name +
                              "' [" + log::hex(o.base) + ", +" + log::hex(o.size) + ")");
        }
    }
    if (rams.empty())
        fail("memory_map", "needs at least one ram region");
    if (has_timer && !singletons.contains(DeviceType::irqctl))
        fail("memory_map", "timers need an irqctl");

    if (cfg.images.empty())
        fail("images", "at least one image is required");
    for (std::size_t i = 0; i < cfg.images.size(); ++i) {
        const auto& img = cfg.images[i];
        const std::string key = "images[" + std::to_string(i) + "]";
        if (img.format == ImageFormat::flat && !img.load_address)
            fail(key + ".load_address", "required for flat images");
        if (img.format == ImageFormat::elf && img.load_address)
            fail(key + ".load_address", "ELF images load at their segment addresses");
        std::vector<ImageExtent> extents;
        try {
            extents = image_extents(img);
        } catch (const IoError& e) {
            fail(key + ".path", e.what());
        } catch (const ParseError& e) {
            fail(key + ".path", e.what());
        }
        for (const auto& ext : extents) {
            const bool ok = std::any_of(rams.begin(), rams.end(), [&](const DeviceSpec* r) {
                return inside(*r, ext.address, std::max<std::uint64_t>(ext.size, 1));
            });
            if (!ok)
                fail(key, "'" + img.path + "' bytes [" + log::hex(ext.address) + ", +" + log::hex(ext.size) +
                              ") lie outside RAM");
        }
    }
    if (cfg.entry_points.size() > 1 && cfg.entry_points.size() != cfg.cores)
        fail("entry_points", "needs 0, 1 or " + std::to_string(cfg.cores) + " entries, got " +
                                 std::to_string(cfg.entry_points.size()));
    if (cfg.idle_symbol.empty())
        fail("idle_symbol", "must not be empty");
}

namespace {

std::uint64_t to_u64(const json& v, const std::string& key) {
    if (v.is_number_unsigned())
        return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0)
            fail(key, "must not be negative");
        return v.get<std::uint64_t>();
    }
    if (v.is_string()) {
        try {
            return parse_size(v.get<std::string>());
        } catch (const ConfigError& e) {
            fail(key, e.what());
        }
    }
    fail(key, "expected a number or numeric string");
}

SimTime to_time(const json& v, const std::string& key) {
    if (!v.is_string())
        fail(key, "expected a duration string such as \"1ms\"");
    try {
        return parse_sim_time(v.get<std::string>());
    } catch (const std::exception& e) {
        fail(key, e.what());
    }
}

bool to_bool(const json& v, const std::string& key) {
    if (v.is_boolean())
        return v.get<bool>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "on" || s == "true")
            return true;
        if (s == "off" || s == "false")
            return false;
    }
    fail(key, "expected true/false or \"on\"/\"off\"");
}

std::string to_str(const json& v, const std::string& key) {
    if (!v.is_string())
        fail(key, "expected a string");
    return v.get<std::string>();
}

DeviceType to_device(const std::string& s, const std::string& key) {
    for (auto t : {DeviceType::ram, DeviceType::uart, DeviceType::timer, DeviceType::rtc, DeviceType::irqctl})
        if (s == to_string(t))
            return t;
    fail(key, "unknown device type '" + s + "'");
}

void check_keys(const json& obj, const std::string& prefix, std::initializer_list<std::string_view> known) {
    for (const auto& [k, v] : obj.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end())
            fail(prefix + k, "unknown key");
    }
}

} // namespace

PlatformConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(json_text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object())
        throw ConfigError("config root must be an object");
    check_keys(root, "",
               {"cores", "clock_hz", "quantum", "backend", "parallel", "memory_map", "images", "entry_points",
                "idle_symbol", "wfi_annotation", "max_sim_time", "max_instructions", "csv", "csv_append",
                "uart_capture", "uart_stdout", "watchdog", "trace_irqs"});

    PlatformConfig cfg;
    if (root.contains("cores")) {
        const auto n = to_u64(root["cores"], "cores");
        cfg.cores = static_cast<unsigned>(std::min<std::uint64_t>(n, 1000));
    }
    if (root.contains("clock_hz")) {
        const auto& c = root["clock_hz"];
        cfg.clock_hz.clear();
        if (c.is_array()) {
            for (std::size_t i = 0; i < c.size(); ++i)
                cfg.clock_hz.push_back(to_u64(c[i], "clock_hz[" + std::to_string(i) + "]"));
        } else {
            cfg.clock_hz.push_back(to_u64(c, "clock_hz"));
        }
    }
    if (root.contains("quantum"))
        cfg.quantum = to_time(root["quantum"], "quantum");
    if (root.contains("backend")) {
        try {
            cfg.backend = parse_backend(to_str(root["backend"], "backend"));
        } catch (const ConfigError&) {
            fail("backend", "expected 'interpreter' or 'hardware'");
        }
    }
    if (root.contains("parallel"))
        cfg.parallel = to_bool(root["parallel"], "parallel");
    if (root.contains("memory_map")) {
        const auto& m = root["memory_map"];
        if (!m.is_array())
            fail("memory_map", "expected a list");
        cfg.memory_map.clear();
        for (std::size_t i = 0; i < m.size(); ++i) {
            const std::string key = "memory_map[" + std::to_string(i) + "]";
            const auto& e = m[i];
            if (!e.is_object())
                fail(key, "expected an object");
            check_keys(e, key + ".", {"type", "name", "base", "size", "irq"});
            if (!e.contains("type") || !e.contains("base"))
                fail(key, "needs 'type' and 'base'");
            DeviceSpec d;
            d.type = to_device(to_str(e["type"], key + ".type"), key + ".type");
            d.name = e.contains("name") ? to_str(e["name"], key + ".name") : std::string(to_string(d.type));
            d.base = to_u64(e["base"], key + ".base");
            d.size = e.contains("size") ? to_u64(e["size"], key + ".size") : 0x1000;
            if (e.contains("irq")) {
                if (d.type != DeviceType::timer)
                    fail(key + ".irq", "only timers have an interrupt line");
                d.irq = static_cast<IrqLine>(to_u64(e["irq"], key + ".irq"));
            } else if (d.type == DeviceType::timer) {
                d.irq = kDefaultTimerIrq;
            }
            cfg.memory_map.push_back(std::move(d));
        }
    }
    if (root.contains("images")) {
        const auto& m = root["images"];
        if (!m.is_array())
            fail("images", "expected a list");
        for (std::size_t i = 0; i < m.size(); ++i) {
            const std::string key = "images[" + std::to_string(i) + "]";
            const auto& e = m[i];
            if (!e.is_object())
                fail(key, "expected an object");
            check_keys(e, key + ".", {"path", "load_address", "format"});
            if (!e.contains("path"))
                fail(key + ".path", "missing");
            ImageSpec img;
            std::filesystem::path p = to_str(e["path"], key + ".path");
            if (p.is_relative() && !base_dir.empty())
                p = base_dir / p;
            img.path = p.string();
            const std::string fmt = e.contains("format") ? to_str(e["format"], key + ".format")
                                                         : (p.extension() == ".elf" ? "elf" : "flat");
            if (fmt == "flat")
                img.format = ImageFormat::flat;
            else if (fmt == "elf")
                img.format = ImageFormat::elf;
            else
                fail(key + ".format", "expected 'flat' or 'elf'");
            if (e.contains("load_address"))
                img.load_address = to_u64(e["load_address"], key + ".load_address");
            cfg.images.push_back(std::move(img));
        }
    }
    if (root.contains("entry_points")) {
        const auto& e = root["entry_points"];
        if (e.is_array()) {
            for (std::size_t i = 0; i < e.size(); ++i)
                cfg.entry_points.push_back(to_u64(e[i], "entry_points[" + std::to_string(i) + "]"));
        } else {
            cfg.entry_points.push_back(to_u64(e, "entry_points"));
        }
    }
    if (root.contains("idle_symbol"))
        cfg.idle_symbol = to_str(root["idle_symbol"], "idle_symbol");
    if (root.contains("wfi_annotation"))
        cfg.wfi_annotation = to_bool(root["wfi_annotation"], "wfi_annotation");
    if (root.contains("max_sim_time"))
        cfg.max_sim_time = to_time(root["max_sim_time"], "max_sim_time");
    if (root.contains("max_instructions"))
        cfg.max_instructions = to_u64(root["max_instructions"], "max_instructions");
    if (root.contains("csv"))
        cfg.csv = to_str(root["csv"], "csv");
    if (root.contains("csv_append"))
        cfg.csv_append = to_bool(root["csv_append"], "csv_append");
    if (root.contains("uart_capture"))
        cfg.uart_capture = to_str(root["uart_capture"], "uart_capture");
    if (root.contains("uart_stdout"))
        cfg.uart_stdout = to_bool(root["uart_stdout"], "uart_stdout");
    if (root.contains("trace_irqs"))
        cfg.trace_irqs = to_bool(root["trace_irqs"], "trace_irqs");
    if (root.contains("watchdog")) {
        const auto w = to_str(root["watchdog"], "watchdog");
        if (w == "auto")
            cfg.watchdog = WatchdogMode::automatic;
        else if (w == "on")
            cfg.watchdog = WatchdogMode::on;
        else if (w == "off")
            cfg.watchdog = WatchdogMode::off;
        else
            fail("watchdog", "expected 'auto', 'on' or 'off'");
    }
    validate(cfg);
    return cfg;
}

PlatformConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path.string() + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

} // namespace kvmvp
