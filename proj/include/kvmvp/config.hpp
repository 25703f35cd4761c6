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

#ifndef KVMVP_CONFIG_HPP
#define KVMVP_CONFIG_HPP

#include "kvmvp/sim_time.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kvmvp {

enum class BackendKind { interpreter, hardware };
enum class WatchdogMode { automatic, on, off };
enum class ImageFormat { flat, elf };
enum class DeviceType { ram, uart, timer, rtc, irqctl };

std::string_view to_string(BackendKind b);
std::string_view to_string(DeviceType d);
BackendKind parse_backend(std::string_view text);

struct DeviceSpec {
    DeviceType type = DeviceType::ram;
    std::string name;
    GuestAddr base = 0;
    std::uint64_t size = 0;
    IrqLine irq = 0; // timers only
};

struct ImageSpec {
    std::string path;
    ImageFormat format = ImageFormat::flat;
    /// Required for flat images; ELF images load at their segment addresses.
    std::optional<GuestAddr> load_address;
    /// In-memory contents; when non-empty, `path` is only a label.
    std::vector<std::byte> data;
};

inline constexpr GuestAddr kDefaultRamBase = 0x4000'0000;
inline constexpr std::uint64_t kDefaultRamSize = 16ULL << 20;
inline constexpr GuestAddr kDefaultIrqctlBase = 0x0800'0000;
inline constexpr GuestAddr kDefaultUartBase = 0x0900'0000;
inline constexpr GuestAddr kDefaultTimerBase = 0x0A00'0000;
inline constexpr GuestAddr kDefaultRtcBase = 0x0A01'0000;
inline constexpr IrqLine kDefaultTimerIrq = 1;

/// RAM, UART, interrupt controller, one timer and an RTC.
std::vector<DeviceSpec> default_memory_map();

struct PlatformConfig {
    unsigned cores = 1;
    /// One entry for all cores, or one per core.
    std::vector<std::uint64_t> clock_hz{1'000'000'000};
    SimTime quantum = SimTime::ms(1);
    BackendKind backend = BackendKind::interpreter;
    bool parallel = false;
    std::vector<DeviceSpec> memory_map = default_memory_map();
    std::vector<ImageSpec> images;
    /// Empty: entry of the first image. One entry for all cores, or one per core.
    std::vector<GuestAddr> entry_points;
    std::string idle_symbol = "cpu_do_idle";
    bool wfi_annotation = true;
    std::optional<SimTime> max_sim_time;
    /// Per core.
    std::optional<std::uint64_t> max_instructions;
    std::optional<std::string> csv;
    bool csv_append = true;
    std::optional<std::string> uart_capture;
    bool uart_stdout = false;
    WatchdogMode watchdog = WatchdogMode::automatic;
    /// Trace interrupt deliveries per core.
    bool trace_irqs = false;

    std::uint64_t clock_for(CoreId core) const;
    bool watchdog_enabled() const;
};

/// Throws ConfigError naming the offending key path.
void validate(const PlatformConfig& cfg);

/// Parses JSON text; relative image paths resolve against `base_dir`.
PlatformConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
PlatformConfig load_config(const std::filesystem::path& path);

/// Accepts numbers or strings like "0x4000_0000", "16MiB", "4096".
std::uint64_t parse_size(std::string_view text);

/// Loadable byte ranges [address, address+size) of an image.
struct ImageExtent {
    GuestAddr address;
    std::uint64_t size;
};
std::vector<ImageExtent> image_extents(const ImageSpec& image);
std::vector<std::byte> image_bytes(const ImageSpec& image);

} // namespace kvmvp

#endif
