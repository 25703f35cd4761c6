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

#ifndef KVMVP_PERIPHERALS_HPP
#define KVMVP_PERIPHERALS_HPP

#include "kvmvp/bus.hpp"
#include "kvmvp/cpu.hpp"
#include "kvmvp/kernel.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace kvmvp {

/// Register file helper: 4- or 8-byte naturally aligned accesses only,
/// everything else is a device error. A read of an 8-byte register with a
/// 4-byte access at offset+4 returns its upper half.
class RegisterDevice : public Target {
public:
    void transport(Transaction& t, std::uint64_t offset) final;

protected:
    /// nullopt -> device error
    virtual std::optional<std::uint64_t> read_register(std::uint64_t offset, unsigned size, CoreId initiator) = 0;
    /// false -> device error
    virtual bool write_register(std::uint64_t offset, unsigned size, std::uint64_t value, CoreId initiator) = 0;
};

class Uart final : public RegisterDevice {
public:
    static constexpr std::uint64_t kData = 0x00;
    static constexpr std::uint64_t kStatus = 0x04;

    using Sink = std::function<void(char)>;

    explicit Uart(std::string name = "uart") : name_(std::move(name)) {}

    std::string_view name() const override { return name_; }

    /// Tee for transmitted bytes (stdout, capture file).
    void add_sink(Sink sink) { sinks_.push_back(std::move(sink)); }
    void push_rx(std::string_view bytes);

    const std::string& tx() const { return tx_; }
    /// Bytes transmitted by one initiator core.
    std::string tx_of(CoreId core) const;
    const std::vector<std::pair<CoreId, char>>& tx_log() const { return log_; }

protected:
    std::optional<std::uint64_t> read_register(std::uint64_t offset, unsigned size, CoreId initiator) override;
    bool write_register(std::uint64_t offset, unsigned size, std::uint64_t value, CoreId initiator) override;

private:
    std::string name_;
    std::string tx_;
    std::vector<std::pair<CoreId, char>> log_;
    std::deque<char> rx_;
    std::vector<Sink> sinks_;
};

/// Routes device lines to cores. Lines latch when raised, whether enabled
/// or not; a latched, enabled line that is not in service is delivered to
/// its target core. Claim clears the latch and puts the line in service;
/// complete ends service and re-latches if the line is still high.
class IrqController final : public RegisterDevice {
public:
    static constexpr std::uint64_t kEnableSet = 0x00;
    static constexpr std::uint64_t kEnableClear = 0x04;
    static constexpr std::uint64_t kPending = 0x08;
    static constexpr std::uint64_t kClaim = 0x0C;
    static constexpr std::uint64_t kComplete = 0x10;
    static constexpr std::uint64_t kTargetBase = 0x20;
    static constexpr std::uint32_t kSpurious = 0xFFFF'FFFF;
    static constexpr unsigned kLines = 32;

    explicit IrqController(std::string name = "irqctl") : name_(std::move(name)) {}

    std::string_view name() const override { return name_; }

    /// Registers core `id`'s input; ids must be dense from 0.
    void connect(CoreId id, IrqSink& sink);

    /// Device-side line level. Throws ConfigError for an unknown line.
    void route(IrqLine line, bool level);

    // Direct (register-free) operations, used by the registers and by tests.
    void enable(IrqLine line);
    void disable(IrqLine line);
    void set_target(IrqLine line, CoreId core);
    std::uint32_t claim(CoreId core);
    void complete(IrqLine line);

    bool latched(IrqLine line) const { return line < kLines && ((latched_ >> line) & 1U); }
    bool enabled(IrqLine line) const { return line < kLines && ((enabled_ >> line) & 1U); }
    bool in_service(IrqLine line) const { return line < kLines && ((in_service_ >> line) & 1U); }
    CoreId target(IrqLine line) const { return targets_.at(line); }
    /// Lines currently asserted towards `core`.
    std::uint32_t delivered(CoreId core) const;

protected:
    std::optional<std::uint64_t> read_register(std::uint64_t offset, unsigned size, CoreId initiator) override;
    bool write_register(std::uint64_t offset, unsigned size, std::uint64_t value, CoreId initiator) override;

private:
    void check_line(IrqLine line) const;
    bool deliverable(IrqLine line) const;
    void update();

    std::string name_;
    std::vector<IrqSink*> cores_;
    std::uint32_t level_ = 0;
    std::uint32_t latched_ = 0;
    std::uint32_t enabled_ = 0;
    std::uint32_t in_service_ = 0;
    std::array<CoreId, kLines> targets_{};
    // what each core was last told, per line
    std::vector<std::uint32_t> forwarded_;
};

/// Compare-match timer in simulation picoseconds. Expiry pulses the bound
/// line; periodic mode re-arms at compare + period.
class Timer final : public RegisterDevice {
public:
    static constexpr std::uint64_t kCompare = 0x00;
    static constexpr std::uint64_t kControl = 0x08;
    static constexpr std::uint64_t kPeriod = 0x10;
    static constexpr std::uint32_t kEnable = 1U << 0;
    static constexpr std::uint32_t kPeriodic = 1U << 1;

    Timer(Kernel& kernel, IrqController& irqctl, IrqLine line, std::string name = "timer");

    std::string_view name() const override { return name_; }

    void set_compare(SimTime at);
    void set_period(SimTime period);
    void set_control(std::uint32_t control);

    SimTime compare() const { return compare_; }
    SimTime period() const { return period_; }
    std::uint32_t control() const { return control_; }
    IrqLine line() const { return line_; }
    bool armed() const { return event_.has_value(); }
    const std::vector<SimTime>& expiries() const { return expiries_; }

protected:
    std::optional<std::uint64_t> read_register(std::uint64_t offset, unsigned size, CoreId initiator) override;
    bool write_register(std::uint64_t offset, unsigned size, std::uint64_t value, CoreId initiator) override;

private:
    void rearm();
    void expire();

    Kernel& kernel_;
    IrqController& irqctl_;
    IrqLine line_;
    std::string name_;
    SimTime compare_;
    SimTime period_;
    std::uint32_t control_ = 0;
    std::optional<EventHandle> event_;
    std::vector<SimTime> expiries_;
};

/// Read-only clock reporting simulation time in nanoseconds.
class Rtc final : public RegisterDevice {
public:
    explicit Rtc(const Kernel& kernel, std::string name = "rtc") : kernel_(kernel), name_(std::move(name)) {}

    std::string_view name() const override { return name_; }

protected:
    std::optional<std::uint64_t> read_register(std::uint64_t offset, unsigned size, CoreId initiator) override;
    bool write_register(std::uint64_t, unsigned, std::uint64_t, CoreId) override { return false; }

private:
    const Kernel& kernel_;
    std::string name_;
};

} // namespace kvmvp

#endif
