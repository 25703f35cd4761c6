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

#include "kvmvp/peripherals.hpp"

#include "kvmvp/errors.hpp"
#include "kvmvp/log.hpp"

#include <bit>

namespace kvmvp {

namespace {

constexpr std::uint64_t kLow = 0xFFFF'FFFFULL;

// 4-byte halves of a 64-bit register at `base`
std::optional<std::uint64_t> read64(std::uint64_t reg, std::uint64_t offset, unsigned size, std::uint64_t base) {
    if (offset == base)
        return size == 8 ? reg : reg & kLow;
    if (offset == base + 4 && size == 4)
        return reg >> 32;
    return std::nullopt;
}

std::optional<std::uint64_t> write64(std::uint64_t reg, std::uint64_t offset, unsigned size, std::uint64_t value,
                                     std::uint64_t base) {
    if (offset == base)
        return size == 8 ? value : (reg & ~kLow) | (value & kLow);
    if (offset == base + 4 && size == 4)
        return (reg & kLow) | (value << 32);
    return std::nullopt;
}

} // namespace

void RegisterDevice::transport(Transaction& t, std::uint64_t offset) {
    if ((t.size != 4 && t.size != 8) || offset % t.size != 0) {
        t.status = TransactionStatus::device_error;
        return;
    }
    if (t.is_read()) {
        auto v = read_register(offset, t.size, t.initiator);
        if (!v) {
            t.status = TransactionStatus::device_error;
            return;
        }
        t.set_value(*v);
    } else if (!write_register(offset, t.size, t.value(), t.initiator)) {
        t.status = TransactionStatus::device_error;
        return;
    }
    t.status = TransactionStatus::ok;
}

// UART

void Uart::push_rx(std::string_view bytes) { rx_.insert(rx_.end(), bytes.begin(), bytes.end()); }

std::string Uart::tx_of(CoreId core) const {
    std::string out;
    for (const auto& [c, ch] : log_)
        if (c == core)
            out.push_back(ch);
    return out;
}

std::optional<std::uint64_t> Uart::read_register(std::uint64_t offset, unsigned, CoreId) {
    if (offset == kData) {
        if (rx_.empty())
            return 0;
        const auto c = static_cast<unsigned char>(rx_.front());
        rx_.pop_front();
        return c;
    }
    if (offset == kStatus)
        return rx_.empty() ? 0 : 1;
    return std::nullopt;
}

bool Uart::write_register(std::uint64_t offset, unsigned, std::uint64_t value, CoreId initiator) {
    if (offset != kData)
        return false;
    const char c = static_cast<char>(value & 0xFF);
    tx_.push_back(c);
    log_.emplace_back(initiator, c);
    for (auto& sink : sinks_)
        sink(c);
    return true;
}

// interrupt controller

void IrqController::connect(CoreId id, IrqSink& sink) {
    if (id != cores_.size())
        throw ConfigError(name_ + ": cores must be connected in order, expected " + std::to_string(cores_.size()) +
                          ", got " + std::to_string(id));
    cores_.push_back(&sink);
    forwarded_.push_back(0);
    update();
}

void IrqController::check_line(IrqLine line) const {
    if (line >= kLines)
        throw ConfigError(name_ + ": interrupt line " + std::to_string(line) + " out of range (0-" +
                          std::to_string(kLines - 1) + ")");
}

bool IrqController::deliverable(IrqLine line) const {
    return latched(line) && enabled(line) && !in_service(line);
}

std::uint32_t IrqController::delivered(CoreId core) const {
    std::uint32_t mask = 0;
    for (IrqLine l = 0; l < kLines; ++l)
        if (targets_[l] == core && deliverable(l))
            mask |= 1U << l;
    return mask;
}

void IrqController::update() {
    for (CoreId c = 0; c < cores_.size(); ++c) {
        const std::uint32_t now = delivered(c);
        std::uint32_t changed = now ^ forwarded_[c];
        forwarded_[c] = now;
        while (changed != 0) {
            const auto l = static_cast<IrqLine>(std::countr_zero(changed));
            changed &= changed - 1;
            cores_[c]->raise_irq(l, ((now >> l) & 1U) != 0);
        }
    }
}

void IrqController::route(IrqLine line, bool level) {
    check_line(line);
    const std::uint32_t bit = 1U << line;
    if (level) {
        level_ |= bit;
        latched_ |= bit;
    } else {
        level_ &= ~bit;
    }
    update();
}

void IrqController::enable(IrqLine line) {
    check_line(line);
    enabled_ |= 1U << line;
    update();
}

void IrqController::disable(IrqLine line) {
    check_line(line);
    enabled_ &= ~(1U << line);
    update();
}

void IrqController::set_target(IrqLine line, CoreId core) {
    check_line(line);
    if (!cores_.empty() && core >= cores_.size())
        throw ConfigError(name_ + ": line " + std::to_string(line) + " targets unknown core " + std::to_string(core));
    targets_[line] = core;
    update();
}

std::uint32_t IrqController::claim(CoreId core) {
    const std::uint32_t mask = delivered(core);
    if (mask == 0)
        return kSpurious;
    const auto line = static_cast<IrqLine>(std::countr_zero(mask));
    latched_ &= ~(1U << line);
    in_service_ |= 1U << line;
    update();
    return line;
}

void IrqController::complete(IrqLine line) {
    check_line(line);
    const std::uint32_t bit = 1U << line;
    if ((in_service_ & bit) == 0) {
        log::debug(name_ + ": complete for line " + std::to_string(line) + " that is not in service");
        return;
    }
    in_service_ &= ~bit;
    if (level_ & bit)
        latched_ |= bit;
    update();
}

std::optional<std::uint64_t> IrqController::read_register(std::uint64_t offset, unsigned size, CoreId initiator) {
    if (size != 4)
        return std::nullopt;
    switch (offset) {
    case kEnableSet:
    case kEnableClear:
        return enabled_;
    case kPending:
        return latched_;
    case kClaim:
        return claim(initiator);
    default:
        break;
    }
    if (offset >= kTargetBase && offset < kTargetBase + 4 * kLines)
        return targets_[(offset - kTargetBase) / 4];
    return std::nullopt;
}

bool IrqController::write_register(std::uint64_t offset, unsigned size, std::uint64_t value, CoreId) {
    if (size != 4)
        return false;
    const auto mask = static_cast<std::uint32_t>(value);
    switch (offset) {
    case kEnableSet:
        enabled_ |= mask;
        update();
        return true;
    case kEnableClear:
        enabled_ &= ~mask;
        update();
        return true;
    case kComplete:
        if (value >= kLines)
            return false;
        complete(static_cast<IrqLine>(value));
        return true;
    default:
        break;
    }
    if (offset >= kTargetBase && offset < kTargetBase + 4 * kLines) {
        if (!cores_.empty() && value >= cores_.size())
            return false;
        set_target(static_cast<IrqLine>((offset - kTargetBase) / 4), static_cast<CoreId>(value));
        return true;
    }
    return false;
}

// timer

Timer::Timer(Kernel& kernel, IrqController& irqctl, IrqLine line, std::string name)
    : kernel_(kernel), irqctl_(irqctl), line_(line), name_(std::move(name)) {
    if (line >= IrqController::kLines)
        throw ConfigError(name_ + ": interrupt line " + std::to_string(line) + " out of range");
}

void Timer::set_compare(SimTime at) {
    compare_ = at;
    rearm();
}

void Timer::set_period(SimTime period) {
    period_ = period;
    rearm();
}

void Timer::set_control(std::uint32_t control) {
    control_ = control & (kEnable | kPeriodic);
    rearm();
}

void Timer::rearm() {
    if (event_) {
        kernel_.cancel(*event_);
        event_.reset();
    }
    if ((control_ & kEnable) == 0)
        return;
    // a compare value in the past fires immediately
    const SimTime at = std::max(compare_, kernel_.now());
    event_ = kernel_.schedule(at, [this] { expire(); });
}

void Timer::expire() {
    event_.reset();
    expiries_.push_back(kernel_.now());
    irqctl_.route(line_, true);
    irqctl_.route(line_, false);
    if ((control_ & kPeriodic) != 0 && period_ > SimTime::zero()) {
        compare_ += period_;
    } else {
        control_ &= ~kEnable;
    }
    rearm();
}

std::optional<std::uint64_t> Timer::read_register(std::uint64_t offset, unsigned size, CoreId) {
    if (offset == kControl)
        return control_;
    if (auto v = read64(compare_.ticks(), offset, size, kCompare))
        return v;
    return read64(period_.ticks(), offset, size, kPeriod);
}

bool Timer::write_register(std::uint64_t offset, unsigned size, std::uint64_t value, CoreId) {
    if (offset == kControl) {
        set_control(static_cast<std::uint32_t>(value));
        return true;
    }
    if (auto v = write64(compare_.ticks(), offset, size, value, kCompare)) {
        set_compare(SimTime::ps(*v));
        return true;
    }
    if (auto v = write64(period_.ticks(), offset, size, value, kPeriod)) {
        set_period(SimTime::ps(*v));
        return true;
    }
    return false;
}

// RTC

std::optional<std::uint64_t> Rtc::read_register(std::uint64_t offset, unsigned size, CoreId) {
    return read64(kernel_.now().to_ns(), offset, size, 0);
}

} // namespace kvmvp
