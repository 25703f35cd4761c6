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

#ifndef KVMVP_SIM_TIME_HPP
#define KVMVP_SIM_TIME_HPP

#include <chrono>
#include <compare>
#include <cstdint>
#include <limits>
#include <ratio>
#include <stdexcept>
#include <string>

namespace kvmvp {

using Cycles = std::uint64_t;
using GuestAddr = std::uint64_t;
using CoreId = std::uint32_t;
using IrqLine = std::uint32_t;

/// Wall-clock duration with picosecond resolution.
using WallDuration = std::chrono::duration<std::int64_t, std::pico>;

/// Simulation timestamp or delta in integer picoseconds.
///
/// Additions and subtractions are checked: overflow and negative results
/// throw std::overflow_error / std::underflow_error.
class SimTime {
public:
    constexpr SimTime() = default;

    static constexpr SimTime ps(std::uint64_t v) { return SimTime(v); }
    static constexpr SimTime ns(std::uint64_t v) { return SimTime(checked_mul(v, 1'000)); }
    static constexpr SimTime us(std::uint64_t v) { return SimTime(checked_mul(v, 1'000'000)); }
    static constexpr SimTime ms(std::uint64_t v) { return SimTime(checked_mul(v, 1'000'000'000)); }
    static constexpr SimTime s(std::uint64_t v) { return SimTime(checked_mul(v, 1'000'000'000'000)); }
    static constexpr SimTime zero() { return SimTime(); }
    static constexpr SimTime max() { return SimTime(std::numeric_limits<std::uint64_t>::max()); }

    constexpr std::uint64_t ticks() const { return ticks_; }
    constexpr double seconds() const { return static_cast<double>(ticks_) * 1e-12; }
    constexpr std::uint64_t to_ns() const { return ticks_ / 1'000; }

    constexpr auto operator<=>(const SimTime&) const = default;

    constexpr SimTime& operator+=(SimTime o) {
        if (ticks_ > std::numeric_limits<std::uint64_t>::max() - o.ticks_)
            throw std::overflow_error("SimTime addition overflows");
        ticks_ += o.ticks_;
        return *this;
    }

    constexpr SimTime& operator-=(SimTime o) {
        if (o.ticks_ > ticks_)
            throw std::underflow_error("SimTime subtraction underflows");
        ticks_ -= o.ticks_;
        return *this;
    }

    friend constexpr SimTime operator+(SimTime a, SimTime b) { return a += b; }
    friend constexpr SimTime operator-(SimTime a, SimTime b) { return a -= b; }

    std::string str() const;

private:
    constexpr explicit SimTime(std::uint64_t t) : ticks_(t) {}

    static constexpr std::uint64_t checked_mul(std::uint64_t v, std::uint64_t f) {
        if (v != 0 && v > std::numeric_limits<std::uint64_t>::max() / f)
            throw std::overflow_error("SimTime construction overflows");
        return v * f;
    }

    std::uint64_t ticks_ = 0;
};

/// Temporal-decoupling window; always strictly positive.
class Quantum {
public:
    explicit Quantum(SimTime duration) : duration_(duration) {
        if (duration_ == SimTime::zero())
            throw std::invalid_argument("quantum must be positive");
    }

    SimTime duration() const { return duration_; }

    auto operator<=>(const Quantum&) const = default;

private:
    SimTime duration_;
};

/// True when a process that ran `local_offset` ahead must yield to the kernel.
inline bool quantum_check(SimTime local_offset, const Quantum& q) {
    return local_offset >= q.duration();
}

/// cycles / clock_hz as simulation time, rounded half up to whole picoseconds.
SimTime cycles_to_time(Cycles cycles, std::uint64_t clock_hz);

/// Number of whole cycles that fit into `t` at `clock_hz`.
Cycles time_to_cycles(SimTime t, std::uint64_t clock_hz);

/// Parses "10us", "1ms", "250ns", "2s", "500ps" (also "µs").
SimTime parse_sim_time(const std::string& text);

} // namespace kvmvp

#endif
