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

#include "kvmvp/sim_time.hpp"

#include <cctype>
#include <charconv>
#include <stdexcept>

namespace kvmvp {

namespace {
__extension__ using u128 = unsigned __int128;
constexpr u128 kPsPerSecond = 1'000'000'000'000ULL;
} // namespace

SimTime cycles_to_time(Cycles cycles, std::uint64_t clock_hz) {
    if (clock_hz == 0)
        throw std::invalid_argument("clock frequency must be positive");
    const u128 num = static_cast<u128>(cycles) * kPsPerSecond + clock_hz / 2;
    const u128 ps = num / clock_hz;
    if (ps > std::numeric_limits<std::uint64_t>::max())
        throw std::overflow_error("cycle count exceeds simulation time range");
    return SimTime::ps(static_cast<std::uint64_t>(ps));
}

Cycles time_to_cycles(SimTime t, std::uint64_t clock_hz) {
    if (clock_hz == 0)
        throw std::invalid_argument("clock frequency must be positive");
    return static_cast<Cycles>(static_cast<u128>(t.ticks()) * clock_hz / kPsPerSecond);
}

std::string SimTime::str() const {
    struct Unit {
        std::uint64_t factor;
        const char* suffix;
    };
    static constexpr Unit units[] = {
        {1'000'000'000'000ULL, "s"}, {1'000'000'000ULL, "ms"}, {1'000'000ULL, "us"}, {1'000ULL, "ns"}};
    for (const auto& u : units) {
        if (ticks_ != 0 && ticks_ % u.factor == 0)
            return std::to_string(ticks_ / u.factor) + u.suffix;
    }
    return std::to_string(ticks_) + "ps";
}

SimTime parse_sim_time(const std::string& text) {
    std::size_t i = 0;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
        ++i;
    std::uint64_t value = 0;
    const char* begin = text.data() + i;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr == begin)
        throw std::invalid_argument("invalid duration '" + text + "'");
    std::string unit(ptr, end);
    while (!unit.empty() && std::isspace(static_cast<unsigned char>(unit.front())))
        unit.erase(unit.begin());
    while (!unit.empty() && std::isspace(static_cast<unsigned char>(unit.back())))
        unit.pop_back();
    if (unit == "ps")
        return SimTime::ps(value);
    if (unit == "ns")
        return SimTime::ns(value);
    if (unit == "us" || unit == "\xC2\xB5s")
        return SimTime::us(value);
    if (unit == "ms")
        return SimTime::ms(value);
    if (unit == "s")
        return SimTime::s(value);
    throw std::invalid_argument("unknown time unit in '" + text + "'");
}

} // namespace kvmvp
