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

#ifndef KVMVP_WATCHDOG_HPP
#define KVMVP_WATCHDOG_HPP

#include "kvmvp/sim_time.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <utility>

namespace kvmvp {

/// Identifies one backend run of a core; strictly increasing, never reused.
struct KickId {
    std::uint64_t value = 0;

    auto operator<=>(const KickId&) const = default;
};

/// Receiver of watchdog kicks. kick() stops the current run iff `id` still
/// names it and reports whether it did.
class Kickable {
public:
    virtual bool kick(KickId id) = 0;

protected:
    ~Kickable() = default;
};

/// One timer thread shared by every core. Entries fire on the watchdog
/// thread, at most once each, no earlier than their timeout. Wake-ups are
/// rounded up to the resolution grid so near-simultaneous expiries of
/// several cores are served by a single wake.
class Watchdog {
public:
    using Clock = std::chrono::steady_clock;

    static constexpr std::chrono::microseconds kDefaultResolution{100};

    explicit Watchdog(std::chrono::nanoseconds resolution = kDefaultResolution);
    ~Watchdog();

    Watchdog(const Watchdog&) = delete;
    Watchdog& operator=(const Watchdog&) = delete;

    /// Arms kick(target, id) after `timeout`. A second entry for the same
    /// (target, id) replaces nothing and is dropped.
    void schedule_kick(Kickable& target, KickId id, WallDuration timeout);

    /// Drops all entries of `target`; returns once no kick for it is in flight.
    void forget(Kickable& target);

    std::chrono::nanoseconds resolution() const { return resolution_; }
    std::size_t pending() const;
    std::uint64_t fired() const { return fired_.load(); }
    std::uint64_t delivered() const { return delivered_.load(); }

    /// Watchdog threads alive in the process.
    static int live_threads() { return live_threads_.load(); }

private:
    struct Entry {
        Kickable* target;
        KickId id;
    };

    void loop();
    Clock::time_point wake_time(Clock::time_point due) const;

    const std::chrono::nanoseconds resolution_;
    const Clock::time_point epoch_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::multimap<Clock::time_point, Entry> entries_;
    std::set<std::pair<Kickable*, std::uint64_t>> armed_;
    bool stopping_ = false;
    std::atomic<std::uint64_t> fired_{0};
    std::atomic<std::uint64_t> delivered_{0};
    std::thread thread_;

    static inline std::atomic<int> live_threads_{0};
};

} // namespace kvmvp

#endif
