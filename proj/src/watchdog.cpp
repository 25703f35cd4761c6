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

#include "kvmvp/watchdog.hpp"

namespace kvmvp {

Watchdog::Watchdog(std::chrono::nanoseconds resolution)
    : resolution_(resolution.count() > 0 ? resolution : std::chrono::nanoseconds(1)), epoch_(Clock::now()) {
    ++live_threads_;
    thread_ = std::thread([this] { loop(); });
}

Watchdog::~Watchdog() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    thread_.join();
    --live_threads_;
}

void Watchdog::schedule_kick(Kickable& target, KickId id, WallDuration timeout) {
    const auto ns = std::chrono::ceil<std::chrono::nanoseconds>(timeout);
    const auto due = Clock::now() + (ns.count() > 0 ? ns : std::chrono::nanoseconds(0));
    bool earliest = false;
    {
        std::lock_guard lock(mutex_);
        if (!armed_.emplace(&target, id.value).second)
            return;
        auto it = entries_.emplace(due, Entry{&target, id});
        earliest = it == entries_.begin();
    }
    if (earliest)
        cv_.notify_one();
}

void Watchdog::forget(Kickable& target) {
    // kicks run under mutex_, so holding it here means none is in flight
    std::lock_guard lock(mutex_);
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->second.target == &target) {
            armed_.erase({&target, it->second.id.value});
            it = entries_.erase(it);
        } else {
            ++it;
        }
    }
}

std::size_t Watchdog::pending() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

Watchdog::Clock::time_point Watchdog::wake_time(Clock::time_point due) const {
    const auto since = due - epoch_;
    const auto r = resolution_;
    const auto slots = (since + r - Clock::duration(1)) / r;
    return epoch_ + slots * r;
}

void Watchdog::loop() {
    std::unique_lock lock(mutex_);
    while (!stopping_) {
        if (entries_.empty()) {
            cv_.wait(lock);
            continue;
        }
        const auto now = Clock::now();
        auto it = entries_.begin();
        if (it->first > now) {
            cv_.wait_until(lock, wake_time(it->first));
            continue;
        }
        const Entry e = it->second;
        entries_.erase(it);
        armed_.erase({e.target, e.id.value});
        ++fired_;
        if (e.target->kick(e.id))
            ++delivered_;
    }
}

} // namespace kvmvp
