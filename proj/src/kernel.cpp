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

#include "kvmvp/kernel.hpp"

#include <sstream>

namespace kvmvp {

Kernel::Kernel() : coordinator_(std::this_thread::get_id()) {}

Kernel::~Kernel() { shutdown(); }

EventHandle Kernel::schedule(SimTime at, Action action) {
    if (at < now_)
        throw SchedulingError("cannot schedule at " + at.str() + ", current time is " + now_.str());
    EventHandle h{at, next_sequence_++};
    events_.emplace(h, std::move(action));
    return h;
}

bool Kernel::cancel(const EventHandle& handle) { return events_.erase(handle) > 0; }

void Kernel::insert(EventHandle key, Action action) {
    if (key.at < now_)
        throw SchedulingError("follow-up at " + key.at.str() + " precedes current time " + now_.str());
    events_.emplace(key, std::move(action));
}

void Kernel::track(std::function<bool()> finished, std::function<std::optional<SimTime>()> complete,
                   Action follow_up) {
    tracked_.push_back(Tracked{EventHandle{now_, next_sequence_++}, std::move(finished), std::move(complete),
                               std::move(follow_up)});
}

void Kernel::collect_front() {
    Tracked t = std::move(tracked_.front());
    tracked_.pop_front();
    wait_until(t.finished);
    if (auto at = t.complete())
        insert(EventHandle{*at, t.reserved.sequence}, std::move(t.follow_up));
}

SimTime Kernel::run_until(SimTime limit) {
    if (limit < now_)
        throw SchedulingError("run_until(" + limit.str() + ") lies before current time " + now_.str());
    stop_requested_ = false;
    for (;;) {
        if (stop_requested_)
            break;

        const bool have_event = !events_.empty();
        if (!tracked_.empty()) {
            // Tracked work is ordered by its reserved key; it must be
            // collected before any event that does not strictly precede it.
            if (!have_event || !(events_.begin()->first < tracked_.front().reserved)) {
                collect_front();
                continue;
            }
        }

        if (!have_event) {
            if (!suspended_.empty()) {
                auto cores = suspended_cores();
                std::ostringstream msg;
                msg << "deadlock at " << now_.str() << ": cores waiting for interrupts with no pending events:";
                for (auto c : cores)
                    msg << ' ' << c;
                throw DeadlockError(msg.str(), std::move(cores));
            }
            break;
        }

        auto it = events_.begin();
        if (it->first.at > limit) {
            now_ = limit;
            break;
        }
        now_ = it->first.at;
        Action action = std::move(it->second);
        events_.erase(it);
        action();
    }
    stop_requested_ = false;
    return now_;
}

void Kernel::suspend_until_interrupt(CoreId core, std::optional<IrqLine> already_pending, ResumeFn on_resume) {
    if (already_pending) {
        schedule(now_, [fn = std::move(on_resume), line = *already_pending] { fn(line); });
        return;
    }
    suspended_[core] = std::move(on_resume);
}

void Kernel::notify_interrupt(CoreId core, IrqLine line) {
    auto it = suspended_.find(core);
    if (it == suspended_.end())
        return;
    ResumeFn fn = std::move(it->second);
    suspended_.erase(it);
    schedule(now_, [fn = std::move(fn), line] { fn(line); });
}

std::vector<CoreId> Kernel::suspended_cores() const {
    std::vector<CoreId> out;
    out.reserve(suspended_.size());
    for (const auto& [core, fn] : suspended_)
        out.push_back(core);
    return out;
}

void Kernel::submit(const std::shared_ptr<Request>& req) {
    {
        std::lock_guard lock(mutex_);
        if (shut_down_)
            throw CancelledError("kernel shut down");
        requests_.push_back(req);
    }
    cv_.notify_all();
}

std::size_t Kernel::service_requests() {
    std::size_t n = 0;
    for (;;) {
        std::shared_ptr<Request> req;
        {
            std::lock_guard lock(mutex_);
            if (requests_.empty())
                return n;
            req = std::move(requests_.front());
            requests_.pop_front();
        }
        try {
            req->payload();
            req->done.set_value();
        } catch (...) {
            req->done.set_exception(std::current_exception());
        }
        ++serviced_;
        ++n;
    }
}

void Kernel::wait_until(const std::function<bool()>& ready) {
    std::unique_lock lock(mutex_);
    for (;;) {
        if (!requests_.empty()) {
            lock.unlock();
            service_requests();
            lock.lock();
            continue;
        }
        if (ready())
            return;
        cv_.wait(lock);
    }
}

void Kernel::notify() {
    { std::lock_guard lock(mutex_); }
    cv_.notify_all();
}

void Kernel::shutdown() {
    std::deque<std::shared_ptr<Request>> abandoned;
    {
        std::lock_guard lock(mutex_);
        shut_down_ = true;
        abandoned.swap(requests_);
    }
    for (auto& req : abandoned)
        req->done.set_exception(std::make_exception_ptr(CancelledError("kernel shut down")));
    cv_.notify_all();
}

bool Kernel::is_shut_down() const {
    std::lock_guard lock(mutex_);
    return shut_down_;
}

} // namespace kvmvp
