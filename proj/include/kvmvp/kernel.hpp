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

#ifndef KVMVP_KERNEL_HPP
#define KVMVP_KERNEL_HPP

#include "kvmvp/errors.hpp"
#include "kvmvp/sim_time.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace kvmvp {

using Action = std::function<void()>;

struct EventHandle {
    SimTime at;
    std::uint64_t sequence = 0;

    auto operator<=>(const EventHandle&) const = default;
};

/// Discrete-event kernel with a single coordinator context.
///
/// Events pop in (deadline, sequence) order. Worker threads may only touch
/// the kernel through execute_on_coordinator() and notify(); everything else
/// must be called on the coordinator thread, which is the constructing
/// thread unless adopt_coordinator() moves it.
///
/// Work that runs off the coordinator (a core's backend run in parallel
/// mode) is registered with track(): the kernel reserves the follow-up
/// event's sequence number at registration and collects the work before it
/// could process any event ordered after that reservation. Sequential and
/// parallel execution of the same tracked work therefore produce the same
/// event order.
class Kernel {
public:
    using ResumeFn = std::function<void(IrqLine)>;

    Kernel();
    ~Kernel();

    Kernel(const Kernel&) = delete;
    Kernel& operator=(const Kernel&) = delete;

    SimTime now() const { return now_; }

    /// Throws SchedulingError when `at` lies in the past.
    EventHandle schedule(SimTime at, Action action);
    bool cancel(const EventHandle& handle);
    std::size_t pending_events() const { return events_.size(); }

    /// Executes all events with deadline <= limit. Returns the final global
    /// time: `limit` if later events remain, otherwise the time of the last
    /// executed event. Throws DeadlockError when cores are suspended and
    /// nothing could ever wake them.
    SimTime run_until(SimTime limit);
    SimTime run() { return run_until(SimTime::max()); }

    /// Makes the current run_until() return after the event in progress.
    void request_stop() { stop_requested_ = true; }

    // Idle suspension.

    /// Parks `core` until notify_interrupt() targets it. With `already_pending`
    /// set, resumes at the current time instead.
    void suspend_until_interrupt(CoreId core, std::optional<IrqLine> already_pending, ResumeFn on_resume);
    /// Wakes a suspended core at the current time; no-op otherwise.
    void notify_interrupt(CoreId core, IrqLine line);
    bool is_suspended(CoreId core) const { return suspended_.contains(core); }
    std::vector<CoreId> suspended_cores() const;

    // Coordinator context.

    bool on_coordinator() const { return std::this_thread::get_id() == coordinator_; }
    void adopt_coordinator() { coordinator_ = std::this_thread::get_id(); }

    /// Runs `fn` on the coordinator and returns its result. Inline when
    /// already on the coordinator; otherwise blocks the calling worker until
    /// the coordinator services the request. Throws CancelledError after
    /// shutdown().
    template <typename F>
    auto execute_on_coordinator(CoreId origin, F&& fn) -> std::invoke_result_t<F&>;

    /// Coordinator: runs queued worker requests in arrival order.
    std::size_t service_requests();

    /// Coordinator: services requests until `ready()` holds. `ready` is
    /// evaluated under the kernel mutex; workers publish progress with notify().
    void wait_until(const std::function<bool()>& ready);

    /// Worker: wakes a coordinator blocked in wait_until().
    void notify();

    /// Cancels all queued and future coordinator requests.
    void shutdown();
    bool is_shut_down() const;

    /// Registers work started at now(). `finished` is polled by the
    /// coordinator; `complete` runs on the coordinator once finished and
    /// returns the follow-up deadline, or nothing to drop the follow-up.
    void track(std::function<bool()> finished, std::function<std::optional<SimTime>()> complete,
               Action follow_up);
    std::size_t tracked() const { return tracked_.size(); }

    /// Requests processed by service_requests() so far.
    std::uint64_t serviced_requests() const { return serviced_; }

private:
    struct Request {
        CoreId origin;
        std::function<void()> payload;
        std::promise<void> done;
    };

    struct Tracked {
        EventHandle reserved;
        std::function<bool()> finished;
        std::function<std::optional<SimTime>()> complete;
        Action follow_up;
    };

    void submit(const std::shared_ptr<Request>& req);
    void collect_front();
    void insert(EventHandle key, Action action);

    SimTime now_;
    std::uint64_t next_sequence_ = 0;
    std::map<EventHandle, Action> events_;
    std::deque<Tracked> tracked_;
    std::map<CoreId, ResumeFn> suspended_;
    bool stop_requested_ = false;

    std::thread::id coordinator_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::shared_ptr<Request>> requests_;
    bool shut_down_ = false;
    std::uint64_t serviced_ = 0;
};

template <typename F>
auto Kernel::execute_on_coordinator(CoreId origin, F&& fn) -> std::invoke_result_t<F&> {
    using R = std::invoke_result_t<F&>;
    if (on_coordinator()) {
        if (is_shut_down())
            throw CancelledError("kernel shut down");
        return fn();
    }

    auto req = std::make_shared<Request>();
    req->origin = origin;
    std::future<void> done = req->done.get_future();
    if constexpr (std::is_void_v<R>) {
        req->payload = [&fn] { fn(); };
        submit(req);
        done.get();
    } else {
        std::optional<R> result;
        req->payload = [&fn, &result] { result.emplace(fn()); };
        submit(req);
        done.get();
        return std::move(*result);
    }
}

} // namespace kvmvp

#endif
