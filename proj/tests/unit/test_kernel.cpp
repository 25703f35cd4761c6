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

#include "kvmvp/errors.hpp"
#include "kvmvp/kernel.hpp"

#include <doctest.h>

#include <atomic>
#include <string>
#include <thread>
#include <vector>

using namespace kvmvp;

TEST_CASE("schedule ordering") {
    Kernel k;
    std::string trace;
    k.schedule(SimTime::ns(5), [&] { trace += 'a'; });
    k.schedule(SimTime::ns(5), [&] { trace += 'b'; });
    k.schedule(SimTime::zero(), [&] { trace += '0'; });
    k.run();
    CHECK(trace == "0ab");
    CHECK(k.now() == SimTime::ns(5));
}

TEST_CASE("single event advances time to its timestamp") {
    Kernel k;
    SimTime seen;
    k.schedule(SimTime::ns(3), [&] { seen = k.now(); });
    CHECK(k.run() == SimTime::ns(3));
    CHECK(seen == SimTime::ns(3));
}

TEST_CASE("scheduling in the past is rejected") {
    Kernel k;
    k.schedule(SimTime::ns(10), [] {});
    k.run();
    CHECK_THROWS_AS(k.schedule(SimTime::ns(9), [] {}), SchedulingError);
    CHECK_THROWS_AS(k.run_until(SimTime::ns(1)), SchedulingError);
}

TEST_CASE("run_until") {
    Kernel k;
    SUBCASE("empty queue leaves time unchanged") {
        CHECK(k.run_until(SimTime::ns(10)) == SimTime::zero());
    }
    SUBCASE("stops after events up to the limit") {
        int ran = 0;
        for (int i = 1; i <= 3; ++i)
            k.schedule(SimTime::ns(i), [&] { ++ran; });
        CHECK(k.run_until(SimTime::ns(2)) == SimTime::ns(2));
        CHECK(ran == 2);
        CHECK(k.pending_events() == 1);
    }
    SUBCASE("self-rescheduling event fires twice") {
        std::vector<SimTime> fired;
        k.schedule(SimTime::ns(2), [&] {
            fired.push_back(k.now());
            k.schedule(SimTime::ns(4), [&] { fired.push_back(k.now()); });
        });
        // a drained queue leaves time at the last event
        CHECK(k.run_until(SimTime::ns(5)) == SimTime::ns(4));
        CHECK(fired == std::vector{SimTime::ns(2), SimTime::ns(4)});
    }
}

TEST_CASE("cancel") {
    Kernel k;
    bool ran = false;
    auto h = k.schedule(SimTime::ns(1), [&] { ran = true; });
    CHECK(k.cancel(h));
    CHECK_FALSE(k.cancel(h));
    k.run();
    CHECK_FALSE(ran);
}

TEST_CASE("request_stop ends the current run only") {
    Kernel k;
    int ran = 0;
    k.schedule(SimTime::ns(1), [&] {
        ++ran;
        k.request_stop();
    });
    k.schedule(SimTime::ns(2), [&] { ++ran; });
    k.run();
    CHECK(ran == 1);
    k.run();
    CHECK(ran == 2);
}

TEST_CASE("suspend until interrupt") {
    Kernel k;
    SUBCASE("timer wakes an idle core at its expiry") {
        SimTime resumed_at;
        std::optional<IrqLine> cause;
        k.schedule(SimTime::us(2), [&] {
            k.suspend_until_interrupt(0, std::nullopt, [&](IrqLine l) {
                resumed_at = k.now();
                cause = l;
            });
        });
        k.schedule(SimTime::us(10), [&] { k.notify_interrupt(0, 5); });
        k.run();
        CHECK(resumed_at == SimTime::us(10));
        CHECK(cause == 5u);
        CHECK_FALSE(k.is_suspended(0));
    }
    SUBCASE("already pending resumes without time passing") {
        SimTime resumed_at = SimTime::max();
        k.schedule(SimTime::us(3), [&] {
            k.suspend_until_interrupt(1, IrqLine{2}, [&](IrqLine) { resumed_at = k.now(); });
        });
        k.run();
        CHECK(resumed_at == SimTime::us(3));
    }
    SUBCASE("interrupt for a running core is ignored") {
        k.notify_interrupt(3, 1);
        CHECK(k.pending_events() == 0);
    }
    SUBCASE("all idle with an empty queue is a deadlock naming every core") {
        k.suspend_until_interrupt(0, std::nullopt, [](IrqLine) {});
        k.suspend_until_interrupt(2, std::nullopt, [](IrqLine) {});
        try {
            k.run();
            FAIL("expected a deadlock");
        } catch (const DeadlockError& e) {
            CHECK(e.idle_cores() == std::vector<CoreId>{0, 2});
        }
    }
}

TEST_CASE("execute_on_coordinator") {
    Kernel k;
    SUBCASE("inline on the coordinator") {
        int calls = 0;
        CHECK(k.execute_on_coordinator(0, [&] { return ++calls; }) == 1);
        CHECK(k.serviced_requests() == 0);
    }
    SUBCASE("worker requests run on the coordinator in arrival order") {
        std::vector<int> order;
        std::vector<bool> on_coord;
        std::atomic<int> finished{0};
        auto worker = [&](int id) {
            for (int i = 0; i < 50; ++i)
                k.execute_on_coordinator(static_cast<CoreId>(id), [&, id] {
                    order.push_back(id);
                    on_coord.push_back(k.on_coordinator());
                });
            ++finished;
            k.notify();
        };
        std::thread a(worker, 0), b(worker, 1);
        k.wait_until([&] { return finished.load() == 2; });
        a.join();
        b.join();
        CHECK(order.size() == 100);
        CHECK(std::count(order.begin(), order.end(), 0) == 50);
        CHECK(std::all_of(on_coord.begin(), on_coord.end(), [](bool v) { return v; }));
        CHECK(k.serviced_requests() == 100);
    }
    SUBCASE("exceptions travel back to the caller") {
        std::exception_ptr err;
        std::atomic<bool> done{false};
        std::thread t([&] {
            try {
                k.execute_on_coordinator(0, []() -> int { throw BackendError("boom"); });
            } catch (...) {
                err = std::current_exception();
            }
            done = true;
            k.notify();
        });
        k.wait_until([&] { return done.load(); });
        t.join();
        CHECK_THROWS_AS(std::rethrow_exception(err), BackendError);
    }
    SUBCASE("shutdown cancels waiting requests") {
        k.shutdown();
        std::exception_ptr err;
        std::thread t([&] {
            try {
                k.execute_on_coordinator(0, [] {});
            } catch (...) {
                err = std::current_exception();
            }
        });
        t.join();
        CHECK_THROWS_AS(std::rethrow_exception(err), CancelledError);
    }
}

TEST_CASE("tracked work keeps its place in event order") {
    Kernel k;
    std::string trace;
    std::atomic<bool> done{false};
    std::thread worker;
    k.schedule(SimTime::ns(1), [&] {
        trace += 'd';
        worker = std::thread([&] {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            done = true;
            k.notify();
        });
        k.track([&] { return done.load(); },
                [&]() -> std::optional<SimTime> {
                    trace += 'c';
                    return SimTime::ns(1);
                },
                [&] { trace += 'f'; });
        // same timestamp, scheduled later: must wait for the tracked completion
        k.schedule(SimTime::ns(1), [&] { trace += 'x'; });
    });
    k.schedule(SimTime::ns(1), [&] { trace += 'e'; }); // precedes the reservation
    k.run();
    worker.join();
    CHECK(trace == "decfx");
}
