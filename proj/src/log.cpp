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

#include "kvmvp/log.hpp"

#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>

namespace kvmvp::log {

namespace {

std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

void stderr_sink(Level lvl, std::string_view message) {
    static constexpr const char* names[] = {"debug", "info", "warn", "error"};
    std::cerr << "[kvmvp:" << names[static_cast<int>(lvl)] << "] " << message << '\n';
}

Sink& sink() {
    static Sink s = stderr_sink;
    return s;
}

} // namespace

void set_level(Level lvl) { g_level.store(lvl); }

Level level() { return g_level.load(); }

Sink set_sink(Sink s) {
    std::lock_guard lock(g_mutex);
    Sink previous = std::move(sink());
    sink() = s ? std::move(s) : Sink(stderr_sink);
    return previous;
}

void write(Level lvl, std::string_view message) {
    if (lvl < g_level.load(std::memory_order_relaxed))
        return;
    std::lock_guard lock(g_mutex);
    sink()(lvl, message);
}

std::string hex(std::uint64_t value) {
    char buf[2 + 16 + 1];
    std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(value));
    return buf;
}

} // namespace kvmvp::log
