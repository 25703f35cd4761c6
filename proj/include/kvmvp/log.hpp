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

#ifndef KVMVP_LOG_HPP
#define KVMVP_LOG_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace kvmvp::log {

enum class Level { debug, info, warn, error };

using Sink = std::function<void(Level, std::string_view)>;

void set_level(Level level);
Level level();

/// Replaces the output sink (stderr by default); returns the previous one.
Sink set_sink(Sink sink);

void write(Level level, std::string_view message);

inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void error(std::string_view m) { write(Level::error, m); }

std::string hex(std::uint64_t value);

} // namespace kvmvp::log

#endif
