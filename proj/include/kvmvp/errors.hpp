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

#ifndef KVMVP_ERRORS_HPP
#define KVMVP_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kvmvp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid platform, bus or device configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation's precondition (zero budget, bad register index, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class SchedulingError : public Error {
public:
    using Error::Error;
};

/// Every core waits for an interrupt and nothing is left that could raise one.
class DeadlockError : public Error {
public:
    DeadlockError(std::string what, std::vector<std::uint32_t> idle_cores)
        : Error(std::move(what)), idle_cores_(std::move(idle_cores)) {}

    const std::vector<std::uint32_t>& idle_cores() const noexcept { return idle_cores_; }

private:
    std::vector<std::uint32_t> idle_cores_;
};

/// A coordinator request was abandoned because the kernel shut down.
class CancelledError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

/// The host lacks a facility (hypervisor device, debug registers, ...).
class CapabilityError : public Error {
public:
    using Error::Error;
};

class ResourceError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class AnnotationError : public Error {
public:
    using Error::Error;
};

class AmbiguityError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace kvmvp

#endif
