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

#ifndef KVMVP_KVM_BACKEND_HPP
#define KVMVP_KVM_BACKEND_HPP

#include "kvmvp/bus.hpp"
#include "kvmvp/exec_backend.hpp"

#include <memory>
#include <string>
#include <vector>

namespace kvmvp {

struct GuestRegion {
    DmiGrant grant;
    GuestAddr guest_base = 0;
};

/// Whether this build contains the hardware backend (AArch64 Linux hosts).
bool hardware_backend_compiled();

/// Empty when a VM can be created here, otherwise the reason it cannot.
std::string hardware_backend_unavailable_reason();

/// One hypervisor VM per platform; hands out one vCPU backend per core.
class KvmVm {
public:
    /// Registers every region as guest memory. Throws CapabilityError when
    /// the facility is missing, ConfigError for zero or overlapping regions
    /// and BackendError when the hypervisor rejects a mapping.
    static std::shared_ptr<KvmVm> create(const std::vector<GuestRegion>& regions);

    virtual ~KvmVm() = default;

    /// vCPU `index` in architectural reset state with pc at `entry`.
    virtual std::unique_ptr<ExecBackend> create_vcpu(CoreId index, GuestAddr entry) = 0;

    virtual std::size_t memory_slots() const = 0;
    virtual unsigned breakpoint_slots() const = 0;
};

} // namespace kvmvp

#endif
