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

#ifndef KVMVP_CLI_HPP
#define KVMVP_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace kvmvp {

/// Entry point of the `kvmvp` tool. Returns the process exit code:
/// 0 on clean completion, 1 on runtime failure, 2 on usage, configuration
/// or startup errors.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace kvmvp

#endif
