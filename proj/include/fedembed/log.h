// Copyright 2026 The fedembed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef FEDEMBED_LOG_H_
#define FEDEMBED_LOG_H_

#include <functional>
#include <string_view>

namespace fedembed {

using WarningSink = std::function<void(std::string_view)>;

// Emits a warning line. Defaults to standard error; tests swap the sink.
void Warn(std::string_view message);

// Replaces the process-wide warning sink and returns the previous one.
// Passing an empty function restores the default.
WarningSink SetWarningSink(WarningSink sink);

}  // namespace fedembed

#endif  // FEDEMBED_LOG_H_
