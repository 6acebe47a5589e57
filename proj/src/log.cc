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
#include "fedembed/log.h"

#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace fedembed {
namespace {

std::mutex& SinkMutex() {
  static std::mutex mu;
  return mu;
}

WarningSink& Sink() {
  static WarningSink sink;
  return sink;
}

}  // namespace

void Warn(std::string_view message) {
  std::lock_guard<std::mutex> lock(SinkMutex());
  if (Sink()) {
    Sink()(message);
    return;
  }
  std::cerr << "warning: " << message << "\n";
}

WarningSink SetWarningSink(WarningSink sink) {
  std::lock_guard<std::mutex> lock(SinkMutex());
  return std::exchange(Sink(), std::move(sink));
}

}  // namespace fedembed
