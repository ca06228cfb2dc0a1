/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The echotrace Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ECHOTRACE_PARALLEL_HPP
#define ECHOTRACE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace echotrace {

/// Resolves a requested worker count; 0 means "all hardware threads".
inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Runs body(i, worker) for i in [0, count) on up to `threads` workers.
 *
 * Work items are handed out dynamically; callers must not rely on which worker runs which item.
 * The first exception thrown by any body is rethrown on the calling thread.
 */
template <typename Body>
void parallel_for(size_t count, unsigned threads, Body&& body) {
  const unsigned workers = static_cast<unsigned>(std::min<size_t>(resolve_threads(threads), count));
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) body(i, 0u);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&](unsigned worker) {
    try {
      for (size_t i = next++; i < count; i = next++) body(i, worker);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = count;
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace echotrace

#endif /* ECHOTRACE_PARALLEL_HPP */
