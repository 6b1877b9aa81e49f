/*
 * Copyright 2026 The matedit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace matedit {

inline unsigned worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs task(k) for k in [0, tasks). Tasks are claimed dynamically, so the
/// callee must write only to task-private state; callers that reduce do so
/// afterwards in task order, which keeps results independent of scheduling.
template <class Task>
void parallel_tasks(int tasks, Task&& task) {
    if (tasks <= 0) return;
    const int threads = static_cast<int>(std::min<unsigned>(worker_count(), static_cast<unsigned>(tasks)));
    if (threads <= 1) {
        for (int k = 0; k < tasks; ++k) task(k);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&]() {
        for (int k = next++; k < tasks; k = next++) {
            try {
                task(k);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(run);
    run();
    pool.clear();
    if (error) std::rethrow_exception(error);
}

/// Rows [0, rows) split into fixed-size bands; body(band, row_begin, row_end).
template <class Body>
void parallel_rows(int rows, int band_rows, Body&& body) {
    const int bands = (rows + band_rows - 1) / band_rows;
    parallel_tasks(bands, [&](int b) {
        const int r0 = b * band_rows;
        body(b, r0, std::min(rows, r0 + band_rows));
    });
}

}  // namespace matedit
