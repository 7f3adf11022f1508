/* Copyright 2026 The jetforge Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace jetforge::detail
{
/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads, each
/// taking a contiguous block. Work items must be independent.
template <class Fn>
void parallel_for(std::size_t n, std::size_t min_items_per_thread, Fn &&fn)
{
    auto hw = static_cast<std::size_t>(std::max(1u, std::thread::hardware_concurrency()));
    auto threads = std::min(hw, std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_items_per_thread)));
    if (threads <= 1)
    {
        for (std::size_t i = 0; i < n; i++)
            fn(i);
        return;
    }

    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    auto block = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; t++)
    {
        pool.emplace_back([&, t]() {
            try
            {
                for (auto i = t * block; i < std::min(n, (t + 1) * block); i++)
                    fn(i);
            }
            catch (...)
            {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto &th : pool)
        th.join();
    for (auto &e : errors)
    {
        if (e)
            std::rethrow_exception(e);
    }
}
}
