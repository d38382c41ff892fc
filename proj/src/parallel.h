#ifndef KEHNN_SRC_PARALLEL_H_
#define KEHNN_SRC_PARALLEL_H_

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace kehnn::internal {

// Splits [0, n) into `workers` contiguous chunks and runs
// fn(worker, begin, end) for each, one thread per chunk. Rethrows the first
// exception by worker index.
template <typename F>
void parallel_chunks(std::size_t n, std::size_t workers, F&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  auto bounds = [&](std::size_t w) { return n * w / workers; };
  if (workers == 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        fn(w, bounds(w), bounds(w + 1));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace kehnn::internal

#endif  // KEHNN_SRC_PARALLEL_H_
