#pragma once

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "repdiff/config.hpp"
#include "repdiff/report.hpp"

namespace repdiff::cli {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  int workers = 0;  // 0: hardware concurrency
  std::uint64_t seed_offset = 0;
};

inline int effective_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs the jobs on a bounded pool; job order in the vector is the only
/// ordering that matters, workers share nothing.
inline void run_parallel(int workers, const std::vector<std::function<void()>>& jobs) {
  if (workers <= 1) {
    for (const auto& j : jobs) j();
    return;
  }
  std::vector<std::thread> pool;
  std::size_t next = 0;
  std::mutex mu;
  std::vector<std::exception_ptr> errors;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t idx;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= jobs.size()) return;
          idx = next++;
        }
        try {
          jobs[idx]();
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          errors.push_back(std::current_exception());
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (!errors.empty()) std::rethrow_exception(errors.front());
}

inline void write_json_report(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace repdiff::cli
