#pragma once

#include <chrono>
#include <exception>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>

namespace groundqa {

template <typename T>
struct Timed {
  std::optional<T> value;
  bool timed_out = false;
  std::string error;  // set when fn threw

  bool ok() const { return value.has_value(); }
};

/// Starts fn on a detached worker and returns its future. The worker owns
/// fn, so a caller that stops waiting does not block on it.
template <typename F>
auto launch_detached(F fn) -> std::future<std::invoke_result_t<F&>> {
  using T = std::invoke_result_t<F&>;
  auto promise = std::make_shared<std::promise<T>>();
  auto future = promise->get_future();
  std::thread([promise, fn = std::move(fn)]() mutable {
    try {
      if constexpr (std::is_void_v<T>) {
        fn();
        promise->set_value();
      } else {
        promise->set_value(fn());
      }
    } catch (...) {
      promise->set_exception(std::current_exception());
    }
  }).detach();
  return future;
}

/// Collects a detached result if it is ready by deadline.
template <typename T, typename Clock, typename Duration>
Timed<T> collect_until(std::future<T>& future, std::chrono::time_point<Clock, Duration> deadline) {
  Timed<T> out;
  if (future.wait_until(deadline) != std::future_status::ready) {
    out.timed_out = true;
    out.error = "deadline exceeded";
    return out;
  }
  try {
    out.value = future.get();
  } catch (const std::exception& e) {
    out.error = e.what();
  } catch (...) {
    out.error = "unknown error";
  }
  return out;
}

/// Runs fn on a detached worker and waits at most timeout for it. A late
/// worker keeps running to completion and its result is dropped, so fn must
/// own (or share ownership of) everything it touches.
template <typename F>
auto run_with_deadline(F fn, std::chrono::milliseconds timeout) -> Timed<std::invoke_result_t<F&>> {
  auto future = launch_detached(std::move(fn));
  auto out = collect_until(future, std::chrono::steady_clock::now() + timeout);
  if (out.timed_out) out.error = "timed out after " + std::to_string(timeout.count()) + " ms";
  return out;
}

}  // namespace groundqa
