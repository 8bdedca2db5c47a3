#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pipefreeze {

enum class ActionKind { Forward, Backward };

// One forward or backward execution of one microbatch at one stage.
// Total order (kind, stage, microbatch) fixes all deterministic iteration.
struct ActionId {
  ActionKind kind{ActionKind::Forward};
  int microbatch{1};  // 1-based, in [1, M]
  int stage{1};       // 1-based, in [1, S]

  friend auto operator<=>(const ActionId& a, const ActionId& b) {
    if (auto c = a.kind <=> b.kind; c != 0) return c;
    if (auto c = a.stage <=> b.stage; c != 0) return c;
    return a.microbatch <=> b.microbatch;
  }
  friend bool operator==(const ActionId&, const ActionId&) = default;
};

inline ActionId forward_action(int m, int s) { return {ActionKind::Forward, m, s}; }
inline ActionId backward_action(int m, int s) { return {ActionKind::Backward, m, s}; }

inline std::string to_string(const ActionId& a) {
  return (a.kind == ActionKind::Forward ? "f(" : "b(") + std::to_string(a.microbatch) +
         "," + std::to_string(a.stage) + ")";
}

struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG with self-contained samplers so results do not depend on
// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform double in [0, 1)
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  std::uint64_t index_below(std::uint64_t n) {
    if (n == 0) throw std::domain_error("index_below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  bool bernoulli(double p) { return unit() < p; }

  // standard normal via Box-Muller
  double gaussian() {
    double u1 = unit();
    double u2 = unit();
    while (u1 <= 0.0) u1 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace pipefreeze
