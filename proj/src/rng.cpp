#include "stocpen/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stocpen {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (stream * 0xD1B54A32D192ED03ULL);
  const std::uint32_t words[8] = {
      static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s) >> 32),
      static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s) >> 32),
      static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s) >> 32),
      static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s) >> 32)};
  std::seed_seq seq(std::begin(words), std::end(words));
  return std::mt19937_64(seq);
}

}  // namespace

std::uint64_t stream_id_for(StreamRole role, std::uint64_t substream) {
  return (static_cast<std::uint64_t>(role) << 32) | (substream & 0xFFFFFFFFULL);
}

SampleContext::SampleContext(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_(stream_id), engine_(make_engine(seed, stream_id)) {}

SampleContext::SampleContext(std::uint64_t seed, StreamRole role, std::uint64_t substream)
    : SampleContext(seed, stream_id_for(role, substream)) {}

void SampleContext::reset() {
  engine_ = make_engine(seed_, stream_);
  draws_ = 0;
}

// The draw counter counts values handed out, not engine words consumed.
std::uint64_t SampleContext::next_u64() {
  ++draws_;
  return engine_();
}

double SampleContext::uniform() {
  ++draws_;
  // 53 high bits -> [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SampleContext::normal() {
  ++draws_;
  // Box-Muller, cosine branch only; u1 pushed into (0, 1].
  const double u1 = 1.0 - static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SampleContext::uniform_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
  ++draws_;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

Eigen::VectorXd SampleContext::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

}  // namespace stocpen
