#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace stocpen {

/// Named stream roles. Each role of a run owns its own stream so that
/// toggling a monitor or replicate experiment never perturbs the trajectory.
enum class StreamRole : std::uint64_t {
  estimator_samples = 1,
  iterate_selection = 2,
  problem_generator = 3,
  replicate_experiments = 4,
  member_sampling = 5,
};

/// Deterministic random stream identified by (seed, stream_id) with a
/// monotone draw counter. Identical (seed, stream_id) reproduce the same
/// sequence; distinct stream_ids are decorrelated by the seeding mix.
/// Distribution mapping (uniform, Box-Muller normal) is done in-house so the
/// sequence does not depend on the standard library's distribution code.
class SampleContext {
 public:
  SampleContext(std::uint64_t seed, std::uint64_t stream_id);
  SampleContext(std::uint64_t seed, StreamRole role, std::uint64_t substream = 0);

  /// Rewind to the initial state (counter back to zero).
  void reset();

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();   // N(0, 1)
  std::uint64_t uniform_below(std::uint64_t n);  // unbiased in [0, n)
  Eigen::VectorXd normal_vector(Eigen::Index n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t draw_count() const { return draws_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

/// Stream id for a (role, substream) pair.
std::uint64_t stream_id_for(StreamRole role, std::uint64_t substream);

}  // namespace stocpen
