#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repdiff/tensor.hpp"

namespace repdiff {

enum class EncoderKind { class_prototype, random_feature };

/// Frozen encoder mapping clean data points to unit vectors. Deterministic
/// given its seed; plays the role of a pretrained representation model.
class Encoder {
 public:
  /// Nearest-prototype lookup: returns the fixed unit embedding of the closest
  /// prototype row.
  static Encoder class_prototype(const Tensor& prototypes, int out_dim, std::uint64_t seed);
  /// normalize(W tanh(V x)) with fixed seeded weights.
  static Encoder random_feature(int in_dim, int hidden, int out_dim, std::uint64_t seed);

  std::vector<double> encode(const std::vector<double>& x0) const;
  int out_dim() const { return out_dim_; }
  int in_dim() const { return in_dim_; }
  EncoderKind kind() const { return kind_; }

 private:
  EncoderKind kind_ = EncoderKind::random_feature;
  int in_dim_ = 0;
  int out_dim_ = 0;
  Tensor prototypes_;  // [K, in_dim]
  Tensor embeddings_;  // [K, out_dim], unit rows
  Tensor V_;           // [hidden, in_dim]
  Tensor W_;           // [out_dim, hidden]
};

/// Seeded stochastic transform y = f(x) standing in for a secondary modality,
/// with its own encoder over y-space. noise_std > 0 makes the pairing
/// stochastic, so y never determines x exactly.
class SyntheticModality {
 public:
  static SyntheticModality make(int in_dim, int y_dim, double noise_std, std::uint64_t seed,
                                int enc_hidden, int enc_out_dim);
  /// Identity transform variant (no mixing, no nonlinearity); mainly for tests
  /// and ablations.
  static SyntheticModality identity(int dim, double noise_std, std::uint64_t seed,
                                    int enc_hidden, int enc_out_dim);

  struct Sample {
    std::vector<double> y;
    std::vector<double> zy;  // unit vector
  };
  Sample sample(const std::vector<double>& x0, std::uint64_t rng_seed) const;

  int y_dim() const { return y_dim_; }
  int z_dim() const { return encoder_.out_dim(); }
  double noise_std() const { return noise_std_; }

 private:
  int in_dim_ = 0;
  int y_dim_ = 0;
  double noise_std_ = 0.0;
  bool nonlinear_ = true;
  Tensor M_;  // [y_dim, in_dim]
  Tensor b_;  // [y_dim]
  Encoder encoder_ = Encoder::random_feature(1, 1, 1, 0);
};

/// Ordered collection of representation levels with their aligned denoiser
/// layers.
struct LatentBundle {
  struct Level {
    std::string tag;
    std::vector<double> z;  // unit vector
    int layer;              // 1-based denoiser hidden layer
  };
  std::vector<Level> levels;
};

struct BundleConfig {
  int denoiser_depth = 0;
  int layer_x = 1;
  int layer_y = -1;  // < 0 disables the secondary level
};

/// Builds the per-sample bundle: z^x at layer_x and, when a modality is given,
/// z^y at layer_y. Throws on duplicate or out-of-range layer assignments.
LatentBundle make_bundle(const std::vector<double>& x0, const Encoder& enc_x,
                         const SyntheticModality* modality, const BundleConfig& cfg,
                         std::uint64_t sample_seed);

}  // namespace repdiff
