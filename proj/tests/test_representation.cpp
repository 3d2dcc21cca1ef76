#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "repdiff/dataset.hpp"
#include "repdiff/representation.hpp"
#include "repdiff/rng.hpp"

using namespace repdiff;

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("prototype encoder returns the matching embedding at a prototype") {
  const auto data = ToyDataset::ring_mixture(8, 16, 1.0, 0.15, 5);
  const Tensor protos = data.centers();
  const auto enc = Encoder::class_prototype(protos, 8, 11);
  for (int k = 0; k < 8; ++k) {
    const std::vector<double> x{protos.at(k, 0), protos.at(k, 1)};
    const auto z1 = enc.encode(x);
    const auto z2 = enc.encode(x);
    CHECK(z1 == z2);  // determinism
    // nearby points share the embedding
    const auto znear = enc.encode({x[0] + 0.01, x[1] - 0.01});
    CHECK(z1 == znear);
  }
  // distinct prototypes map to distinct embeddings
  CHECK(enc.encode({protos.at(0, 0), protos.at(0, 1)}) !=
        enc.encode({protos.at(3, 0), protos.at(3, 1)}));
}

TEST_CASE("random-feature encoder emits unit vectors on 1000 samples") {
  const auto enc = Encoder::random_feature(2, 32, 8, 77);
  Rng rng(123);
  for (int i = 0; i < 1000; ++i) {
    const auto z = enc.encode({3.0 * rng.normal(), 3.0 * rng.normal()});
    double n = 0;
    for (double v : z) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-10);
  }
}

TEST_CASE("same seed reproduces the encoder exactly") {
  const auto a = Encoder::random_feature(2, 16, 6, 42);
  const auto b = Encoder::random_feature(2, 16, 6, 42);
  const std::vector<double> x{0.3, -1.1};
  CHECK(a.encode(x) == b.encode(x));
}

TEST_CASE("zero input fails normalization with a clear error") {
  const auto enc = Encoder::random_feature(2, 16, 6, 1);
  CHECK_THROWS_WITH_AS(enc.encode({0.0, 0.0}), doctest::Contains("zero-norm"),
                       std::domain_error);
  CHECK_THROWS(enc.encode({1.0, std::nan("")}));
}

TEST_CASE("noiseless modality is a deterministic function of x0") {
  const auto mod = SyntheticModality::make(2, 3, 0.0, 9, 16, 4);
  const std::vector<double> x{0.5, -0.2};
  const auto s1 = mod.sample(x, 111);
  const auto s2 = mod.sample(x, 222);  // different pair seed, no noise
  CHECK(s1.y == s2.y);
  CHECK(s1.zy == s2.zy);
}

TEST_CASE("noisy pairs differ per seed but stay correlated") {
  const auto mod = SyntheticModality::make(2, 3, 0.25, 9, 16, 4);
  Rng rng(314);
  double same_acc = 0.0, cross_acc = 0.0;
  const int n = 1000;
  std::vector<std::vector<double>> zs;
  for (int i = 0; i < n; ++i) {
    const std::vector<double> x{2.0 * rng.normal(), 2.0 * rng.normal()};
    const auto a = mod.sample(x, derive_seed(1, i));
    const auto b = mod.sample(x, derive_seed(2, i));
    CHECK(a.y != b.y);  // stochastic pairing
    same_acc += cosine(a.zy, b.zy);
    zs.push_back(a.zy);
  }
  for (int i = 0; i < n; ++i) cross_acc += cosine(zs[i], zs[(i + 1) % n]);
  // two noisy views of the same x align far better than unrelated pairs
  CHECK(same_acc / n > cross_acc / n + 0.1);
}

TEST_CASE("identity transform with zero noise encodes x0 itself") {
  const auto mod = SyntheticModality::identity(2, 0.0, 9, 16, 4);
  const auto enc_same = Encoder::random_feature(2, 16, 4, derive_seed(9, 0x90db));
  const std::vector<double> x{0.7, 0.1};
  const auto s = mod.sample(x, 5);
  CHECK(s.y == x);
  CHECK(s.zy == enc_same.encode(x));
}

TEST_CASE("bundle layout and validation") {
  const auto data = ToyDataset::ring_mixture(4, 8, 1.0, 0.1, 3);
  const auto enc = Encoder::class_prototype(data.centers(), 8, 2);
  const auto mod = SyntheticModality::make(2, 3, 0.1, 4, 16, 4);
  const std::vector<double> x{1.0, 0.0};

  BundleConfig single{4, 1, -1};
  const auto b1 = make_bundle(x, enc, nullptr, single, 7);
  CHECK(b1.levels.size() == 1);
  CHECK(b1.levels[0].tag == "x");
  CHECK(b1.levels[0].layer == 1);

  BundleConfig both{4, 1, 3};
  const auto b2 = make_bundle(x, enc, &mod, both, 7);
  CHECK(b2.levels.size() == 2);
  CHECK(b2.levels[1].tag == "y");
  CHECK(b2.levels[1].layer == 3);
  for (const auto& lvl : b2.levels) {
    double n = 0;
    for (double v : lvl.z) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-10);
  }

  BundleConfig deep{4, 1, 5};
  CHECK_THROWS(make_bundle(x, enc, &mod, deep, 7));  // layer beyond depth
  BundleConfig dup{4, 2, 2};
  CHECK_THROWS_WITH_AS(make_bundle(x, enc, &mod, dup, 7),
                       doctest::Contains("duplicate layer"), std::invalid_argument);
}
