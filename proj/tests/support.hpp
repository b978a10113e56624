#pragma once

// Shared test helpers plus the independent oracles the suites compare
// against. Oracles deliberately avoid the library's own code paths.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stanceformer/numcore/tensor.hpp"
#include "stanceformer/textdata/example.hpp"
#include "stanceformer/textdata/vocabulary.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using stanceformer::num::Shape;
using stanceformer::num::Tensor;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <typename T = double>
Tensor<T> random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = true) {
  std::vector<T> data(stanceformer::num::numel(shape));
  for (auto& v : data) v = static_cast<T>(uniform(rng, lo, hi));
  return Tensor<T>::from(std::move(shape), std::move(data), requires_grad);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("stanceformer-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

// Random well-formed example: text and target ids drawn from [4, vocab).
inline stanceformer::text::TokenizedExample random_example(std::mt19937_64& rng, std::size_t max_len,
                                                           std::size_t vocab, std::int32_t n_labels = 3) {
  const std::size_t target_len = pick(rng, 1, std::min<std::size_t>(3, max_len - 4));
  const std::size_t text_len = pick(rng, 1, max_len - 3 - target_len);
  std::vector<stanceformer::text::TokenId> text(text_len), target(target_len);
  for (auto& t : text) t = static_cast<stanceformer::text::TokenId>(pick(rng, 4, vocab - 1));
  for (auto& t : target) t = static_cast<stanceformer::text::TokenId>(pick(rng, 4, vocab - 1));
  return stanceformer::text::assemble(text, target, max_len,
                                      static_cast<std::int32_t>(pick(rng, 0, static_cast<std::size_t>(n_labels - 1))));
}

namespace oracle {

// exp / normalize in long double, no max shift (inputs stay small).
inline std::vector<double> softmax(const std::vector<double>& row) {
  long double z = 0;
  for (double v : row) z += std::exp(static_cast<long double>(v));
  std::vector<double> out;
  for (double v : row) out.push_back(static_cast<double>(std::exp(static_cast<long double>(v)) / z));
  return out;
}

// Exact rational with 64-bit parts; enough for counts in the hundreds.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Fraction make(std::int64_t n, std::int64_t d) {
    if (d < 0) n = -n, d = -d;
    const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
    return {n / (g ? g : 1), d / (g ? g : 1)};
  }
  Fraction operator+(const Fraction& o) const { return make(num * o.den + o.num * den, den * o.den); }
  Fraction operator/(std::int64_t k) const { return make(num, den * k); }
  bool operator==(const Fraction&) const = default;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct LabelOracle {
  Fraction precision, recall, f1;
  std::int64_t support = 0;
};

// Brute force over the (gold, predicted) pairs: tp/fp/fn counted per label
// by scanning the list, F1 = 2tp / (2tp + fp + fn).
inline std::vector<LabelOracle> per_label(const std::vector<int>& gold, const std::vector<int>& pred, int c) {
  std::vector<LabelOracle> out(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i] == k && pred[i] == k) ++tp;
      if (gold[i] != k && pred[i] == k) ++fp;
      if (gold[i] == k && pred[i] != k) ++fn;
    }
    auto& o = out[static_cast<std::size_t>(k)];
    o.support = tp + fn;
    o.precision = tp + fp ? Fraction::make(tp, tp + fp) : Fraction{};
    o.recall = tp + fn ? Fraction::make(tp, tp + fn) : Fraction{};
    o.f1 = 2 * tp + fp + fn ? Fraction::make(2 * tp, 2 * tp + fp + fn) : Fraction{};
  }
  return out;
}

inline Fraction macro(const std::vector<LabelOracle>& per, const std::vector<int>& subset) {
  Fraction s;
  for (int k : subset) s = s + per[static_cast<std::size_t>(k)].f1;
  return s / static_cast<std::int64_t>(subset.size());
}

}  // namespace oracle
}  // namespace testing_support
