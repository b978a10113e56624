#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "stanceformer/encoder/checkpoint.hpp"
#include "stanceformer/encoder/encoder.hpp"
#include "stanceformer/numcore/gradcheck.hpp"
#include "support.hpp"

namespace model = stanceformer::model;
namespace num = stanceformer::num;
namespace ta = stanceformer::ta;
namespace text = stanceformer::text;
using testing_support::pick;
using testing_support::random_example;
using testing_support::random_tensor;
using T2 = num::Tensor<double>;

namespace {

model::ModelConfig small_config(std::uint64_t seed = 0) {
  model::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = 30;
  c.max_len = 12;
  c.n_labels = 3;
  c.seed = seed;
  return c;
}

// Default init is std 0.02, which leaves attention nearly uniform; scale the
// weights up so the tests see sharp, input-dependent attention.
template <typename T>
model::ModelParams<T> lively_params(const model::ModelConfig& cfg, std::uint64_t seed) {
  auto p = model::ModelParams<T>::init(cfg).template clone<T>();
  std::mt19937_64 rng(seed);
  for (auto& t : p.tensors())
    for (auto& v : t.mutable_data()) v = static_cast<T>(testing_support::uniform(rng, -0.6, 0.6));
  return p;
}

std::vector<text::TokenizedExample> random_batch(std::mt19937_64& rng, const model::ModelConfig& cfg, std::size_t n) {
  std::vector<text::TokenizedExample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_example(rng, cfg.max_len, cfg.vocab_size));
  return out;
}

template <typename T>
std::vector<T> values(const num::Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

TEST(ModelConfig, Validation) {
  auto c = small_config();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.d_k(), 4u);
  c.d_model = 9;
  EXPECT_THROW(c.validate(), stanceformer::ConfigError);
  c = small_config();
  c.max_len = 4;
  EXPECT_THROW(c.validate(), stanceformer::ConfigError);
}

TEST(ModelParams, CountAndInitAreDeterministic) {
  const auto cfg = small_config(3);
  const auto a = model::ModelParams<float>::init(cfg), b = model::ModelParams<float>::init(cfg);
  const std::size_t d = cfg.d_model, f = cfg.d_ff;
  const std::size_t per_layer = 4 * (d * d + d) + 2 * 2 * d + (d * f + f) + (f * d + d);
  const std::size_t expected = cfg.vocab_size * d + cfg.max_len * d + 2 * d + cfg.n_layers * per_layer +
                               d * cfg.n_labels + cfg.n_labels;
  EXPECT_EQ(a.parameter_count(), expected);
  const auto ta_ = a.tensors(), tb = b.tensors();
  for (std::size_t i = 0; i < ta_.size(); ++i) EXPECT_EQ(values(ta_[i]), values(tb[i]));
  const auto c = model::ModelParams<float>::init(small_config(4));
  EXPECT_NE(values(c.token_embedding), values(a.token_embedding));
}

// With W_Q = W_K = 0 every logit is 0 before the bias, so a target row puts
// e^α on each target column and 1 on every other unpadded column.
TEST(AttentionHead, ZeroQueryKeyMatchesClosedForm) {
  std::mt19937_64 rng(12);
  for (double alpha : {0.0, 0.3, 1.0, 2.5}) {
    const auto ex = random_example(rng, 10, 20);
    const std::size_t seq = ex.seq(), content = ex.content_len(), dm = 6, dk = 3;
    const auto x = random_tensor(rng, {seq, dm}, -1, 1, false);
    const auto wv = random_tensor(rng, {dm, dk}, -1, 1, false);
    T2 probs;
    const auto out = model::attention_head(x, T2::zeros({dm, dk}), T2::zeros({dm, dk}), wv, ta::build_bias(ex), alpha,
                                           content, &probs);
    for (std::size_t r = 0; r < seq; ++r) {
      const bool target_row = ex.target_span.contains(r);
      const double n_target = static_cast<double>(ex.target_span.size());
      const double z = target_row ? n_target * std::exp(alpha) + static_cast<double>(content) - n_target
                                  : static_cast<double>(content);
      std::vector<double> expected(seq, 0.0);
      for (std::size_t c = 0; c < content; ++c)
        expected[c] = (target_row && ex.target_span.contains(c) ? std::exp(alpha) : 1.0) / z;
      for (std::size_t c = 0; c < seq; ++c) ASSERT_NEAR(probs[r * seq + c], expected[c], 1e-14);
      // out[r] = Σ_c expected[c] · (x W_V)[c]
      for (std::size_t j = 0; j < dk; ++j) {
        double acc = 0;
        for (std::size_t c = 0; c < seq; ++c) {
          double v = 0;
          for (std::size_t m = 0; m < dm; ++m) v += x[c * dm + m] * wv[m * dk + j];
          acc += expected[c] * v;
        }
        ASSERT_NEAR(out[r * dk + j], acc, 1e-13);
      }
    }
  }
}

TEST(AttentionHead, AlphaZeroEqualsUnbiasedPathBitExactly) {
  std::mt19937_64 rng(13);
  const auto ex = random_example(rng, 10, 20);
  const auto x = random_tensor(rng, {10, 6}, -1, 1, false);
  const auto wq = random_tensor(rng, {6, 3}), wk = random_tensor(rng, {6, 3}), wv = random_tensor(rng, {6, 3});
  const auto biased = model::attention_head(x, wq, wk, wv, ta::build_bias(ex), 0.0, ex.content_len());
  const auto plain = model::attention_head(x, wq, wk, wv, ta::TargetAwarenessBias({0, 0}, 10), 0.9, ex.content_len());
  EXPECT_EQ(values(biased), values(plain));
}

TEST(AttentionHead, GradcheckThroughFullHead) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 40);
    const auto ex = random_example(rng, 9, 20);
    const auto bias = ta::build_bias(ex);
    std::vector<T2> in{random_tensor(rng, {9, 4}), random_tensor(rng, {4, 2}), random_tensor(rng, {4, 2}),
                       random_tensor(rng, {4, 2})};
    const auto w = random_tensor(rng, {2, 1}, -1, 1, false);
    for (double alpha : {0.0, 0.5, 1.0}) {
      const auto r = num::gradcheck(
          [&] {
            return num::sum(num::matmul(model::attention_head(in[0], in[1], in[2], in[3], bias, alpha, ex.content_len()), w));
          },
          std::span<T2>(in));
      EXPECT_TRUE(r.passed) << "seed " << seed << " alpha " << alpha << " rel " << r.max_rel_error;
    }
  }
}

TEST(Encode, OutputShapeForFuzzedConfigs) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    model::ModelConfig cfg;
    cfg.n_heads = pick(rng, 1, 3);
    cfg.d_model = cfg.n_heads * pick(rng, 1, 4);
    cfg.n_layers = pick(rng, 1, 3);
    cfg.d_ff = pick(rng, 1, 12);
    cfg.vocab_size = 20;
    cfg.max_len = pick(rng, 6, 14);
    cfg.n_labels = pick(rng, 2, 5);
    cfg.seed = i;
    const auto params = model::ModelParams<float>::init(cfg);
    const auto batch = random_batch(rng, cfg, pick(rng, 1, 5));
    const auto logits = model::encode(std::span<const text::TokenizedExample>(batch), params, ta::TargetAwarenessConfig{0.5});
    EXPECT_EQ(logits.shape(), (num::Shape{batch.size(), cfg.n_labels}));
  }
}

TEST(Encode, WrongSequenceLengthIsDimensionError) {
  std::mt19937_64 rng(6);
  const auto cfg = small_config();
  const auto params = model::ModelParams<float>::init(cfg);
  std::vector<text::TokenizedExample> batch{random_example(rng, cfg.max_len + 1, cfg.vocab_size)};
  EXPECT_THROW(model::encode(std::span<const text::TokenizedExample>(batch), params, {}), stanceformer::DimensionError);
}

TEST(Encode, EvalModeIsDeterministic) {
  std::mt19937_64 rng(7);
  const auto cfg = small_config();
  const auto params = lively_params<float>(cfg, 1);
  const auto batch = random_batch(rng, cfg, 4);
  const ta::TargetAwarenessConfig ta_cfg{0.8};
  EXPECT_EQ(values(model::encode(std::span<const text::TokenizedExample>(batch), params, ta_cfg)),
            values(model::encode(std::span<const text::TokenizedExample>(batch), params, ta_cfg)));
}

TEST(Encode, AlphaZeroEqualsDisabledBiasExactly) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto cfg = small_config(static_cast<std::uint64_t>(i));
    const auto params = lively_params<float>(cfg, static_cast<std::uint64_t>(i));
    const auto batch = random_batch(rng, cfg, 3);
    const std::span<const text::TokenizedExample> b(batch);
    const auto at_zero = values(model::encode(b, params, ta::TargetAwarenessConfig{0.0}));
    const auto nowhere = values(model::encode(b, params, {0.9, ta::Placement::sites({}), true}));
    const auto off_at_inference = values(model::encode(b, params, {0.9, ta::Placement::all(), false}));
    ASSERT_EQ(at_zero, nowhere);
    ASSERT_EQ(at_zero, off_at_inference);
    ASSERT_NE(at_zero, values(model::encode(b, params, ta::TargetAwarenessConfig{0.9})));
  }
}

TEST(Encode, PermutingBatchPermutesLogits) {
  std::mt19937_64 rng(9);
  const auto cfg = small_config();
  const auto params = lively_params<double>(cfg, 2);
  auto batch = random_batch(rng, cfg, 6);
  const ta::TargetAwarenessConfig ta_cfg{0.7};
  const auto base = model::encode(std::span<const text::TokenizedExample>(batch), params, ta_cfg);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  std::vector<text::TokenizedExample> shuffled;
  for (auto p : perm) shuffled.push_back(batch[p]);
  const auto out = model::encode(std::span<const text::TokenizedExample>(shuffled), params, ta_cfg);
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < cfg.n_labels; ++c)
      EXPECT_NEAR(out[i * cfg.n_labels + c], base[perm[i] * cfg.n_labels + c], 1e-12);
}

TEST(Encode, ExtraPaddingLeavesLogitsUnchanged) {
  std::mt19937_64 rng(10);
  auto long_cfg = small_config();
  long_cfg.max_len = 20;
  const auto long_params = lively_params<float>(long_cfg, 3);
  auto short_cfg = long_cfg;
  short_cfg.max_len = 12;
  auto short_params = long_params.clone<float>();
  short_params.config = short_cfg;
  const auto pos = long_params.position_embedding.data();
  short_params.position_embedding = num::Tensor<float>::from(
      {short_cfg.max_len, short_cfg.d_model},
      std::vector<float>(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(short_cfg.max_len * short_cfg.d_model)),
      true);

  const ta::TargetAwarenessConfig ta_cfg{0.6};
  for (int i = 0; i < 10; ++i) {
    const auto ex = random_example(rng, short_cfg.max_len, short_cfg.vocab_size);
    std::vector<text::TokenId> text_ids(ex.ids.begin() + 1, ex.ids.begin() + static_cast<std::ptrdiff_t>(ex.text_span.end));
    std::vector<text::TokenId> target_ids(ex.ids.begin() + static_cast<std::ptrdiff_t>(ex.target_span.begin),
                                          ex.ids.begin() + static_cast<std::ptrdiff_t>(ex.target_span.end));
    const auto padded = text::assemble(text_ids, target_ids, long_cfg.max_len);
    const auto a = model::encode(std::span<const text::TokenizedExample>(&ex, 1), short_params, ta_cfg);
    const auto b = model::encode(std::span<const text::TokenizedExample>(&padded, 1), long_params, ta_cfg);
    for (std::size_t c = 0; c < short_cfg.n_labels; ++c) EXPECT_NEAR(a[c], b[c], 1e-5);
  }
}

TEST(Encode, TargetTokenChangesOutputAndEmptyBlockIsBaseline) {
  std::mt19937_64 rng(11);
  const auto cfg = small_config();
  const auto params = lively_params<double>(cfg, 4);
  auto ex = random_example(rng, cfg.max_len, cfg.vocab_size);
  const ta::TargetAwarenessConfig ta_cfg{0.8};
  const auto base = values(model::encode(std::span<const text::TokenizedExample>(&ex, 1), params, ta_cfg));
  auto changed = ex;
  auto& tok = changed.ids[changed.target_span.begin];
  tok = tok == 4 ? 5 : 4;
  EXPECT_NE(base, values(model::encode(std::span<const text::TokenizedExample>(&changed, 1), params, ta_cfg)));

  auto empty = ex;
  empty.target_span = {empty.target_span.begin, empty.target_span.begin};
  EXPECT_EQ(values(model::encode(std::span<const text::TokenizedExample>(&empty, 1), params, ta_cfg)),
            values(model::encode(std::span<const text::TokenizedExample>(&ex, 1), params, ta::TargetAwarenessConfig{0.0})));
}

class ModelGradcheck : public ::testing::TestWithParam<int> {};

TEST_P(ModelGradcheck, TwoLayerLoss) {
  auto cfg = small_config(static_cast<std::uint64_t>(GetParam()));
  cfg.max_len = 8;
  cfg.vocab_size = 12;
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) + 500);
  const auto batch = random_batch(rng, cfg, 2);
  for (double alpha : {0.0, 0.7}) {
    auto params = lively_params<double>(cfg, static_cast<std::uint64_t>(GetParam()));
    auto inputs = params.tensors();
    const ta::TargetAwarenessConfig ta_cfg{alpha};
    std::vector<std::int32_t> labels{batch[0].label_id, batch[1].label_id};
    const auto r = num::gradcheck(
        [&] {
          return num::cross_entropy(model::encode(std::span<const text::TokenizedExample>(batch), params, ta_cfg),
                                    std::span<const std::int32_t>(labels));
        },
        std::span<T2>(inputs));
    EXPECT_TRUE(r.passed) << "alpha " << alpha << " rel " << r.max_rel_error << " input " << r.worst_input;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, ModelGradcheck, ::testing::Range(0, 3));

TEST(AttentionMaps, CountRowSumsAndMassShift) {
  std::mt19937_64 rng(14);
  const auto cfg = small_config();
  const auto params = lively_params<float>(cfg, 5);
  for (int i = 0; i < 10; ++i) {
    const auto ex = random_example(rng, cfg.max_len, cfg.vocab_size);
    const auto at0 = model::attention_maps(ex, params, ta::TargetAwarenessConfig{0.0});
    const auto at1 = model::attention_maps(ex, params, ta::TargetAwarenessConfig{1.0});
    ASSERT_EQ(at0.size(), cfg.n_layers * cfg.n_heads);
    const std::size_t seq = ex.seq(), content = ex.content_len();
    for (const auto& m : at1) {
      for (std::size_t r = 0; r < seq; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < content; ++c) s += m.weights[r * seq + c];
        ASSERT_NEAR(s, 1.0, 1e-6);
        for (std::size_t c = content; c < seq; ++c) ASSERT_EQ(m.weights[r * seq + c], 0.0);
      }
    }
    // First-layer inputs are identical across the two runs, so the shift is
    // purely the bias there.
    for (std::size_t h = 0; h < cfg.n_heads; ++h)
      for (std::size_t r = ex.target_span.begin; r < ex.target_span.end; ++r)
        EXPECT_GT(ta::target_mass<double>(at1[h].weights, seq, r, ex.target_span),
                  ta::target_mass<double>(at0[h].weights, seq, r, ex.target_span));
  }
}

TEST(Checkpoint, RoundTripAndHashCheck) {
  testing_support::TempDir dir("ckpt");
  auto cfg = small_config(2);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < cfg.vocab_size - 4; ++i) words.push_back("w" + std::to_string(i));
  model::Checkpoint ck{lively_params<float>(cfg, 6), {0.4, ta::Placement::parse("0:1"), true},
                       {"AGAINST", "FAVOR", "NONE"}, text::Vocabulary::from_tokens(words)};
  const auto path = dir.path() / "ck.json";
  model::save_checkpoint(ck, path);
  const auto back = model::load_checkpoint(path);
  EXPECT_EQ(back.ta, ck.ta);
  EXPECT_EQ(back.labels, ck.labels);
  EXPECT_EQ(back.vocab, ck.vocab);
  EXPECT_EQ(back.params.config, ck.params.config);
  const auto a = ck.params.tensors(), b = back.params.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(values(a[i]), values(b[i]));

  auto j = model::checkpoint_to_json(ck);
  j["config"]["d_ff"] = 17;
  EXPECT_THROW(model::checkpoint_from_json(j), stanceformer::DataError);
}
