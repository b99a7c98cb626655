#include <gtest/gtest.h>

#include "psnet/heads.hpp"
#include "psnet/train.hpp"

using namespace psnet;

namespace {

using Mat = Matrix<double>;

Mat random_matrix(Rng& rng, Index r, Index c) {
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<Index> in_dims(const Head<double>& h) {
  std::vector<Index> out;
  for (const auto& l : h.hidden_layers()) out.push_back(l.in_dim());
  return out;
}

HeadConfig mnist_dims(Variant v) { return HeadConfig{v, 784, 128, 6, 10, 0.2}; }

// Per-layer (in, out) sums, written out independently of param_count's closed forms.
Index summed_layer_params(const HeadConfig& c) {
  Index total = 0;
  Index classifier_in = 0;
  for (Index k = 1; k <= c.depth; ++k) {
    Index in = 0;
    if (c.variant == Variant::Progressive) in = c.input_dim + (k - 1) * c.hidden;
    if (c.variant == Variant::Plain) in = k == 1 ? c.input_dim : c.hidden;
    if (c.variant == Variant::Spinal) {
      const Index half = (k % 2 == 1) ? c.input_dim / 2 : c.input_dim - c.input_dim / 2;
      in = half + (k == 1 ? 0 : c.hidden);
    }
    total += in * c.hidden + c.hidden;
  }
  if (c.variant == Variant::Progressive) classifier_in = c.input_dim + c.depth * c.hidden;
  if (c.variant == Variant::Plain) classifier_in = c.hidden;
  if (c.variant == Variant::Spinal) classifier_in = c.depth * c.hidden;
  return total + classifier_in * c.classes + c.classes;
}

HeadConfig random_config(Rng& rng, Variant v) {
  return HeadConfig{v, 2 + static_cast<Index>(rng.below(50)), 1 + static_cast<Index>(rng.below(20)),
                    1 + static_cast<Index>(rng.below(7)), 2 + static_cast<Index>(rng.below(12)), 0.0};
}

constexpr Variant kAll[] = {Variant::Plain, Variant::Spinal, Variant::Progressive};

} // namespace

TEST(HeadConfig, Validation) {
  EXPECT_NO_THROW(mnist_dims(Variant::Progressive).validate());
  EXPECT_THROW((HeadConfig{Variant::Plain, 784, 0, 6, 10, 0.2}.validate()), ConfigError);
  EXPECT_THROW((HeadConfig{Variant::Plain, 784, 128, 0, 10, 0.2}.validate()), ConfigError);
  EXPECT_THROW((HeadConfig{Variant::Plain, 784, 128, 6, 1, 0.2}.validate()), ConfigError);
  EXPECT_THROW((HeadConfig{Variant::Plain, 784, 128, 6, 10, 1.0}.validate()), ConfigError);
  EXPECT_THROW((HeadConfig{Variant::Spinal, 1, 4, 2, 3, 0.0}.validate()), ConfigError);
  EXPECT_NO_THROW((HeadConfig{Variant::Progressive, 1, 4, 2, 3, 0.0}.validate()));
  EXPECT_THROW(parse_variant("progresive"), ConfigError);
}

TEST(BuildHead, ProgressiveMnistShapes) {
  Rng rng(1);
  const auto head = Head<double>::build(mnist_dims(Variant::Progressive), rng);
  EXPECT_EQ(in_dims(head), (std::vector<Index>{784, 912, 1040, 1168, 1296, 1424}));
  EXPECT_EQ(head.classifier().in_dim(), 1552);
  EXPECT_EQ(head.classifier().out_dim(), 10);
  for (const auto& l : head.hidden_layers()) EXPECT_EQ(l.out_dim(), 128);
}

TEST(BuildHead, PlainMnistShapes) {
  Rng rng(1);
  const auto head = Head<double>::build(mnist_dims(Variant::Plain), rng);
  EXPECT_EQ(in_dims(head), (std::vector<Index>{784, 128, 128, 128, 128, 128}));
  EXPECT_EQ(head.classifier().in_dim(), 128);
}

TEST(BuildHead, SpinalShapesWithOddInput) {
  Rng rng(1);
  const auto head = Head<double>::build(HeadConfig{Variant::Spinal, 7, 4, 4, 3, 0.0}, rng);
  // Half A = 3 columns, half B = 4 columns, alternating A, B, A, B.
  EXPECT_EQ(in_dims(head), (std::vector<Index>{3, 4 + 4, 3 + 4, 4 + 4}));
  EXPECT_EQ(head.classifier().in_dim(), 16);
}

TEST(BuildHead, ProgressiveSingleLayer) {
  Rng rng(1);
  const auto head = Head<double>::build(HeadConfig{Variant::Progressive, 20, 8, 1, 5, 0.0}, rng);
  EXPECT_EQ(in_dims(head), std::vector<Index>{20});
  EXPECT_EQ(head.classifier().in_dim(), 28);
}

TEST(BuildHead, DeterministicInitOrder) {
  Rng a(3), b(3);
  const auto h1 = Head<float>::build(HeadConfig{Variant::Progressive, 10, 4, 3, 3, 0.0}, a);
  const auto h2 = Head<float>::build(HeadConfig{Variant::Progressive, 10, 4, 3, 3, 0.0}, b);
  EXPECT_EQ(encode_checkpoint(h1), encode_checkpoint(h2));

  // Hidden layer 1 consumes the stream first.
  Rng c(3);
  const auto first = init_layer<float>(10, 4, c);
  EXPECT_EQ(first.weight(), h1.hidden_layers()[0].weight());
}

TEST(ParamCount, MnistDimsValues) {
  // 100480 + 116864 + 133248 + 149632 + 166016 + 182400 + 15530
  EXPECT_EQ(summed_layer_params(mnist_dims(Variant::Progressive)), 864170);
  EXPECT_EQ(param_count(mnist_dims(Variant::Progressive)), 864170);
  // 100480 + 5 * 16512 + 1290
  EXPECT_EQ(summed_layer_params(mnist_dims(Variant::Plain)), 184330);
  EXPECT_EQ(param_count(mnist_dims(Variant::Plain)), 184330);

  Rng rng(1);
  EXPECT_EQ(Head<float>::build(mnist_dims(Variant::Progressive), rng).enumerate_params(), 864170);
  EXPECT_EQ(Head<float>::build(mnist_dims(Variant::Plain), rng).enumerate_params(), 184330);
  EXPECT_EQ(Head<float>::build(mnist_dims(Variant::Spinal), rng).enumerate_params(), param_count(mnist_dims(Variant::Spinal)));
}

TEST(ParamCount, FormulaMatchesEnumerationRandomized) {
  Rng rng(2);
  for (Variant v : kAll) {
    for (int trial = 0; trial < 10; ++trial) {
      const HeadConfig c = random_config(rng, v);
      Head<float> head(c);
      EXPECT_EQ(param_count(c), head.enumerate_params()) << to_string(v);
      EXPECT_EQ(param_count(c), summed_layer_params(c)) << to_string(v);
      Index from_params = 0;
      for (const auto& p : head.parameters()) from_params += p.size();
      EXPECT_EQ(from_params, param_count(c));
    }
  }
}

TEST(HeadForward, ShapeContract) {
  Rng rng(4);
  for (Variant v : kAll) {
    auto head = Head<double>::build(HeadConfig{v, 9, 5, 3, 4, 0.3}, rng);
    const Mat x = random_matrix(rng, 7, 9);
    const Mat logits = head.forward(x, &rng);
    EXPECT_EQ(logits.rows(), 7);
    EXPECT_EQ(logits.cols(), 4);
    EXPECT_THROW(head.forward(random_matrix(rng, 7, 8), &rng), ShapeError);
  }
}

TEST(HeadForward, ProgressiveDirectPathOnly) {
  Rng rng(5);
  auto head = Head<double>::build(HeadConfig{Variant::Progressive, 6, 4, 3, 3, 0.0}, rng);
  head.classifier().weight().bottomRows(3 * 4).setZero();
  const Mat x = random_matrix(rng, 5, 6);
  const Mat expected =
      (x * head.classifier().weight().topRows(6)).rowwise() + head.classifier().bias();
  EXPECT_TRUE(head.forward(x, nullptr).isApprox(expected, 1e-14));
}

TEST(HeadForward, EvalIsPureAndDeterministic) {
  Rng rng(6);
  for (Variant v : kAll) {
    auto head = Head<float>::build(HeadConfig{v, 10, 6, 4, 5, 0.5}, rng);
    head.set_mode(Mode::Eval);
    const Matrix<float> x = random_matrix(rng, 8, 10).cast<float>();
    const auto before = encode_checkpoint(head);
    const Matrix<float> a = head.infer(x);
    const Matrix<float> b = head.forward(x, nullptr);
    const Matrix<float> c = head.infer(x);
    EXPECT_EQ(std::memcmp(a.data(), c.data(), sizeof(float) * static_cast<std::size_t>(a.size())), 0);
    EXPECT_EQ(a, b);
    EXPECT_EQ(encode_checkpoint(head), before);
  }
}

TEST(HeadForward, TrainModeDropoutUsesRng) {
  Rng rng(7);
  auto head = Head<double>::build(HeadConfig{Variant::Progressive, 10, 6, 2, 3, 0.5}, rng);
  const Mat x = random_matrix(rng, 4, 10);
  EXPECT_THROW(head.forward(x, nullptr), StateError);
  Rng r1(1), r2(1), r3(2);
  EXPECT_EQ(head.forward(x, &r1), head.forward(x, &r2));
  EXPECT_NE(head.forward(x, &r1), head.forward(x, &r3));
}

TEST(HeadBackward, RequiresForward) {
  Head<double> head(HeadConfig{Variant::Plain, 4, 3, 2, 2, 0.0});
  EXPECT_THROW(head.backward(zeros<double>(1, 2)), StateError);
}

TEST(HeadBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(8);
  for (Variant v : kAll) {
    auto head = Head<double>::build(HeadConfig{v, 8, 4, 3, 3, 0.0}, rng);
    head.zero_grads();
    head.forward(random_matrix(rng, 5, 8), nullptr);
    head.backward(zeros<double>(5, 3));
    for (const auto& p : head.parameters()) EXPECT_TRUE(p.grads().isZero(0)) << p.name;
  }
}

// With hidden layers 2..L zeroed, the plain head's only route from the loss to layer 1 passes
// through zero weights; the progressive head still reaches layer 1 through the classifier.
TEST(HeadBackward, GradientHighwayStructure) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HeadConfig base{Variant::Plain, 10, 6, 4, 3, 0.0};
    Rng data(seed + 100);
    const Mat x = random_matrix(data, 4, 10);
    const std::vector<Label> labels = {0, 1, 2, 1};

    auto run = [&](Variant v) {
      HeadConfig c = base;
      c.variant = v;
      Rng init(seed);
      auto head = Head<double>::build(c, init);
      for (std::size_t k = 1; k < head.hidden_layers().size(); ++k) {
        head.hidden_layers()[k].weight().setZero();
        head.hidden_layers()[k].bias().setZero();
      }
      head.zero_grads();
      const Mat logits = head.forward(x, nullptr);
      head.backward(nll_loss<double>(logits, labels).grad_logits);
      return Mat(head.hidden_layers()[0].grad_weight());
    };

    const Mat plain = run(Variant::Plain);
    const Mat progressive = run(Variant::Progressive);
    EXPECT_TRUE(plain.isZero(0)) << "seed " << seed;
    EXPECT_GT(progressive.cwiseAbs().maxCoeff(), 0.0) << "seed " << seed;
  }
}

TEST(Predict, ArgmaxRules) {
  Rng rng(9);
  auto head = Head<double>::build(HeadConfig{Variant::Plain, 4, 3, 1, 5, 0.0}, rng);
  head.hidden_layers()[0].weight().setZero();
  head.classifier().weight().setZero();
  const Mat x = random_matrix(rng, 3, 4);
  EXPECT_EQ(head.predict(x), (std::vector<Label>{0, 0, 0}));

  head.classifier().bias() << 0, 0, 0, 1, 0;
  EXPECT_EQ(head.predict(x), (std::vector<Label>{3, 3, 3}));

  auto trained = Head<double>::build(HeadConfig{Variant::Progressive, 4, 3, 2, 5, 0.0}, rng);
  const auto before = trained.predict(x);
  trained.classifier().bias().array() += 123.0;
  EXPECT_EQ(trained.predict(x), before);
}

TEST(Head, CastPreservesWeights) {
  Rng rng(10);
  const auto h = Head<float>::build(HeadConfig{Variant::Spinal, 9, 4, 3, 3, 0.1}, rng);
  const auto back = h.cast<double>().cast<float>();
  EXPECT_EQ(encode_checkpoint(h), encode_checkpoint(back));
}
