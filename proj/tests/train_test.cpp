#include <cstring>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "psnet/train.hpp"
#include "support.hpp"

using namespace psnet;
using namespace psnet::testing;

namespace {

HeadConfig small_head(Variant v, Index dim, Index classes) {
  HeadConfig c;
  c.variant = v;
  c.input_dim = dim;
  c.hidden = 8;
  c.depth = 2;
  c.classes = classes;
  c.dropout = 0.0;
  return c;
}

TrainConfig quick_config(int epochs) {
  TrainConfig t;
  t.optimizer.lr = 0.05;
  t.batch_size = 16;
  t.epochs = epochs;
  t.seed = 3;
  return t;
}

} // namespace

TEST(Fit, SeparableToyReachesPerfectAccuracy) {
  Rng rng(1);
  const Dataset train = gaussian_blobs(200, 6, 3, 8.0, rng);
  const Dataset test = gaussian_blobs(60, 6, 3, 8.0, rng);
  for (auto v : {Variant::Plain, Variant::Spinal, Variant::Progressive}) {
    Rng init(2);
    auto head = Head<float>::build(small_head(v, 6, 3), init);
    const auto result = fit(head, train, test, quick_config(10));
    EXPECT_EQ(result.best_test_acc, 1.0) << to_string(v);
    EXPECT_EQ(result.metrics.back().train_acc, 1.0) << to_string(v);
    EXPECT_EQ(evaluate(result.best, test).accuracy, result.best_test_acc);
  }
}

TEST(Fit, BestEpochIsTheArgmaxOfTestAccuracy) {
  Rng rng(4);
  const Dataset train = gaussian_blobs(120, 10, 4, 1.0, rng);
  const Dataset test = gaussian_blobs(80, 10, 4, 1.0, rng);
  Rng init(5);
  auto head = Head<double>::build(small_head(Variant::Progressive, 10, 4), init);
  const auto result = fit(head, train, test, quick_config(8));
  ASSERT_EQ(result.metrics.size(), 8u);
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& m : result.metrics) {
    ASSERT_TRUE(m.test_acc.has_value());
    if (*m.test_acc > best) {
      best = *m.test_acc;
      best_epoch = m.epoch;
    }
  }
  EXPECT_EQ(result.best_test_acc, best);
  EXPECT_EQ(result.best_epoch, best_epoch);
  EXPECT_EQ(evaluate(result.best, test).accuracy, best);
}

TEST(Fit, SameSeedIsBitwiseDeterministic) {
  Rng rng(6);
  const Dataset train = gaussian_blobs(90, 5, 3, 2.0, rng);
  const Dataset test = gaussian_blobs(30, 5, 3, 2.0, rng);
  auto run = [&](std::uint64_t seed) {
    auto cfg = small_head(Variant::Spinal, 5, 3);
    cfg.dropout = 0.3;
    Rng init(seed);
    auto head = Head<float>::build(cfg, init);
    auto tc = quick_config(3);
    tc.seed = seed;
    fit(head, train, test, tc);
    return encode_checkpoint(head);
  };
  EXPECT_EQ(run(11), run(11));
  EXPECT_NE(run(11), run(12));
}

TEST(Fit, EvalEveryLeavesGaps) {
  Rng rng(7);
  const Dataset ds = gaussian_blobs(40, 4, 2, 3.0, rng);
  Rng init(8);
  auto head = Head<float>::build(small_head(Variant::Plain, 4, 2), init);
  auto tc = quick_config(5);
  tc.eval_every = 2;
  const auto result = fit(head, ds, ds, tc);
  EXPECT_FALSE(result.metrics[0].test_acc);
  EXPECT_TRUE(result.metrics[1].test_acc);
  EXPECT_FALSE(result.metrics[2].test_acc);
  EXPECT_TRUE(result.metrics[3].test_acc);
  EXPECT_TRUE(result.metrics[4].test_acc); // the last epoch is always evaluated
}

TEST(Fit, ScheduleSetsPerEpochLr) {
  Rng rng(9);
  const Dataset ds = gaussian_blobs(20, 3, 2, 3.0, rng);
  Rng init(10);
  auto head = Head<float>::build(small_head(Variant::Plain, 3, 2), init);
  auto tc = quick_config(5);
  tc.optimizer.lr = 0.1;
  tc.schedule = StepLR{0.0, 2, 0.5};
  const auto result = fit(head, ds, ds, tc);
  const double want[] = {0.1, 0.1, 0.05, 0.05, 0.025};
  for (std::size_t e = 0; e < 5; ++e) EXPECT_NEAR(result.metrics[e].lr, want[e], 1e-15);
}

TEST(Fit, RejectsMismatchedData) {
  Rng rng(11);
  const Dataset ds = gaussian_blobs(20, 3, 2, 3.0, rng);
  Head<float> head(small_head(Variant::Plain, 4, 2));
  EXPECT_THROW(fit(head, ds, ds, quick_config(1)), ConfigError);
  const Dataset wide = gaussian_blobs(20, 3, 3, 3.0, rng);
  Head<float> narrow(small_head(Variant::Plain, 3, 2));
  EXPECT_THROW(fit(narrow, wide, wide, quick_config(1)), ConfigError);
}

TEST(Evaluate, UntrainedHeadIsNearChance) {
  // 10^4 uniform labels; chance accuracy 0.1 with a binomial sd of 0.003.
  Rng rng(12);
  Dataset ds;
  ds.features.resize(10000, 20);
  for (Index i = 0; i < ds.features.size(); ++i) ds.features.data()[i] = static_cast<float>(rng.normal());
  for (Index i = 0; i < 10000; ++i) ds.labels.push_back(static_cast<Label>(rng.below(10)));
  ds.n_classes = 10;
  HeadConfig cfg = small_head(Variant::Progressive, 20, 10);
  Rng init(13);
  const auto head = Head<float>::build(cfg, init);
  const auto before = encode_checkpoint(head);
  const auto r = evaluate(head, ds);
  EXPECT_GE(r.accuracy, 0.07);
  EXPECT_LE(r.accuracy, 0.13);
  EXPECT_EQ(encode_checkpoint(head), before);
  const auto again = evaluate(head, ds, 333);
  EXPECT_EQ(again.accuracy, r.accuracy);
  EXPECT_NEAR(again.mean_loss, r.mean_loss, 1e-9);
}

TEST(Evaluate, ZeroHeadHasChanceLoss) {
  Rng rng(14);
  const Dataset ds = gaussian_blobs(50, 4, 5, 1.0, rng);
  const Head<double> head(small_head(Variant::Spinal, 4, 5));
  const auto r = evaluate(head, ds);
  EXPECT_NEAR(r.mean_loss, std::log(5.0), 1e-12);
  EXPECT_EQ(r.accuracy, 0.2); // every row predicts class 0
}

TEST(Checkpoint, RoundTripGivesBitwiseLogits) {
  Rng rng(15);
  for (auto v : {Variant::Plain, Variant::Spinal, Variant::Progressive}) {
    HeadConfig cfg = small_head(v, 7, 4);
    cfg.dropout = 0.2; // not exact in f32; the decoded config must still compare equal
    const auto head = Head<float>::build(cfg, rng);
    const auto path = scratch_dir("ckpt") / "h.psnc";
    save_checkpoint(head, path);
    EXPECT_EQ(std::filesystem::file_size(path), kPsncHeaderBytes + 4 * static_cast<std::size_t>(param_count(cfg)));
    const auto back = load_checkpoint(path);
    EXPECT_EQ(back.config(), cfg);
    EXPECT_EQ(back.mode(), Mode::Eval);
    Matrix<float> x(5, 7);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
    const Matrix<float> a = head.infer(x), b = back.infer(x);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())), 0);
  }
}

TEST(Checkpoint, HeaderLayout) {
  HeadConfig cfg = small_head(Variant::Progressive, 3, 2);
  cfg.depth = 1;
  cfg.hidden = 1;
  const auto bytes = encode_checkpoint(Head<float>(cfg));
  ASSERT_GE(bytes.size(), kPsncHeaderBytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PSNC");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 2); // progressive
  EXPECT_EQ(bytes[7], 3); // D
  EXPECT_EQ(bytes[11], 1); // H
  EXPECT_EQ(bytes[15], 1); // L
  EXPECT_EQ(bytes[17], 2); // C
}

TEST(Checkpoint, RejectsTampering) {
  Rng rng(16);
  const auto bytes = encode_checkpoint(Head<float>::build(small_head(Variant::Plain, 4, 3), rng));
  auto variant = bytes;
  variant[6] = 7;
  EXPECT_THROW(decode_checkpoint(variant), FormatError);
  auto magic = bytes;
  magic[1] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_checkpoint(version), FormatError);
  auto shorter = bytes;
  shorter.pop_back();
  EXPECT_THROW(decode_checkpoint(shorter), FormatError);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_checkpoint(longer), FormatError);
  auto hidden = bytes;
  hidden[11] = 0; // H=0
  EXPECT_THROW(decode_checkpoint(hidden), FormatError);
  EXPECT_NO_THROW(decode_checkpoint(bytes));
}

TEST(Checkpoint, DoubleHeadStoresAsFloat) {
  Rng rng(17);
  const auto head = Head<double>::build(small_head(Variant::Spinal, 5, 3), rng);
  const auto path = scratch_dir("ckpt64") / "h.psnc";
  save_checkpoint(head, path);
  const auto back = load_checkpoint<double>(path);
  EXPECT_EQ(encode_checkpoint(back.cast<float>()), encode_checkpoint(head.cast<float>()));
}

TEST(MetricsCsvTest, FormatAndFlush) {
  const auto path = scratch_dir("csv") / "metrics.csv";
  {
    MetricsCsv csv(path);
    EpochMetrics m{1, 0.5, 0.75, 0.8, 0.001, 1.25};
    csv.append(m);
    EXPECT_EQ(slurp(path), std::string(MetricsCsv::kHeader) + "\n1,0.5,0.75,0.8,0.001,1.250\n");
    m.epoch = 2;
    m.test_acc.reset();
    csv.append(m);
  }
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[2], "2,0.5,0.75,,0.001,1.250");
}
