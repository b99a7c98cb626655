#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psnet/data.hpp"
#include "psnet/errors.hpp"
#include "psnet/heads.hpp"
#include "psnet/nn.hpp"
#include "psnet/optim.hpp"
#include "psnet/random.hpp"

namespace psnet {

struct TrainConfig {
  OptimizerSettings optimizer;
  std::optional<StepLR> schedule; // base_lr is taken from optimizer.lr
  Index batch_size = 100;
  int epochs = 50;
  std::uint64_t seed = 1;
  int eval_every = 1;

  void validate() const {
    optimizer.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (schedule) {
      if (schedule->step_size < 1) throw ConfigError("step_size must be >= 1");
      if (!(schedule->gamma > 0.0)) throw ConfigError("gamma must be > 0");
    }
  }

  double lr_at(int epoch) const {
    if (!schedule) return optimizer.lr;
    StepLR s = *schedule;
    s.base_lr = optimizer.lr;
    return s.lr_at(epoch);
  }
};

struct EpochMetrics {
  int epoch = 0; // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> test_acc; // empty on epochs skipped by eval_every
  double lr = 0.0;
  double seconds = 0.0;
};

/// Metrics CSV, appended and flushed one row per epoch.
class MetricsCsv {
public:
  static constexpr const char* kHeader = "epoch,train_loss,train_acc,test_acc,lr,seconds";

  explicit MetricsCsv(const std::filesystem::path& path);
  void append(const EpochMetrics& m);

  /// The row as written, without the trailing newline.
  static std::string format_row(const EpochMetrics& m);

private:
  std::ofstream out_;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Eval-mode pass over a dataset. Does not touch the head or any rng.
template <typename Scalar>
EvalResult evaluate(const Head<Scalar>& head, const Dataset& ds, Index batch_size = 1000) {
  if (ds.dim() != head.config().input_dim) {
    throw ShapeError("dataset '" + ds.name + "' has D=" + std::to_string(ds.dim()) + ", head expects D=" +
                     std::to_string(head.config().input_dim));
  }
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (Index begin = 0; begin < ds.size(); begin += batch_size) {
    const Index rows = std::min(batch_size, ds.size() - begin);
    const Matrix<Scalar> x = ds.features.middleRows(begin, rows).template cast<Scalar>();
    const std::span<const Label> y(ds.labels.data() + begin, static_cast<std::size_t>(rows));
    const Matrix<Scalar> logits = head.infer(x);
    loss_sum += nll_loss<Scalar>(logits, y).loss * static_cast<double>(rows);
    const auto pred = argmax_rows(logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i] ? 1 : 0;
  }
  const auto n = static_cast<double>(ds.size());
  return {static_cast<double>(correct) / n, loss_sum / n};
}

template <typename Scalar>
struct FitResult {
  double best_test_acc = 0.0;
  int best_epoch = 0;
  std::vector<EpochMetrics> metrics;
  Head<Scalar> best;
};

/// Throws ConfigError when the datasets do not fit the head.
void check_fit_inputs(const HeadConfig& head, const Dataset& train, const Dataset& test);

/// Trains with per-batch zero_grads/forward/nll/backward/step and an epoch-level schedule,
/// evaluates on `test` every eval_every epochs (and at the last), and keeps the head from
/// the epoch with the highest test accuracy.
///
/// Randomness: dropout draws from the run seed's Dropout substream; epoch e shuffles with
/// the Shuffle substream indexed by e. The head's initial weights are the caller's.
template <typename Scalar>
FitResult<Scalar> fit(Head<Scalar>& head, const Dataset& train, const Dataset& test, const TrainConfig& config,
                      MetricsCsv* sink = nullptr, const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  config.validate();
  check_fit_inputs(head.config(), train, test);

  Optimizer<Scalar> optimizer(config.optimizer);
  const auto params = head.parameters();
  const Rng root(config.seed);
  Rng dropout_rng = root.substream(Stream::Dropout);

  FitResult<Scalar> result{-1.0, 0, {}, head.template cast<Scalar>()};
  for (int e = 0; e < config.epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = e + 1;
    m.lr = config.lr_at(e);
    optimizer.set_lr(m.lr);
    head.set_mode(Mode::Train);

    Rng shuffle = root.substream(Stream::Shuffle, static_cast<std::uint64_t>(e));
    const BatchPlan plan = make_batches(static_cast<std::size_t>(train.size()), config.batch_size, shuffle);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    iterate(train, plan, [&](const Batch& b) {
      const Matrix<Scalar> x = b.features.template cast<Scalar>();
      head.zero_grads();
      const Matrix<Scalar> logits = head.forward(x, &dropout_rng);
      const auto loss = nll_loss<Scalar>(logits, b.labels);
      head.backward(loss.grad_logits);
      optimizer.step(params);
      loss_sum += loss.loss * static_cast<double>(b.labels.size());
      const auto pred = argmax_rows(logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i] ? 1 : 0;
    });
    m.train_loss = loss_sum / static_cast<double>(train.size());
    m.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());

    head.set_mode(Mode::Eval);
    if ((e + 1) % config.eval_every == 0 || e + 1 == config.epochs) {
      m.test_acc = evaluate(head, test).accuracy;
      if (*m.test_acc > result.best_test_acc) {
        result.best_test_acc = *m.test_acc;
        result.best_epoch = m.epoch;
        result.best = head.template cast<Scalar>();
      }
    }
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.metrics.push_back(m);
    if (sink) sink->append(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

/// PSNC checkpoint layout (little-endian):
///   "PSNC" | u16 version=1 | u8 variant | u32 D | u32 H | u16 L | u32 C | f32 dropout
///   then each hidden layer's W (row-major) and b, then the classifier's, all as f32.
inline constexpr std::uint16_t kPsncVersion = 1;
inline constexpr std::size_t kPsncHeaderBytes = 4 + 2 + 1 + 4 + 4 + 2 + 4 + 4;

std::vector<std::uint8_t> encode_checkpoint(const Head<float>& head);
Head<float> decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

template <typename Scalar>
void save_checkpoint(const Head<Scalar>& head, const std::filesystem::path& path) {
  if constexpr (std::is_same_v<Scalar, float>) {
    write_bytes(path, encode_checkpoint(head));
  } else {
    write_bytes(path, encode_checkpoint(head.template cast<float>()));
  }
}

template <typename Scalar = float>
Head<Scalar> load_checkpoint(const std::filesystem::path& path) {
  const Head<float> head = decode_checkpoint(read_file_bytes(path));
  if constexpr (std::is_same_v<Scalar, float>) {
    return head;
  } else {
    return head.template cast<Scalar>();
  }
}

} // namespace psnet
