#include "psnet/gradcheck.hpp"

#include <cstdio>
#include <iomanip>

namespace psnet {
namespace {

long double extended_loss(const Head<double>& head, const Matrix<long double>& x, std::span<const Label> labels) {
  const Matrix<long double> logits = head.cast<long double>().infer(x);
  long double total = 0.0L;
  for (Index i = 0; i < logits.rows(); ++i) {
    const long double peak = logits.row(i).maxCoeff();
    const long double sum = (logits.row(i).array() - peak).exp().sum();
    total += std::log(sum) + peak - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<long double>(logits.rows());
}

} // namespace

GradReport check_head(HeadConfig config, const GradcheckOptions& options) {
  config.dropout = 0.0;
  config.validate();
  if (options.batch < 1) {
    throw ConfigError("gradcheck batch must be >= 1");
  }
  const Index total = param_count(config);
  if (total > kMaxGradcheckParams) {
    throw SizeError("gradcheck refuses " + std::to_string(total) + " parameters (limit " +
                    std::to_string(kMaxGradcheckParams) + ")");
  }

  Rng rng(options.seed);
  Rng init = rng.substream(Stream::Init);
  Head<double> head = Head<double>::build(config, init);
  // Zero biases put pre-activations exactly on the ReLU kink whenever an earlier layer is
  // dead for a sample; check at a generic point instead.
  for (const auto& param : head.parameters()) {
    if (param.name.ends_with(".bias")) {
      for (Index i = 0; i < param.size(); ++i) param.value[i] = 0.1 * init.normal();
    }
  }
  if (options.fault_layer) head.inject_routing_fault(*options.fault_layer);

  Rng data = rng.substream(Stream::Synthetic);
  Matrix<double> x(options.batch, config.input_dim);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = data.normal();
  std::vector<Label> labels(static_cast<std::size_t>(options.batch));
  for (auto& y : labels) y = static_cast<Label>(data.below(static_cast<std::uint64_t>(config.classes)));

  head.set_mode(Mode::Train);
  head.zero_grads();
  const Matrix<double> logits = head.forward(x, nullptr);
  head.backward(nll_loss<double>(logits, labels).grad_logits);

  const Matrix<long double> x_ext = x.cast<long double>();
  auto loss = [&] { return extended_loss(head, x_ext, labels); };

  GradReport report;
  report.config = config;
  report.batch = options.batch;
  report.tolerance = options.tolerance;
  const auto params = head.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& param = params[p];
    const std::vector<double> analytic(param.grad, param.grad + param.size());
    const auto numeric = numeric_gradient(loss, std::span<double>(param.value, static_cast<std::size_t>(param.size())),
                                          options.step);
    ParamReport r;
    r.name = param.name;
    r.layer = static_cast<Index>(p / 2) + 1;
    r.count = param.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double e = relative_error(analytic[i], numeric[i]);
      sum += e;
      if (e > r.max_rel || i == 0) {
        r.max_rel = e;
        r.worst_index = static_cast<Index>(i);
        r.worst_analytic = analytic[i];
        r.worst_numeric = numeric[i];
      }
    }
    r.mean_rel = sum / static_cast<double>(analytic.size());
    if (r.max_rel > report.max_rel || p == 0) {
      report.max_rel = r.max_rel;
      report.worst_param = p;
    }
    report.params.push_back(std::move(r));
  }
  report.pass = report.max_rel < report.tolerance;
  return report;
}

void print_report(std::ostream& os, const GradReport& report) {
  const auto& c = report.config;
  os << "gradcheck " << to_string(c.variant) << " D=" << c.input_dim << " H=" << c.hidden << " L=" << c.depth
     << " C=" << c.classes << " batch=" << report.batch << " params=" << param_count(c) << "\n";
  os << std::left << std::setw(20) << "parameter" << std::right << std::setw(8) << "count" << std::setw(14)
     << "max_rel" << std::setw(14) << "mean_rel" << std::setw(8) << "worst" << "\n";
  for (const auto& p : report.params) {
    os << std::left << std::setw(20) << p.name << std::right << std::setw(8) << p.count << std::setw(14)
       << std::scientific << std::setprecision(3) << p.max_rel << std::setw(14) << p.mean_rel << std::setw(8)
       << p.worst_index << "\n"
       << std::defaultfloat;
  }
  os << "max_rel=" << std::scientific << std::setprecision(3) << report.max_rel << std::defaultfloat
     << " worst=" << report.worst().name << "[" << report.worst().worst_index << "]"
     << " tolerance=" << report.tolerance << " " << (report.pass ? "PASS" : "FAIL") << "\n";
}

void write_report_csv(std::ostream& os, const GradReport& report) {
  os << "parameter,layer,count,max_rel,mean_rel,worst_index,worst_analytic,worst_numeric\n";
  char buf[256];
  for (const auto& p : report.params) {
    std::snprintf(buf, sizeof buf, "%s,%lld,%lld,%.6e,%.6e,%lld,%.17g,%.17g\n", p.name.c_str(),
                  static_cast<long long>(p.layer), static_cast<long long>(p.count), p.max_rel, p.mean_rel,
                  static_cast<long long>(p.worst_index), p.worst_analytic, p.worst_numeric);
    os << buf;
  }
}

} // namespace psnet
