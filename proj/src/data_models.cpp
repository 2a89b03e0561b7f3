#include "f3ast/data_models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "f3ast/rng.hpp"

namespace f3ast::data {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr const char* kDumpFormat = "f3ast-federated-dataset";
constexpr int kDumpVersion = 1;

ClientDataset take_rows(const ClientDataset& all, std::size_t begin, std::size_t end) {
  ClientDataset out;
  const auto b = static_cast<Eigen::Index>(begin);
  const auto count = static_cast<Eigen::Index>(end - begin);
  out.features = all.features.middleRows(b, count);
  if (!all.labels.empty()) out.labels.assign(all.labels.begin() + b, all.labels.begin() + b + count);
  if (all.targets.size() > 0) out.targets = all.targets.segment(b, count);
  return out;
}

/// Logits (rows = samples) of the softmax model on the selected rows.
Eigen::MatrixXd softmax_logits(const GlmSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& x) {
  Eigen::Map<const RowMajor> weights(w.data(), spec.num_classes, spec.dim);
  Eigen::MatrixXd logits = x * weights.transpose();
  if (spec.intercept) {
    Eigen::Map<const Eigen::RowVectorXd> bias(w.data() + spec.num_classes * spec.dim, spec.num_classes);
    logits.rowwise() += bias;
  }
  return logits;
}

Eigen::VectorXd linear_predictions(const GlmSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& x) {
  Eigen::VectorXd pred = x * w.head(spec.dim);
  if (spec.intercept) pred.array() += w(spec.dim);
  return pred;
}

/// Per-row loss (no regularizer) and correctness on the whole dataset.
void per_row(const GlmSpec& spec, const Eigen::VectorXd& w, const ClientDataset& data, std::vector<double>& loss,
             std::vector<int>& correct) {
  const std::size_t n = data.size();
  loss.assign(n, 0.0);
  correct.assign(n, 0);
  if (n == 0) return;
  if (spec.kind == TaskKind::Softmax) {
    const Eigen::MatrixXd logits = softmax_logits(spec, w, data.features);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = logits.row(static_cast<Eigen::Index>(i));
      Eigen::Index arg = 0;
      const double top = row.maxCoeff(&arg);
      const double lse = top + std::log((row.array() - top).exp().sum());
      loss[i] = lse - row(data.labels[i]);
      correct[i] = arg == data.labels[i] ? 1 : 0;
    }
  } else {
    const Eigen::VectorXd pred = linear_predictions(spec, w, data.features);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = pred(static_cast<Eigen::Index>(i)) - data.targets(static_cast<Eigen::Index>(i));
      loss[i] = 0.5 * r * r;
      correct[i] = std::abs(r) < 0.5 ? 1 : 0;
    }
  }
}

nlohmann::json dataset_to_json(const ClientDataset& d) {
  nlohmann::json j;
  j["rows"] = d.features.rows();
  j["cols"] = d.features.cols();
  std::vector<double> flat(static_cast<std::size_t>(d.features.size()));
  Eigen::Map<RowMajor>(flat.data(), d.features.rows(), d.features.cols()) = d.features;
  j["features"] = flat;
  j["labels"] = d.labels;
  j["targets"] = std::vector<double>(d.targets.data(), d.targets.data() + d.targets.size());
  return j;
}

ClientDataset dataset_from_json(const nlohmann::json& j) {
  ClientDataset d;
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("features").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw InvalidInputError("dataset dump: feature size mismatch");
  d.features = Eigen::Map<const RowMajor>(flat.data(), rows, cols);
  d.labels = j.at("labels").get<std::vector<int>>();
  const auto targets = j.at("targets").get<std::vector<double>>();
  d.targets = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  return d;
}

}  // namespace

std::string_view to_string(TaskKind kind) { return kind == TaskKind::Softmax ? "softmax" : "least_squares"; }

TaskKind parse_task_kind(std::string_view name) {
  if (name == "softmax") return TaskKind::Softmax;
  if (name == "least_squares") return TaskKind::LeastSquares;
  throw InvalidInputError("unknown task '" + std::string(name) + "'");
}

std::size_t validation_count(std::size_t n, double fraction) {
  if (n < 2) throw InvalidInputError("a client needs at least two samples to split");
  const auto v = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(v, 1, n - 1);
}

ClientData split_client(const ClientDataset& all, double validation_fraction) {
  const std::size_t n = all.size();
  const std::size_t val = validation_count(n, validation_fraction);
  return {take_rows(all, 0, n - val), take_rows(all, n - val, n)};
}

std::vector<double> weights_from_sizes(const std::vector<ClientData>& clients) {
  double total = 0.0;
  for (const auto& c : clients) total += static_cast<double>(c.size());
  std::vector<double> p;
  p.reserve(clients.size());
  for (const auto& c : clients) p.push_back(static_cast<double>(c.size()) / total);
  return p;
}

FederatedDataset generate_synthetic_iid(std::uint64_t seed, const SyntheticIidOptions& options) {
  if (options.num_clients == 0 || options.num_samples % options.num_clients != 0)
    throw InvalidInputError("samples must split evenly among clients");
  Rng rng = make_stream(seed, Stream::Data);
  const auto d = static_cast<Eigen::Index>(options.dim);
  const auto n = static_cast<Eigen::Index>(options.num_samples);

  Eigen::VectorXd beta(d);
  for (Eigen::Index j = 0; j < d; ++j) beta(j) = standard_normal(rng);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = standard_normal(rng);
  }
  Eigen::VectorXd y = (x * beta).array().round();

  std::vector<int> labels;
  if (options.task == TaskKind::Softmax) {
    std::vector<double> sorted(y.data(), y.data() + y.size());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    for (int c = 1; c < options.num_classes; ++c) {
      edges.push_back(sorted[static_cast<std::size_t>(c) * sorted.size() / static_cast<std::size_t>(options.num_classes)]);
    }
    labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      labels[static_cast<std::size_t>(i)] =
          static_cast<int>(std::upper_bound(edges.begin(), edges.end(), y(i)) - edges.begin());
    }
  }

  FederatedDataset out;
  out.task = options.task;
  out.num_classes = options.task == TaskKind::Softmax ? options.num_classes : 1;
  out.dim = options.dim;
  out.generator = "synthetic_iid";
  out.seed = seed;
  const std::size_t per = options.num_samples / options.num_clients;
  for (std::size_t k = 0; k < options.num_clients; ++k) {
    ClientDataset all;
    const auto b = static_cast<Eigen::Index>(k * per);
    const auto m = static_cast<Eigen::Index>(per);
    all.features = x.middleRows(b, m);
    if (options.task == TaskKind::Softmax) {
      all.labels.assign(labels.begin() + b, labels.begin() + b + m);
    } else {
      all.targets = y.segment(b, m);
    }
    out.clients.push_back(split_client(all, options.validation_fraction));
  }
  out.weights = weights_from_sizes(out.clients);
  out.parameters_json = nlohmann::json{{"num_clients", options.num_clients},
                                       {"num_samples", options.num_samples},
                                       {"dim", options.dim},
                                       {"task", to_string(options.task)},
                                       {"num_classes", options.num_classes},
                                       {"validation_fraction", options.validation_fraction}}
                            .dump();
  return out;
}

FederatedDataset generate_synthetic_alpha(std::uint64_t seed, const SyntheticAlphaOptions& options) {
  if (options.alpha < 0.0 || options.beta < 0.0) throw InvalidInputError("alpha and beta must be >= 0");
  if (options.num_clients == 0 || options.dim < 1 || options.num_classes < 2)
    throw InvalidInputError("synthetic(alpha, beta) needs clients, dim >= 1 and >= 2 classes");
  Rng rng = make_stream(seed, Stream::Data);
  const std::size_t n_clients = options.num_clients;
  const auto d = static_cast<Eigen::Index>(options.dim);
  const auto c = static_cast<Eigen::Index>(options.num_classes);

  std::vector<std::size_t> sizes(n_clients, options.samples_per_client);
  if (options.samples_per_client == 0) {
    for (auto& s : sizes) s = static_cast<std::size_t>(std::exp(4.0 + 2.0 * standard_normal(rng))) + 50;
  }
  // One mean per class: a mean shared by every class would add the same
  // constant to all logits and leave the labels independent of alpha.
  std::vector<Eigen::VectorXd> mean_w(n_clients, Eigen::VectorXd(c));
  std::vector<double> mean_x_center(n_clients);
  for (auto& u : mean_w) {
    for (Eigen::Index i = 0; i < c; ++i) u(i) = options.alpha * standard_normal(rng);
  }
  for (auto& b : mean_x_center) b = options.beta * standard_normal(rng);

  Eigen::VectorXd stddev(d);
  for (Eigen::Index j = 0; j < d; ++j) stddev(j) = std::pow(static_cast<double>(j + 1), -0.6);

  FederatedDataset out;
  out.task = TaskKind::Softmax;
  out.num_classes = options.num_classes;
  out.dim = options.dim;
  out.generator = "synthetic_alpha";
  out.seed = seed;
  for (std::size_t k = 0; k < n_clients; ++k) {
    Eigen::VectorXd center(d);
    for (Eigen::Index j = 0; j < d; ++j) center(j) = mean_x_center[k] + standard_normal(rng);
    Eigen::MatrixXd w(c, d);
    for (Eigen::Index i = 0; i < c; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) w(i, j) = mean_w[k](i) + standard_normal(rng);
    }
    Eigen::VectorXd b(c);
    for (Eigen::Index i = 0; i < c; ++i) b(i) = mean_w[k](i) + standard_normal(rng);

    ClientDataset all;
    const auto m = static_cast<Eigen::Index>(sizes[k]);
    all.features.resize(m, d);
    all.labels.resize(sizes[k]);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) all.features(i, j) = center(j) + stddev(j) * standard_normal(rng);
      Eigen::VectorXd logits = w * all.features.row(i).transpose() + b;
      Eigen::Index arg = 0;
      logits.maxCoeff(&arg);
      all.labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    out.clients.push_back(split_client(all, options.validation_fraction));
  }
  out.weights = weights_from_sizes(out.clients);
  out.parameters_json = nlohmann::json{{"alpha", options.alpha},
                                       {"beta", options.beta},
                                       {"num_clients", options.num_clients},
                                       {"samples_per_client", options.samples_per_client},
                                       {"dim", options.dim},
                                       {"num_classes", options.num_classes},
                                       {"validation_fraction", options.validation_fraction}}
                            .dump();
  return out;
}

void save_dataset(const FederatedDataset& dataset, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kDumpFormat;
  j["version"] = kDumpVersion;
  j["generator"] = dataset.generator;
  j["seed"] = dataset.seed;
  j["parameters"] = nlohmann::json::parse(dataset.parameters_json);
  j["task"] = to_string(dataset.task);
  j["num_classes"] = dataset.num_classes;
  j["dim"] = dataset.dim;
  j["weights"] = dataset.weights;
  auto& clients = j["clients"] = nlohmann::json::array();
  for (const auto& client : dataset.clients) {
    clients.push_back({{"train", dataset_to_json(client.train)}, {"validation", dataset_to_json(client.validation)}});
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write dataset dump " + path.string());
  os << j.dump() << '\n';
  if (!os) throw std::runtime_error("failed writing dataset dump " + path.string());
}

FederatedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read dataset dump " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError("dataset dump " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kDumpFormat || j.value("version", 0) != kDumpVersion)
    throw InvalidInputError("dataset dump " + path.string() + ": unrecognized format");
  FederatedDataset out;
  out.generator = j.at("generator").get<std::string>();
  out.seed = j.at("seed").get<std::uint64_t>();
  out.parameters_json = j.at("parameters").dump();
  out.task = parse_task_kind(j.at("task").get<std::string>());
  out.num_classes = j.at("num_classes").get<int>();
  out.dim = j.at("dim").get<int>();
  out.weights = j.at("weights").get<std::vector<double>>();
  for (const auto& cj : j.at("clients")) {
    out.clients.push_back({dataset_from_json(cj.at("train")), dataset_from_json(cj.at("validation"))});
  }
  return out;
}

// ---------------------------------------------------------------------------

Eigen::Index GlmSpec::num_params() const {
  if (kind == TaskKind::Softmax) return static_cast<Eigen::Index>(num_classes) * (dim + (intercept ? 1 : 0));
  return dim + (intercept ? 1 : 0);
}

GlmSpec GlmSpec::for_dataset(const FederatedDataset& dataset, double l2_reg, bool intercept) {
  GlmSpec s;
  s.kind = dataset.task;
  s.dim = dataset.dim;
  s.num_classes = dataset.task == TaskKind::Softmax ? dataset.num_classes : 1;
  s.l2_reg = l2_reg;
  s.intercept = intercept;
  return s;
}

LossGrad loss_and_grad(const GlmSpec& spec, const Eigen::VectorXd& w, const ClientDataset& data,
                       std::span<const std::size_t> indices) {
  if (w.size() != spec.num_params()) throw DimensionMismatchError("parameter vector has the wrong size");
  LossGrad out;
  out.loss = 0.5 * spec.l2_reg * w.squaredNorm();
  out.grad = spec.l2_reg * w;
  const auto m = static_cast<Eigen::Index>(indices.size());
  if (m == 0) return out;

  Eigen::MatrixXd x(m, spec.dim);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto row = indices[static_cast<std::size_t>(i)];
    if (row >= data.size()) throw InvalidInputError("sample index out of range");
    x.row(i) = data.features.row(static_cast<Eigen::Index>(row));
  }
  const double inv_m = 1.0 / static_cast<double>(m);

  if (spec.kind == TaskKind::Softmax) {
    Eigen::MatrixXd probs = softmax_logits(spec, w, x);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      auto row = probs.row(i);
      const double top = row.maxCoeff();
      row.array() = (row.array() - top).exp();
      const double z = row.sum();
      const int y = data.labels[indices[static_cast<std::size_t>(i)]];
      loss += std::log(z) - std::log(row(y));
      row /= z;
      row(y) -= 1.0;  // softmax - onehot
    }
    out.loss += loss * inv_m;
    const Eigen::MatrixXd gw = probs.transpose() * x * inv_m;  // classes x dim
    Eigen::Map<RowMajor>(out.grad.data(), spec.num_classes, spec.dim) += gw;
    if (spec.intercept) {
      out.grad.segment(static_cast<Eigen::Index>(spec.num_classes) * spec.dim, spec.num_classes) +=
          probs.colwise().sum().transpose() * inv_m;
    }
  } else {
    Eigen::VectorXd resid = linear_predictions(spec, w, x);
    for (Eigen::Index i = 0; i < m; ++i) resid(i) -= data.targets(static_cast<Eigen::Index>(indices[static_cast<std::size_t>(i)]));
    out.loss += 0.5 * resid.squaredNorm() * inv_m;
    out.grad.head(spec.dim) += x.transpose() * resid * inv_m;
    if (spec.intercept) out.grad(spec.dim) += resid.sum() * inv_m;
  }
  return out;
}

LossGrad full_loss_and_grad(const GlmSpec& spec, const Eigen::VectorXd& w, const ClientDataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return loss_and_grad(spec, w, data, all);
}

double predict(const GlmSpec& spec, const Eigen::VectorXd& w, const ClientDataset& data, std::size_t row) {
  const Eigen::MatrixXd x = data.features.row(static_cast<Eigen::Index>(row));
  if (spec.kind == TaskKind::Softmax) {
    Eigen::Index arg = 0;
    softmax_logits(spec, w, x).row(0).maxCoeff(&arg);
    return static_cast<double>(arg);
  }
  return std::round(linear_predictions(spec, w, x)(0));
}

Metrics evaluate(const GlmSpec& spec, const Eigen::VectorXd& w, const FederatedDataset& dataset, EvalMode mode) {
  double loss_sum = 0.0;
  double correct_sum = 0.0;
  double count = 0.0;
  double user_loss = 0.0;
  double user_acc = 0.0;
  std::vector<double> loss;
  std::vector<int> correct;
  for (const auto& client : dataset.clients) {
    if (client.validation.size() == 0) throw InvalidInputError("evaluation requires a nonempty validation split");
    per_row(spec, w, client.validation, loss, correct);
    const double l = std::accumulate(loss.begin(), loss.end(), 0.0);
    const double c = std::accumulate(correct.begin(), correct.end(), 0.0);
    const auto n = static_cast<double>(loss.size());
    loss_sum += l;
    correct_sum += c;
    count += n;
    user_loss += l / n;
    user_acc += c / n;
  }
  if (mode == EvalMode::PerSample) return {loss_sum / count, correct_sum / count};
  const auto users = static_cast<double>(dataset.clients.size());
  return {user_loss / users, user_acc / users};
}

double global_train_loss(const GlmSpec& spec, const Eigen::VectorXd& w, const FederatedDataset& dataset) {
  double f = 0.0;
  for (std::size_t k = 0; k < dataset.num_clients(); ++k) {
    f += dataset.weights[k] * full_loss_and_grad(spec, w, dataset.clients[k].train).loss;
  }
  return f;
}

Eigen::VectorXd least_squares_optimum(const GlmSpec& spec, const FederatedDataset& dataset) {
  if (spec.kind != TaskKind::LeastSquares) throw InvalidInputError("least_squares_optimum needs a least-squares model");
  const Eigen::Index p = spec.num_params();
  Eigen::MatrixXd a = spec.l2_reg * Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (std::size_t k = 0; k < dataset.num_clients(); ++k) {
    const auto& train = dataset.clients[k].train;
    const auto n = static_cast<Eigen::Index>(train.size());
    Eigen::MatrixXd x(n, p);
    x.leftCols(spec.dim) = train.features;
    if (spec.intercept) x.col(spec.dim).setOnes();
    const double c = dataset.weights[k] / static_cast<double>(n);
    a.noalias() += c * x.transpose() * x;
    rhs.noalias() += c * x.transpose() * train.targets;
  }
  return a.ldlt().solve(rhs);
}

}  // namespace f3ast::data
