#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "f3ast/types.hpp"

namespace f3ast::data {

enum class TaskKind { LeastSquares, Softmax };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

/// Rows of `features` are samples. Softmax tasks fill `labels`; least-squares
/// tasks fill `targets`.
struct ClientDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  Eigen::VectorXd targets;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

struct ClientData {
  ClientDataset train;
  ClientDataset validation;
  std::size_t size() const { return train.size() + validation.size(); }
};

/// Immutable after generation; p_k = n_k / sum_j n_j with n_k the client's
/// total sample count (train + validation).
struct FederatedDataset {
  TaskKind task = TaskKind::Softmax;
  int num_classes = 1;
  int dim = 0;
  std::vector<ClientData> clients;
  std::vector<double> weights;
  /// Generator name and parameters, embedded in dumps.
  std::string generator;
  std::uint64_t seed = 0;
  std::string parameters_json = "{}";

  std::size_t num_clients() const { return clients.size(); }
};

/// Validation fraction with floor rounding and at least one validation sample.
std::size_t validation_count(std::size_t n, double fraction);

/// Splits rows [0, n) of `all` into (train, validation) by the floor rule.
ClientData split_client(const ClientDataset& all, double validation_fraction);

/// p_k = n_k / sum n_j.
std::vector<double> weights_from_sizes(const std::vector<ClientData>& clients);

struct SyntheticIidOptions {
  std::size_t num_clients = 100;
  std::size_t num_samples = 10'000;
  int dim = 100;
  TaskKind task = TaskKind::Softmax;
  int num_classes = 10;
  double validation_fraction = 0.2;
};

/// Gaussian features, beta ~ N(0, I), y = round(x . beta), split evenly.
/// Softmax labels are the decile bin of y over the pooled sample.
FederatedDataset generate_synthetic_iid(std::uint64_t seed, const SyntheticIidOptions& options = {});

struct SyntheticAlphaOptions {
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t num_clients = 100;
  /// 0 selects heterogeneous sizes n_k = floor(lognormal(4, 2)) + 50.
  std::size_t samples_per_client = 0;
  int dim = 60;
  int num_classes = 10;
  double validation_fraction = 0.2;
};

/// Heterogeneous softmax data: rows of W_k and b_k ~ N(u_kc, 1) with a
/// per-class mean u_kc ~ N(0, alpha^2);
/// x ~ N(v_k, diag(j^-1.2)), v_k ~ N(B_k, 1), B_k ~ N(0, beta^2);
/// y = argmax(W_k x + b_k).
FederatedDataset generate_synthetic_alpha(std::uint64_t seed, const SyntheticAlphaOptions& options = {});

void save_dataset(const FederatedDataset& dataset, const std::filesystem::path& path);
FederatedDataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// Generalized linear client model. Parameters are a flat vector: softmax
/// stores a row-major num_classes x dim weight block followed by num_classes
/// biases (when `intercept`); least squares stores dim weights then one bias.
struct GlmSpec {
  TaskKind kind = TaskKind::Softmax;
  int dim = 0;
  int num_classes = 1;
  double l2_reg = 1e-4;
  bool intercept = true;

  Eigen::Index num_params() const;
  static GlmSpec for_dataset(const FederatedDataset& dataset, double l2_reg = 1e-4, bool intercept = true);
};

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Mean loss over `indices` plus l2_reg/2 ||w||^2, with its gradient. An empty
/// index set leaves only the regularizer.
LossGrad loss_and_grad(const GlmSpec& spec, const Eigen::VectorXd& w, const ClientDataset& data,
                       std::span<const std::size_t> indices);

/// loss_and_grad over every row.
LossGrad full_loss_and_grad(const GlmSpec& spec, const Eigen::VectorXd& w, const ClientDataset& data);

/// Predicted class (softmax) or real prediction rounded to the nearest
/// integer (least squares) for row i.
double predict(const GlmSpec& spec, const Eigen::VectorXd& w, const ClientDataset& data, std::size_t row);

enum class EvalMode { PerSample, PerUser };

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Validation loss (without regularizer) and accuracy. Least-squares accuracy
/// counts |prediction - target| < 0.5.
Metrics evaluate(const GlmSpec& spec, const Eigen::VectorXd& w, const FederatedDataset& dataset, EvalMode mode);

/// F(w) = sum_k p_k F_k(w) over training splits, regularizer included.
double global_train_loss(const GlmSpec& spec, const Eigen::VectorXd& w, const FederatedDataset& dataset);

/// Exact minimizer of the global least-squares training objective.
Eigen::VectorXd least_squares_optimum(const GlmSpec& spec, const FederatedDataset& dataset);

}  // namespace f3ast::data
