#pragma once

#include "stnce/model.hpp"

#include <map>
#include <string>

namespace stnce {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Residual-MLP energy network: input projection, n_blocks pre-norm residual
/// blocks conditioned on a sinusoidal time embedding, scalar output.
///
///   block(h) = h + Zero( SiLU( W2 SiLU( W1 SiLU(LN(h)) + Wt emb(t) ) ) )
///
/// The last linear of each block is zero-initialized, so a fresh network is
/// affine in x.
struct Architecture {
  int input_dim = 1;
  int time_embed_dim = 32;
  int hidden_dim = 128;
  int expansion_dim = 256;
  int n_blocks = 4;
  /// Highest angular frequency of the sinusoidal time embedding; frequencies
  /// are geometric on [1, time_max_freq].
  double time_max_freq = 1e4;
  bool logz_head = false;
  int logz_width = 64;

  void validate() const;
  /// Number of scalar parameters implied by the fields above.
  std::size_t parameter_count() const;
};

/// Location of one named tensor in the flat parameter buffer (row-major).
struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  int fan_in = 0;
  enum class Init { kUniformFanIn, kZero, kOne } init = Init::kUniformFanIn;
};

class EnergyNetwork final : public EnergyModel {
 public:
  /// Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases, layer-norm shifts and
  /// "zero" layers are 0; layer-norm scales are 1.
  EnergyNetwork(const Architecture& arch, Rng& rng);
  /// Network with every parameter set to zero (used when loading).
  explicit EnergyNetwork(const Architecture& arch);

  const Architecture& architecture() const { return arch_; }
  const std::vector<TensorSlot>& layout() const { return layout_; }
  const TensorSlot& slot(const std::string& name) const;
  Eigen::Map<RowMat> tensor(const std::string& name);

  int input_dim() const override { return arch_.input_dim; }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  using EnergyModel::potential;
  void potential(const Points& x, const Vec& t, Vec& out) const override;
  void accumulate_parameter_gradient(const Points& x, const Vec& t, const Vec& w,
                                     std::span<double> grad) const override;
  void input_gradient(const Points& x, const Vec& t, Points& dx, Vec& dt) const override;
  void potential_and_gradient(const Points& x, const Vec& t, Vec& u, const std::function<Vec(const Vec&)>& upstream,
                              std::span<double> grad) const override;

  /// E(x,t) without the log-normalizer head.
  Vec energy(const Points& x, const Vec& t) const;
  double energy_at(const Eigen::Ref<const Vec>& x, double t) const;
  /// log Z(t) from the head, or 0 when the head is absent.
  Vec log_normalizer(const Vec& t) const;

  /// Sinusoidal embedding, (time_embed_dim x n), interleaved sin/cos.
  Mat time_embedding(const Vec& t) const;

 private:
  struct Cache;
  void build_layout();
  void forward(const Points& x, const Vec& t, Cache& cache) const;
  /// Backpropagates dE (one value per column). Writes parameter gradients into
  /// `grad` when non-empty and input gradients into dx/dt when non-null.
  void backward(const Cache& cache, const Vec& d_energy, std::span<double> grad, Points* dx, Vec* dt) const;
  Vec output(const Cache& cache) const;
  void head_backward(const Vec& t, const Vec& w, std::span<double> grad) const;
  Vec head_forward(const Vec& t, Mat* pre, Mat* act, Mat* emb) const;
  void validate_inputs(const Points& x, const Vec& t) const;

  Eigen::Map<const RowMat> view(std::size_t slot) const;

  Architecture arch_;
  std::vector<TensorSlot> layout_;
  std::map<std::string, std::size_t> index_;
  std::vector<double> params_;
  Vec frequencies_;
};

/// Preconditioning coefficients for an interpolant with data std sigma_data,
/// with (1 - t) replaced by (1 - a t) to soften the t = 1 singularity.
struct PreconditionCoeffs {
  double sigma_data = 1.0;
  double a = 0.75;
};

struct Precondition {
  double c_in = 0.0;
  double c_skip = 0.0;
  double c_out = 0.0;
  double c_noise = 0.0;
};

/// c_noise is evaluated at t clipped to [1e-5, 1 - 1e-5].
Precondition precondition(const PreconditionCoeffs& coeffs, double t);

/// ema <- decay * ema + (1 - decay) * params.
void ema_update(std::span<double> ema, std::span<const double> params, double decay);

}  // namespace stnce
