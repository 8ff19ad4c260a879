#include "stnce/network.hpp"

#include <algorithm>

namespace stnce {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr std::size_t kSlotsPerBlock = 10;

// Slot order inside a block.
enum BlockSlot : std::size_t { kLnG, kLnB, kW1, kB1, kWt, kBt, kW2, kB2, kWz, kBz };

Mat silu(const Mat& m) { return (m.array() * m.array().logistic()).matrix(); }
Mat silu_grad(const Mat& m) {
  const Eigen::ArrayXXd s = m.array().logistic();
  return (s * (1.0 + m.array() * (1.0 - s))).matrix();
}

}  // namespace

void Architecture::validate() const {
  if (input_dim <= 0 || time_embed_dim <= 0 || hidden_dim <= 0 || expansion_dim <= 0 || n_blocks < 0) {
    throw ConfigError("architecture dimensions must be positive");
  }
  if (time_embed_dim % 2 != 0) throw ConfigError("time_embed_dim must be even (sin/cos pairs)");
  if (!(time_max_freq >= 1.0)) throw ConfigError("time_max_freq must be >= 1");
  if (logz_head && logz_width <= 0) throw ConfigError("logz_width must be positive");
}

std::size_t Architecture::parameter_count() const {
  const std::size_t d = input_dim, h = hidden_dim, x = expansion_dim, te = time_embed_dim;
  std::size_t n = h * d + h;                            // input projection
  n += n_blocks * (2 * h + (x * h + x) + (x * te + x)  // LN, W1, time linear
                   + (x * x + x) + (h * x + h));        // W2, zero linear
  n += h + 1;                                           // output
  if (logz_head) n += logz_width * te + logz_width + logz_width + 1;
  return n;
}

struct EnergyNetwork::Cache {
  Mat emb;                 // te x n
  std::vector<Mat> h_in;   // per block input, h x n
  std::vector<Mat> normed; // LN output before affine, h x n
  std::vector<Vec> rstd;   // per column
  std::vector<Mat> u, a, c;  // pre-activations
  std::vector<Mat> s1, s2, s3;
  Mat h_out;
  const Points* x = nullptr;
  const Vec* t = nullptr;
};

EnergyNetwork::EnergyNetwork(const Architecture& arch) : arch_(arch) {
  arch_.validate();
  build_layout();
  params_.assign(arch_.parameter_count(), 0.0);
}

EnergyNetwork::EnergyNetwork(const Architecture& arch, Rng& rng) : EnergyNetwork(arch) {
  for (const auto& s : layout_) {
    double* p = params_.data() + s.offset;
    const std::size_t count = static_cast<std::size_t>(s.rows) * s.cols;
    switch (s.init) {
      case TensorSlot::Init::kZero:
        std::fill(p, p + count, 0.0);
        break;
      case TensorSlot::Init::kOne:
        std::fill(p, p + count, 1.0);
        break;
      case TensorSlot::Init::kUniformFanIn: {
        const double bound = std::sqrt(6.0 / s.fan_in);
        for (std::size_t i = 0; i < count; ++i) p[i] = (2.0 * rng.uniform() - 1.0) * bound;
        break;
      }
    }
  }
}

void EnergyNetwork::build_layout() {
  layout_.clear();
  index_.clear();
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols, TensorSlot::Init init, int fan_in) {
    index_[name] = layout_.size();
    layout_.push_back(TensorSlot{std::move(name), offset, rows, cols, fan_in, init});
    offset += static_cast<std::size_t>(rows) * cols;
  };
  using I = TensorSlot::Init;
  const int d = arch_.input_dim, h = arch_.hidden_dim, x = arch_.expansion_dim, te = arch_.time_embed_dim;
  add("input.weight", h, d, I::kUniformFanIn, d);
  add("input.bias", h, 1, I::kZero, d);
  for (int b = 0; b < arch_.n_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    add(p + "norm.scale", h, 1, I::kOne, h);
    add(p + "norm.shift", h, 1, I::kZero, h);
    add(p + "up.weight", x, h, I::kUniformFanIn, h);
    add(p + "up.bias", x, 1, I::kZero, h);
    add(p + "time.weight", x, te, I::kUniformFanIn, te);
    add(p + "time.bias", x, 1, I::kZero, te);
    add(p + "mid.weight", x, x, I::kUniformFanIn, x);
    add(p + "mid.bias", x, 1, I::kZero, x);
    add(p + "down.weight", h, x, I::kZero, x);
    add(p + "down.bias", h, 1, I::kZero, x);
  }
  add("output.weight", 1, h, I::kUniformFanIn, h);
  add("output.bias", 1, 1, I::kZero, h);
  if (arch_.logz_head) {
    const int w = arch_.logz_width;
    add("logz.hidden.weight", w, te, I::kUniformFanIn, te);
    add("logz.hidden.bias", w, 1, I::kZero, te);
    add("logz.output.weight", 1, w, I::kUniformFanIn, w);
    add("logz.output.bias", 1, 1, I::kZero, w);
  }

  const int half = te / 2;
  frequencies_.resize(half);
  for (int k = 0; k < half; ++k) {
    const double frac = half > 1 ? static_cast<double>(k) / (half - 1) : 0.0;
    frequencies_[k] = std::pow(arch_.time_max_freq, frac);
  }
}

const TensorSlot& EnergyNetwork::slot(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown tensor: " + name);
  return layout_[it->second];
}

Eigen::Map<RowMat> EnergyNetwork::tensor(const std::string& name) {
  const auto& s = slot(name);
  return Eigen::Map<RowMat>(params_.data() + s.offset, s.rows, s.cols);
}

Eigen::Map<const RowMat> EnergyNetwork::view(std::size_t i) const {
  const auto& s = layout_[i];
  return Eigen::Map<const RowMat>(params_.data() + s.offset, s.rows, s.cols);
}

Mat EnergyNetwork::time_embedding(const Vec& t) const {
  const int half = arch_.time_embed_dim / 2;
  Mat emb(arch_.time_embed_dim, t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    for (int k = 0; k < half; ++k) {
      const double arg = frequencies_[k] * t[j];
      emb(2 * k, j) = std::sin(arg);
      emb(2 * k + 1, j) = std::cos(arg);
    }
  }
  return emb;
}

void EnergyNetwork::validate_inputs(const Points& x, const Vec& t) const {
  if (x.rows() != arch_.input_dim) throw ContractError("input dimension mismatch");
  if (x.cols() != t.size()) throw ContractError("points and times differ in count");
  if (!x.allFinite() || !t.allFinite()) throw NumericError("non-finite network input");
}

void EnergyNetwork::forward(const Points& x, const Vec& t, Cache& cache) const {
  validate_inputs(x, t);
  const auto nb = static_cast<std::size_t>(arch_.n_blocks);
  cache.x = &x;
  cache.t = &t;
  cache.emb = time_embedding(t);
  cache.h_in.resize(nb);
  cache.normed.resize(nb);
  cache.rstd.resize(nb);
  cache.u.resize(nb);
  cache.a.resize(nb);
  cache.c.resize(nb);
  cache.s1.resize(nb);
  cache.s2.resize(nb);
  cache.s3.resize(nb);

  Mat h = view(0) * x;
  h.colwise() += Vec(view(1).col(0));
  const double inv_h = 1.0 / arch_.hidden_dim;
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t base = 2 + b * kSlotsPerBlock;
    cache.h_in[b] = h;
    Eigen::RowVectorXd mean = h.colwise().sum() * inv_h;
    Mat centered = h.rowwise() - mean;
    Eigen::RowVectorXd var = centered.array().square().colwise().sum() * inv_h;
    Vec rstd = (var.array() + kLayerNormEps).rsqrt().transpose();
    Mat normed = centered * rstd.asDiagonal();
    Mat u = view(base + kLnG).col(0).asDiagonal() * normed;
    u.colwise() += Vec(view(base + kLnB).col(0));
    Mat s1 = silu(u);
    Mat a = view(base + kW1) * s1 + view(base + kWt) * cache.emb;
    a.colwise() += Vec(view(base + kB1).col(0) + view(base + kBt).col(0));
    Mat s2 = silu(a);
    Mat c = view(base + kW2) * s2;
    c.colwise() += Vec(view(base + kB2).col(0));
    Mat s3 = silu(c);
    Mat z = view(base + kWz) * s3;
    z.colwise() += Vec(view(base + kBz).col(0));
    h += z;
    cache.normed[b] = std::move(normed);
    cache.rstd[b] = std::move(rstd);
    cache.u[b] = std::move(u);
    cache.a[b] = std::move(a);
    cache.c[b] = std::move(c);
    cache.s1[b] = std::move(s1);
    cache.s2[b] = std::move(s2);
    cache.s3[b] = std::move(s3);
  }
  cache.h_out = std::move(h);
}

void EnergyNetwork::backward(const Cache& cache, const Vec& d_energy, std::span<double> grad, Points* dx,
                             Vec* dt) const {
  const bool want_params = !grad.empty();
  auto gview = [&](std::size_t i) {
    const auto& s = layout_[i];
    return Eigen::Map<RowMat>(grad.data() + s.offset, s.rows, s.cols);
  };
  const auto nb = static_cast<std::size_t>(arch_.n_blocks);
  const std::size_t out_w = 2 + nb * kSlotsPerBlock;
  const Eigen::RowVectorXd de = d_energy.transpose();

  if (want_params) {
    gview(out_w).noalias() += de * cache.h_out.transpose();
    gview(out_w + 1)(0, 0) += de.sum();
  }
  Mat dh = view(out_w).transpose() * de;  // h x n
  Mat demb = Mat::Zero(arch_.time_embed_dim, de.size());
  const double inv_h = 1.0 / arch_.hidden_dim;

  for (std::size_t b = nb; b-- > 0;) {
    const std::size_t base = 2 + b * kSlotsPerBlock;
    // zero linear
    const Mat& dz = dh;
    Mat dc = (view(base + kWz).transpose() * dz).cwiseProduct(silu_grad(cache.c[b]));
    Mat da = (view(base + kW2).transpose() * dc).cwiseProduct(silu_grad(cache.a[b]));
    Mat du = (view(base + kW1).transpose() * da).cwiseProduct(silu_grad(cache.u[b]));
    if (want_params) {
      gview(base + kWz).noalias() += dz * cache.s3[b].transpose();
      gview(base + kBz) += dz.rowwise().sum();
      gview(base + kW2).noalias() += dc * cache.s2[b].transpose();
      gview(base + kB2) += dc.rowwise().sum();
      gview(base + kW1).noalias() += da * cache.s1[b].transpose();
      gview(base + kB1) += da.rowwise().sum();
      gview(base + kWt).noalias() += da * cache.emb.transpose();
      gview(base + kBt) += da.rowwise().sum();
      gview(base + kLnG) += du.cwiseProduct(cache.normed[b]).rowwise().sum();
      gview(base + kLnB) += du.rowwise().sum();
    }
    if (dt != nullptr) demb.noalias() += view(base + kWt).transpose() * da;
    // layer norm backward
    Mat dn = view(base + kLnG).col(0).asDiagonal() * du;
    const Mat& nh = cache.normed[b];
    Eigen::RowVectorXd mean_dn = dn.colwise().sum() * inv_h;
    Eigen::RowVectorXd mean_dn_n = dn.cwiseProduct(nh).colwise().sum() * inv_h;
    Mat dh_norm = dn.rowwise() - mean_dn;
    dh_norm -= nh * mean_dn_n.asDiagonal();
    dh_norm = dh_norm * cache.rstd[b].asDiagonal();
    dh += dh_norm;
  }
  if (want_params) {
    gview(0).noalias() += dh * cache.x->transpose();
    gview(1) += dh.rowwise().sum();
  }
  if (dx != nullptr) *dx = view(0).transpose() * dh;
  if (dt != nullptr) {
    const Vec& t = *cache.t;
    dt->resize(t.size());
    const int half = arch_.time_embed_dim / 2;
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < half; ++k) {
        const double w = frequencies_[k];
        acc += demb(2 * k, j) * w * std::cos(w * t[j]) - demb(2 * k + 1, j) * w * std::sin(w * t[j]);
      }
      (*dt)[j] = acc;
    }
  }
}

Vec EnergyNetwork::head_forward(const Vec& t, Mat* pre, Mat* act, Mat* emb) const {
  if (!arch_.logz_head) return Vec::Zero(t.size());
  const std::size_t base = 2 + arch_.n_blocks * kSlotsPerBlock + 2;
  Mat e = time_embedding(t);
  Mat p = view(base) * e;
  p.colwise() += Vec(view(base + 1).col(0));
  Mat s = silu(p);
  Vec out = (view(base + 2) * s).transpose();
  out.array() += view(base + 3)(0, 0);
  if (pre) *pre = std::move(p);
  if (act) *act = std::move(s);
  if (emb) *emb = std::move(e);
  return out;
}

Vec EnergyNetwork::output(const Cache& cache) const {
  const std::size_t out_w = 2 + arch_.n_blocks * kSlotsPerBlock;
  Vec e = (view(out_w) * cache.h_out).transpose();
  e.array() += view(out_w + 1)(0, 0);
  return e;
}

Vec EnergyNetwork::energy(const Points& x, const Vec& t) const {
  Cache cache;
  forward(x, t, cache);
  return output(cache);
}

double EnergyNetwork::energy_at(const Eigen::Ref<const Vec>& x, double t) const {
  Points p = x;
  return energy(p, Vec::Constant(1, t))[0];
}

Vec EnergyNetwork::log_normalizer(const Vec& t) const { return head_forward(t, nullptr, nullptr, nullptr); }

void EnergyNetwork::potential(const Points& x, const Vec& t, Vec& out) const {
  out = energy(x, t);
  if (arch_.logz_head) out += log_normalizer(t);
}

void EnergyNetwork::accumulate_parameter_gradient(const Points& x, const Vec& t, const Vec& w,
                                                  std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ContractError("gradient buffer has the wrong size");
  if (w.size() != x.cols()) throw ContractError("one upstream weight per point is required");
  if (!w.allFinite()) throw NumericError("non-finite upstream weights");
  Cache cache;
  forward(x, t, cache);
  backward(cache, w, grad, nullptr, nullptr);
  head_backward(t, w, grad);
}

void EnergyNetwork::head_backward(const Vec& t, const Vec& w, std::span<double> grad) const {
  if (!arch_.logz_head) return;
  Mat pre, act, emb;
  head_forward(t, &pre, &act, &emb);
  const std::size_t base = 2 + arch_.n_blocks * kSlotsPerBlock + 2;
  auto g = [&](std::size_t i) {
    const auto& s = layout_[i];
    return Eigen::Map<RowMat>(grad.data() + s.offset, s.rows, s.cols);
  };
  const Eigen::RowVectorXd wr = w.transpose();
  g(base + 3)(0, 0) += wr.sum();
  g(base + 2).noalias() += wr * act.transpose();
  Mat dpre = (view(base + 2).transpose() * wr).cwiseProduct(silu_grad(pre));
  g(base + 1) += dpre.rowwise().sum();
  g(base).noalias() += dpre * emb.transpose();
}

void EnergyNetwork::potential_and_gradient(const Points& x, const Vec& t, Vec& u,
                                           const std::function<Vec(const Vec&)>& upstream,
                                           std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ContractError("gradient buffer has the wrong size");
  Cache cache;
  forward(x, t, cache);
  u = output(cache);
  if (arch_.logz_head) u += log_normalizer(t);
  const Vec w = upstream(u);
  if (w.size() != x.cols()) throw ContractError("one upstream weight per point is required");
  if (!w.allFinite()) throw NumericError("non-finite upstream weights");
  backward(cache, w, grad, nullptr, nullptr);
  head_backward(t, w, grad);
}

void EnergyNetwork::input_gradient(const Points& x, const Vec& t, Points& dx, Vec& dt) const {
  Cache cache;
  forward(x, t, cache);
  backward(cache, Vec::Ones(x.cols()), {}, &dx, &dt);
  if (!dx.allFinite() || !dt.allFinite()) throw NumericError("non-finite input gradient");
}

Precondition precondition(const PreconditionCoeffs& coeffs, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("precondition: t must lie in [0, 1]");
  if (!(coeffs.a > 0.0 && coeffs.a <= 1.0)) throw DomainError("precondition: a must lie in (0, 1]");
  if (!(coeffs.sigma_data > 0.0)) throw DomainError("precondition: sigma_data must be positive");
  const double s = coeffs.sigma_data;
  const double one_m = 1.0 - coeffs.a * t;
  const double denom = t * t * s * s + one_m * one_m;
  Precondition p;
  p.c_in = 1.0 / std::sqrt(denom);
  p.c_skip = t * s * s / denom;
  p.c_out = one_m * s / std::sqrt(denom);
  const double tc = std::clamp(t, 1e-5, 1.0 - 1e-5);
  p.c_noise = std::log((1.0 - coeffs.a * tc) / (tc * s));
  return p;
}

void ema_update(std::span<double> ema, std::span<const double> params, double decay) {
  if (ema.size() != params.size()) throw ContractError("ema_update: shape mismatch");
  if (!(decay >= 0.0 && decay < 1.0)) throw DomainError("ema_update: decay must lie in [0, 1)");
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = decay * ema[i] + (1.0 - decay) * params[i];
}

}  // namespace stnce
