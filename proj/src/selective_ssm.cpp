#include "foss/selective_ssm.hpp"

#include <cmath>

namespace foss::ssm {
namespace {

using detail::Node;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// LN(SiLU(pre)) over one state vector. Keeps what the adjoint needs.
struct NormCache {
  std::vector<double> xhat;
  double inv_std = 0.0;
};

void norm_forward(const double* pre, std::size_t n, const double* gamma, const double* beta, double eps,
                  double* out, NormCache& cache) {
  cache.xhat.resize(n);
  double mu = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = pre[i] * sigmoid(pre[i]);
    cache.xhat[i] = s;
    mu += s;
  }
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (cache.xhat[i] - mu) * (cache.xhat[i] - mu);
  var /= static_cast<double>(n);
  cache.inv_std = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) {
    cache.xhat[i] = (cache.xhat[i] - mu) * cache.inv_std;
    out[i] = gamma[i] * cache.xhat[i] + beta[i];
  }
}

// Adjoint of norm_forward: g_out -> g_pre (overwritten), gamma/beta grads
// accumulated when non-null.
void norm_backward(const double* g_out, const double* pre, std::size_t n, const double* gamma,
                   const NormCache& cache, double* g_pre, double* g_gamma, double* g_beta) {
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (g_gamma) g_gamma[i] += g_out[i] * cache.xhat[i];
    if (g_beta) g_beta[i] += g_out[i];
    const double gh = g_out[i] * gamma[i];
    m1 += gh;
    m2 += gh * cache.xhat[i];
  }
  m1 /= static_cast<double>(n);
  m2 /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double gh = g_out[i] * gamma[i];
    const double gs = cache.inv_std * (gh - m1 - cache.xhat[i] * m2);
    const double s = sigmoid(pre[i]);
    g_pre[i] = gs * s * (1.0 + pre[i] * (1.0 - s));
  }
}

void check_finite(const std::vector<double>& v, std::size_t offset, std::size_t n, std::size_t step) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[offset + i])) {
      throw NumericalError("selective_scan: non-finite state at step " + std::to_string(step));
    }
  }
}

}  // namespace

void SelectiveSSMConfig::validate() const {
  if (state_size == 0 || d_in == 0 || d_out == 0 || generator_hidden == 0 || conv_width == 0) {
    throw ConfigError("selective SSM: all sizes must be >= 1");
  }
  if (conv_width % 2 == 0) throw ConfigError("selective SSM: conv_width must be odd");
  if (norm_eps <= 0.0) throw ConfigError("selective SSM: norm_eps must be positive");
}

double decay_squash(double raw) {
  return kDecayMargin + (1.0 - 2.0 * kDecayMargin) * sigmoid(-raw);
}

Tensor decay_squash(const Tensor& raw) {
  std::vector<double> out(raw.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decay_squash(raw.data()[i]);
  return make_result(raw.shape(), raw.dtype(), std::move(out), {raw}, [](Node& o) {
    Node& in = *o.inputs[0];
    if (!in.differentiable()) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(-in.value[i]);
      g[i] += -o.grad[i] * (1.0 - 2.0 * kDecayMargin) * s * (1.0 - s);
    }
  });
}

Tensor selective_scan(const StepParamSeq& params, const Tensor& x, const Tensor& h0, const Tensor& gamma,
                      const Tensor& beta, StateNorm norm, double eps) {
  if (x.rank() != 2 || x.dim(0) == 0) {
    throw DimensionError("selective_scan: input must be [T x d_in] with T >= 1, got " + to_string(x.shape()));
  }
  const std::size_t T = x.dim(0), d = x.dim(1);
  const std::size_t n = h0.numel();
  if (params.A.rank() != 2 || params.A.dim(0) != T || params.A.dim(1) != n) {
    throw DimensionError("selective_scan: A must be [T x n] = [" + std::to_string(T) + "x" +
                         std::to_string(n) + "], got " + to_string(params.A.shape()));
  }
  if (params.B.rank() != 2 || params.B.dim(0) != T || params.B.dim(1) != n * d) {
    throw DimensionError("selective_scan: B must be [T x n*d_in], got " + to_string(params.B.shape()));
  }
  if (params.C.rank() != 2 || params.C.dim(0) != T || params.C.dim(1) % n != 0) {
    throw DimensionError("selective_scan: C must be [T x p*n], got " + to_string(params.C.shape()));
  }
  const std::size_t p = params.C.dim(1) / n;
  if (params.D.rank() != 2 || params.D.dim(0) != T || params.D.dim(1) != p * d) {
    throw DimensionError("selective_scan: D must be [T x p*d_in], got " + to_string(params.D.shape()));
  }
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("selective_scan: norm gamma/beta must have n entries");
  }
  const DType dtype = common_dtype({&params.A, &params.B, &params.C, &params.D, &x, &h0, &gamma, &beta});

  const double* A = params.A.data().data();
  const double* B = params.B.data().data();
  const double* C = params.C.data().data();
  const double* D = params.D.data().data();
  const double* X = x.data().data();
  const double* G = gamma.data().data();
  const double* Bt = beta.data().data();

  // states[t] = h(t), t = 0..T; pre[t] = pre-normalization value feeding norm
  std::vector<double> states((T + 1) * n), pre(T * n), readout;
  std::vector<NormCache> caches(norm == StateNorm::disabled ? 0 : T);
  std::copy_n(h0.data().data(), n, states.data());
  if (norm == StateNorm::output_only) readout.resize(T * n);
  std::vector<double> y(T * p, 0.0);

  for (std::size_t t = 0; t < T; ++t) {
    const double* h = states.data() + t * n;
    const double* xt = X + t * d;
    const double* hr = h;
    if (norm == StateNorm::output_only) {
      double* r = readout.data() + t * n;
      if (t == 0) {
        std::copy_n(h, n, r);
      } else {
        norm_forward(h, n, G, Bt, eps, r, caches[t]);
        check_finite(readout, t * n, n, t);
      }
      hr = r;
    }
    const double* Ct = C + t * p * n;
    const double* Dt = D + t * p * d;
    double* yt = y.data() + t * p;
    for (std::size_t i = 0; i < p; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += Ct[i * n + j] * hr[j];
      for (std::size_t j = 0; j < d; ++j) acc += Dt[i * d + j] * xt[j];
      yt[i] = acc;
    }
    const double* At = A + t * n;
    const double* Btm = B + t * n * d;
    double* raw = pre.data() + t * n;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = At[i] * h[i];
      for (std::size_t j = 0; j < d; ++j) acc += Btm[i * d + j] * xt[j];
      raw[i] = acc;
    }
    double* next = states.data() + (t + 1) * n;
    if (norm == StateNorm::feed_forward) {
      norm_forward(raw, n, G, Bt, eps, next, caches[t]);
    } else {
      std::copy_n(raw, n, next);
    }
    check_finite(states, (t + 1) * n, n, t);
  }

  return make_result(
      {T, p}, dtype, std::move(y), {params.A, params.B, params.C, params.D, x, h0, gamma, beta},
      [T, n, d, p, norm, states = std::move(states), pre = std::move(pre), readout = std::move(readout),
       caches = std::move(caches)](Node& o) {
        Node& nA = *o.inputs[0];
        Node& nB = *o.inputs[1];
        Node& nC = *o.inputs[2];
        Node& nD = *o.inputs[3];
        Node& nx = *o.inputs[4];
        Node& nh0 = *o.inputs[5];
        Node& ng = *o.inputs[6];
        Node& nb = *o.inputs[7];
        double* gA = nA.differentiable() ? nA.grad_buffer().data() : nullptr;
        double* gB = nB.differentiable() ? nB.grad_buffer().data() : nullptr;
        double* gC = nC.differentiable() ? nC.grad_buffer().data() : nullptr;
        double* gD = nD.differentiable() ? nD.grad_buffer().data() : nullptr;
        double* gx = nx.differentiable() ? nx.grad_buffer().data() : nullptr;
        double* ggam = ng.differentiable() ? ng.grad_buffer().data() : nullptr;
        double* gbet = nb.differentiable() ? nb.grad_buffer().data() : nullptr;
        const double* A = nA.value.data();
        const double* B = nB.value.data();
        const double* C = nC.value.data();
        const double* D = nD.value.data();
        const double* X = nx.value.data();
        const double* gamma = ng.value.data();
        const double* gy = o.grad.data();

        std::vector<double> g_next(n, 0.0), g_h(n), g_raw(n), g_r(n), tmp(n);
        for (std::size_t t = T; t-- > 0;) {
          const double* h = states.data() + t * n;
          const double* xt = X + t * d;
          const double* At = A + t * n;
          const double* Bm = B + t * n * d;
          const double* Ct = C + t * p * n;
          const double* Dt = D + t * p * d;
          const double* gyt = gy + t * p;

          // through the state update h(t+1) = f(A h + B x)
          if (norm == StateNorm::feed_forward) {
            norm_backward(g_next.data(), pre.data() + t * n, n, gamma, caches[t], g_raw.data(), ggam, gbet);
          } else {
            g_raw = g_next;
          }
          for (std::size_t i = 0; i < n; ++i) {
            g_h[i] = g_raw[i] * At[i];
            if (gA) gA[t * n + i] += g_raw[i] * h[i];
            if (gB)
              for (std::size_t j = 0; j < d; ++j) gB[t * n * d + i * d + j] += g_raw[i] * xt[j];
            if (gx)
              for (std::size_t j = 0; j < d; ++j) gx[t * d + j] += Bm[i * d + j] * g_raw[i];
          }

          // through the read-out y(t) = C r + D x
          const double* r = norm == StateNorm::output_only ? readout.data() + t * n : h;
          std::fill(g_r.begin(), g_r.end(), 0.0);
          for (std::size_t i = 0; i < p; ++i) {
            const double g = gyt[i];
            if (g == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
              g_r[j] += Ct[i * n + j] * g;
              if (gC) gC[t * p * n + i * n + j] += g * r[j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              if (gD) gD[t * p * d + i * d + j] += g * xt[j];
              if (gx) gx[t * d + j] += Dt[i * d + j] * g;
            }
          }
          if (norm == StateNorm::output_only && t > 0) {
            norm_backward(g_r.data(), h, n, gamma, caches[t], tmp.data(), ggam, gbet);
            for (std::size_t j = 0; j < n; ++j) g_h[j] += tmp[j];
          } else {
            for (std::size_t j = 0; j < n; ++j) g_h[j] += g_r[j];
          }
          g_next = g_h;
        }
        if (nh0.differentiable()) {
          auto& g0 = nh0.grad_buffer();
          for (std::size_t j = 0; j < n; ++j) g0[j] += g_next[j];
        }
      });
}

Tensor dense_unroll_oracle(const std::vector<SSMStepParams>& steps, const Tensor& x,
                           const std::vector<double>& h0) {
  const std::size_t T = x.dim(0), d = x.dim(1), n = h0.size();
  if (steps.size() != T) throw DimensionError("dense_unroll_oracle: one parameter set per step required");
  const std::size_t p = T ? steps[0].C.size() / n : 0;
  std::vector<double> h = h0, y(T * p, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& s = steps[t];
    std::vector<double> full(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) full[i * n + i] = s.A[i];
    for (std::size_t i = 0; i < p; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += s.C[i * n + j] * h[j];
      for (std::size_t j = 0; j < d; ++j) acc += s.D[i * d + j] * x.data()[t * d + j];
      y[t * p + i] = acc;
    }
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) next[i] += full[i * n + j] * h[j];
      for (std::size_t j = 0; j < d; ++j) next[i] += s.B[i * d + j] * x.data()[t * d + j];
    }
    h = std::move(next);
  }
  return Tensor::from({T, p}, std::move(y), x.dtype());
}

StepParamSeq pack_step_params(const std::vector<SSMStepParams>& steps, std::size_t n, std::size_t d_in,
                              std::size_t p, DType dtype) {
  const std::size_t T = steps.size();
  std::vector<double> A, B, C, D;
  for (const auto& s : steps) {
    if (s.A.size() != n || s.B.size() != n * d_in || s.C.size() != p * n || s.D.size() != p * d_in) {
      throw DimensionError("pack_step_params: step matrices do not match (n, d_in, p)");
    }
    A.insert(A.end(), s.A.begin(), s.A.end());
    B.insert(B.end(), s.B.begin(), s.B.end());
    C.insert(C.end(), s.C.begin(), s.C.end());
    D.insert(D.end(), s.D.begin(), s.D.end());
  }
  return {Tensor::from({T, n}, std::move(A), dtype), Tensor::from({T, n * d_in}, std::move(B), dtype),
          Tensor::from({T, p * n}, std::move(C), dtype), Tensor::from({T, p * d_in}, std::move(D), dtype)};
}

SelectiveSSM::SelectiveSSM(const std::string& name, const SelectiveSSMConfig& config, SplitMix64& rng,
                           DType dtype)
    : config_((config.validate(), config)), dtype_(dtype) {
  const std::size_t n = config.state_size, d = config.d_in, p = config.d_out, w = config.conv_width;
  const std::size_t h = config.generator_hidden;
  std::vector<double> k(d * w, 0.0);
  for (auto& v : k) v = rng.uniform(-1.0, 1.0) / std::sqrt(static_cast<double>(w));
  conv_kernel_ = Parameter(name + ".conv.kernel", Tensor::from({d, w}, std::move(k), dtype));
  conv_bias_ = Parameter(name + ".conv.bias", Tensor::zeros({d}, dtype));
  gen_a_ = layers::Mlp(name + ".gen_a", 2 * d, h, n, rng, dtype);
  gen_b_ = layers::Mlp(name + ".gen_b", 2 * d, h, n * d, rng, dtype);
  gen_c_ = layers::Mlp(name + ".gen_c", 2 * d, h, p * n, rng, dtype);
  gen_d_ = layers::Mlp(name + ".gen_d", 2 * d, h, p * d, rng, dtype);
  norm_gamma_ = Parameter(name + ".norm.gamma", Tensor::full({n}, 1.0, dtype));
  norm_beta_ = Parameter(name + ".norm.beta", Tensor::zeros({n}, dtype));
}

layers::Mlp& SelectiveSSM::generator(char which) {
  switch (which) {
    case 'A': return gen_a_;
    case 'B': return gen_b_;
    case 'C': return gen_c_;
    case 'D': return gen_d_;
    default: throw ContractError(std::string("unknown generator '") + which + "'");
  }
}

Tensor SelectiveSSM::local_features(Tape& tape, const Tensor& x) const {
  Tensor y = ops::conv1d(x, tape.leaf(conv_kernel_), ops::ConvMode::depthwise);
  return ops::add(y, tape.leaf(conv_bias_));
}

StepParamSeq SelectiveSSM::generate_step_params(Tape& tape, const Tensor& x, const Tensor& x_local) const {
  const Tensor u = ops::concat(x, x_local, 1);
  const double sd = 1.0 / std::sqrt(static_cast<double>(config_.d_in));
  const double sn = 1.0 / std::sqrt(static_cast<double>(config_.state_size));
  return {decay_squash(gen_a_.forward(tape, u)), ops::scale(gen_b_.forward(tape, u), sd),
          ops::scale(gen_c_.forward(tape, u), sn), ops::scale(gen_d_.forward(tape, u), sd)};
}

Tensor SelectiveSSM::forward(Tape& tape, const Tensor& x, const std::optional<Tensor>& h0) const {
  if (x.rank() != 2 || x.dim(1) != config_.d_in) {
    throw DimensionError("selective SSM: expected [T x " + std::to_string(config_.d_in) + "] input, got " +
                         to_string(x.shape()));
  }
  const StepParamSeq params = generate_step_params(tape, x, local_features(tape, x));
  const Tensor init = h0 ? *h0 : Tensor::zeros({config_.state_size}, x.dtype());
  return selective_scan(params, x, init, tape.leaf(norm_gamma_), tape.leaf(norm_beta_), config_.norm,
                        config_.norm_eps);
}

void SelectiveSSM::collect(ParameterList& out) {
  out.push_back(&conv_kernel_);
  out.push_back(&conv_bias_);
  gen_a_.collect(out);
  gen_b_.collect(out);
  gen_c_.collect(out);
  gen_d_.collect(out);
  out.push_back(&norm_gamma_);
  out.push_back(&norm_beta_);
}

}  // namespace foss::ssm
