"""Independent numpy reference values frozen into the C++ unit tests.

Run: python3 tests/oracles/derive_constants.py
"""
import json
import math

import numpy as np
from scipy import integrate, stats


def silu(v):
    return v / (1.0 + np.exp(-v))


def param_count(d, te, h, x, blocks):
    n = h * d + h
    n += blocks * (2 * h + x * h + x + x * te + x + x * x + x + h * x + h)
    return n + h + 1


def tiny_network_energy(xv, t):
    # input_dim 1, hidden 2, expansion 2, embed 2 (single frequency 1), one block
    w_in = np.array([[0.5], [-1.0]])
    b_in = np.array([0.1, 0.2])
    g = np.array([1.5, 0.5])
    beta = np.array([0.0, 0.1])
    w1 = np.array([[1.0, -0.5], [0.25, 2.0]])
    b1 = np.array([0.0, -0.1])
    wt = np.array([[0.3, 0.0], [-0.2, 0.4]])
    bt = np.array([0.05, 0.0])
    w2 = np.array([[0.7, 0.1], [-0.3, 0.9]])
    b2 = np.array([0.0, 0.2])
    wz = np.array([[1.0, -1.0], [0.5, 0.5]])
    bz = np.array([0.01, -0.02])
    w_out = np.array([2.0, -1.0])
    b_out = 0.3
    emb = np.array([math.sin(t), math.cos(t)])
    h = w_in[:, 0] * xv + b_in
    mu = h.mean()
    var = ((h - mu) ** 2).mean()
    normed = (h - mu) / math.sqrt(var + 1e-5)
    u = g * normed + beta
    a = w1 @ silu(u) + b1 + wt @ emb + bt
    c = w2 @ silu(a) + b2
    h = h + wz @ silu(c) + bz
    return float(w_out @ h + b_out)


def gmm_logpdf_bruteforce(xv):
    w = [0.3, 0.7]
    m = [-1.0, 2.0]
    s = [0.5, 1.5]
    return math.log(sum(wk * math.exp(-0.5 * ((xv - mk) / sk) ** 2) / (sk * math.sqrt(2 * math.pi))
                        for wk, mk, sk in zip(w, m, s)))


def marginal_quadrature():
    # N(0.5, 0.8^2) data, t = 0.8 -> t' = 0.4; integral of kernel times p_t
    mu, sd, t, tp, xq = 0.5, 0.8, 0.8, 0.4, 0.3
    v_t = t * t * sd * sd + (1 - t) ** 2
    v_tp = tp * tp * sd * sd + (1 - tp) ** 2
    kv = (1 - tp) ** 2 - (tp / t) ** 2 * (1 - t) ** 2

    def integrand(xv):
        return stats.norm.pdf(xv, t * mu, math.sqrt(v_t)) * stats.norm.pdf(xq, tp / t * xv, math.sqrt(kv))

    val, _ = integrate.quad(integrand, -20, 20, epsabs=1e-14, epsrel=1e-13)
    return val, float(stats.norm.pdf(xq, tp * mu, math.sqrt(v_tp)))


def adam_first_step(lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, g=1.0):
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    return -lr * (m / (1 - b1)) / (math.sqrt(v / (1 - b2)) + eps)


def main():
    t, tp, xv = 0.8, 0.4, 2.0
    out = {
        "param_count_d1_te32_h128_x256_b2": param_count(1, 32, 128, 256, 2),
        "param_count_d10_te32_h64_x128_b2": param_count(10, 32, 64, 128, 2),
        "tiny_energy_x0.7_t0.3": tiny_network_energy(0.7, 0.3),
        "tiny_energy_x-1.2_t0.9": tiny_network_energy(-1.2, 0.9),
        "gmm2_logpdf_0.4": gmm_logpdf_bruteforce(0.4),
        "gmm2_logpdf_-2.5": gmm_logpdf_bruteforce(-2.5),
        "noising_mean": tp / t * xv,
        "noising_var": (1 - tp) ** 2 - (tp / t) ** 2 * (1 - t) ** 2,
        "denoising_var": 0.4 * (0.4 + 0.8 - 2 * 0.4 * 0.8) / 0.16,
        "noising_logpdf_at_mean": float(stats.norm.logpdf(1.0, 1.0, math.sqrt(0.35))),
        "failure_multimodality": 1.8 / 1.82,
        "velocity_x1_t0.5_s-1": 1.0 / 0.5 + (0.5 / 0.5) * -1.0,
        "c_in_sigma1_a1_t0.5": 1.0 / math.sqrt(0.25 + 0.25),
        "adam_first_step": adam_first_step(),
        "two_log_two": 2 * math.log(2),
        "ema_once": 0.9999 * 0 + 1e-4 * 1,
    }
    q, exact = marginal_quadrature()
    out["marginal_quadrature"] = q
    out["marginal_closed_form"] = exact
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
