"""Numerical experiments behind the design claims.

Three self-contained studies, each with two independent routes so one can
check the other:

* decomposition gain: Monte Carlo estimate of how much expected reuse a
  set of k atomic functions collects versus one monolithic tool, under a
  configurable joint model of which operations future queries need;
* retrieval overload: probability that the one relevant tool wins the
  similarity ranking against N-1 distractors, by Monte Carlo and by
  quadrature of [F_n(s)]^(N-1) f_r(s);
* library growth: saturating growth with pruning,
  dL/dt = lambda_g (1 - L/K) - lambda_p L, integrated with RK4 and
  compared against the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

JOINT_INDEPENDENT = "independent"
JOINT_ALL_OR_SUBSET = "all_or_subset"


@dataclass
class DecompositionSimConfig:
    k: int = 3
    op_marginals: list[float] = field(default_factory=lambda: [0.5, 0.5, 0.5])
    joint_model: str = JOINT_INDEPENDENT
    p_partial: float = 0.5        # only used by the all_or_subset model
    num_queries: int = 100_000
    seed: int = 0


@dataclass
class RetrievalNoiseModel:
    mu_r: float = 0.6
    sigma_r: float = 0.15
    mu_n: float = 0.4
    sigma_n: float = 0.15
    samples: int = 100_000
    seed: int = 0


@dataclass
class GrowthParams:
    lambda_g: float = 10.0
    lambda_p: float = 0.1
    k_cap: float = 500.0
    l0: float = 0.0
    horizon: float = 10.0
    dt: float = 0.01


def simulate_decomposition_gain(config: DecompositionSimConfig) -> dict:
    """Reuse collected by k atomic tools versus one monolithic tool.

    For each simulated query, the monolithic tool is reusable only when
    the query needs every operation, while atomic tool i is reusable
    whenever operation i is needed.  Since needing all operations implies
    needing each one, the per-query gap is nonnegative pointwise, so the
    totals satisfy atomic_sum >= k_times_mono on every run.

    Returns totals over num_queries plus the Monte Carlo standard error
    of the gap.
    """
    k = config.k
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(config.seed)
    m = config.num_queries
    if config.joint_model == JOINT_INDEPENDENT:
        marginals = np.asarray(config.op_marginals, dtype=np.float64)
        if marginals.shape != (k,):
            raise ValueError(f"need {k} op_marginals, got {marginals.shape}")
        present = rng.random((m, k)) < marginals[None, :]
    elif config.joint_model == JOINT_ALL_OR_SUBSET:
        if not 0.0 <= config.p_partial <= 1.0:
            raise ValueError(f"p_partial must be in [0, 1], got {config.p_partial}")
        full_mask = (1 << k) - 1
        masks = np.full(m, full_mask, dtype=np.int64)
        partial = rng.random(m) < config.p_partial
        n_partial = int(partial.sum())
        if n_partial:
            # proper subsets only: masks 0 .. 2^k - 2
            masks[partial] = rng.integers(0, full_mask, size=n_partial)
        bits = np.arange(k)
        present = ((masks[:, None] >> bits[None, :]) & 1).astype(bool)
    else:
        raise ValueError(f"unknown joint model {config.joint_model!r}")

    atomic_per_query = present.sum(axis=1).astype(np.float64)
    mono_per_query = present.all(axis=1).astype(np.float64)
    gap_per_query = atomic_per_query - k * mono_per_query
    gap_se = (float(gap_per_query.std(ddof=1)) * math.sqrt(m)) if m > 1 else 0.0
    atomic_sum = float(atomic_per_query.sum())
    k_times_mono = float(k * mono_per_query.sum())
    return {
        "atomic_sum": atomic_sum,
        "k_times_mono": k_times_mono,
        "gap": atomic_sum - k_times_mono,
        "gap_se": gap_se,
        "num_queries": m,
    }


def _gaussian_pdf(x: float, mu: float, sigma: float) -> float:
    z = (x - mu) / sigma
    return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def _gaussian_cdf(x: float, mu: float, sigma: float) -> float:
    return 0.5 * (1.0 + math.erf((x - mu) / (sigma * math.sqrt(2.0))))


def adaptive_simpson(f, a: float, b: float, rel_tol: float = 1e-8,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with a relative error target."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    scale = max(abs(whole), 1e-300)

    def recurse(a, b, fa, fb, fm, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, m, fa, fm, flm, left, tol / 2.0, depth - 1)
                + recurse(m, b, fm, fb, frm, right, tol / 2.0, depth - 1))

    return recurse(a, b, fa, fb, fm, whole, rel_tol * scale, max_depth)


def retrieval_success_probability(model: RetrievalNoiseModel, n_tools: int) -> float:
    """Quadrature route: P(relevant tool ranks first among n_tools).

    P = integral of [F_n(s)]^(n-1) f_r(s) ds.  With a single tool there
    are no distractors and the probability is identically 1, no
    integration involved.
    """
    if n_tools < 1:
        raise ValueError(f"n_tools must be >= 1, got {n_tools}")
    if n_tools == 1:
        return 1.0
    sigma = max(model.sigma_r, model.sigma_n)
    lo = min(model.mu_r, model.mu_n) - 8.0 * sigma
    hi = max(model.mu_r, model.mu_n) + 8.0 * sigma

    def integrand(s: float) -> float:
        return (_gaussian_cdf(s, model.mu_n, model.sigma_n) ** (n_tools - 1)
                * _gaussian_pdf(s, model.mu_r, model.sigma_r))

    return adaptive_simpson(integrand, lo, hi)


def retrieval_success_curve(model: RetrievalNoiseModel,
                            n_values: list[int] | None = None) -> list[dict]:
    """Success probability versus library size, by both routes.

    The relevant tool must score strictly above every distractor to win.
    Returns one row per N with the Monte Carlo estimate, its standard
    error, and the quadrature value.
    """
    if n_values is None:
        n_values = [1, 2, 4, 8, 16, 32, 64]
    rng = np.random.default_rng(model.seed)
    rows = []
    for n in n_values:
        if n < 1:
            raise ValueError(f"library sizes must be >= 1, got {n}")
        if n == 1:
            p_mc, se = 1.0, 0.0
        else:
            relevant = rng.normal(model.mu_r, model.sigma_r, model.samples)
            noise = rng.normal(model.mu_n, model.sigma_n,
                               (model.samples, n - 1))
            wins = relevant > noise.max(axis=1)
            p_mc = float(wins.mean())
            se = math.sqrt(max(p_mc * (1.0 - p_mc), 0.0) / model.samples)
        rows.append({
            "n_tools": n,
            "p_mc": p_mc,
            "p_mc_se": se,
            "p_quad": retrieval_success_probability(model, n),
        })
    return rows


def growth_equilibrium(params: GrowthParams) -> float:
    """Stationary library size lambda_g K / (lambda_g + lambda_p K)."""
    return (params.lambda_g * params.k_cap
            / (params.lambda_g + params.lambda_p * params.k_cap))


def growth_rate_constant(params: GrowthParams) -> float:
    """Relaxation rate B = lambda_g / K + lambda_p."""
    return params.lambda_g / params.k_cap + params.lambda_p


def growth_closed_form(params: GrowthParams, t: float) -> float:
    l_star = growth_equilibrium(params)
    b = growth_rate_constant(params)
    return l_star + (params.l0 - l_star) * math.exp(-b * t)


def library_growth(params: GrowthParams) -> dict:
    """Integrate the growth equation with classic RK4 and pair every grid
    point with the closed-form value.

    The trajectory includes t=0 and lands exactly on the horizon (the last
    step is shortened when the horizon is not a multiple of dt).
    """
    if params.dt <= 0.0 or params.horizon < 0.0:
        raise ValueError("dt must be positive and horizon nonnegative")

    def rate(level: float) -> float:
        return (params.lambda_g * (1.0 - level / params.k_cap)
                - params.lambda_p * level)

    def rk4_step(level: float, h: float) -> float:
        k1 = rate(level)
        k2 = rate(level + 0.5 * h * k1)
        k3 = rate(level + 0.5 * h * k2)
        k4 = rate(level + h * k3)
        return level + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    # index the grid instead of accumulating t, so 10^4+ steps do not drift
    n_full = int(math.floor(params.horizon / params.dt + 1e-12))
    trajectory = [(0.0, params.l0, growth_closed_form(params, 0.0))]
    level = params.l0
    for i in range(1, n_full + 1):
        level = rk4_step(level, params.dt)
        t = i * params.dt
        trajectory.append((t, level, growth_closed_form(params, t)))
    remainder = params.horizon - n_full * params.dt
    if remainder > 1e-12 * max(params.horizon, 1.0):
        level = rk4_step(level, remainder)
        trajectory.append((params.horizon, level,
                           growth_closed_form(params, params.horizon)))
    return {
        "trajectory": trajectory,
        "l_star": growth_equilibrium(params),
        "rate_constant": growth_rate_constant(params),
    }
