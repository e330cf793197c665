"""Uniform-stability measurements for the shared forward model of a linear TEA.

With ``W_u`` and ``W_e`` held fixed and both losses quadratic, the joint
objective is a least-squares problem in ``Theta`` alone:

    L(Theta) = (1/N) sum_n ||Theta W_u x_n - y_n||^2 + ||Theta W_e y_n - y_n||^2

This module solves it exactly, measures how much the prediction loss moves
when one training pair is swapped out, checks the representative-subset
assumption, evaluates the analytic stability bound and splits the objective
into prediction loss plus two regularizer terms.

Row-major arrays throughout: ``x`` is ``N x |X|``, ``y`` is ``N x |Y|``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
from scipy import stats

from .seeding import child_seed, rng

log = logging.getLogger(__name__)

QUADRATIC_C = 2.0
SLOPE_NOTE = (
    "slope tolerance +-0.3 around -1 allows for finite-sample noise in a max statistic"
)


class StabilityError(ValueError):
    pass


@dataclass
class StabilityConfig:
    """Settings for a stability measurement.

    ``sigma_p``/``sigma_r`` of ``None`` are estimated as the largest loss
    gradient norm over the probe set. ``a`` is never estimated.
    """

    n_grid: tuple[int, ...] = (50, 100, 200, 400, 800, 1600)
    replacements: int = 20
    trials: int = 1
    probe_size: int = 512
    c: float = QUADRATIC_C
    sigma_p: float | None = None
    sigma_r: float | None = None
    a: float = 1.0
    M: int | None = None
    tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        if not self.n_grid or min(self.n_grid) <= 0:
            raise StabilityError("N grid must hold positive sizes")
        if self.replacements <= 0 or self.trials <= 0 or self.probe_size <= 0:
            raise StabilityError("replacements, trials and probe_size must be positive")
        if self.c <= 0 or self.a <= 0:
            raise StabilityError("c and a must be positive")


@dataclass
class ThetaSolution:
    theta: np.ndarray
    pseudo_inverse: bool
    gram_condition: float


@dataclass
class AssumptionReport:
    subset: list[int]
    epsilon: float
    r_alpha: float
    r_beta: float
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return len(self.subset)

    def summary(self) -> dict:
        return {"subset": self.subset, "M": self.M, "epsilon": self.epsilon,
                "r_alpha": self.r_alpha, "r_beta": self.r_beta}


def _check_pair(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] != y.shape[0]:
        raise StabilityError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    return x, y


def joint_objective(theta, W_u, W_e, x, y) -> float:
    x, y = _check_pair(x, y)
    rp = x @ W_u.T @ theta.T - y
    rr = y @ W_e.T @ theta.T - y
    return float((np.sum(rp * rp) + np.sum(rr * rr)) / x.shape[0])


def solve_theta(W_u, W_e, x, y, tol: float = 1e-12) -> ThetaSolution:
    """Exact minimizer of the joint quadratic objective over ``Theta``.

    Rows are put in a canonical order before summation, so the result does
    not depend on sample order at all. Falls back to the pseudo-inverse when
    the Gram matrix's reciprocal condition number drops below ``tol``.
    """
    x, y = _check_pair(x, y)
    order = np.lexsort(np.hstack([x, y]).T[::-1])
    x, y = x[order], y[order]
    zh = x @ W_u.T
    z = y @ W_e.T
    A = y.T @ zh + y.T @ z
    G = zh.T @ zh + z.T @ z
    s = np.linalg.svd(G, compute_uv=False)
    rcond = s[-1] / s[0] if s[0] > 0 else 0.0
    if rcond < tol:
        log.warning("rank-deficient Gram matrix (rcond %.3g); using the pseudo-inverse", rcond)
        return ThetaSolution(A @ np.linalg.pinv(G), True, float(rcond))
    theta = scipy.linalg.solve(G, A.T, assume_a="pos").T
    return ThetaSolution(theta, False, float(rcond))


def prediction_losses(theta, W_u, x, y) -> np.ndarray:
    r = x @ W_u.T @ theta.T - y
    return np.sum(r * r, axis=1)


@dataclass
class InstabilityResult:
    N: int
    gamma: float
    samples: list[float]
    degenerate: bool


def instability_from_batch(W_u, W_e, x, y, replace_idx, x_new, y_new, probe_x, probe_y, tol=1e-12) -> InstabilityResult:
    """Max prediction-loss change over the probe set, one swap at a time."""
    base = solve_theta(W_u, W_e, x, y, tol)
    ref = prediction_losses(base.theta, W_u, probe_x, probe_y)
    degenerate = base.pseudo_inverse
    samples = []
    for i, xn, yn in zip(replace_idx, x_new, y_new):
        xi, yi = x.copy(), y.copy()
        xi[i], yi[i] = xn, yn
        sol = solve_theta(W_u, W_e, xi, yi, tol)
        degenerate |= sol.pseudo_inverse
        samples.append(float(np.max(np.abs(prediction_losses(sol.theta, W_u, probe_x, probe_y) - ref))))
    return InstabilityResult(x.shape[0], max(samples), samples, degenerate)


def empirical_instability(N: int, W_u, W_e, pool_x, pool_y, probe_x, probe_y,
                          replacements: int = 20, seed: int = 0, tol: float = 1e-12) -> InstabilityResult:
    """Draw a batch of ``N`` plus ``replacements`` fresh pairs from the pool and
    measure the largest loss perturbation on the probe set."""
    z_dim = W_u.shape[0]
    if N < z_dim + 1:
        raise StabilityError(f"N={N} must be at least |Z|+1={z_dim + 1}")
    pool_x, pool_y = _check_pair(pool_x, pool_y)
    if N + replacements > pool_x.shape[0]:
        raise StabilityError(f"pool of {pool_x.shape[0]} cannot supply N={N} plus {replacements} replacements")
    g = rng(seed)
    pick = g.permutation(pool_x.shape[0])[: N + replacements]
    batch, fresh = pick[:N], pick[N:]
    idx = g.integers(0, N, size=replacements)
    return instability_from_batch(W_u, W_e, pool_x[batch], pool_y[batch], idx,
                                  pool_x[fresh], pool_y[fresh], probe_x, probe_y, tol)


def select_subset(encoded: np.ndarray, M: int) -> list[int]:
    """Column-pivoted QR on the encoded targets (``N x |Z|``); first ``M`` pivots."""
    if not 1 <= M <= encoded.shape[0]:
        raise StabilityError(f"M={M} must lie in [1, N={encoded.shape[0]}]")
    _, _, piv = scipy.linalg.qr(encoded.T, mode="economic", pivoting=True)
    if M <= piv.size:
        return [int(i) for i in piv[:M]]
    rest = [i for i in range(encoded.shape[0]) if i not in set(piv.tolist())]
    return [int(i) for i in piv] + rest[: M - piv.size]


def check_assumption1(W_u, W_e, x, y, M: int, subset: list[int] | None = None) -> AssumptionReport:
    """Express every predicted latent and every encoded target as a linear
    combination of the encoded representatives; report the worst residual
    and the largest coefficient norms."""
    x, y = _check_pair(x, y)
    z_dim = W_e.shape[0]
    if M > x.shape[0]:
        raise StabilityError(f"M={M} exceeds N={x.shape[0]}")
    if M < z_dim:
        warnings.warn(f"M={M} < |Z|={z_dim}: the representatives cannot span the latent space", stacklevel=2)
    encoded = y @ W_e.T
    B = select_subset(encoded, M) if subset is None else list(subset)
    basis = encoded[B].T  # |Z| x M
    targets = np.hstack([W_u @ x.T, encoded.T])
    coef, *_ = scipy.linalg.lstsq(basis, targets)
    resid = targets - basis @ coef
    n = x.shape[0]
    alpha, beta = coef[:, :n].T, coef[:, n:].T
    res_norm = np.linalg.norm(resid, axis=0)
    return AssumptionReport(
        subset=B, epsilon=float(res_norm.max()),
        r_alpha=float(np.linalg.norm(alpha, axis=1).max()),
        r_beta=float(np.linalg.norm(beta, axis=1).max()),
        alpha=alpha, beta=beta, residuals=resid.T,
    )


def theorem1_bound(r_alpha: float, r_beta: float, M: int, N: int,
                   sigma_p: float, sigma_r: float, c: float = QUADRATIC_C, a: float = 1.0) -> float:
    """``2 (sigma_p^2 r_alpha^2 + sigma_p sigma_r r_alpha r_beta) a M / (c N)``."""
    vals = {"r_alpha": r_alpha, "r_beta": r_beta, "M": M, "N": N,
            "sigma_p": sigma_p, "sigma_r": sigma_r, "c": c, "a": a}
    missing = [k for k, v in vals.items() if v is None]
    if missing:
        raise StabilityError(f"missing constants: {', '.join(missing)}")
    bad = [k for k, v in vals.items() if not v > 0]
    if bad:
        raise StabilityError(f"constants must be positive: {', '.join(bad)}")
    return 2.0 * (sigma_p**2 * r_alpha**2 + sigma_p * sigma_r * r_alpha * r_beta) * a * M / (c * N)


def estimate_sigmas(theta, W_u, W_e, x, y) -> tuple[float, float]:
    """Largest gradient norm of each quadratic loss w.r.t. its prediction."""
    gp = 2.0 * (x @ W_u.T @ theta.T - y)
    gr = 2.0 * (y @ W_e.T @ theta.T - y)
    return float(np.linalg.norm(gp, axis=1).max()), float(np.linalg.norm(gr, axis=1).max())


def regularizer_decomposition(theta, W_u, W_e, x, y, subset) -> tuple[float, float, float]:
    """Split the joint objective into ``L_p``, ``R1`` and ``R2``.

    ``R1 = (M/N) L_r^B`` with ``L_r^B`` the mean reconstruction loss over the
    representatives, and ``R2`` is the remaining reconstruction loss.
    """
    x, y = _check_pair(x, y)
    n, B = x.shape[0], list(subset)
    if not B or any(not 0 <= b < n for b in B):
        raise StabilityError("subset indices must be non-empty and lie within the targets")
    lp = prediction_losses(theta, W_u, x, y)
    rr = y @ W_e.T @ theta.T - y
    lr = np.sum(rr * rr, axis=1)
    L_p = float(lp.sum() / n)
    L_rB = float(lr[B].sum() / len(B))
    R1 = len(B) / n * L_rB
    R2 = float(lr.sum() / n) - R1
    return L_p, R1, R2


def fit_loglog_slope(ns, gammas) -> tuple[float, float, float]:
    """Least-squares slope, its standard error and the intercept of log gamma on log N."""
    g = np.asarray(gammas, dtype=np.float64)
    if np.any(g <= 0):
        raise StabilityError("instability values must be positive for a log-log fit")
    fit = stats.linregress(np.log(np.asarray(ns, dtype=np.float64)), np.log(g))
    return float(fit.slope), float(fit.stderr), float(fit.intercept)


def stability_report(W_u, W_e, pool_x, pool_y, cfg: StabilityConfig) -> dict:
    """Measure instability across the N grid and compare against the bound.

    The first ``probe_size`` pool rows form a fixed probe set; batches and
    replacements are drawn from the rest.
    """
    pool_x, pool_y = _check_pair(pool_x, pool_y)
    if pool_x.shape[0] <= cfg.probe_size:
        raise StabilityError("pool is too small to hold the probe set")
    probe_x, probe_y = pool_x[: cfg.probe_size], pool_y[: cfg.probe_size]
    rest_x, rest_y = pool_x[cfg.probe_size:], pool_y[cfg.probe_size:]
    z_dim = W_u.shape[0]
    M = cfg.M or z_dim
    assumption = check_assumption1(W_u, W_e, probe_x, probe_y, M)
    ref = solve_theta(W_u, W_e, rest_x, rest_y, cfg.tol)
    est_p, est_r = estimate_sigmas(ref.theta, W_u, W_e, probe_x, probe_y)
    sigma_p = cfg.sigma_p if cfg.sigma_p is not None else est_p
    sigma_r = cfg.sigma_r if cfg.sigma_r is not None else est_r

    rows, gamma_hat, bounds, flags = [], {}, {}, {}
    for N in cfg.n_grid:
        per_trial = []
        for t in range(cfg.trials):
            res = empirical_instability(N, W_u, W_e, rest_x, rest_y, probe_x, probe_y,
                                        cfg.replacements, child_seed(cfg.seed, f"stability/{N}", t), cfg.tol)
            per_trial.append(res.gamma)
            flags[N] = flags.get(N, False) or res.degenerate
            rows.extend({"N": N, "trial": t, "replacement": k, "gamma": v} for k, v in enumerate(res.samples))
        gamma_hat[N] = float(np.median(per_trial))
        bounds[N] = theorem1_bound(assumption.r_alpha, assumption.r_beta, assumption.M, N,
                                   sigma_p, sigma_r, cfg.c, cfg.a)
    slope, se, intercept = fit_loglog_slope(list(gamma_hat), list(gamma_hat.values()))
    return {
        "config": asdict(cfg),
        "n_grid": list(cfg.n_grid),
        "gamma_samples": {str(n): [r["gamma"] for r in rows if r["N"] == n] for n in cfg.n_grid},
        "gamma_hat": {str(n): v for n, v in gamma_hat.items()},
        "bound": {str(n): v for n, v in bounds.items()},
        "within_bound": all(gamma_hat[n] <= bounds[n] for n in cfg.n_grid),
        "slope": slope,
        "slope_se": se,
        "intercept": intercept,
        "slope_note": SLOPE_NOTE,
        "degenerate": {str(n): v for n, v in flags.items()},
        "constants": {"c": cfg.c, "a": cfg.a, "a_source": "user-supplied",
                      "sigma_p": sigma_p, "sigma_r": sigma_r,
                      "sigma_source": "estimated" if cfg.sigma_p is None else "user-supplied"},
        "assumption": assumption.summary(),
        "rows": rows,
    }
