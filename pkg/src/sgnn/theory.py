"""Numerical checks of the non-accumulation error bounds for a single linear module.

Setting: a target ``P`` (symmetric), input features ``X`` (n x d) and a module
``H = P X W`` with ``W`` of width ``k``. With ``E = P - X X^T`` and
``eps = ||E||_F`` the bounds state that a suitable ``W`` reconstructs ``P`` at
least as well as ``X`` did, up to a term in the tail singular value ``sigma*``.

Three regimes are distinguished:

* ``theorem1``: ``X X^T`` and ``E`` do not commute. ``W0 = V_k S_k^-2`` gives
  ``||P - H H^T|| <= (1 - delta) eps + sqrt(o) eps^2 / s_o^2 + sqrt(n-k) sigma*^2``.
* ``theorem2``: they commute and ``rank(X) > k``. A spectral construction gives
  ``||P - H H^T|| <= eps + sqrt(n-k) sigma*^2``.
* ``corollary_lowrank``: they commute and ``rank(X) <= k``; then ``<= eps``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import save_matrix_csv
from .errors import ContractError, ShapeError
from .linalg import as_matrix, frobenius_norm, matmul, matrix_angle, svd

REGIMES = ("theorem1", "theorem2", "corollary_lowrank")
COMMUTATOR_RTOL = 1e-8
SINGULAR_FLOOR = 1e-12
BOUND_ATOL = 1e-8


@dataclass
class TheoremInstance:
    p: np.ndarray
    x: np.ndarray
    k: int

    def validate(self) -> None:
        p = as_matrix(self.p, "p")
        x = as_matrix(self.x, "x")
        n, d = x.shape
        if p.shape != (n, n):
            raise ShapeError(f"p must be {n}x{n} to match x, got {p.shape}")
        scale = max(1.0, float(np.max(np.abs(p))))
        if np.max(np.abs(p - p.T)) > 1e-10 * scale:
            raise ContractError("p is not symmetric within 1e-10")
        if not 1 <= self.k <= d:
            raise ContractError(f"k = {self.k} must lie in [1, d = {d}]")

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass
class TheoremReport:
    epsilon: float
    o: int
    rank: int
    theta_star: float
    cos_theta: float
    delta: float
    sigma_star: float
    sigma_o: float
    assumption1_holds: bool
    commutator_norm: float
    regime: str
    degenerate: bool = False
    constructed_residual: float = math.nan
    bound: float = math.nan
    bound_ok: bool | None = None  # None: preconditions not met, bound not applicable
    decomposed_bound: float = math.nan
    preconditions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def summary_line(self) -> str:
        status = {True: "ok", False: "VIOLATED", None: "n/a"}[self.bound_ok]
        return (f"{self.regime}: eps={self.epsilon:.6g} residual={self.constructed_residual:.6g} "
                f"bound={self.bound:.6g} delta={self.delta:.6g} sigma*={self.sigma_star:.3g} {status}")


def check_assumption1(p, x):
    """``(holds, ||C||_F)`` for the commutator ``C = X X^T E - E X X^T``.

    ``X X^T`` and ``E`` share an eigenbasis iff they commute, so the assumption
    holds iff the commutator is non-negligible relative to the two factors.
    """
    p = as_matrix(p, "p")
    x = as_matrix(x, "x")
    g = matmul(x, x.T)
    e = p - g
    c = g @ e - e @ g
    c_norm = frobenius_norm(c)
    return bool(c_norm > COMMUTATOR_RTOL * frobenius_norm(g) * frobenius_norm(e)), c_norm


def _q_matrix(u_o: np.ndarray, n: int) -> np.ndarray:
    return u_o @ u_o.T - 0.5 * np.eye(n)


def compute_report_quantities(inst: TheoremInstance) -> TheoremReport:
    """eps, o, theta*, delta, sigma* and the regime (no construction yet)."""
    inst.validate()
    x, p, k = inst.x, inst.p, inst.k
    n = x.shape[0]
    f = svd(x)
    r = f.rank
    o = min(r, k)
    e = p - matmul(x, x.T)
    eps = frobenius_norm(e)
    holds, c_norm = check_assumption1(p, x)
    q = _q_matrix(f.u[:, :o], n)
    eq, qe = e @ q, q @ e
    degenerate = frobenius_norm(eq) <= SINGULAR_FLOOR * max(1.0, frobenius_norm(p))
    if degenerate:
        theta, s, delta = math.nan, math.nan, 1.0
    else:
        theta = matrix_angle(eq, qe)
        s = math.cos(theta)
        delta = 1.0 - math.cos(theta / 2.0)
    sigma_star = float(f.sigma[o]) if r > k and o < f.sigma.size else 0.0
    sigma_o = float(f.sigma[o - 1]) if o >= 1 else 0.0
    if holds:
        regime = "theorem1"
    elif r <= k:
        regime = "corollary_lowrank"
    else:
        regime = "theorem2"
    return TheoremReport(epsilon=eps, o=o, rank=r, theta_star=theta, cos_theta=s, delta=delta,
                         sigma_star=sigma_star, sigma_o=sigma_o, assumption1_holds=holds,
                         commutator_norm=c_norm, regime=regime, degenerate=degenerate)


def _leading_factors(inst: TheoremInstance):
    f = svd(inst.x)
    o = min(f.rank, inst.k)
    if o == 0 or f.sigma[o - 1] <= SINGULAR_FLOOR:
        raise ContractError("the leading singular values of X are numerically zero")
    return f, o


def construct_w0(inst: TheoremInstance) -> np.ndarray:
    """``W0 = V_o S_o^-2`` padded with zero columns to width ``k``."""
    inst.validate()
    f, o = _leading_factors(inst)
    d = inst.x.shape[1]
    w = np.zeros((d, inst.k))
    w[:, :o] = f.vt[:o].T / (f.sigma[:o] ** 2)
    return w


def construct_w_commuting(inst: TheoremInstance) -> np.ndarray:
    """Spectral ``W`` for commuting ``X X^T`` and ``E``.

    With ``Lambda_o = diag(U_o^T E U_o)`` each direction gets the weight
    ``sqrt(s^2 + l) / (s^3 + l s)`` so that ``H H^T = U_o (S_o^2 + Lambda_o) U_o^T``.
    Directions with ``s^2 + l <= 0`` are dropped (weight 0).
    """
    inst.validate()
    holds, _ = check_assumption1(inst.p, inst.x)
    if holds:
        raise ContractError("X X^T and E do not commute; use construct_w0 for this instance")
    f, o = _leading_factors(inst)
    x, p = inst.x, inst.p
    e = p - matmul(x, x.T)
    u_o = f.u[:, :o]
    lam = np.einsum("ij,ij->j", u_o, e @ u_o)
    s = f.sigma[:o]
    mass = s * s + lam
    weight = np.zeros(o)
    pos = mass > 0.0
    weight[pos] = np.sqrt(mass[pos]) / (s[pos] ** 3 + lam[pos] * s[pos])
    w = np.zeros((x.shape[1], inst.k))
    w[:, :o] = f.vt[:o].T * weight
    return w


def residual_at(inst: TheoremInstance, w: np.ndarray) -> float:
    """``||P - H H^T||_F`` with ``H = P X W``."""
    h = matmul(inst.p, matmul(inst.x, w))
    return frobenius_norm(inst.p - h @ h.T)


def verify_bounds(inst: TheoremInstance) -> TheoremReport:
    """Build the regime's ``W``, evaluate the residual and test the bound."""
    rep = compute_report_quantities(inst)
    n, k = inst.n, inst.k
    tail = math.sqrt(n - k) * rep.sigma_star ** 2
    if rep.regime == "theorem1":
        w = construct_w0(inst)
        rep.constructed_residual = residual_at(inst, w)
        rep.bound = rep.epsilon
        rep.decomposed_bound = ((1.0 - rep.delta) * rep.epsilon
                                + math.sqrt(rep.o) * rep.epsilon ** 2 / rep.sigma_o ** 2 + tail)
        pre = {
            "eps_small": rep.epsilon <= rep.delta * rep.sigma_o ** 2 / (2.0 * math.sqrt(rep.o)),
            "tail_small": tail <= rep.delta / 2.0,
            # the tail term is not scaled by eps, so <= eps needs this stronger form
            "tail_small_rel": tail <= rep.delta * rep.epsilon / 2.0,
        }
        rep.preconditions = pre
        if pre["eps_small"] and pre["tail_small"]:
            rep.bound_ok = rep.constructed_residual <= rep.bound
    else:
        w = construct_w_commuting(inst)
        rep.constructed_residual = residual_at(inst, w)
        rep.bound = rep.epsilon + (tail if rep.regime == "theorem2" else 0.0)
        rep.bound_ok = rep.constructed_residual <= rep.bound + BOUND_ATOL
    return rep


def appendix_identities(inst: TheoremInstance) -> dict:
    """Both sides of ``||E Q|| = eps/2`` and ``||E Q + Q E|| = sqrt((1+s)/2) eps``."""
    rep = compute_report_quantities(inst)
    f = svd(inst.x)
    q = _q_matrix(f.u[:, :rep.o], inst.n)
    e = inst.p - matmul(inst.x, inst.x.T)
    return {
        "eq_norm": frobenius_norm(e @ q),
        "half_eps": rep.epsilon / 2.0,
        "sym_norm": frobenius_norm(e @ q + q @ e),
        "angle_form": math.sqrt((1.0 + rep.cos_theta) / 2.0) * rep.epsilon,
    }


# ---------------------------------------------------------------- generators


def _orthonormal(rng, rows, cols):
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def _planted_x(rng, n, d, rank, head, tail_scale):
    """``X = U diag(s) V^T`` with ``rank`` nonzero values: the first ``head``
    in [1, 3], the rest in ``tail_scale * [0.5, 1]``."""
    u = _orthonormal(rng, n, rank)
    v = _orthonormal(rng, d, rank)
    s = np.concatenate([np.sort(rng.uniform(1.0, 3.0, head))[::-1],
                        np.sort(tail_scale * rng.uniform(0.5, 1.0, rank - head))[::-1]])
    return (u * s) @ v.T, u


def _random_symmetric_unit(rng, n):
    g = rng.standard_normal((n, n))
    g = g + g.T
    return g / np.linalg.norm(g)


def generate_theorem1(rng, n, d, k, tail_scale=1e-4) -> TheoremInstance:
    """Non-commuting instance meeting both stated preconditions.

    The direction of ``E`` is drawn first; since ``delta`` only depends on that
    direction and on ``X``, ``eps`` is then set to a random fraction of
    ``delta s_o^2 / (2 sqrt(o))``. A tiny tail keeps the sigma* term below
    ``delta eps / 2``.
    """
    rank = d
    x, _ = _planted_x(rng, n, d, rank, min(k, rank), tail_scale)
    g = _random_symmetric_unit(rng, n)
    probe = compute_report_quantities(TheoremInstance(x @ x.T + g, x, k))
    frac = rng.uniform(0.05, 0.95)
    eps = frac * probe.delta * probe.sigma_o ** 2 / (2.0 * math.sqrt(probe.o))
    p = x @ x.T + eps * g
    return TheoremInstance(0.5 * (p + p.T), x, k)


def _commuting_instance(rng, n, d, k, rank, tail_scale):
    head = min(k, rank)
    x, u = _planted_x(rng, n, d, rank, head, tail_scale)
    q, r = np.linalg.qr(np.hstack([u, rng.standard_normal((n, n - rank))]))
    basis = q * np.sign(np.diag(r))
    lam = rng.standard_normal(n)
    lam *= rng.uniform(0.1, 2.0) / np.linalg.norm(lam)
    p = x @ x.T + (basis * lam) @ basis.T
    return TheoremInstance(0.5 * (p + p.T), x, k)


def generate_corollary(rng, n, d, k) -> TheoremInstance:
    """Commuting instance with ``rank(X) <= k``."""
    rank = int(rng.integers(1, k + 1))
    return _commuting_instance(rng, n, d, k, rank, tail_scale=1.0)


def generate_theorem2(rng, n, d, k, tail_scale=0.1) -> TheoremInstance:
    """Commuting instance with full-rank ``X`` and tail singular values near ``tail_scale``."""
    return _commuting_instance(rng, n, d, k, d, tail_scale)


GENERATORS = {
    "theorem1": generate_theorem1,
    "theorem2": generate_theorem2,
    "corollary_lowrank": generate_corollary,
}


# ---------------------------------------------------------------- sweep


@dataclass
class SweepReport:
    counts: dict
    reports: list
    violations: list

    @property
    def any_violation(self) -> bool:
        return bool(self.violations)

    def to_text(self) -> str:
        lines = []
        for regime, c in self.counts.items():
            lines.append(f"{regime}: {c['ok']}/{c['total']} ok, {c['violated']} violated, "
                         f"{c['not_applicable']} not applicable")
        lines.extend(f"violation dumped: {v}" for v in self.violations)
        lines.append(json.dumps({"counts": self.counts, "violations": [str(v) for v in self.violations]}))
        return "\n".join(lines) + "\n"


def _dump(inst: TheoremInstance, rep: TheoremReport, directory, tag: str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_matrix_csv(directory / f"{tag}_p.csv", inst.p)
    save_matrix_csv(directory / f"{tag}_x.csv", inst.x)
    meta = dict(rep.to_dict(), k=inst.k)
    (directory / f"{tag}_report.json").write_text(json.dumps(meta, default=float) + "\n", encoding="utf-8")
    return directory / f"{tag}_p.csv"


def sweep(trials: int, n: int, d: int, k: int, seed: int = 0, regimes=REGIMES,
          dump_dir=None) -> SweepReport:
    """Verify ``trials`` generated instances per regime; dump any violation as CSV."""
    if trials < 1:
        raise ContractError("trials must be >= 1")
    if not 1 <= k < d <= n:
        raise ContractError("the generators need 1 <= k < d <= n")
    counts, reports, violations = {}, [], []
    for ri, regime in enumerate(regimes):
        gen = GENERATORS[regime]
        c = {"total": 0, "ok": 0, "violated": 0, "not_applicable": 0, "regime_mismatch": 0}
        for trial in range(trials):
            rng = np.random.default_rng([seed, ri, trial])
            inst = gen(rng, n, d, k)
            rep = verify_bounds(inst)
            reports.append(rep)
            c["total"] += 1
            if rep.regime != regime:
                c["regime_mismatch"] += 1
            if rep.bound_ok is None:
                c["not_applicable"] += 1
            elif rep.bound_ok:
                c["ok"] += 1
            else:
                c["violated"] += 1
                if dump_dir is not None:
                    violations.append(_dump(inst, rep, dump_dir, f"{regime}_{trial}"))
                else:
                    violations.append(f"{regime}_{trial}")
        counts[regime] = c
    return SweepReport(counts, reports, violations)
