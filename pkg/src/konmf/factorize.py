"""Kernel orthogonal NMF solvers: KNSC-Ncut, KNSC-Rcut and KOGNMF.

All three factorise the feature-space data Phi(X) ~ Phi(X) F H with a
non-negative coefficient matrix F (n x k) and a near-orthogonal cluster
indicator H (k x n). Phi is never formed; every quantity is expressed
through the kernel matrix K = Phi(X)^T Phi(X).

Objectives (with s = d^-1/2 for Ncut, s = 1 otherwise)::

    rec   = Tr(S K S) - 2 Tr(S K F H) + Tr(H^T F^T K F H)
    E     = alpha * rec + mu * ||H H^T - I||_F^2  [+ lambda * Tr(H L H^T)]

where S = diag(s) and the Laplacian term is only present for KOGNMF.

The solvers run a batch of restarts at once: factor arrays carry a leading
restart axis, and restarts sharing one kernel are updated together.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .cluster import batch_orthogonality
from .errors import ConvergenceError, ShapeError, ValidationError
from .graph import GraphSet, KernelSpec, build_graph_set, build_kernel
from .numerics import DEFAULT_EPS, hadamard_update, kernel_apply

# step-halving attempts before an H update is rejected outright
MAX_HALVINGS = 30


class Variant(str, Enum):
    KNSC_NCUT = "knsc_ncut"
    KNSC_RCUT = "knsc_rcut"
    KOGNMF = "kognmf"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, Variant):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"ncut": cls.KNSC_NCUT, "rcut": cls.KNSC_RCUT, "knsc_ncut": cls.KNSC_NCUT,
                   "knsc_rcut": cls.KNSC_RCUT, "kognmf": cls.KOGNMF}
        if key not in aliases:
            raise ValidationError(f"unknown variant {value!r}; expected ncut, rcut or kognmf")
        return aliases[key]

    @property
    def needs_graph(self) -> bool:
        return self is not Variant.KNSC_RCUT


@dataclass(frozen=True)
class HyperParams:
    """Trade-off weights and loop control.

    ``damping`` guards the H step: when the plain multiplicative step would
    raise the objective, the step exponent is halved until it does not. It
    never alters a step that already decreases the objective.
    """

    alpha: float = 10.0
    mu: float = 100.0
    lam: float = 10.0
    kappa: float = 1e-3
    max_iter: int = 300
    eps: float = DEFAULT_EPS
    damping: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if self.mu < 0 or self.lam < 0:
            raise ValidationError("mu and lambda must be non-negative")
        if self.kappa < 0:
            raise ValidationError(f"kappa must be >= 0, got {self.kappa}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise ValidationError(f"max_iter must be a non-negative integer, got {self.max_iter}")
        if not self.eps > 0:
            raise ValidationError(f"eps must be > 0, got {self.eps}")


@dataclass
class FactorState:
    f: np.ndarray
    h: np.ndarray
    iteration: int = 0
    objective_trace: list = field(default_factory=list)
    orthogonality_trace: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return bool(getattr(self, "_converged", False))


def init_factors(n: int, k: int, seed) -> FactorState:
    """Uniform [0, 1) initial factors; F is drawn before H from one generator."""
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    f = rng.random((n, k))
    h = rng.random((k, n))
    return FactorState(f=f, h=h)


def _t(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def _check_state(state: FactorState, n: int) -> tuple[int, int]:
    f, h = state.f, state.h
    if f.shape[-2] != n or h.shape[-1] != n or f.shape[-1] != h.shape[-2]:
        raise ShapeError(f"factor shapes F {f.shape}, H {h.shape} do not fit n={n}")
    return f.shape[-1], n


def _h_terms(h, alpha_target, ftkf, hp: HyperParams, ha=None, degree=None):
    """Numerator and denominator of the H rule.

    ``alpha_target`` is F^T K (Rcut, KOGNMF) or F^T K D^-1/2 (Ncut).
    """
    hht = h @ _t(h)
    num = hp.alpha * alpha_target + 2.0 * hp.mu * h
    den = hp.alpha * (ftkf @ h) + 2.0 * hp.mu * (hht @ h)
    if ha is not None:
        num = num + hp.lam * ha
        den = den + hp.lam * (h * degree)
    return num, den


def update_h_rcut(state: FactorState, k_matrix, hp: HyperParams = HyperParams()) -> FactorState:
    k_matrix = np.asarray(k_matrix, dtype=np.float64)
    _check_state(state, k_matrix.shape[0])
    f, h = state.f, state.h
    ftk = _t(f) @ k_matrix
    num, den = _h_terms(h, ftk, ftk @ f, hp)
    return replace(state, h=hadamard_update(h, num, den, hp.eps))


def update_z_ncut(state: FactorState, scaled_k, k_matrix, hp: HyperParams = HyperParams()) -> FactorState:
    """Z step of KNSC-Ncut; ``scaled_k`` is K D^-1/2 from :func:`scaled_kernel_ncut`."""
    k_matrix = np.asarray(k_matrix, dtype=np.float64)
    scaled_k = np.asarray(scaled_k, dtype=np.float64)
    if scaled_k.shape != k_matrix.shape:
        raise ShapeError(f"scaled kernel {scaled_k.shape} vs kernel {k_matrix.shape}")
    _check_state(state, k_matrix.shape[0])
    f, z = state.f, state.h
    ftk = _t(f) @ k_matrix
    num, den = _h_terms(z, _t(f) @ scaled_k, ftk @ f, hp)
    return replace(state, h=hadamard_update(z, num, den, hp.eps))


def update_h_kognmf(state: FactorState, k_matrix, graph: GraphSet, hp: HyperParams = HyperParams()) -> FactorState:
    k_matrix = np.asarray(k_matrix, dtype=np.float64)
    _check_state(state, k_matrix.shape[0])
    if graph.affinity.shape != k_matrix.shape:
        raise ShapeError(f"graph {graph.affinity.shape} does not match kernel {k_matrix.shape}")
    f, h = state.f, state.h
    ftk = _t(f) @ k_matrix
    num, den = _h_terms(h, ftk, ftk @ f, hp, ha=h @ graph.affinity, degree=graph.degree)
    return replace(state, h=hadamard_update(h, num, den, hp.eps))


def update_f(state: FactorState, k_matrix, hp: HyperParams = HyperParams(), scaled_k=None) -> FactorState:
    """F <- F * (K' H^T) / (K F H H^T), with K' = K, or K D^-1/2 when ``scaled_k`` is given.

    Passing ``scaled_k`` gives the F rule that descends the Ncut objective.
    """
    k_matrix = np.asarray(k_matrix, dtype=np.float64)
    _check_state(state, k_matrix.shape[0])
    f, h = state.f, state.h
    target = k_matrix if scaled_k is None else np.asarray(scaled_k, dtype=np.float64)
    if target.shape != k_matrix.shape:
        raise ShapeError(f"scaled kernel {target.shape} vs kernel {k_matrix.shape}")
    num = target @ _t(h)
    den = (k_matrix @ f) @ (h @ _t(h))
    return replace(state, f=hadamard_update(f, num, den, hp.eps))


class _Problem:
    """Kernel, variant-specific scaling and graph terms, shared by all restarts."""

    def __init__(self, variant: Variant, k_matrix: np.ndarray, graph: Optional[GraphSet], hp: HyperParams):
        self.variant = variant
        self.k = k_matrix
        self.hp = hp
        self.scale = None
        self.affinity = None
        self.degree = None
        diag = np.ascontiguousarray(np.diagonal(k_matrix))
        if variant.needs_graph and graph is None:
            raise ValidationError(f"{variant.value} requires a graph set")
        if graph is not None and graph.affinity.shape != k_matrix.shape:
            raise ShapeError(f"graph {graph.affinity.shape} does not match kernel {k_matrix.shape}")
        if variant is Variant.KNSC_NCUT:
            self.scale = graph.inv_sqrt_degree
            self.const = float(np.sum(diag * (self.scale * self.scale)))
        else:
            self.const = float(np.sum(diag))
        if variant is Variant.KOGNMF:
            self.affinity = graph.affinity
            self.degree = graph.degree

    def h_times_affinity(self, h):
        if self.affinity is None:
            return None
        return _t(kernel_apply(self.affinity, _t(h)))

    def alpha_target(self, kf):
        kft = _t(kf)
        return kft if self.scale is None else kft * self.scale

    def objective(self, f, h, kf, ha):
        hp = self.hp
        k = h.shape[-2]
        hht = h @ _t(h)
        ftkf = _t(f) @ kf
        cross = np.sum(self.alpha_target(kf) * h, axis=(-2, -1))
        quad = np.sum(ftkf * _t(hht), axis=(-2, -1))
        rec = self.const - 2.0 * cross + quad
        bad = np.flatnonzero(np.ravel(rec < -1e-6 * max(1.0, abs(self.const))))
        if bad.size:
            raise ConvergenceError(
                f"reconstruction term is negative ({float(np.min(rec)):.3e}); kernel or factors are inconsistent",
                restart=int(bad[0]),
            )
        total = hp.alpha * rec + hp.mu * np.sum((hht - np.eye(k)) ** 2, axis=(-2, -1))
        if ha is not None:
            lap = np.sum(h * h * self.degree, axis=(-2, -1)) - np.sum(ha * h, axis=(-2, -1))
            total = total + hp.lam * lap
        return total


def _as_kernel(k_matrix) -> np.ndarray:
    k = np.asarray(k_matrix, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError(f"kernel must be square, got shape {k.shape}")
    if np.any(k < 0):
        raise ValidationError("kernel has negative entries; multiplicative updates need K >= 0")
    return k


def objective(variant, state: FactorState, k_matrix, graph: Optional[GraphSet] = None,
              hp: HyperParams = HyperParams()) -> float:
    variant = Variant.parse(variant)
    k = _as_kernel(k_matrix)
    _check_state(state, k.shape[0])
    prob = _Problem(variant, k, graph, hp)
    f, h = state.f, state.h
    kf = kernel_apply(k, f)
    out = prob.objective(f, h, kf, prob.h_times_affinity(h))
    return float(out) if np.ndim(out) == 0 else out


def lagrangian_gradients(state: FactorState, k_matrix, graph: Optional[GraphSet] = None,
                         hp: HyperParams = HyperParams(), variant=None):
    """Analytic gradients (dE/dH, dE/dF) of the objective.

    dH = -2a F^T K S + 2a F^T K F H + 4mu (H H^T - I) H [+ 2lam H (D - A)]
    dF = -2a K S H^T + 2a K F H H^T
    with S = D^-1/2 for Ncut and the identity otherwise. Without an explicit
    ``variant`` the graph term is included whenever ``graph`` is given.
    """
    if variant is None:
        variant = Variant.KOGNMF if graph is not None else Variant.KNSC_RCUT
    variant = Variant.parse(variant)
    k = _as_kernel(k_matrix)
    _check_state(state, k.shape[0])
    f, h = state.f, state.h
    a, mu, lam = hp.alpha, hp.mu, hp.lam
    kdim = h.shape[0]
    ks = k
    if variant is Variant.KNSC_NCUT:
        if graph is None:
            raise ValidationError("knsc_ncut gradients need the degree vector")
        ks = k * graph.inv_sqrt_degree[None, :]
    ftk = f.T @ k
    hht = h @ h.T
    d_h = -2 * a * (f.T @ ks) + 2 * a * (ftk @ f @ h) + 4 * mu * ((hht - np.eye(kdim)) @ h)
    if variant is Variant.KOGNMF:
        d_h = d_h + 2 * lam * (h * graph.degree) - 2 * lam * (h @ graph.affinity)
    d_f = -2 * a * (ks @ h.T) + 2 * a * (k @ f @ hht)
    return d_h, d_f


def _check_finite(e, active, it, seeds):
    bad = np.flatnonzero(active & ~np.isfinite(e))
    if bad.size:
        i = int(bad[0])
        raise ConvergenceError(f"non-finite objective at iteration {it} (seed {seeds[i]})", restart=i)


def factorize(variant, k_matrix, k: int, seeds: Sequence, hp: HyperParams = HyperParams(),
              graph: Optional[GraphSet] = None) -> list[FactorState]:
    """Run one restart per seed against a shared kernel and return final states.

    Each iteration applies the variant's H rule, then the F rule, and records
    the objective and the orthogonality score. A restart stops when
    E_prev - E <= kappa * max(1, E_prev) or after ``hp.max_iter`` iterations.
    """
    variant = Variant.parse(variant)
    kmat = _as_kernel(k_matrix)
    n = kmat.shape[0]
    if variant.needs_graph and graph is None:
        graph = build_graph_set(kmat, hp.eps)
    prob = _Problem(variant, kmat, graph, hp)
    seeds = list(seeds)
    if not seeds:
        raise ValidationError("at least one seed is required")
    inits = [init_factors(n, k, s) for s in seeds]
    f = np.stack([st.f for st in inits])
    h = np.stack([st.h for st in inits])
    r = len(seeds)

    kf = kernel_apply(kmat, f)
    ha = prob.h_times_affinity(h)
    e = prob.objective(f, h, kf, ha)
    _check_finite(e, np.ones(r, dtype=bool), 0, seeds)
    obj_tr = [[float(v)] for v in e]
    orth0 = batch_orthogonality(h)
    orth_tr = [[float(v)] for v in orth0]
    active = np.ones(r, dtype=bool)
    converged = np.zeros(r, dtype=bool)
    iters = np.zeros(r, dtype=np.int64)
    eps = hp.eps

    for it in range(1, hp.max_iter + 1):
        ftkf = _t(f) @ kf
        num, den = _h_terms(h, prob.alpha_target(kf), ftkf, hp, ha, prob.degree)
        hc = hadamard_update(h, num, den, eps)
        ha_c = prob.h_times_affinity(hc)
        if hp.damping:
            ec = prob.objective(f, hc, kf, ha_c)
            bad = active & ~(ec <= e)
            if bad.any():
                ratio = num / (den + eps)
                eta = np.ones(r)
                for _ in range(MAX_HALVINGS):
                    idx = np.flatnonzero(bad)
                    eta[idx] *= 0.5
                    hc[idx] = h[idx] * ratio[idx] ** eta[idx, None, None]
                    ha_sub = prob.h_times_affinity(hc[idx])
                    if ha_sub is not None:
                        ha_c[idx] = ha_sub
                    ec_sub = prob.objective(f[idx], hc[idx], kf[idx], ha_sub)
                    still = ~(ec_sub <= e[idx])
                    bad[idx[~still]] = False
                    if not bad.any():
                        break
                if bad.any():
                    idx = np.flatnonzero(bad)
                    hc[idx] = h[idx]
                    if ha_c is not None:
                        ha_c[idx] = ha[idx]
        sel = active[:, None, None]
        h_new = np.where(sel, hc, h)
        ha_new = None if ha is None else np.where(sel, ha_c, ha)

        ht = _t(h_new)
        if prob.scale is None:
            kht = kernel_apply(kmat, ht)
        else:
            kht = kernel_apply(kmat, ht * prob.scale[:, None])
        f_new = hadamard_update(f, kht, kf @ (h_new @ ht), eps)
        f_new = np.where(sel, f_new, f)
        kf = kernel_apply(kmat, f_new)
        e_new = prob.objective(f_new, h_new, kf, ha_new)
        _check_finite(e_new, active, it, seeds)
        orth = batch_orthogonality(h_new)
        for i in np.flatnonzero(active):
            obj_tr[i].append(float(e_new[i]))
            orth_tr[i].append(float(orth[i]))
        iters[active] = it
        stop = active & ((e - e_new) <= hp.kappa * np.maximum(1.0, e))
        e = np.where(active, e_new, e)
        f, h, ha = f_new, h_new, ha_new
        converged |= stop
        active &= ~stop
        if not active.any():
            break

    out = []
    for i in range(r):
        st = FactorState(f=f[i].copy(), h=h[i].copy(), iteration=int(iters[i]),
                         objective_trace=obj_tr[i], orthogonality_trace=orth_tr[i])
        st._converged = bool(converged[i])
        out.append(st)
    return out


def run(variant, x, k: int, spec: KernelSpec, hp: HyperParams = HyperParams(), seed=0,
        graph: Optional[GraphSet] = None) -> FactorState:
    """Build the kernel for ``x`` and solve a single restart."""
    kmat = build_kernel(x, spec)
    return factorize(variant, kmat, k, [seed], hp, graph)[0]
