"""Semidefinite relaxation of the sparse-recovery dual program, a specialized
ADMM conic solver for it, dual-polynomial construction, and peak localization.

The decision variable is the bordered Hermitian matrix

    X = [[Q, u], [u^H, 1]],   u = F G^H q,

of size (L^2+1)^2, where G^H is the Gabor analysis map and F the pair-index DFT
taking the analysis coefficients to 2D polynomial coefficients. Feasibility
(PSD plus the elementary-Toeplitz Kronecker trace family) forces the associated
polynomial Q(tau, nu) = <q, F_nu T_tau x> to satisfy sup |Q| <= 1; the objective
pushes |Q| to 1 exactly at the unknown shifts.

One ADMM splitting serves both the noiseless and the noise-aware objective:
the affine step projects onto the trace constraints and solves the q-block in
closed form (F G^H is a scaled isometry, so no linear system is needed), and
the cone step is one Hermitian eigendecomposition per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from srr.errors import CapacityError
from srr.ops import (
    ProbingSignal,
    TFShift,
    TrigPoly2D,
    eval_trigpoly_grid,
    gabor_adjoint,
    gabor_apply,
    isdft,
    sdft,
    wrap_dist_inf,
)
from srr.scene import SampleVec, TargetScene

__all__ = [
    "SdpProblem",
    "SdpOptions",
    "ConicSolution",
    "DualPoly",
    "FeasibilityReport",
    "build_sdp",
    "build_sdp_noisy",
    "solve_sdp",
    "dual_poly",
    "locate_shifts",
    "verify_dual_feasibility",
]

_SIZE_CEILING = 31  # largest L; the PSD blocks grow as L^4 in memory

# ---------------------------------------------------------------- coefficient maps


def coeff_map(x: ProbingSignal, q) -> np.ndarray:
    """u = F G^H q as an (L, L) array: the 2D-DFT-domain image of the analysis
    coefficients of q. Flattened in the pair order used by the atoms."""
    z = gabor_adjoint(x, q).reshape(x.length, x.length)  # [k, l]
    # [F z][r, s] = (1/L^2) sum_{k,l} z[k,l] e^{-i2pi(r l + s k)/L}: transform then swap
    return sdft(sdft(z, axis=0), axis=1).T / x.length**2


def coeff_map_adjoint(x: ProbingSignal, w) -> np.ndarray:
    """(F G^H)^H w = G F^H w for an (L, L) array w; returns a length-L vector."""
    a = isdft(isdft(np.asarray(w).T, axis=0), axis=1)
    return gabor_apply(x, a.reshape(-1))


def dual_poly_coeffs(x: ProbingSignal, q) -> np.ndarray:
    """Coefficient array of the polynomial r -> <q, F_nu T_tau x> (TrigPoly2D order)."""
    return coeff_map(x, q)[::-1, ::-1]


# ----------------------------------------------------------------------- problem


@dataclass
class SdpProblem:
    """The relaxed dual program: maximize Re<q, y> - delta*||q||_2 over feasible
    bordered matrices. delta = 0 is the noiseless program."""

    y: np.ndarray
    x: ProbingSignal
    delta: float
    fam_index: np.ndarray = field(repr=False)
    fam_count: np.ndarray = field(repr=False)
    fam_center: int

    @property
    def n(self) -> int:
        return self.x.length ** 2

    def trace_deviation(self, Q: np.ndarray) -> float:
        """max_k,l |trace((Theta_k x Theta_l) Q) - [k = l = 0]| recomputed from scratch."""
        sums_re = np.bincount(self.fam_index.ravel(), weights=Q.real.ravel())
        sums_im = np.bincount(self.fam_index.ravel(), weights=Q.imag.ravel())
        sums_re[self.fam_center] -= 1.0
        return float(np.hypot(sums_re, sums_im).max())


def _build(y, x: ProbingSignal, delta: float) -> SdpProblem:
    if x.length > _SIZE_CEILING:
        raise CapacityError(
            f"this conic solver is limited to L <= {_SIZE_CEILING} "
            f"(matrix blocks are (L^2+1)^2); got L = {x.length}"
        )
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    yv = y.samples if isinstance(y, SampleVec) else np.asarray(y, dtype=complex)
    if yv.shape != (x.length,):
        raise ValueError(f"samples must have length {x.length}, got {yv.shape}")
    L = x.length
    # entry (row, col) of the Q block belongs to the trace family keyed by the
    # pair-index offset (k_row - k_col, l_row - l_col)
    k_of = np.repeat(np.arange(L), L)
    l_of = np.tile(np.arange(L), L)
    off_k = k_of[:, None] - k_of[None, :] + (L - 1)
    off_l = l_of[:, None] - l_of[None, :] + (L - 1)
    fam = (off_k * (2 * L - 1) + off_l).astype(np.int32)
    count = np.bincount(fam.ravel()).astype(float)
    center = (L - 1) * (2 * L - 1) + (L - 1)
    return SdpProblem(
        y=yv, x=x, delta=float(delta), fam_index=fam, fam_count=count, fam_center=center
    )


def build_sdp(y, x: ProbingSignal) -> SdpProblem:
    """Noiseless program: maximize Re<q, y> subject to the LMI relaxation."""
    return _build(y, x, 0.0)


def build_sdp_noisy(y, x: ProbingSignal, delta: float) -> SdpProblem:
    """Noise-aware program: maximize Re<q, y> - delta*||q||_2 (delta is the
    noise-ball radius, not its square)."""
    return _build(y, x, delta)


# ------------------------------------------------------------------------ solver


@dataclass(frozen=True)
class SdpOptions:
    rho: float = 1.0
    max_iter: int = 20_000
    tol: float = 1e-6
    adapt_every: int = 100
    over_relax: float = 1.8  # 1.0 disables; high values cut iterations ~2x here

    def __post_init__(self):
        if self.rho <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise ValueError("rho, tol must be > 0 and max_iter >= 1")
        if not 1.0 <= self.over_relax < 2.0:
            raise ValueError(f"over_relax must be in [1, 2), got {self.over_relax}")


@dataclass
class ConicSolution:
    """Solver output with independently recomputable certificates of feasibility.

    Q is post-processed so the bordered matrix is PSD up to eigensolver noise;
    eig_min_* and max_trace_dev are recomputed from the returned blocks, not
    taken from solver state.
    """

    q: np.ndarray
    Q: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    eig_min_q: float
    eig_min_bordered: float
    max_trace_dev: float


def _project_traces(prob: SdpProblem, W: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto {family sums = delta_(0,0)} (preserves Hermitian)."""
    sums_re = np.bincount(prob.fam_index.ravel(), weights=W.real.ravel())
    sums_im = np.bincount(prob.fam_index.ravel(), weights=W.imag.ravel())
    sums_re[prob.fam_center] -= 1.0
    corr = (sums_re + 1j * sums_im) / prob.fam_count
    return W - corr[prob.fam_index]


def _q_update(prob: SdpProblem, w_col: np.ndarray, rho: float):
    """argmin_q  -Re<q, y> + delta*||q|| + rho*||F G^H q - w_col||^2, in closed form.

    With c = ||x||^2 / L the Gram of F G^H is c*I, so the problem is a shrunk
    scaling of a = (y + 2 rho G F^H w_col) / (2 rho c).
    """
    c = prob.x.norm_sq() / prob.x.length
    w = coeff_map_adjoint(prob.x, w_col)
    a = (prob.y + 2.0 * rho * w) / (2.0 * rho * c)
    if prob.delta == 0.0:
        return a
    a_norm = np.linalg.norm(a)
    if a_norm == 0.0:
        return a
    return a * max(0.0, 1.0 - prob.delta / (2.0 * rho * c * a_norm))


_TRACE_CERT = 1e-6  # certified trace deviation required of any converged solution


def _certify(prob: SdpProblem, X: np.ndarray, q: np.ndarray):
    """Post-process: keep q and the rank-one border, clip only the Schur
    complement of the Q block so the bordered matrix is PSD by construction."""
    n = prob.n
    u = coeff_map(prob.x, q).reshape(-1)
    D = X[:n, :n] - np.outer(u, u.conj())
    D = 0.5 * (D + D.conj().T)
    evals, evecs = np.linalg.eigh(D)
    pos = evals > 0
    Q_out = np.outer(u, u.conj()) + (evecs[:, pos] * evals[pos]) @ evecs[:, pos].conj().T
    Q_out = 0.5 * (Q_out + Q_out.conj().T)
    return Q_out, u, prob.trace_deviation(Q_out)


def solve_sdp(prob: SdpProblem, opts: SdpOptions | None = None) -> ConicSolution:
    """ADMM with exact affine projection and one eigendecomposition per iteration.

    Stops when max(primal, dual) scaled residual <= opts.tol and the
    post-processed iterate passes its trace certificate. A run that exhausts
    max_iter is returned flagged (converged=False), not raised.
    """
    opts = opts or SdpOptions()
    x = prob.x
    n = prob.n
    rho = opts.rho

    Z = np.zeros((n + 1, n + 1), dtype=complex)
    np.fill_diagonal(Z[:n, :n], 1.0 / n)
    Z[n, n] = 1.0
    U = np.zeros_like(Z)
    X = Z.copy()
    q = np.zeros(x.length, dtype=complex)
    r_rel = s_rel = math.inf
    converged = False
    it = 0
    Q_out = u = None
    next_cert = 0  # recheck the certificate at most every 50 iterations
    for it in range(1, opts.max_iter + 1):
        # affine step: trace projection on the Q block, closed-form q on the border
        W = Z - U
        W = 0.5 * (W + W.conj().T)
        X[:n, :n] = _project_traces(prob, W[:n, :n])
        q = _q_update(prob, W[:n, n].reshape(x.length, x.length), rho)
        u = coeff_map(x, q).reshape(-1)
        X[:n, n] = u
        X[n, :n] = u.conj()
        X[n, n] = 1.0

        # cone step (on the over-relaxed point)
        Z_prev = Z
        Xh = X if opts.over_relax == 1.0 else opts.over_relax * X + (1.0 - opts.over_relax) * Z
        M = Xh + U
        M = 0.5 * (M + M.conj().T)
        evals, evecs = np.linalg.eigh(M)
        pos = evals > 0
        Z = (evecs[:, pos] * evals[pos]) @ evecs[:, pos].conj().T

        U = U + Xh - Z

        r = np.linalg.norm(X - Z)
        s = rho * np.linalg.norm(Z - Z_prev)
        r_rel = r / max(1.0, np.linalg.norm(X), np.linalg.norm(Z))
        s_rel = s / max(1.0, rho * np.linalg.norm(U))
        if max(r_rel, s_rel) <= opts.tol and it >= next_cert:
            Q_out, u, dev = _certify(prob, X, q)
            if dev <= max(_TRACE_CERT, opts.tol):
                converged = True
                break
            next_cert = it + 50
        if it % opts.adapt_every == 0:
            if r_rel > 10.0 * s_rel and rho < 1e4:
                rho *= 2.0
                U *= 0.5
            elif s_rel > 10.0 * r_rel and rho > 1e-4:
                rho *= 0.5
                U *= 2.0

    if not converged or Q_out is None:
        Q_out, u, _ = _certify(prob, X, q)

    bordered = np.empty((n + 1, n + 1), dtype=complex)
    bordered[:n, :n] = Q_out
    bordered[:n, n] = u
    bordered[n, :n] = u.conj()
    bordered[n, n] = 1.0
    eig_min_q = float(np.linalg.eigvalsh(Q_out)[0])
    eig_min_b = float(np.linalg.eigvalsh(bordered)[0])
    objective = float(np.real(np.vdot(prob.y, q))) - prob.delta * float(np.linalg.norm(q))
    return ConicSolution(
        q=q,
        Q=Q_out,
        objective=objective,
        primal_residual=float(r_rel),
        dual_residual=float(s_rel),
        iterations=it,
        converged=converged,
        eig_min_q=eig_min_q,
        eig_min_bordered=eig_min_b,
        max_trace_dev=prob.trace_deviation(Q_out),
    )


# ------------------------------------------------------------------- dual poly


@dataclass
class DualPoly:
    """The 2D trigonometric polynomial r -> <q, F_nu T_tau x>, with provenance."""

    poly: TrigPoly2D
    provenance: str = "unspecified"

    def __call__(self, tau, nu):
        return self.poly(tau, nu)

    @property
    def n_half(self) -> int:
        return self.poly.degree


def dual_poly(sol, x: ProbingSignal, provenance: str | None = None) -> DualPoly:
    """Build the dual polynomial from a ConicSolution (or a raw q vector)."""
    if isinstance(sol, ConicSolution):
        q = sol.q
        tag = provenance or "sdp"
    else:
        q = np.asarray(sol, dtype=complex)
        tag = provenance or "vector"
    return DualPoly(poly=TrigPoly2D(dual_poly_coeffs(x, q)), provenance=tag)


# ----------------------------------------------------------------- localization


def _newton_refine(dp: DualPoly, tau: float, nu: float, steps: int = 10):
    """Damped Newton ascent on |Q|^2 from a grid seed, analytic derivatives."""
    P = dp.poly
    Pt, Pv = P.deriv(1, 0), P.deriv(0, 1)
    Ptt, Ptv, Pvv = P.deriv(2, 0), P.deriv(1, 1), P.deriv(0, 2)

    def value(t, v):
        return abs(P(t, v)) ** 2

    t, v = tau, nu
    f0 = value(t, v)
    max_step = 0.5 / (2 * P.degree + 1)
    for _ in range(steps):
        Q = P(t, v)
        dt_, dv_ = Pt(t, v), Pv(t, v)
        g = 2.0 * np.array([(np.conj(Q) * dt_).real, (np.conj(Q) * dv_).real])
        H = 2.0 * np.array(
            [
                [
                    (np.conj(dt_) * dt_).real + (np.conj(Q) * Ptt(t, v)).real,
                    (np.conj(dv_) * dt_).real + (np.conj(Q) * Ptv(t, v)).real,
                ],
                [
                    (np.conj(dt_) * dv_).real + (np.conj(Q) * Ptv(t, v)).real,
                    (np.conj(dv_) * dv_).real + (np.conj(Q) * Pvv(t, v)).real,
                ],
            ]
        )
        # ascend: use the Newton direction only where the Hessian certifies a peak
        ev = np.linalg.eigvalsh(H)
        if ev[-1] < 0:
            step = -np.linalg.solve(H, g)
        else:
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            step = g * (max_step / (2 * gn))
        norm = np.linalg.norm(step)
        if norm > max_step:
            step *= max_step / norm
        scale = 1.0
        for _ in range(6):
            f1 = value(t + scale * step[0], v + scale * step[1])
            if f1 >= f0:
                t, v = t + scale * step[0], v + scale * step[1]
                f0 = f1
                break
            scale *= 0.5
    return t % 1.0, v % 1.0


def locate_shifts(dp: DualPoly, tol: float = 1e-3, grid_size: int | None = None) -> TargetScene:
    """Shifts where |Q| peaks at height >= 1 - tol.

    Grid scan (default 16 times the polynomial degree band), Newton refinement
    of each local maximum, then deduplication within 0.5/L. The returned scene
    carries Q(peak) as each target's amplitude.
    """
    L = 2 * dp.n_half + 1
    if grid_size is None:
        grid_size = 16 * L
    if grid_size < 8 * L:
        raise ValueError(f"grid_size must be >= 8L = {8 * L}, got {grid_size}")
    vals = np.abs(eval_trigpoly_grid(dp.poly, grid_size))
    # a peak of height 1 centered mid-cell can sample as low as
    # 1 - (2 pi N)^2 / (2 G^2) (second-order Bernstein bound), so pre-filter
    # grid maxima with that margin and apply the 1 - tol test after refinement
    margin = 0.5 * (2.0 * math.pi * dp.n_half / grid_size) ** 2
    pre = max(0.5, 1.0 - tol - margin)
    # local maxima over the 8-neighborhood with wrap-around
    nb = [np.roll(np.roll(vals, a, axis=0), b, axis=1)
          for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    is_max = (vals >= pre) & np.all(np.stack([vals >= m for m in nb]), axis=0)
    peaks = []
    for u_idx, v_idx in np.argwhere(is_max):
        t, v = _newton_refine(dp, u_idx / grid_size, v_idx / grid_size)
        val = dp.poly(t, v)
        if abs(val) >= 1.0 - tol:
            peaks.append((TFShift(t, v), val))
    # deduplicate: keep the higher peak of any pair closer than half a natural cell
    peaks.sort(key=lambda p: -abs(p[1]))
    kept: list[tuple[TFShift, complex]] = []
    for shift, val in peaks:
        if all(wrap_dist_inf(shift, k) >= 0.5 / L for k, _ in kept):
            kept.append((shift, val))
    return TargetScene(targets=kept)


class FeasibilityReport(NamedTuple):
    """Grid maximum of |Q| and a derivative-based bound for the continuum sup."""

    grid_max: float
    bound: float


def verify_dual_feasibility(dp: DualPoly, grid_size: int | None = None) -> FeasibilityReport:
    """max |Q| on a grid, plus the Bernstein-type continuity margin
    sup |Q| <= grid_max * (1 + 2 pi N sqrt(2) / grid_size)."""
    L = 2 * dp.n_half + 1
    if grid_size is None:
        grid_size = 16 * L
    if grid_size < 8 * L:
        raise ValueError(f"grid_size must be >= 8L = {8 * L}, got {grid_size}")
    gmax = float(np.abs(eval_trigpoly_grid(dp.poly, grid_size)).max())
    bound = gmax + 2 * math.pi * dp.n_half * math.sqrt(2.0) * gmax / grid_size
    return FeasibilityReport(grid_max=gmax, bound=bound)
