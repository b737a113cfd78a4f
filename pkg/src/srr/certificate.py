"""Dual-certificate machinery: squared-Fejer interpolation kernels, their
probe-dependent counterparts, the 3S x 3S interpolation systems, coefficient
solves, and fine-grid certificate validation.

The deterministic kernel is the separable squared Fejer product
Gbar(tau, nu) = F(tau) F(nu) with F(t) = (sin(M pi t) / (M sin(pi t)))^4,
M = N/2 + 1 (N even), a degree-N trigonometric polynomial. The probe-dependent
interpolation functions are quadratic forms of the probing signal built so
their expectation is Gbar; certificates interpolate a sign pattern at the
support with vanishing gradients, and validation checks the interpolation,
stationarity, far-region bound, and near-region concavity on a fine grid.

Scaling conventions: kappa^2 = |F''(0)| = (pi^2/3)(N^2 + 4N); derivative rows
and columns of the interpolation systems are scaled by 1/kappa per order so
diagonals are exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from srr.errors import NumericalError
from srr.ops import (
    ProbingSignal,
    TFShift,
    TrigPoly2D,
    eval_trigpoly_grid,
    isdft,
    sdft,
    sym_index,
    wrap_diff,
)
from srr.sdp import dual_poly_coeffs

__all__ = [
    "FejerSq",
    "InterpSystem",
    "CertCoeffs",
    "Certificate",
    "CertReport",
    "DbarBounds",
    "fejer_sq_coeffs",
    "gbar",
    "g_random",
    "build_interp_system",
    "dbar_bounds",
    "solve_cert_coeffs",
    "build_certificate",
    "validate_certificate",
]

_FAR_LIMIT = 0.9963  # far-region magnitude ceiling under the separation condition
_NEAR_RADIUS_SCALE = 0.2447  # near region: infinity-distance < 0.2447 / N
_COND_CEILING = 1e8
_JET_SINGULAR = 0.05  # |sin(pi t)| below this: closed form yields to the coefficient sum

# ------------------------------------------------------------------ Fejer kernel


@dataclass(frozen=True)
class FejerSq:
    """Coefficients of the squared Fejer kernel F(t) = (1/M) sum g_k e^{i2pi kt},
    a degree-N trigonometric polynomial with F(0) = 1."""

    n_half: int
    m_param: int
    coeffs: np.ndarray  # g_k, k = -N..N, real symmetric

    @property
    def kappa_sq(self) -> float:
        """|F''(0)| = (pi^2/3)(N^2 + 4N), exact for this construction."""
        return (math.pi**2 / 3.0) * (self.n_half**2 + 4 * self.n_half)

    @property
    def kappa(self) -> float:
        return math.sqrt(self.kappa_sq)


def fejer_sq_coeffs(n_half: int) -> FejerSq:
    """g_k by exact double self-convolution of the triangular weights M - |k|,
    normalized by M^3 so that F(0) = (1/M) sum g_k = 1."""
    if n_half < 2 or n_half % 2 != 0:
        raise ValueError(f"the kernel needs an even degree >= 2, got {n_half}")
    m = n_half // 2 + 1
    tri = m - np.abs(sym_index(m - 1))  # length 2M-1, exact integer weights
    g = np.convolve(tri, tri) / float(m) ** 3  # length 4M-3 = 2N+1
    return FejerSq(n_half=n_half, m_param=m, coeffs=g)


# 5-term Taylor-jet arithmetic for the closed-form kernel derivatives


def _jet_mul(a, b):
    out = np.zeros(5)
    for i in range(5):
        out[i] = np.dot(a[: i + 1], b[i::-1])
    return out


def _jet_div(a, b):
    # c with a = b * c, b[0] != 0
    c = np.zeros(5)
    c[0] = a[0] / b[0]
    for i in range(1, 5):
        c[i] = (a[i] - np.dot(b[1 : i + 1], c[:i][::-1])) / b[0]
    return c


_FACT = np.array([1.0, 1.0, 2.0, 6.0, 24.0])


def _fejer_jet(fej: FejerSq, t: float) -> np.ndarray:
    """[F(t), F'(t), F''(t), F'''(t), F''''(t)] via the closed form F = (u/v)^4,
    u = sin(M pi t), v = M sin(pi t)."""
    m = fej.m_param
    j = np.arange(5)
    u = (m * math.pi) ** j * np.sin(m * math.pi * t + j * math.pi / 2) / _FACT
    v = m * math.pi**j * np.sin(math.pi * t + j * math.pi / 2) / _FACT
    s = _jet_div(u, v)
    f = _jet_mul(_jet_mul(s, s), _jet_mul(s, s))
    return f * _FACT


def _fejer_coeff_sum(fej: FejerSq, t: float, order: int) -> float:
    k = sym_index(fej.n_half)
    w = fej.coeffs * (2j * math.pi * k) ** order * np.exp(2j * math.pi * k * t)
    return float(w.sum().real) / fej.m_param


def _fejer_derivs(fej: FejerSq, t: float) -> np.ndarray:
    if abs(math.sin(math.pi * t)) < _JET_SINGULAR:
        return np.array([_fejer_coeff_sum(fej, t, o) for o in range(5)])
    return _fejer_jet(fej, t)


def gbar(fej: FejerSq, tau: float, nu: float, m: int = 0, n: int = 0) -> float:
    """The separable deterministic kernel derivative d^m_tau d^n_nu F(tau)F(nu)."""
    if m < 0 or n < 0 or m + n > 4:
        raise ValueError(f"derivative orders must satisfy 0 <= m + n <= 4, got ({m}, {n})")
    return float(_fejer_derivs(fej, tau)[m] * _fejer_derivs(fej, nu)[n])


# -------------------------------------------------------- probe-dependent kernels


def _check_even_probe(x: ProbingSignal, fej: FejerSq):
    if x.n_half != fej.n_half:
        raise ValueError(
            f"probe bandwidth {x.n_half} does not match kernel degree {fej.n_half}"
        )
    if x.n_half % 2 != 0:
        raise ValueError("the certificate construction needs an even bandwidth")


def _v_vector(x: ProbingSignal, r: TFShift, m: int, n: int) -> np.ndarray:
    """d^m_tau d^n_nu of the continuously shifted probe, as a length-L vector."""
    k = sym_index(x.n_half)
    spec = sdft(x.samples) * (-2j * math.pi * k) ** m * np.exp(-2j * math.pi * k * r.tau)
    return (2j * math.pi * k) ** n * np.exp(2j * math.pi * k * r.nu) * isdft(spec)


def _w_vector(x: ProbingSignal, fej: FejerSq, r_j: TFShift, m: int, n: int) -> np.ndarray:
    """Synthesis-domain image of the (m, n) kernel vector anchored at r_j: the
    pair-index structure collapses to two length-L windowed transforms."""
    g = fej.coeffs
    k = sym_index(x.n_half)
    kvec = g * (2j * math.pi * k) ** m * np.exp(-2j * math.pi * k * r_j.tau) * sdft(x.samples)
    return g * (-2j * math.pi * k) ** n * np.exp(2j * math.pi * k * r_j.nu) * isdft(kvec)


def g_random(
    x: ProbingSignal,
    fej: FejerSq,
    r: TFShift,
    r_j: TFShift,
    m_basis: int,
    n_basis: int,
    m_eval: int = 0,
    n_eval: int = 0,
) -> complex:
    """Probe-dependent interpolation kernel: the (m_eval, n_eval) derivative at r
    of the basis function anchored at r_j with internal orders (m_basis, n_basis).
    Concentrates around gbar at r - r_j with the orders summed."""
    _check_even_probe(x, fej)
    orders = m_basis + n_basis + m_eval + n_eval
    if min(m_basis, n_basis, m_eval, n_eval) < 0 or orders > 4:
        raise ValueError("derivative orders must be nonnegative with total <= 4")
    scale = x.length**2 / fej.m_param**2
    v = _v_vector(x, r, m_eval, n_eval)
    w = _w_vector(x, fej, r_j, m_basis, n_basis)
    return complex(scale * np.vdot(v, w))


# --------------------------------------------------------- interpolation systems

_BLOCK_ORDERS = ((0, 0), (1, 0), (0, 1))


@dataclass
class InterpSystem:
    """The 3S x 3S interpolation systems: deterministic dbar (real symmetric,
    unit diagonal) and, when a probe is given, the probe-dependent d_rand."""

    dbar: np.ndarray
    d_rand: np.ndarray | None
    support: list[TFShift]
    u: np.ndarray
    kappa: float
    n_half: int

    @property
    def n_targets(self) -> int:
        return len(self.support)


def _validate_signs(u, n_targets):
    uv = np.asarray(u, dtype=float)
    if uv.shape != (n_targets,) or not np.all(np.abs(uv) == 1.0):
        raise ValueError("the sign pattern must be a vector of +1/-1, one per target")
    return uv


def _block_scales(kappa: float) -> np.ndarray:
    s = np.empty((3, 3))
    s[0, :] = [1.0, 1.0 / kappa, 1.0 / kappa]
    s[1, :] = [-1.0 / kappa, -1.0 / kappa**2, -1.0 / kappa**2]
    s[2, :] = s[1, :]
    return s


def build_interp_system(
    support: list[TFShift],
    u,
    x: ProbingSignal | None = None,
    n_half: int | None = None,
) -> InterpSystem:
    """Assemble dbar (and d_rand when a probe is supplied). Row blocks are the
    value/gradient conditions, column blocks the three basis families; scalings
    put exact ones on the diagonal."""
    if n_half is None:
        if x is None:
            raise ValueError("need either a probing signal or an explicit bandwidth")
        n_half = x.n_half
    fej = fejer_sq_coeffs(n_half)
    if x is not None:
        _check_even_probe(x, fej)
    S = len(support)
    if S < 1:
        raise ValueError("the interpolation system needs at least one target")
    uv = _validate_signs(u, S)
    kappa = fej.kappa
    scales = _block_scales(kappa)

    dbar = np.empty((3 * S, 3 * S))
    for bi, (me, ne) in enumerate(_BLOCK_ORDERS):
        for bk, (mb, nb) in enumerate(_BLOCK_ORDERS):
            for j, rj in enumerate(support):
                for k, rk in enumerate(support):
                    dt = wrap_diff(rj.tau, rk.tau)
                    dv = wrap_diff(rj.nu, rk.nu)
                    dbar[bi * S + j, bk * S + k] = scales[bi, bk] * gbar(
                        fej, dt, dv, me + mb, ne + nb
                    )

    d_rand = None
    if x is not None:
        # all 3S basis vectors and 3S evaluation vectors once, then one product
        W = np.stack(
            [_w_vector(x, fej, rk, mb, nb) for (mb, nb) in _BLOCK_ORDERS for rk in support]
        )
        V = np.stack(
            [_v_vector(x, rj, me, ne) for (me, ne) in _BLOCK_ORDERS for rj in support]
        )
        kernel = (x.length**2 / fej.m_param**2) * (V.conj() @ W.T)
        scale_full = np.kron(scales, np.ones((S, S)))
        d_rand = scale_full * kernel
    return InterpSystem(
        dbar=dbar, d_rand=d_rand, support=list(support), u=uv, kappa=kappa, n_half=n_half
    )


class DbarBounds(NamedTuple):
    """Measured norms of the deterministic system (checked, never assumed)."""

    gap_inf: float  # ||I - dbar||_inf
    norm_2: float  # ||dbar||
    inv_norm_2: float  # ||dbar^{-1}||


def dbar_bounds(sys: InterpSystem) -> DbarBounds:
    eye = np.eye(sys.dbar.shape[0])
    gap = float(np.abs(eye - sys.dbar).sum(axis=1).max())
    svals = np.linalg.svd(sys.dbar, compute_uv=False)
    return DbarBounds(gap_inf=gap, norm_2=float(svals[0]), inv_norm_2=float(1.0 / svals[-1]))


@dataclass
class CertCoeffs:
    """Interpolation coefficients: alpha close to the signs, beta tiny gradient
    corrections (stored unscaled; the solve works in kappa-scaled variables)."""

    alpha: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    residual: float
    cond: float


def solve_cert_coeffs(sys: InterpSystem) -> CertCoeffs:
    """Direct dense solve of the probe-dependent system when present, else the
    deterministic one. Ill-conditioning signals a separation violation."""
    D = sys.d_rand if sys.d_rand is not None else sys.dbar
    S = sys.n_targets
    rhs = np.concatenate([sys.u.astype(D.dtype), np.zeros(2 * S, dtype=D.dtype)])
    cond = float(np.linalg.cond(D))
    if not np.isfinite(cond) or cond > _COND_CEILING:
        raise NumericalError(
            f"interpolation system condition {cond:.3e} exceeds {_COND_CEILING:.0e} "
            "(targets too close together)"
        )
    sol = np.linalg.solve(D, rhs)
    residual = float(np.linalg.norm(D @ sol - rhs))
    if residual > 1e-10 * np.linalg.norm(sys.u):
        raise NumericalError(f"coefficient solve residual {residual:.3e} too large")
    return CertCoeffs(
        alpha=sol[:S],
        beta1=sol[S : 2 * S] / sys.kappa,
        beta2=sol[2 * S :] / sys.kappa,
        residual=residual,
        cond=cond,
    )


# ------------------------------------------------------------------- certificate


@dataclass
class Certificate:
    """An interpolating polynomial for the sign pattern u on the support, either
    probe-dependent (q is the length-L synthesis vector) or deterministic
    (q is None and the polynomial is built from the separable kernel)."""

    q: np.ndarray | None
    poly: TrigPoly2D
    support: list[TFShift]
    u: np.ndarray
    kappa: float


def _deterministic_poly(fej: FejerSq, support, coeffs: CertCoeffs) -> TrigPoly2D:
    L = 2 * fej.n_half + 1
    k = sym_index(fej.n_half)
    base = np.outer(fej.coeffs, fej.coeffs) / fej.m_param**2
    out = np.zeros((L, L), dtype=complex)
    weights = (coeffs.alpha, coeffs.beta1, coeffs.beta2)
    for (m, n), wvec in zip(_BLOCK_ORDERS, weights):
        deriv = np.outer((-2j * math.pi * k) ** m, (-2j * math.pi * k) ** n)
        for rj, c in zip(support, wvec):
            phase = np.outer(
                np.exp(2j * math.pi * k * rj.tau), np.exp(2j * math.pi * k * rj.nu)
            )
            out += c * base * deriv * phase
    return TrigPoly2D(out)


def build_certificate(
    support: list[TFShift],
    u,
    x: ProbingSignal | None = None,
    n_half: int | None = None,
) -> Certificate:
    """Solve the interpolation system and assemble the certificate polynomial.

    With a probe, the polynomial is carried by a synthesis vector q; without
    one, the deterministic separable-kernel construction is returned.
    An empty support yields the zero certificate.
    """
    if n_half is None:
        if x is None:
            raise ValueError("need either a probing signal or an explicit bandwidth")
        n_half = x.n_half
    fej = fejer_sq_coeffs(n_half)
    L = 2 * n_half + 1
    if len(support) == 0:
        poly = TrigPoly2D(np.zeros((L, L), dtype=complex))
        q = np.zeros(L, dtype=complex) if x is not None else None
        return Certificate(q=q, poly=poly, support=[], u=np.zeros(0), kappa=fej.kappa)

    sys = build_interp_system(support, u, x=x, n_half=n_half)
    coeffs = solve_cert_coeffs(sys)
    if x is None:
        poly = _deterministic_poly(fej, support, coeffs)
        return Certificate(q=None, poly=poly, support=list(support), u=sys.u, kappa=fej.kappa)

    scale = L**2 / fej.m_param**2
    q = np.zeros(L, dtype=complex)
    weights = (coeffs.alpha, coeffs.beta1, coeffs.beta2)
    for (m, n), wvec in zip(_BLOCK_ORDERS, weights):
        for rj, c in zip(support, wvec):
            q += scale * c * _w_vector(x, fej, rj, m, n)
    poly = TrigPoly2D(dual_poly_coeffs(x, q))
    return Certificate(q=q, poly=poly, support=list(support), u=sys.u, kappa=fej.kappa)


# -------------------------------------------------------------------- validation


@dataclass
class CertReport:
    """Fine-grid validation outcome; numbers are always reported, pass flags
    apply the stated criteria."""

    interp_max_err: float
    stat_max_err: float  # gradient magnitude at the support, in kappa units
    far_max: float
    far_limit: float
    far_slack: float  # first-order continuity margin of the grid, 2 pi N / G * grid max
    near_hessians: list[tuple[float, float]]  # (trace, det) per target
    grid_max: float
    sup_bound: float  # grid max plus first-order continuity margin
    interp_pass: bool
    stat_pass: bool
    far_pass: bool
    near_pass: bool

    @property
    def far_bound(self) -> float:
        return self.far_limit + self.far_slack

    @property
    def passed(self) -> bool:
        return self.interp_pass and self.stat_pass and self.far_pass and self.near_pass


def validate_certificate(
    cert: Certificate,
    grid_size: int | None = None,
    near_radius: float | None = None,
    interp_tol: float = 1e-8,
    stat_tol: float = 1e-6,
) -> CertReport:
    """Evaluate |Q| on a fine grid and check: interpolation at the support,
    stationarity there (scaled by kappa), the far-region ceiling, and strict
    concavity of |Q|^2 at each support point (trace < 0, det > 0). Always
    returns a report; nothing raises on criterion failure."""
    n_half = cert.poly.degree
    L = 2 * n_half + 1
    if grid_size is None:
        grid_size = 16 * L
    if grid_size < 16 * L:
        raise ValueError(f"grid_size must be >= 16L = {16 * L}, got {grid_size}")
    if near_radius is None:
        near_radius = _NEAR_RADIUS_SCALE / n_half

    P = cert.poly
    vals = np.abs(eval_trigpoly_grid(P, grid_size))
    grid_max = float(vals.max())
    # first-order derivative bound for a degree-N polynomial: any point lies
    # within euclidean distance sqrt(2)/(2G) of a node, |grad Q| <= 2 pi N sqrt(2) sup|Q|
    far_slack = 2 * math.pi * n_half / grid_size * grid_max
    sup_bound = grid_max * (1.0 + 2 * math.pi * n_half * math.sqrt(2.0) / grid_size)

    # far region: grid nodes at wrap infinity-distance >= near_radius from all targets
    t_axis = np.arange(grid_size) / grid_size
    far_mask = np.ones((grid_size, grid_size), dtype=bool)
    for rj in cert.support:
        d_tau = np.abs(wrap_diff(t_axis, rj.tau))
        d_nu = np.abs(wrap_diff(t_axis, rj.nu))
        far_mask &= np.maximum(d_tau[:, None], d_nu[None, :]) >= near_radius
    far_max = float(vals[far_mask].max()) if far_mask.any() else 0.0

    # pointwise checks at the support
    interp_err = 0.0
    stat_err = 0.0
    hessians: list[tuple[float, float]] = []
    if cert.support:
        Pt, Pv = P.deriv(1, 0), P.deriv(0, 1)
        Ptt, Ptv, Pvv = P.deriv(2, 0), P.deriv(1, 1), P.deriv(0, 2)
        for rj, uj in zip(cert.support, cert.u):
            val = P(rj.tau, rj.nu)
            interp_err = max(interp_err, abs(val - uj))
            gt, gv = Pt(rj.tau, rj.nu), Pv(rj.tau, rj.nu)
            stat_err = max(stat_err, abs(gt), abs(gv))
            # Hessian of |Q|^2 at the support point
            h_tt = 2.0 * ((np.conj(gt) * gt).real + (np.conj(val) * Ptt(rj.tau, rj.nu)).real)
            h_tv = 2.0 * ((np.conj(gv) * gt).real + (np.conj(val) * Ptv(rj.tau, rj.nu)).real)
            h_vv = 2.0 * ((np.conj(gv) * gv).real + (np.conj(val) * Pvv(rj.tau, rj.nu)).real)
            hessians.append((h_tt + h_vv, h_tt * h_vv - h_tv**2))
    near_pass = all(tr < 0.0 and det > 0.0 for tr, det in hessians)
    return CertReport(
        interp_max_err=interp_err,
        stat_max_err=stat_err / cert.kappa,
        far_max=far_max,
        far_limit=_FAR_LIMIT,
        far_slack=far_slack,
        near_hessians=hessians,
        grid_max=grid_max,
        sup_bound=sup_bound,
        interp_pass=interp_err <= interp_tol,
        stat_pass=stat_err / cert.kappa <= stat_tol,
        far_pass=far_max <= _FAR_LIMIT + far_slack,
        near_pass=near_pass,
    )
