"""Kernels, fractional time/frequency shifts, Gabor and grid dictionary operators, atoms,
and bivariate trigonometric polynomials.

Index conventions used throughout the library
---------------------------------------------
Vectors of odd length L = 2N+1 carry the symmetric index p = -N..N, stored in natural
order: storage slot j holds logical index j - N. The DFT bin k = -N..N lives at slot
k + N; `sdft`/`isdft` wrap numpy's FFT with the fftshift bookkeeping so that

    sdft(v)[k + N]  =  sum_l v_l exp(-i 2 pi k l / L).

Length-L^2 vectors carry the pair index (k, l), k outer and l inner (slot (k+N)*L + (l+N)),
with k the modulation (frequency) index and l the time-shift index. A shift r = (tau, nu)
pairs tau with l and nu with k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TFShift",
    "ProbingSignal",
    "Atom",
    "GridSpec",
    "TrigPoly2D",
    "sym_index",
    "sdft",
    "isdft",
    "dirichlet",
    "dirichlet_trunc",
    "time_shift",
    "freq_shift",
    "atom",
    "gabor_apply",
    "gabor_adjoint",
    "dict_apply",
    "dict_adjoint",
    "eval_trigpoly_grid",
    "wrap_diff",
    "wrap_dist_inf",
]

# Below this, sin(pi t) is treated as a removable singularity of the Dirichlet ratio
# and the kernel falls back to the direct L-term sum.
_SIN_SINGULAR = 1e-8


def sym_index(n_half: int) -> np.ndarray:
    """Integer index vector -N..N."""
    return np.arange(-n_half, n_half + 1)


def sdft(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Forward DFT on the symmetric index: X_k = sum_l v_l e^{-i2pi kl/L}, k = -N..N."""
    return np.fft.fftshift(np.fft.fft(np.fft.ifftshift(v, axes=axis), axis=axis), axes=axis)


def isdft(V: np.ndarray, axis: int = -1) -> np.ndarray:
    """Inverse of `sdft` (includes the 1/L factor)."""
    return np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(V, axes=axis), axis=axis), axes=axis)


def wrap_diff(a, b):
    """Signed difference a - b wrapped to [-1/2, 1/2)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return (d + 0.5) % 1.0 - 0.5


def wrap_dist_inf(r1: "TFShift", r2: "TFShift") -> float:
    """Wrap-around chebyshev distance max(|d tau|, |d nu|) on the torus."""
    return float(max(abs(wrap_diff(r1.tau, r2.tau)), abs(wrap_diff(r1.nu, r2.nu))))


@dataclass(frozen=True)
class TFShift:
    """A continuous time-frequency shift (tau, nu), stored reduced modulo 1."""

    tau: float
    nu: float

    def __post_init__(self):
        object.__setattr__(self, "tau", float(self.tau) % 1.0)
        object.__setattr__(self, "nu", float(self.nu) % 1.0)

    def dist_inf(self, other: "TFShift") -> float:
        return wrap_dist_inf(self, other)


@dataclass
class ProbingSignal:
    """L-periodic probing signal samples x_l, l = -N..N, plus generation metadata.

    `samples` is complex of length L = 2*n_half + 1 in natural symmetric order.
    The instance caches per-grid shift tables (see `dict_apply`); the cache is
    derived data only and excluded from equality.
    """

    n_half: int
    samples: np.ndarray
    distribution: str = "unspecified"
    seed: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n_half < 1:
            raise ValueError(f"n_half must be >= 1, got {self.n_half}")
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.shape != (self.length,):
            raise ValueError(
                f"samples must have length L = {self.length}, got shape {self.samples.shape}"
            )

    @property
    def length(self) -> int:
        return 2 * self.n_half + 1

    def at(self, ell) -> np.ndarray:
        """Sample at any integer index, L-periodically extended."""
        return self.samples[(np.asarray(ell) + self.n_half) % self.length]

    def norm_sq(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)


def _as_samples(x) -> tuple[np.ndarray, int]:
    """Accept a ProbingSignal or a raw odd-length vector; return (samples, n_half)."""
    if isinstance(x, ProbingSignal):
        return x.samples, x.n_half
    v = np.asarray(x, dtype=complex)
    if v.ndim != 1 or v.size % 2 == 0:
        raise ValueError(f"expected odd-length vector, got shape {v.shape}")
    return v, (v.size - 1) // 2


def dirichlet(t, n_half: int):
    """Periodic sinc-ratio kernel (1/L) sum_{k=-N..N} e^{i 2 pi t k} = sin(L pi t) / (L sin(pi t)).

    Real, 1-periodic, equals 1 at integers. Near the removable singularities the
    closed form cancels catastrophically, so the direct sum takes over there.
    """
    scalar = np.ndim(t) == 0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    L = 2 * n_half + 1
    sin_den = np.sin(np.pi * t_arr)
    singular = np.abs(sin_den) < _SIN_SINGULAR
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sin(L * np.pi * t_arr) / (L * sin_den)
    if np.any(singular):
        k = sym_index(n_half)
        out[singular] = np.cos(2 * np.pi * np.outer(t_arr[singular], k)).sum(axis=1) / L
    return float(out[0]) if scalar else out


def dirichlet_trunc(t, n_half: int):
    """Three-lobe approximation sum_{k=-1..1} sinc(L (t - k)) of the periodic kernel."""
    t_arr = np.asarray(t, dtype=float)
    L = 2 * n_half + 1
    out = np.sinc(L * (t_arr - 1)) + np.sinc(L * t_arr) + np.sinc(L * (t_arr + 1))
    return float(out) if out.ndim == 0 else out


def time_shift(x, tau: float) -> np.ndarray:
    """Fractional circular time shift: DFT, per-bin phase e^{-i 2 pi k tau}, inverse DFT.

    For tau = n0/L this reduces to the integer circular shift x_{p - n0}; in between it
    interpolates with the periodic Dirichlet kernel. Unitary for every tau.
    """
    v, n_half = _as_samples(x)
    k = sym_index(n_half)
    return isdft(sdft(v) * np.exp(-2j * np.pi * k * tau))


def freq_shift(v, nu: float) -> np.ndarray:
    """Modulation [F_nu v]_p = v_p e^{i 2 pi p nu} on the symmetric index."""
    w, n_half = _as_samples(v)
    p = sym_index(n_half)
    return w * np.exp(2j * np.pi * p * nu)


@dataclass(frozen=True)
class Atom:
    """Coefficient vector of one continuous shift against the integer-shift frame.

    values[(k+N)*L + (l+N)] = D_N(l/L - tau) * D_N(k/L - nu); applying the Gabor
    operator to it reproduces F_nu T_tau x exactly.
    """

    values: np.ndarray
    n_half: int


def atom(r: TFShift, n_half: int) -> Atom:
    L = 2 * n_half + 1
    g = sym_index(n_half) / L
    d_tau = dirichlet(g - r.tau, n_half)  # indexed by l
    d_nu = dirichlet(g - r.nu, n_half)  # indexed by k
    return Atom(values=np.outer(d_nu, d_tau).reshape(-1).astype(complex), n_half=n_half)


def _pair_matrix(z, n_half: int) -> np.ndarray:
    """Reshape a length-L^2 pair-indexed vector to an (L, L) array Z[k+N, l+N]."""
    L = 2 * n_half + 1
    Z = np.asarray(z, dtype=complex)
    if Z.shape == (L, L):
        return Z
    if Z.shape == (L * L,):
        return Z.reshape(L, L)
    raise ValueError(f"expected shape ({L * L},) or ({L}, {L}), got {Z.shape}")


def _circulant_gather(x: ProbingSignal) -> np.ndarray:
    """The (L, L) array X[p+N, l+N] = x_{p-l}, cached on the signal."""
    tab = x._cache.get("circ")
    if tab is None:
        p = sym_index(x.n_half)
        tab = x.at(p[:, None] - p[None, :])
        x._cache["circ"] = tab
    return tab


def gabor_apply(x: ProbingSignal, z) -> np.ndarray:
    """y_p = sum_{k,l} z_{(k,l)} x_{p-l} e^{i 2 pi k p / L}: all integer shifts of x, weighted.

    The k-sum is an inverse DFT per l-column; the remaining l-sum is a gather against
    the circulant table of x. Cost O(L^2 log L).
    """
    Z = _pair_matrix(z, x.n_half)
    L = x.length
    # W[p, l] = sum_k Z[k, l] e^{i 2 pi k p / L}
    W = L * isdft(Z, axis=0)
    return (W * _circulant_gather(x)).sum(axis=1)


def gabor_adjoint(x: ProbingSignal, y) -> np.ndarray:
    """z_{(k,l)} = sum_p conj(x_{p-l}) e^{-i 2 pi k p / L} y_p, flat pair-indexed vector."""
    yv = np.asarray(y, dtype=complex)
    if yv.shape != (x.length,):
        raise ValueError(f"expected length-{x.length} samples, got shape {yv.shape}")
    V = _circulant_gather(x).conj() * yv[:, None]  # [p, l]
    return sdft(V, axis=0).reshape(-1)  # DFT over p per l-column -> [k, l]


@dataclass(frozen=True)
class GridSpec:
    """A K x K grid of shifts (n/K, m/K), optionally restricted to a corner rectangle.

    `region = (tau_max, nu_max)` keeps only columns with n/K in [0, tau_max) padding to
    ceil(tau_max*K) cells, and likewise for m/K; None means the full torus grid.
    """

    k_grid: int
    region: tuple[float, float] | None = None

    def __post_init__(self):
        if self.k_grid < 1:
            raise ValueError("k_grid must be positive")
        if self.region is not None:
            tmax, nmax = self.region
            if not (0 < tmax <= 1 and 0 < nmax <= 1):
                raise ValueError(f"region bounds must lie in (0, 1], got {self.region}")

    def srf(self, n_half: int) -> float:
        """Super-resolution factor K/L relative to the natural grid of a length-L signal."""
        return self.k_grid / (2 * n_half + 1)

    @property
    def active_shape(self) -> tuple[int, int]:
        """(rows over m, cols over n) of the active coefficient array."""
        if self.region is None:
            return (self.k_grid, self.k_grid)
        tmax, nmax = self.region
        return (math.ceil(nmax * self.k_grid), math.ceil(tmax * self.k_grid))

    @property
    def n_active(self) -> int:
        mr, nc = self.active_shape
        return mr * nc

    def cell_shift(self, m, n) -> TFShift:
        """The continuous shift at grid cell (m, n)."""
        return TFShift(tau=n / self.k_grid, nu=m / self.k_grid)


def _shift_table(x: ProbingSignal, K: int) -> np.ndarray:
    """(L, K) table of fractionally time-shifted probes, column n = T_{n/K} x. Cached."""
    key = ("tt", K)
    tab = x._cache.get(key)
    if tab is None:
        k = sym_index(x.n_half)
        X = sdft(x.samples)
        phases = np.exp(-2j * np.pi * np.outer(k, np.arange(K) / K))
        tab = isdft(X[:, None] * phases, axis=0)
        x._cache[key] = tab
    return tab


def _mod_phase_matrix(x: ProbingSignal, K: int, m_rows: int) -> np.ndarray:
    """(L, m_rows) matrix E[p, m] = e^{i 2 pi p m / K}. Cached."""
    key = ("emat", K, m_rows)
    E = x._cache.get(key)
    if E is None:
        p = sym_index(x.n_half)
        E = np.exp(2j * np.pi * np.outer(p, np.arange(m_rows)) / K)
        x._cache[key] = E
    return E


def _check_grid(x: ProbingSignal, grid: GridSpec):
    if grid.k_grid < x.length:
        raise ValueError(f"grid K = {grid.k_grid} must be >= L = {x.length}")


def _use_fft_path(x: ProbingSignal, grid: GridSpec) -> bool:
    # Per-column cost: direct modulation L * m_rows vs padded FFT ~ K log K.
    if grid.region is None:
        return True
    m_rows, _ = grid.active_shape
    K = grid.k_grid
    return x.length * m_rows > 4.0 * K * math.log2(K)


def dict_apply(x: ProbingSignal, grid: GridSpec, s) -> np.ndarray:
    """y_p = sum_{m,n active} s[m, n] [F_{m/K} T_{n/K} x]_p without forming the dense matrix.

    Factored as (time-shift table) x (per-column modulation transform); the transform is
    a zero-padded length-K inverse DFT when the active m-range is large, or a direct
    phase-matrix product when the region restriction makes that cheaper. Worst case
    O(K^2 log K); the (L, K) table is cached on `x` per K.
    """
    _check_grid(x, grid)
    m_rows, n_cols = grid.active_shape
    S = np.asarray(s, dtype=complex)
    if S.shape == (m_rows * n_cols,):
        S = S.reshape(m_rows, n_cols)
    if S.shape != (m_rows, n_cols):
        raise ValueError(f"coefficients must have shape {(m_rows, n_cols)}, got {S.shape}")
    K = grid.k_grid
    TT = _shift_table(x, K)[:, :n_cols]
    p = sym_index(x.n_half)
    if _use_fft_path(x, grid):
        S_pad = S if m_rows == K else np.vstack([S, np.zeros((K - m_rows, n_cols), complex)])
        U = K * np.fft.ifft(S_pad, axis=0)  # U[j, n] = sum_m s e^{i 2 pi j m / K}
        U = U[p % K, :]
    else:
        U = _mod_phase_matrix(x, K, m_rows) @ S
    return np.einsum("pn,pn->p", TT, U)


def dict_adjoint(x: ProbingSignal, grid: GridSpec, y) -> np.ndarray:
    """Adjoint of `dict_apply`: s[m, n] = sum_p conj([F_{m/K} T_{n/K} x]_p) y_p."""
    _check_grid(x, grid)
    yv = np.asarray(y, dtype=complex)
    if yv.shape != (x.length,):
        raise ValueError(f"expected length-{x.length} samples, got shape {yv.shape}")
    m_rows, n_cols = grid.active_shape
    K = grid.k_grid
    TT = _shift_table(x, K)[:, :n_cols]
    V = TT.conj() * yv[:, None]  # [p, n]
    p = sym_index(x.n_half)
    if _use_fft_path(x, grid):
        VK = np.zeros((K, n_cols), dtype=complex)
        VK[p % K, :] = V  # p are distinct mod K since K >= L
        S = np.fft.fft(VK, axis=0)[:m_rows, :]
    else:
        S = _mod_phase_matrix(x, K, m_rows).conj().T @ V
    return S


@dataclass
class TrigPoly2D:
    """Bivariate trigonometric polynomial P(tau, nu) = sum_{k,l} c[k, l] e^{-i2pi(k tau + l nu)}.

    coeffs is (L, L) on the symmetric index, k (rows) paired with tau and l (cols) with nu.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.ndim != 2 or self.coeffs.shape[0] != self.coeffs.shape[1] \
                or self.coeffs.shape[0] % 2 == 0:
            raise ValueError(f"coeffs must be square odd-sized, got {self.coeffs.shape}")

    @property
    def degree(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    def __call__(self, tau, nu):
        """Evaluate at scalars or broadcast-compatible arrays of points (direct summation)."""
        scalar = np.ndim(tau) == 0 and np.ndim(nu) == 0
        t, v = np.broadcast_arrays(
            np.atleast_1d(np.asarray(tau, dtype=float)),
            np.atleast_1d(np.asarray(nu, dtype=float)),
        )
        k = sym_index(self.degree)
        pt = np.exp(-2j * np.pi * np.outer(k, t.ravel()))
        pv = np.exp(-2j * np.pi * np.outer(k, v.ravel()))
        vals = np.einsum("kl,kp,lp->p", self.coeffs, pt, pv)
        return complex(vals[0]) if scalar else vals.reshape(t.shape)

    def deriv(self, m: int, n: int) -> "TrigPoly2D":
        """Partial derivative d^m/dtau^m d^n/dnu^n as a new polynomial."""
        k = sym_index(self.degree)
        wk = (-2j * np.pi * k) ** m
        wl = (-2j * np.pi * k) ** n
        return TrigPoly2D(self.coeffs * np.outer(wk, wl))


def eval_trigpoly_grid(p: TrigPoly2D, grid_size: int) -> np.ndarray:
    """Values P(u/G, v/G) for u, v = 0..G-1 via a zero-padded 2D DFT, O(G^2 log G).

    Row u indexes tau = u/G, column v indexes nu = v/G.
    """
    L = p.coeffs.shape[0]
    if grid_size < L:
        raise ValueError(f"grid_size must be >= {L}, got {grid_size}")
    k = sym_index(p.degree)
    buf = np.zeros((grid_size, grid_size), dtype=complex)
    buf[np.ix_(k % grid_size, k % grid_size)] = p.coeffs
    # fft2 sums a[j, m] e^{-i2pi(ju + mv)/G}: j plays k (tau axis), m plays l (nu axis).
    return np.fft.fft2(buf)
