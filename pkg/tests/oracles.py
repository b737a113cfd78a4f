"""Dense brute-force reference implementations used to pin down the fast operators.

Everything here is written with explicit matrices and plain sums, deliberately
independent of the library's FFT-based code paths. Only usable at small sizes.
"""

import numpy as np


def sym(n_half):
    return np.arange(-n_half, n_half + 1)


def dense_dft(v):
    """X_k = sum_l v_l e^{-i2pi kl/L} on the symmetric index, by explicit matrix."""
    v = np.asarray(v, dtype=complex)
    L = v.size
    k = sym((L - 1) // 2)
    return np.exp(-2j * np.pi * np.outer(k, k) / L) @ v


def dense_shift(xv, tau, nu):
    """[F_nu T_tau x]_p from the definition: DFT, phase ramp, inverse DFT, modulation."""
    xv = np.asarray(xv, dtype=complex)
    L = xv.size
    k = sym((L - 1) // 2)
    X = dense_dft(xv)
    y = (np.exp(2j * np.pi * np.outer(k, k) / L) @ (X * np.exp(-2j * np.pi * k * tau))) / L
    return y * np.exp(2j * np.pi * k * nu)


def dense_gabor_matrix(xv):
    """(L, L^2) matrix with column (k, l) = integer shift/modulation x_{p-l} e^{i2pi kp/L}.

    Column order is k outer, l inner.
    """
    xv = np.asarray(xv, dtype=complex)
    L = xv.size
    N = (L - 1) // 2
    p = sym(N)
    cols = []
    for k in sym(N):
        for ell in sym(N):
            cols.append(xv[(p - ell + N) % L] * np.exp(2j * np.pi * k * p / L))
    return np.stack(cols, axis=1)


def dense_pair_idft(L):
    """(L^2, L^2) matrix of the pair-index inverse DFT: row (k,l), col (r,q),
    entry (1/L^2) e^{i2pi(qk + rl)/L}. Note the crossed pairing."""
    N = (L - 1) // 2
    idx = [(k, ell) for k in sym(N) for ell in sym(N)]
    M = np.zeros((L * L, L * L), dtype=complex)
    for i, (k, ell) in enumerate(idx):
        for j, (r, q) in enumerate(idx):
            M[i, j] = np.exp(2j * np.pi * (q * k + r * ell) / L) / L**2
    return M


def steering_vec(L, tau, nu):
    """Pair-indexed exponential vector with entry (r, q) = e^{-i2pi(r tau + q nu)}."""
    N = (L - 1) // 2
    return np.array(
        [np.exp(-2j * np.pi * (r * tau + q * nu)) for r in sym(N) for q in sym(N)]
    )


def dense_dict_matrix(xv, k_grid, m_rows, n_cols):
    """(L, m_rows*n_cols) matrix of grid shifts F_{m/K} T_{n/K} x, m outer, n inner."""
    cols = [
        dense_shift(xv, n / k_grid, m / k_grid)
        for m in range(m_rows)
        for n in range(n_cols)
    ]
    return np.stack(cols, axis=1)


def dense_trigpoly_eval(coeffs, tau, nu):
    """sum_{k,l} c[k,l] e^{-i2pi(k tau + l nu)} by explicit double sum."""
    coeffs = np.asarray(coeffs, dtype=complex)
    N = (coeffs.shape[0] - 1) // 2
    val = 0.0 + 0.0j
    for i, k in enumerate(sym(N)):
        for j, ell in enumerate(sym(N)):
            val += coeffs[i, j] * np.exp(-2j * np.pi * (k * tau + ell * nu))
    return val


def dense_periodic_model(xv, shifts, coeffs):
    """y_p = sum_j b_j e^{i2pi p nu_j} sum_l D_N(l/L - tau_j) x_{p-l}, explicit double sum."""
    xv = np.asarray(xv, dtype=complex)
    L = xv.size
    N = (L - 1) // 2
    p = sym(N)
    y = np.zeros(L, dtype=complex)
    for (tau, nu), b in zip(shifts, coeffs):
        inner = np.zeros(L, dtype=complex)
        for ell in sym(N):
            t = ell / L - tau
            # periodic sinc ratio, direct sum to stay independent of the library kernel
            d = np.cos(2 * np.pi * t * sym(N)).sum() / L
            inner += d * xv[(p - ell + N) % L]
        y += b * np.exp(2j * np.pi * p * nu) * inner
    return y
