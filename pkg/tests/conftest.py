"""Shared fixtures and independent reference implementations.

The oracles here avoid the package code paths they check: steering vectors
are built with :mod:`cmath` loops, eigenvalues come from :mod:`mpmath`,
ranks from pivoted QR instead of the SVD.
"""

import cmath
import math

import mpmath
import numpy as np
import pytest
import scipy.linalg


def steering_oracle(M, angle_deg, spacing=0.5):
    s = math.sin(math.radians(angle_deg))
    return np.array([cmath.exp(2j * math.pi * spacing * m * s) for m in range(M)])


def covariance_oracle(M, angles, powers, noise_var):
    R = noise_var * np.eye(M, dtype=complex)
    for a, p in zip(angles, powers):
        v = steering_oracle(M, a)
        R += p * np.outer(v, v.conj())
    return R


def mp_eigenvalues(R, dps=30):
    """Eigenvalues of a Hermitian matrix by mpmath's own Hermitian eigensolver."""
    with mpmath.workdps(dps):
        A = mpmath.matrix([[mpmath.mpc(complex(x)) for x in row] for row in np.asarray(R)])
        ev = mpmath.eighe(A, eigvals_only=True)
        return np.sort(np.array([float(mpmath.re(e)) for e in ev]))


def qr_rank(A, tol=1e-9):
    """Numerical rank by column-pivoted QR."""
    _, Rq, _ = scipy.linalg.qr(np.asarray(A), pivoting=True, mode="economic")
    d = np.abs(np.diag(Rq))
    return int(np.sum(d > tol * d[0]))


def random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (A + A.conj().T) / 2


def diagonal_average(R):
    """Project onto Hermitian Toeplitz matrices by averaging each diagonal."""
    M = R.shape[0]
    lags = [np.mean(np.diagonal(R, -k)) for k in range(M)]
    T = np.empty((M, M), dtype=complex)
    for i in range(M):
        for j in range(M):
            T[i, j] = lags[i - j] if i >= j else np.conj(lags[j - i])
    return T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
