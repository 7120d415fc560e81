"""Divided differences of f(x) = exp(-beta*x) over energy lists, in signed-log form.

The magnitude of a divided difference over q+1 energies decays like
beta^q / q!, which leaves ordinary floats long before the expansion
orders that matter in partition-function work.  Results therefore carry
a (sign, log magnitude) pair, and the evaluation itself never divides
by energy gaps: coincident or clustered inputs are exact, not limits.

Evaluation strategy: with z_i = -beta*E_i the divided difference of
e^x over [z_0..z_q] is the (0, q) entry of exp(Z) for the bidiagonal
matrix Z with the z_i on the diagonal and ones above it.  The full
upper triangle of exp(Z) consists of divided differences over the
sublists, which are strictly positive, so repeated squaring of the
triangle involves no cancellation.  The triangle for a list of small
spread comes from a Taylor sum; wider spreads are halved k times and
squared back up.  Entries are stored scaled by (j-i)! so the whole
triangle stays O(e^spread) and the tiny 1/q! factor is restored only
in log space at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NearDegenerate

_SPREAD_MAX = 3.5       # Taylor triangle handles |z - center| up to this
_TAYLOR_TOL = 1e-17
_TAYLOR_EXTRA = 400     # extra Taylor terms allowed past the corner fill
_FAST_Q_MAX = 150       # beyond this (j-i)! leaves float range; use log-domain squaring
_FAST_RHO_MAX = 200.0   # beyond this triangle entries leave float range
_BATCH_CHUNK = 100_000  # rows per triangle allocation

SEP_MIN = 1e-6          # minimum pairwise separation for the naive formula


@dataclass(frozen=True)
class SignedLogValue:
    """A real number as sign in {-1, 0, +1} plus natural log of its magnitude."""

    sign: int
    log_mag: float

    def value(self) -> float:
        """Float value; may over/underflow for extreme magnitudes."""
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.log_mag)
        except OverflowError:
            return self.sign * math.inf


@dataclass(frozen=True)
class EnergyList:
    """Inverse temperature plus the list [E_0, ..., E_q] of classical energies."""

    beta: float
    energies: tuple[float, ...]

    def __init__(self, beta: float, energies: Sequence[float]):
        object.__setattr__(self, "beta", float(beta))
        object.__setattr__(self, "energies", tuple(float(e) for e in energies))
        if not self.beta > 0 or not math.isfinite(self.beta):
            raise ValueError(f"beta must be positive and finite, got {beta}")
        if not self.energies:
            raise ValueError("energy list must not be empty")
        if not all(math.isfinite(e) for e in self.energies):
            raise ValueError("energies must be finite")

    @property
    def order(self) -> int:
        return len(self.energies) - 1


def divdiff_sign(q: int) -> int:
    """Guaranteed sign (-1)^q of the divided difference of e^(-beta*x) at order q."""
    if q < 0:
        raise ValueError("order must be nonnegative")
    return -1 if q % 2 else 1


def divdiff_exp(elist: EnergyList) -> SignedLogValue:
    """Divided difference of e^(-beta*x) over the energy list."""
    energies = np.asarray(elist.energies, dtype=float)
    q = energies.size - 1
    log = _exp_dd_log(-elist.beta * energies[None, :])[0]
    return SignedLogValue(divdiff_sign(q), float(log + q * math.log(elist.beta)))


def divdiff_exp_log_batch(beta: float, energies: np.ndarray) -> np.ndarray:
    """Log magnitudes for a batch of equal-length energy lists (rows).

    The sign of every value is divdiff_sign(q) with q = energies.shape[1] - 1.
    """
    energies = np.atleast_2d(np.asarray(energies, dtype=float))
    if not beta > 0:
        raise ValueError("beta must be positive")
    q = energies.shape[1] - 1
    out = np.empty(energies.shape[0])
    for lo in range(0, energies.shape[0], _BATCH_CHUNK):
        block = energies[lo:lo + _BATCH_CHUNK]
        out[lo:lo + _BATCH_CHUNK] = _exp_dd_log(-beta * block)
    return out + q * math.log(beta)


def divdiff_naive(elist: EnergyList) -> float:
    """Direct-summation reference for well-separated energies (test oracle).

    Raises NearDegenerate if any pair of inputs is closer than SEP_MIN.
    """
    xs = elist.energies
    n = len(xs)
    if n == 1:
        return math.exp(-elist.beta * xs[0])
    for a in range(n):
        for b in range(a + 1, n):
            if abs(xs[a] - xs[b]) <= SEP_MIN:
                raise NearDegenerate(
                    f"inputs {xs[a]} and {xs[b]} are closer than {SEP_MIN}"
                )
    terms = []
    for j in range(n):
        denom = 1.0
        for k in range(n):
            if k != j:
                denom *= xs[j] - xs[k]
        terms.append(math.exp(-elist.beta * xs[j]) / denom)
    return math.fsum(terms)


def _exp_dd_log(z: np.ndarray) -> np.ndarray:
    """log of the (positive) divided difference of e^x over each row of z."""
    b, n = z.shape
    q = n - 1
    if q == 0:
        return z[:, 0].copy()
    center = 0.5 * (z.max(axis=1) + z.min(axis=1))
    w = z - center[:, None]
    rho = np.abs(w).max(axis=1)
    halvings = np.zeros(b, dtype=int)
    wide = rho > _SPREAD_MAX
    halvings[wide] = np.ceil(np.log2(rho[wide] / _SPREAD_MAX)).astype(int)
    out = np.empty(b)
    for k in np.unique(halvings):
        rows = np.nonzero(halvings == k)[0]
        scaled = w[rows] / 2.0 ** int(k)
        if q > _FAST_Q_MAX or rho[rows].max() > _FAST_RHO_MAX:
            out[rows] = _corner_log_slow(scaled, int(k))
        else:
            out[rows] = _corner_log_fast(scaled, int(k))
    return out + center


def _taylor_triangle(w: np.ndarray) -> np.ndarray:
    """Scaled triangle T[b,i,j] = dd(e^x; w_i..w_j) * (j-i)! for small-spread rows."""
    b, n = w.shape
    q = n - 1
    # T = sum_n Z^n/n! in the scaling where entry (i,j) carries an extra (j-i)!,
    # which turns the bidiagonal multiply into
    #   term[i,j] <- (term[i,j]*w_j + (j-i)*term[i,j-1]) / n
    gap = (np.arange(n)[None, :] - np.arange(n)[:, None]).astype(float)
    gap_cols = gap[:, 1:][None]
    tri = np.broadcast_to(np.eye(n), (b, n, n)).copy()
    term = tri.copy()
    streak = 0
    for it in range(1, q + _TAYLOR_EXTRA):
        new = term * w[:, None, :]
        new[:, :, 1:] += term[:, :, :-1] * gap_cols
        term = new / it
        tri += term
        if it >= q:
            if np.max(np.abs(term)) <= _TAYLOR_TOL * np.max(tri):
                streak += 1
                if streak >= 2:
                    return tri
            else:
                streak = 0
    raise RuntimeError("divided-difference Taylor sum failed to converge")


def _corner_log_fast(w: np.ndarray, k: int) -> np.ndarray:
    """Triangle + k squarings in plain floats; requires modest q and spread."""
    b, n = w.shape
    q = n - 1
    tri = _taylor_triangle(w)
    logscale = np.zeros(b)
    if k:
        gap = np.arange(n)[None, :] - np.arange(n)[:, None]
        gap_pos = np.clip(gap, 0, None)
        fact = np.array([math.factorial(t) for t in range(n)], dtype=float)
        unscale = np.where(gap >= 0, 1.0 / fact[gap_pos], 0.0)
        rescale = np.where(gap >= 0, fact[gap_pos] * 2.0 ** (-gap_pos), 0.0)
        for _ in range(k):
            top = tri.max(axis=(1, 2))
            tri /= top[:, None, None]
            logscale = 2.0 * (logscale + np.log(top))
            # squaring doubles the input list; the 2^-(j-i) factor in
            # rescale re-expresses the product triangle over that list
            half = (tri * unscale) @ (tri * unscale)
            tri = half * rescale
    corner = tri[:, 0, q]
    return np.log(corner) + logscale - math.lgamma(q + 1)


def _corner_log_slow(w: np.ndarray, k: int) -> np.ndarray:
    """Log-domain squaring for orders or spreads beyond float range."""
    b, n = w.shape
    q = n - 1
    gap = np.arange(n)[None, :] - np.arange(n)[:, None]
    upper = gap >= 0
    lgam = np.vectorize(math.lgamma)(np.arange(n + 1) + 1.0)
    out = np.empty(b)
    for row in range(b):
        tri = _taylor_triangle(w[row:row + 1])[0]
        with np.errstate(divide="ignore"):
            logt = np.where(upper & (tri > 0), np.log(np.maximum(tri, 1e-300)), -np.inf)
        for _ in range(k):
            new = np.full_like(logt, -np.inf)
            for i in range(n):
                for j in range(i, n):
                    ms = np.arange(i, j + 1)
                    logbin = lgam[j - i] - lgam[ms - i] - lgam[j - ms]
                    vals = logt[i, ms] + logt[ms, j] + logbin
                    top = vals.max()
                    if top > -np.inf:
                        new[i, j] = top + math.log(np.exp(vals - top).sum())
                    new[i, j] -= (j - i) * math.log(2.0)
            logt = new
        out[row] = logt[0, q] - math.lgamma(q + 1)
    return out
