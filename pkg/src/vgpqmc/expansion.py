"""Exact enumeration of closed-walk configurations and partition-function sums.

A configuration is an initial basis state plus a sequence of permutation
term indices whose induced walk returns to the start.  Its weight is the
real part of the product of hop coefficients times the divided
difference of e^{-beta*x} over the walk's classical energies.  This
module enumerates configurations exactly (streamed for inspection,
batched in numpy for sums), computes truncated partition-function
series with rigorous tail bounds, and compares the positive-weight
schemes that drop the sign either before or after taking the real part.
"""

from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .divdiff import EnergyList, SignedLogValue, divdiff_exp, divdiff_exp_log_batch, divdiff_sign
from .errors import BudgetExceeded, DimensionError, NotClosed, Undefined
from .model import Hamiltonian, PmrForm

DEFAULT_BUDGET = 10**8
ORACLE_DIM_CAP = 4096
_MAX_SERIES_ORDER = 30_000


@dataclass(frozen=True)
class Configuration:
    """Initial state plus a sequence of 1-based permutation-term indices."""

    z: int
    seq: tuple[int, ...] = ()

    @property
    def order(self) -> int:
        return len(self.seq)


@dataclass(frozen=True)
class WeightBreakdown:
    states: tuple[int, ...]
    energies: tuple[float, ...]
    r_product: SignedLogValue
    phase_total: float
    dd: SignedLogValue
    w_true: float
    w_stoq: float
    w_abs: float


@dataclass(frozen=True)
class WeightedSignReport:
    beta: float
    q_max: int
    z_true: SignedLogValue
    z_stoq: SignedLogValue
    z_abs: SignedLogValue
    sgn_stoq: float
    sgn_abs: float
    tail_bound: float


class _StepTable:
    """Flattened hop structure of a PmrForm for walking and enumeration."""

    def __init__(self, pmr: PmrForm):
        n, m = pmr.dim, pmr.n_terms
        self.n, self.m = n, m
        self.energies = np.asarray(pmr.classical_diag, dtype=float)
        self.target = np.full((m, n), -1, dtype=int)
        self.dstep = np.zeros((m, n), dtype=complex)  # hop coefficient src -> target
        for t, term in enumerate(pmr.terms):
            src = term.sources()
            tgt = term.perm[src]
            self.target[t, src] = tgt
            self.dstep[t, src] = term.diag[tgt]
        # per-source edge lists ordered by term index (gives lexicographic
        # sequence order during enumeration)
        nbr, dval, termidx = [], [], []
        ptr = np.zeros(n + 1, dtype=np.int64)
        self.term_of_edge: dict[tuple[int, int], int] = {}
        for src in range(n):
            for t in range(m):
                tgt = self.target[t, src]
                if tgt >= 0:
                    nbr.append(tgt)
                    dval.append(self.dstep[t, src])
                    termidx.append(t)
                    self.term_of_edge[(src, int(tgt))] = t
            ptr[src + 1] = len(nbr)
        self.nbr_flat = np.asarray(nbr, dtype=np.int64)
        self.d_flat = np.asarray(dval, dtype=complex)
        self.term_flat = np.asarray(termidx, dtype=np.int64)
        self.ptr = ptr
        self.deg = np.diff(ptr)
        self.r_max = float(np.abs(self.d_flat).max()) if len(nbr) else 0.0
        self.dist = self._hop_distances()

    def _hop_distances(self) -> np.ndarray:
        n = self.n
        dist = np.full((n, n), n + 1, dtype=np.int32)  # n+1 means unreachable
        adj = [self.nbr_flat[self.ptr[v]:self.ptr[v + 1]] for v in range(n)]
        for start in range(n):
            dist[start, start] = 0
            queue = deque([start])
            while queue:
                u = queue.popleft()
                for v in adj[u]:
                    if dist[start, v] > dist[start, u] + 1:
                        dist[start, v] = dist[start, u] + 1
                        queue.append(int(v))
        return dist


def walk_states(pmr: PmrForm, config: Configuration) -> list[int]:
    """States [z_0, ..., z_q] visited by the configuration's walk.

    Raises Undefined when a step has no image and NotClosed when the
    walk does not return to z_0.
    """
    n, m = pmr.dim, pmr.n_terms
    if not 0 <= config.z < n:
        raise ValueError(f"initial state {config.z} outside dimension {n}")
    states = [config.z]
    for idx in config.seq:
        if not 1 <= idx <= m:
            raise ValueError(f"term index {idx} outside [1, {m}]")
        term = pmr.terms[idx - 1]
        nxt = int(term.perm[states[-1]])
        if nxt < 0 or term.diag[nxt] == 0:
            raise Undefined(
                f"term {idx} has no image for state {states[-1]}"
            )
        states.append(nxt)
    if states[-1] != states[0]:
        raise NotClosed(
            f"walk ends at {states[-1]}, started at {states[0]}"
        )
    return states


def config_weight(pmr: PmrForm, beta: float, config: Configuration) -> WeightBreakdown:
    """Per-configuration weight breakdown at inverse temperature beta."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    states = walk_states(pmr, config)
    q = config.order
    energies = tuple(float(pmr.classical_diag[s]) for s in states)
    log_r = 0.0
    phase = 0.0
    for idx, src in zip(config.seq, states):
        term = pmr.terms[idx - 1]
        d = complex(term.diag[term.perm[src]])
        log_r += math.log(abs(d))
        phase += -cmath.phase(-d)
    dd = divdiff_exp(EnergyList(beta, energies))
    w_stoq = math.exp(log_r + dd.log_mag)
    cos_phi = math.cos(phase)
    return WeightBreakdown(
        states=tuple(states),
        energies=energies,
        r_product=SignedLogValue(1, log_r),
        phase_total=phase,
        dd=dd,
        w_true=cos_phi * w_stoq,
        w_stoq=w_stoq,
        w_abs=abs(cos_phi) * w_stoq,
    )


def conjugate_config(pmr: PmrForm, config: Configuration) -> Configuration:
    """Reverse-direction walk: same path backwards through the inverse hops."""
    states = walk_states(pmr, config)
    table = _StepTable(pmr)
    seq = []
    for u, v in zip(states[-2::-1], states[:0:-1]):
        seq.append(table.term_of_edge[(v, u)] + 1)
    return Configuration(config.z, tuple(seq))


def enumerate_configs(pmr: PmrForm, q_max: int):
    """Yield every closed configuration with order <= q_max exactly once.

    Order: ascending q, then initial state, then lexicographic sequence.
    """
    if q_max < 0:
        raise ValueError("q_max must be nonnegative")
    table = _StepTable(pmr)
    n = table.n
    for q in range(q_max + 1):
        for z in range(n):
            if q == 0:
                yield Configuration(z, ())
                continue
            yield from _stream_from(table, z, q)


def _stream_from(table: _StepTable, z0: int, q: int):
    # iterative DFS emitting sequences in ascending-term order
    seq: list[int] = []
    state_stack = [z0]
    edge_stack = [0]
    while True:
        cur = state_stack[-1]
        depth = len(seq)
        advanced = False
        if depth < q:
            start = edge_stack[-1]
            lo, hi = table.ptr[cur], table.ptr[cur + 1]
            for off in range(lo + start, hi):
                tgt = int(table.nbr_flat[off])
                # prune states that cannot return in the remaining steps
                if table.dist[tgt, z0] <= q - depth - 1:
                    edge_stack[-1] = off - lo + 1
                    seq.append(int(table.term_flat[off]) + 1)
                    state_stack.append(tgt)
                    edge_stack.append(0)
                    advanced = True
                    break
        if not advanced:
            if depth == q and state_stack[-1] == z0 and q > 0:
                yield Configuration(z0, tuple(seq))
            if not seq:
                return
            seq.pop()
            state_stack.pop()
            edge_stack.pop()


def _closed_batches(table: _StepTable, q_max: int, budget: int):
    """Vectorized frontier walker.

    Yields (q, paths, prods) once per order q: paths has shape
    (count, q+1) with paths[:, 0] == paths[:, -1], prods is the complex
    product of hop coefficients along each path.
    """
    n = table.n
    idx_t = np.int8 if n <= 127 else np.int16
    starts = np.arange(n, dtype=idx_t)[:, None]
    yield 0, starts, np.ones(n, dtype=complex)
    if q_max == 0 or table.m == 0 or len(table.nbr_flat) == 0:
        return
    paths = starts
    prods = np.ones(n, dtype=complex)
    visited = n
    for t in range(1, q_max + 1):
        last = paths[:, -1].astype(np.int64)
        deg = table.deg[last]
        total = int(deg.sum())
        if total == 0:
            return
        visited += total
        if visited > budget:
            raise BudgetExceeded(
                f"enumeration visited more than {budget} partial walks"
            )
        rows = np.repeat(np.arange(paths.shape[0]), deg)
        cum = np.concatenate(([0], np.cumsum(deg)))
        offsets = np.arange(total) - np.repeat(cum[:-1], deg)
        eidx = np.repeat(table.ptr[last], deg) + offsets
        new_paths = np.empty((total, t + 1), dtype=idx_t)
        new_paths[:, :t] = paths[rows]
        new_paths[:, t] = table.nbr_flat[eidx].astype(idx_t)
        new_prods = prods[rows] * table.d_flat[eidx]
        closed = new_paths[:, t] == new_paths[:, 0]
        if closed.any():
            yield t, new_paths[closed], new_prods[closed]
        if t == q_max:
            return
        keep = table.dist[
            new_paths[:, t].astype(np.int64), new_paths[:, 0].astype(np.int64)
        ] <= (q_max - t)
        paths = new_paths[keep]
        prods = new_prods[keep]
        if paths.shape[0] == 0:
            return


def _batch_weights(table: _StepTable, beta: float, q: int,
                   paths: np.ndarray, prods: np.ndarray):
    """(w_true, w_stoq, w_abs) arrays for a batch of closed paths.

    Divided differences depend only on the energy multiset, so rows are
    deduplicated by sorted energies before the batched evaluation.
    """
    energies = table.energies[paths.astype(np.int64)]
    if q == 0:
        mags = np.exp(-beta * energies[:, 0])
    else:
        key = np.sort(energies, axis=1)
        uniq, inverse = np.unique(key, axis=0, return_inverse=True)
        logs = divdiff_exp_log_batch(beta, uniq)
        mags = np.exp(logs)[inverse]
    sign_q = divdiff_sign(q)
    w_true = prods.real * sign_q * mags
    w_stoq = np.abs(prods) * mags
    w_abs = np.abs(w_true)
    return w_true, w_stoq, w_abs


def _tail_bound_fn(table: _StepTable, beta: float):
    """Upper bound on the absolute weight mass above a given order.

    |dd| <= beta^q e^{-beta E_min} / q! (mean-value form) and there are
    at most N (M r_max)^q walk products of magnitude r_max^q each, so
    the mass above order Q is below N e^{-beta E_min} sum_{q>Q} x^q/q!
    with x = M r_max beta; the sum is a regularized incomplete gamma.
    """
    x = table.m * table.r_max * beta
    e_min = float(table.energies.min()) if table.n else 0.0
    prefactor = table.n * math.exp(-beta * e_min)

    def tail(order: int) -> float:
        if x == 0.0:
            return 0.0
        return float(prefactor * math.exp(x) * gammainc(order + 1, x))

    return tail, x


def _series_order_target(tail, goal: float) -> int:
    order = 0
    while tail(order) > goal:
        order += 1
        if order > _MAX_SERIES_ORDER:
            raise BudgetExceeded("series tail bound did not reach the tolerance")
    return order


def partition_function_series(pmr: PmrForm, beta: float, rel_tol: float, *,
                              budget: int = DEFAULT_BUDGET):
    """Truncated expansion of tr(e^{-beta H}) by exact enumeration.

    Returns (Z, q_max_used, tail_bound) where q_max_used is the smallest
    order whose tail bound is below rel_tol relative to |Z|.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    table = _StepTable(pmr)
    tail, _x = _tail_bound_fn(table, beta)
    # tr e^{-beta H} >= sum_z e^{-beta H_zz}, so this conservative target
    # order is always deep enough for the self-referential stop rule
    z_diag = float(np.exp(-beta * table.energies).sum())
    target = _series_order_target(tail, 0.5 * rel_tol * z_diag)
    per_q = np.zeros(target + 1)
    for q, paths, prods in _closed_batches(table, target, budget):
        w_true, _, _ = _batch_weights(table, beta, q, paths, prods)
        per_q[q] = w_true.sum()
    partial = np.cumsum(per_q)
    for order in range(target + 1):
        bound = tail(order)
        if abs(partial[order]) > 0 and bound / abs(partial[order]) < rel_tol:
            return float(partial[order]), order, bound
    return float(partial[target]), target, tail(target)


def partition_function_exact(H: Hamiltonian, beta: float, *,
                             dim_cap: int = ORACLE_DIM_CAP) -> float:
    """Spectral oracle: tr(e^{-beta H}) by full Hermitian eigendecomposition."""
    if H.dim > dim_cap:
        raise DimensionError(f"dimension {H.dim} exceeds oracle cap {dim_cap}")
    eigenvalues = np.linalg.eigvalsh(H.to_dense())
    return float(np.exp(-beta * eigenvalues).sum())


def weighted_signs(pmr: PmrForm, beta: float, rel_tol: float, *,
                   q_cap: int | None = None,
                   budget: int = DEFAULT_BUDGET) -> WeightedSignReport:
    """Ratios of the true-weight sum to each positive-weight sum.

    All three sums run over the same truncated configuration set.  With
    q_cap the truncation order is fixed; otherwise it follows the same
    tail rule as the partition series at rel_tol.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    table = _StepTable(pmr)
    tail, _x = _tail_bound_fn(table, beta)
    if q_cap is not None:
        target = int(q_cap)
        if target < 0:
            raise ValueError("q_cap must be nonnegative")
    else:
        z_diag = float(np.exp(-beta * table.energies).sum())
        target = _series_order_target(tail, 0.5 * rel_tol * z_diag)
    sums_true = np.zeros(target + 1)
    sums_stoq = np.zeros(target + 1)
    sums_abs = np.zeros(target + 1)
    for q, paths, prods in _closed_batches(table, target, budget):
        w_true, w_stoq, w_abs = _batch_weights(table, beta, q, paths, prods)
        sums_true[q] = w_true.sum()
        sums_stoq[q] = w_stoq.sum()
        sums_abs[q] = w_abs.sum()
    if q_cap is None:
        partial = np.cumsum(sums_true)
        order = target
        for candidate in range(target + 1):
            bound = tail(candidate)
            if abs(partial[candidate]) > 0 and bound / abs(partial[candidate]) < rel_tol:
                order = candidate
                break
    else:
        order = target
    z_true = float(sums_true[:order + 1].sum())
    z_stoq = float(sums_stoq[:order + 1].sum())
    z_abs = float(sums_abs[:order + 1].sum())
    sgn_stoq = z_true / z_stoq
    sgn_abs = z_true / z_abs if z_abs > 0 else 1.0
    if abs(sgn_abs) > 1 + 1e-12:
        raise AssertionError("weighted sign |Z / Z_abs| exceeded one")
    return WeightedSignReport(
        beta=beta,
        q_max=order,
        z_true=_to_signed_log(z_true),
        z_stoq=_to_signed_log(z_stoq),
        z_abs=_to_signed_log(z_abs),
        sgn_stoq=sgn_stoq,
        sgn_abs=sgn_abs,
        tail_bound=tail(order),
    )


def sign_decay_scan(pmr: PmrForm, betas, rel_tol: float = 1e-6, *,
                    q_cap: int | None = None, budget: int = DEFAULT_BUDGET):
    """weighted_signs across an ascending list of inverse temperatures."""
    betas = [float(b) for b in betas]
    if any(b <= 0 for b in betas) or betas != sorted(betas):
        raise ValueError("betas must be positive and ascending")
    out = []
    for beta in betas:
        report = weighted_signs(pmr, beta, rel_tol, q_cap=q_cap, budget=budget)
        out.append((beta, report.sgn_stoq, report.sgn_abs))
    return out


def scan_min_weight(pmr: PmrForm, beta: float, q_max: int, *,
                    stop_below: float | None = None,
                    budget: int = DEFAULT_BUDGET):
    """Minimum true weight over all closed configurations with order <= q_max.

    With stop_below set, returns as soon as any weight falls below it.
    Returns (min_weight, witness Configuration).
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    table = _StepTable(pmr)
    best = math.inf
    witness = None
    for q, paths, prods in _closed_batches(table, q_max, budget):
        w_true, _, _ = _batch_weights(table, beta, q, paths, prods)
        if w_true.size == 0:
            continue
        pos = int(np.argmin(w_true))
        if w_true[pos] < best:
            best = float(w_true[pos])
            witness = _config_from_path(table, paths[pos])
        if stop_below is not None and best < stop_below:
            return best, witness
    return best, witness


def _config_from_path(table: _StepTable, path: np.ndarray) -> Configuration:
    seq = tuple(
        table.term_of_edge[(int(u), int(v))] + 1
        for u, v in zip(path[:-1], path[1:])
    )
    return Configuration(int(path[0]), seq)


def _to_signed_log(value: float) -> SignedLogValue:
    if value == 0.0:
        return SignedLogValue(0, 0.0)
    return SignedLogValue(1 if value > 0 else -1, math.log(abs(value)))
