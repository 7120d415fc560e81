"""Metropolis sampling of closed configurations under positive weight schemes.

The chain state is a closed configuration; its stationary weight is
either the stoquasticized weight (product of hop magnitudes times the
divided-difference magnitude) or the abs-cosine weight (the same times
|cos| of the total phase).  The weighted sign is then the sample mean
of the ratio true/scheme weight, which is cos(Phi) under the first
scheme and its sign under the second.

Moves, each reversed by a labelled partner so detailed balance holds
factor by factor:

  * insert / delete a mutually cancelling adjacent hop pair,
  * insert / delete a full traversal of a fundamental cycle (these make
    the chain irreducible across winding sectors, which hop pairs alone
    cannot reach),
  * cyclic rotation of the sequence with the matching start update,
  * reseating the start among states fixed by the whole sequence.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass

import numpy as np

from .divdiff import EnergyList, divdiff_exp
from .errors import BudgetExceeded, ZeroWeightTrap
from .expansion import (
    Configuration,
    WeightBreakdown,
    _StepTable,
    config_weight,
    enumerate_configs,
    walk_states,
)
from .model import PmrForm

SCHEMES = ("stoq", "abs")
_COS_FLOOR = 1e-300
_Q_SAFETY = 10_000
_CHECK_STATE_CAP = 100_000

# cumulative move-kind thresholds: pair insert/delete 0.3 each, the rest 0.1
_P_PAIR_INS = 0.3
_P_PAIR_DEL = 0.6
_P_LOOP_INS = 0.7
_P_LOOP_DEL = 0.8
_P_ROTATE = 0.9


@dataclass(frozen=True)
class ChainState:
    """A closed configuration together with its cached weight breakdown."""

    config: Configuration
    cached: WeightBreakdown

    @classmethod
    def create(cls, pmr: PmrForm, beta: float, config: Configuration) -> "ChainState":
        return cls(config, config_weight(pmr, beta, config))

    def check(self, pmr: PmrForm, beta: float, tol: float = 1e-10) -> bool:
        fresh = config_weight(pmr, beta, self.config)
        scale = max(abs(fresh.w_stoq), 1e-300)
        return (
            fresh.states == self.cached.states
            and abs(fresh.w_true - self.cached.w_true) <= tol * scale
            and abs(fresh.w_stoq - self.cached.w_stoq) <= tol * scale
            and abs(fresh.w_abs - self.cached.w_abs) <= tol * scale
        )


@dataclass(frozen=True)
class SignEstimate:
    scheme: str
    mean: float
    stderr: float
    n_samples: int
    acceptance_rate: float


def _cycle_menu(table: _StepTable):
    """Fundamental-cycle traversals anchored at every vertex, both directions.

    Each entry is (terms, interior states, log-magnitude sum, phase sum).
    """
    n = table.n
    parent = np.full(n, -2, dtype=int)
    depth = np.zeros(n, dtype=int)
    adj = [sorted({int(v) for v in table.nbr_flat[table.ptr[u]:table.ptr[u + 1]]})
           for u in range(n)]
    for root in range(n):
        if parent[root] != -2:
            continue
        parent[root] = -1
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if parent[v] == -2:
                    parent[v] = u
                    depth[v] = depth[u] + 1
                    queue.append(v)
    loops = []
    for u in range(n):
        for v in adj[u]:
            if u < v and parent[v] != u and parent[u] != v:
                loops.append(_tree_cycle(u, v, parent, depth))
    menu = [[] for _ in range(n)]
    for loop in loops:
        for verts in (loop, loop[::-1]):
            for shift in range(len(verts)):
                path = verts[shift:] + verts[:shift] + (verts[shift],)
                terms, slogr, phase = _path_steps(table, path)
                menu[path[0]].append((terms, path[1:], slogr, phase))
    return menu


def _tree_cycle(i, j, parent, depth):
    up_i, up_j = [i], [j]
    a, b = i, j
    while depth[a] > depth[b]:
        a = parent[a]
        up_i.append(a)
    while depth[b] > depth[a]:
        b = parent[b]
        up_j.append(b)
    while a != b:
        a, b = parent[a], parent[b]
        up_i.append(a)
        up_j.append(b)
    path = [i, j]
    path.extend(up_j[1:-1])
    if a not in (i, j):
        path.append(a)
    path.extend(reversed(up_i[1:-1]))
    return tuple(path)


def _path_steps(table: _StepTable, path):
    terms = []
    slogr = 0.0
    phase = 0.0
    for u, v in zip(path[:-1], path[1:]):
        t = table.term_of_edge[(u, v)]
        d = complex(table.dstep[t, u])
        terms.append(t)
        slogr += math.log(abs(d))
        phase += -math.atan2((-d).imag, (-d).real)
    return tuple(terms), slogr, phase


class _Chain:
    def __init__(self, pmr: PmrForm, beta: float, scheme: str, rng,
                 config: Configuration | None = None,
                 q_cap: int | None = None, q_safety: int = _Q_SAFETY):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        self.table = _StepTable(pmr)
        self.pmr = pmr
        self.beta = float(beta)
        self.scheme = scheme
        self.rng = rng
        self.q_cap = q_cap
        self.q_safety = q_safety
        self.menu = _cycle_menu(self.table)
        self._dd_cache: dict[tuple, float] = {}
        if config is None:
            config = Configuration(int(np.argmin(self.table.energies)), ())
        states = walk_states(pmr, config)
        self.states = list(states)
        self.seq = [i - 1 for i in config.seq]  # 0-based internally
        self.slogr, self.phase = self._steps_total(self.states, self.seq)
        self.logw = self._logw(self.states, self.slogr, self.phase)

    def _steps_total(self, states, seq):
        slogr = 0.0
        phase = 0.0
        for t, u in zip(seq, states):
            d = complex(self.table.dstep[t, u])
            slogr += math.log(abs(d))
            phase += -math.atan2((-d).imag, (-d).real)
        return slogr, phase

    def _dd_log(self, states) -> float:
        energies = self.table.energies
        key = tuple(sorted(float(energies[s]) for s in states))
        hit = self._dd_cache.get(key)
        if hit is None:
            hit = divdiff_exp(EnergyList(self.beta, key)).log_mag
            self._dd_cache[key] = hit
        return hit

    def _logw(self, states, slogr, phase) -> float:
        out = slogr + self._dd_log(states)
        if self.scheme == "abs":
            out += math.log(max(abs(math.cos(phase)), _COS_FLOOR))
        return out

    def ratio(self) -> float:
        """Current sample of w_true / w_scheme, always in [-1, 1]."""
        c = math.cos(self.phase)
        if self.scheme == "stoq":
            return c
        return 0.0 if c == 0.0 else math.copysign(1.0, c)

    def config(self) -> Configuration:
        return Configuration(self.states[0], tuple(t + 1 for t in self.seq))

    # -- proposals ---------------------------------------------------------
    # each returns (states, seq, slogr, phase, ln_correction) or None

    def _propose(self):
        r = self.rng.random()
        if r < _P_PAIR_INS:
            return self._propose_pair_insert()
        if r < _P_PAIR_DEL:
            return self._propose_pair_delete()
        if r < _P_LOOP_INS:
            return self._propose_loop_insert()
        if r < _P_LOOP_DEL:
            return self._propose_loop_delete()
        if r < _P_ROTATE:
            return self._propose_rotate()
        return self._propose_reseat()

    def _propose_pair_insert(self):
        q = len(self.seq)
        slot = int(self.rng.integers(0, q + 1))
        v = self.states[slot]
        lo, hi = self.table.ptr[v], self.table.ptr[v + 1]
        degree = int(hi - lo)
        if degree == 0:
            return None
        pick = lo + int(self.rng.integers(0, degree))
        u = int(self.table.nbr_flat[pick])
        t_out = int(self.table.term_flat[pick])
        t_back = self.table.term_of_edge[(u, v)]
        d_out = complex(self.table.dstep[t_out, v])
        d_back = complex(self.table.dstep[t_back, u])
        states = self.states[:slot + 1] + [u, v] + self.states[slot + 1:]
        seq = self.seq[:slot] + [t_out, t_back] + self.seq[slot:]
        slogr = self.slogr + math.log(abs(d_out)) + math.log(abs(d_back))
        phase = self.phase \
            - math.atan2((-d_out).imag, (-d_out).real) \
            - math.atan2((-d_back).imag, (-d_back).real)
        return states, seq, slogr, phase, math.log(degree)

    def _propose_pair_delete(self):
        q = len(self.seq)
        if q < 2:
            return None
        slot = int(self.rng.integers(0, q - 1))
        if self.states[slot + 2] != self.states[slot]:
            return None
        v = self.states[slot]
        degree = int(self.table.deg[v])
        t_out, t_back = self.seq[slot], self.seq[slot + 1]
        u = self.states[slot + 1]
        d_out = complex(self.table.dstep[t_out, v])
        d_back = complex(self.table.dstep[t_back, u])
        states = self.states[:slot + 1] + self.states[slot + 3:]
        seq = self.seq[:slot] + self.seq[slot + 2:]
        slogr = self.slogr - math.log(abs(d_out)) - math.log(abs(d_back))
        phase = self.phase \
            + math.atan2((-d_out).imag, (-d_out).real) \
            + math.atan2((-d_back).imag, (-d_back).real)
        return states, seq, slogr, phase, -math.log(degree)

    def _propose_loop_insert(self):
        q = len(self.seq)
        slot = int(self.rng.integers(0, q + 1))
        options = self.menu[self.states[slot]]
        if not options:
            return None
        terms, tail_states, dlogr, dphase = options[int(self.rng.integers(0, len(options)))]
        length = len(terms)
        states = self.states[:slot + 1] + list(tail_states) + self.states[slot + 1:]
        seq = self.seq[:slot] + list(terms) + self.seq[slot:]
        # slots in the current state vs anchor positions in the proposal
        correction = math.log(q + 1) - math.log(q + length + 1)
        return states, seq, self.slogr + dlogr, self.phase + dphase, correction

    def _propose_loop_delete(self):
        q = len(self.seq)
        slot = int(self.rng.integers(0, q + 1))
        options = self.menu[self.states[slot]]
        if not options:
            return None
        terms, _tail, dlogr, dphase = options[int(self.rng.integers(0, len(options)))]
        length = len(terms)
        if slot + length > q or tuple(self.seq[slot:slot + length]) != terms:
            return None
        states = self.states[:slot + 1] + self.states[slot + length + 1:]
        seq = self.seq[:slot] + self.seq[slot + length:]
        correction = math.log(q + 1) - math.log(q - length + 1)
        return states, seq, self.slogr - dlogr, self.phase - dphase, correction

    def _propose_rotate(self):
        q = len(self.seq)
        if q < 2:
            return None
        k = int(self.rng.integers(1, q))
        states = self.states[k:] + self.states[1:k + 1]
        seq = self.seq[k:] + self.seq[:k]
        return states, seq, self.slogr, self.phase, 0.0

    def _propose_reseat(self):
        fixed = []
        walks = {}
        for z in range(self.table.n):
            walk = self._walk_from(z)
            if walk is not None:
                fixed.append(z)
                walks[z] = walk
        z_new = fixed[int(self.rng.integers(0, len(fixed)))]
        states = walks[z_new]
        slogr, phase = self._steps_total(states, self.seq)
        return states, list(self.seq), slogr, phase, 0.0

    def _walk_from(self, z):
        states = [z]
        for t in self.seq:
            nxt = int(self.table.target[t, states[-1]])
            if nxt < 0:
                return None
            states.append(nxt)
        return states if states[-1] == z else None

    def step(self) -> bool:
        proposal = self._propose()
        if proposal is None:
            return False
        states, seq, slogr, phase, correction = proposal
        if self.q_cap is not None and len(seq) > self.q_cap:
            return False
        logw_new = self._logw(states, slogr, phase)
        ln_accept = logw_new - self.logw + correction
        if ln_accept < 0 and not self.rng.random() < math.exp(ln_accept):
            return False
        self.states, self.seq = states, seq
        self.slogr, self.phase = slogr, phase
        self.logw = logw_new
        if len(self.seq) > self.q_safety:
            raise ZeroWeightTrap(
                f"sequence grew past the safety cap {self.q_safety}"
            )
        return True


def propose_move(pmr: PmrForm, state, rng) -> Configuration | None:
    """One proposal from the chain's move menu; None when the drawn move
    has no valid candidate (e.g. pair deletion on an empty sequence)."""
    config = state.config if isinstance(state, ChainState) else state
    chain = _Chain(pmr, 1.0, "stoq", rng, config=config)
    proposal = chain._propose()
    if proposal is None:
        return None
    states, seq, _slogr, _phase, _corr = proposal
    return Configuration(states[0], tuple(t + 1 for t in seq))


def mcmc_weighted_sign(pmr: PmrForm, beta: float, scheme: str, steps: int,
                       burn_in: int, seed, *, q_cap: int | None = None,
                       q_safety: int = _Q_SAFETY) -> SignEstimate:
    """Metropolis estimate of the weighted sign under the given scheme.

    The estimate is the sample mean of w_true / w_scheme along a chain
    whose stationary distribution is proportional to w_scheme; the
    standard error comes from 32 batch means.  Reproducible from seed.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not steps > burn_in >= 0:
        raise ValueError("need steps > burn_in >= 0")
    rng = np.random.default_rng(seed)
    chain = _Chain(pmr, beta, scheme, rng, q_cap=q_cap, q_safety=q_safety)
    n_samples = steps - burn_in
    samples = np.empty(n_samples)
    accepted = 0
    for i in range(steps):
        if chain.step():
            accepted += 1
        if i >= burn_in:
            samples[i - burn_in] = chain.ratio()
    if np.any(np.abs(samples) > 1 + 1e-9):
        raise AssertionError("sampled ratio left [-1, 1]")
    mean = float(samples.mean())
    stderr = _batch_means_stderr(samples)
    return SignEstimate(scheme, mean, stderr, n_samples, accepted / steps)


def _batch_means_stderr(samples: np.ndarray, n_batches: int = 32) -> float:
    n = samples.size
    n_batches = min(n_batches, n)
    size = n // n_batches
    if size == 0 or n_batches < 2:
        return 0.0
    means = samples[:n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def combine_estimates(estimates) -> SignEstimate:
    """Inverse-variance pooling of independent chains."""
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one estimate")
    scheme = estimates[0].scheme
    if any(e.scheme != scheme for e in estimates):
        raise ValueError("cannot combine estimates from different schemes")
    n_total = sum(e.n_samples for e in estimates)
    acceptance = sum(e.acceptance_rate * e.n_samples for e in estimates) / n_total
    if any(e.stderr == 0.0 for e in estimates):
        mean = sum(e.mean for e in estimates) / len(estimates)
        return SignEstimate(scheme, mean, 0.0, n_total, acceptance)
    weights = [1.0 / e.stderr**2 for e in estimates]
    total = sum(weights)
    mean = sum(w * e.mean for w, e in zip(weights, estimates)) / total
    return SignEstimate(scheme, mean, math.sqrt(1.0 / total), n_total, acceptance)


def exact_chain_check(pmr: PmrForm, beta: float, scheme: str, q_cap: int,
                      steps: int, seed) -> float:
    """Total-variation distance between chain visits and normalized weights.

    The chain is restricted to orders <= q_cap and compared against the
    exactly enumerated scheme-weight distribution on that space.
    """
    weights = {}
    for count, config in enumerate(enumerate_configs(pmr, q_cap)):
        if count >= _CHECK_STATE_CAP:
            raise BudgetExceeded(
                f"more than {_CHECK_STATE_CAP} configurations below q_cap {q_cap}"
            )
        wb = config_weight(pmr, beta, config)
        weights[(config.z, config.seq)] = wb.w_stoq if scheme == "stoq" else wb.w_abs
    total = sum(weights.values())
    target = {k: w / total for k, w in weights.items()}
    rng = np.random.default_rng(seed)
    chain = _Chain(pmr, beta, scheme, rng, q_cap=q_cap)
    visits: Counter = Counter()
    for _ in range(steps):
        chain.step()
        visits[(chain.states[0], tuple(t + 1 for t in chain.seq))] += 1
    tv = 0.0
    for key, p in target.items():
        tv += abs(visits.get(key, 0) / steps - p)
    for key in visits:
        if key not in target:
            raise AssertionError(f"chain visited {key} outside the enumerated space")
    return 0.5 * tv
