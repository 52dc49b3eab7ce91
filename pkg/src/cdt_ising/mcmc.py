"""Annealed Monte Carlo over (triangulation, spin) pairs.

The target is the joint Gibbs weight ``exp(-mu n(t) - beta h(t, sigma))``
conditioned on every slice size lying in ``[1, K_cap]``. One sweep makes N
geometry attempts, each inserting or deleting an (up, down) pair at a random
slice, then one Swendsen-Wang update of the spins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mcmc_kernels as kern
from .bounds import Verdict, classify
from .ising import hamiltonian
from .triangulation import DOWN, UP, CausalTriangulation, enumerate_torus_triangulations

BURN_IN_FRACTION = 0.1
MAX_KEY_BITS = 62


class DivergentRegionError(ValueError):
    """Refusal to sample where the annealed partition function diverges."""


@dataclass
class ChainState:
    """Mutable chain state; arrays follow the layout in :mod:`cdt_ising.mcmc_kernels`."""

    K_cap: int
    beta: float
    mu: float
    types: np.ndarray
    spins: np.ndarray
    lengths: np.ndarray
    nsl: np.ndarray
    energy: int = 0
    _bufs: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_triangulation(
        cls, t: CausalTriangulation, spins, K_cap: int, beta: float, mu: float
    ) -> "ChainState":
        if t.N < 2:
            raise ValueError("the geometry move needs N >= 2 strips")
        if max(t.slice_sizes) > K_cap:
            raise ValueError("triangulation exceeds K_cap")
        width = 2 * K_cap + 2
        types = np.zeros((t.N, width), dtype=np.int8)
        sp = np.ones((t.N, width), dtype=np.int8)
        flat = np.asarray(spins, dtype=np.int8)
        if flat.shape != (t.n_triangles,):
            raise ValueError("need one spin per triangle")
        pos = 0
        for i, s in enumerate(t.strips):
            m = s.n_triangles
            types[i, :m] = [1 if c == UP else 0 for c in s.sequence]
            sp[i, :m] = flat[pos:pos + m]
            pos += m
        lengths = np.array([s.n_triangles for s in t.strips], dtype=np.int64)
        nsl = np.array(t.slice_sizes, dtype=np.int64)
        state = cls(K_cap, beta, mu, types, sp, lengths, nsl)
        state.energy = int(kern.total_energy(types, sp, lengths))
        return state

    @classmethod
    def initial(cls, N: int, K_cap: int, beta: float, mu: float, rng: np.random.Generator,
                slice_size: int = 1) -> "ChainState":
        n = min(slice_size, K_cap)
        t = CausalTriangulation.from_sequences([(UP + DOWN) * n] * N)
        spins = rng.choice(np.array([-1, 1], dtype=np.int8), size=t.n_triangles)
        return cls.from_triangulation(t, spins, K_cap, beta, mu)

    @property
    def N(self) -> int:
        return int(self.lengths.shape[0])

    @property
    def triangulation(self) -> CausalTriangulation:
        seqs = []
        for i in range(self.N):
            row = self.types[i, : self.lengths[i]]
            seqs.append("".join(UP if x else DOWN for x in row))
        return CausalTriangulation.from_sequences(seqs)

    @property
    def spin_vector(self) -> np.ndarray:
        return np.concatenate([self.spins[i, : self.lengths[i]] for i in range(self.N)])

    @property
    def n_t(self) -> int:
        return int(self.lengths.sum())

    @property
    def slice_sizes(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.nsl)

    def key(self) -> int:
        return int(kern.state_key(self.types, self.spins, self.lengths, self.K_cap))

    def buffers(self) -> np.ndarray:
        if self._bufs is None:
            self._bufs = np.zeros((8, self.types.shape[1] + 2), dtype=np.int8)
        return self._bufs

    def recomputed_energy(self) -> int:
        return int(kern.total_energy(self.types, self.spins, self.lengths))

    def copy(self) -> "ChainState":
        return ChainState(self.K_cap, self.beta, self.mu, self.types.copy(), self.spins.copy(),
                          self.lengths.copy(), self.nsl.copy(), self.energy)


def step_geometry(state: ChainState, rng: np.random.Generator) -> ChainState:
    """One insert/delete attempt; an out-of-range slice size is rejected."""
    ok, dh, _ = kern.geometry_attempt(
        state.types, state.spins, state.lengths, state.nsl, state.K_cap,
        state.beta, state.mu, rng, state.buffers(),
    )
    if ok:
        state.energy += int(dh)
    return state


def step_spins_cluster(state: ChainState, rng: np.random.Generator) -> ChainState:
    p = -math.expm1(-2.0 * state.beta)
    kern.cluster_flip(state.types, state.spins, state.lengths, p, rng)
    state.energy = state.recomputed_energy()
    return state


@dataclass(frozen=True)
class Move:
    """A fully specified geometry proposal, used to enumerate transition kernels."""

    slice_index: int
    insert: bool
    rank: int
    up_offset: int = 0
    down_offset: int = 0
    up_spin: int = 1
    down_spin: int = 1


def apply_move(state: ChainState, move: Move) -> tuple[ChainState | None, float]:
    """Outcome state and log acceptance of a move; None when the move is impossible."""
    b = state.buffers()
    i = move.slice_index
    if move.insert:
        if state.nsl[i] + 1 > state.K_cap:
            return None, -math.inf
        log_a, dh = kern.eval_insert(
            state.types, state.spins, state.lengths, state.nsl, i, move.rank,
            move.up_offset, move.down_offset, move.up_spin, move.down_spin,
            state.beta, state.mu, b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        )
        dm = 1
    else:
        if state.nsl[i] - 1 < 1:
            return None, -math.inf
        valid, log_a, dh = kern.eval_delete(
            state.types, state.spins, state.lengths, state.nsl, i, move.rank,
            state.beta, state.mu, b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        )
        if not valid:
            return None, -math.inf
        dm = -1
    out = state.copy()
    out._bufs = None
    kern._commit(out.types, out.spins, out.lengths, i, b[0], b[1], b[2], b[3], dm)
    out.nsl[i] += dm
    out.energy = state.energy + int(dh)
    return out, float(log_a)


def enumerate_moves(state: ChainState):
    """Every geometry proposal from ``state`` with its proposal probability."""
    N = state.N
    for i in range(N):
        n = int(state.nsl[i])
        u, l = i, (i - 1) % N
        for r in range(n + 1):
            _, a = kern.up_slots(state.types[u], state.lengths[u], r)
            _, b = kern.down_slots(state.types[l], state.lengths[l], r)
            q = 1.0 / N * 0.5 / (n + 1) / a / b / 4.0
            for ao in range(a):
                for bo in range(b):
                    for su in (1, -1):
                        for sd in (1, -1):
                            yield Move(i, True, r, ao, bo, su, sd), q
        for r in range(n):
            yield Move(i, False, r), 1.0 / N * 0.5 / n


def geometry_transition_probabilities(state: ChainState) -> dict[int, float]:
    """Exact one-attempt transition law of the geometry move, keyed by state key."""
    out: dict[int, float] = {}
    stay = 0.0
    for move, q in enumerate_moves(state):
        nxt, log_a = apply_move(state, move)
        if nxt is None:
            stay += q
            continue
        acc = 1.0 if log_a >= 0 else math.exp(log_a)
        out[nxt.key()] = out.get(nxt.key(), 0.0) + q * acc
        stay += q * (1.0 - acc)
    out[state.key()] = out.get(state.key(), 0.0) + stay
    return out


def exact_state_weights(N: int, K_cap: int, beta: float, mu: float) -> dict[int, float]:
    """Normalized Gibbs weights of every capped (triangulation, spin) state, keyed by state key."""
    keys, logs = [], []
    for t in enumerate_torus_triangulations(N, K_cap):
        g = t.dual_graph()
        n = g.vertex_count
        codes = np.arange(1 << n, dtype=np.int64)
        bits = (codes[:, None] >> np.arange(n)) & 1
        for row in (1 - 2 * bits).astype(np.int8):
            st = ChainState.from_triangulation(t, row, K_cap, beta, mu)
            keys.append(st.key())
            logs.append(-mu * n - beta * hamiltonian(g, row))
    logs = np.array(logs)
    w = np.exp(logs - logs.max())
    w /= w.sum()
    return dict(zip(keys, w))


def _guard(beta: float, mu: float, force: bool) -> None:
    if beta <= 0:
        return
    v = classify(beta, mu)
    if v.verdict is Verdict.DIVERGENT and not force:
        raise DivergentRegionError(
            f"(beta={beta}, mu={mu}) lies below the divergence curve {v.lower_curve:.6f}; "
            "the annealed measure is not normalizable there. Pass force=True to sample "
            "the K_cap-conditioned surrogate anyway."
        )


def occupancy(
    N: int, K_cap: int, beta: float, mu: float, sweeps: int, seed: int, force: bool = False
) -> dict[int, int]:
    """Visit counts per state key, sampled after each of ``sweeps`` sweeps."""
    _guard(beta, mu, force)
    bits = kern.key_bits(N, K_cap)
    if bits > MAX_KEY_BITS:
        raise ValueError(f"state key needs {bits} bits; keys are limited to {MAX_KEY_BITS}")
    rng = np.random.default_rng(seed)
    st = ChainState.initial(N, K_cap, beta, mu, rng)
    trace = np.zeros(sweeps, dtype=np.int64)
    kern.run_occupancy(st.types, st.spins, st.lengths, st.nsl, K_cap, beta, mu, sweeps, rng, trace)
    keys, counts = np.unique(trace, return_counts=True)
    return dict(zip(keys.tolist(), counts.tolist()))


SERIES_COLUMNS = ("step", "energy", "n_t", "mean_slice", "magnetization", "acc_geom", "acc_spin")


@dataclass(frozen=True)
class ObservableSeries:
    """Thinned chain observables.

    ``energy`` and ``magnetization`` are per triangle; ``acc_geom`` is the
    geometry acceptance rate and ``acc_spin`` the fraction of spins flipped by
    the cluster updates, both over the preceding thinning window.
    """

    step: np.ndarray
    energy: np.ndarray
    n_t: np.ndarray
    mean_slice: np.ndarray
    magnetization: np.ndarray
    acc_geom: np.ndarray
    acc_spin: np.ndarray
    burn_in: int
    energy_mismatches: int = 0

    def __len__(self) -> int:
        return len(self.step)

    def rows(self):
        for k in range(len(self)):
            yield {c: getattr(self, c)[k].item() for c in SERIES_COLUMNS}

    def after_burn_in(self, name: str) -> np.ndarray:
        return getattr(self, name)[self.burn_in:]


def run(
    N: int,
    K_cap: int,
    beta: float,
    mu: float,
    steps: int,
    seed: int,
    thin: int = 1,
    force: bool = False,
) -> ObservableSeries:
    """Run one chain for ``steps`` sweeps, recording every ``thin`` sweeps."""
    if steps < 1 or thin < 1:
        raise ValueError("steps and thin must be >= 1")
    _guard(beta, mu, force)
    rng = np.random.default_rng(seed)
    st = ChainState.initial(N, K_cap, beta, mu, rng)
    rec = steps // thin
    e = np.zeros(rec, dtype=np.int64)
    nt = np.zeros(rec, dtype=np.int64)
    mag = np.zeros(rec, dtype=np.int64)
    ag = np.zeros(rec)
    as_ = np.zeros(rec)
    _, mism = kern.run_chain(st.types, st.spins, st.lengths, st.nsl, K_cap, beta, mu,
                             steps, thin, rng, st.energy, e, nt, mag, ag, as_)
    ntf = nt.astype(float)
    return ObservableSeries(
        step=np.arange(1, rec + 1, dtype=np.int64) * thin,
        energy=e / ntf,
        n_t=nt,
        mean_slice=ntf / (2.0 * N),
        magnetization=mag / ntf,
        acc_geom=ag,
        acc_spin=as_,
        burn_in=int(math.ceil(BURN_IN_FRACTION * rec)),
        energy_mismatches=int(mism),
    )


def block_means(x: np.ndarray, blocks: int) -> np.ndarray:
    n = len(x) // blocks
    return np.asarray(x[: n * blocks]).reshape(blocks, n).mean(axis=1)


def halves_agree(x: np.ndarray, blocks: int = 10, n_se: float = 3.0) -> bool:
    """Compare the two halves' means using blocked standard errors."""
    h = len(x) // 2
    out = []
    for part in (x[:h], x[h:]):
        bm = block_means(part, blocks)
        out.append((bm.mean(), bm.std(ddof=1) / math.sqrt(blocks)))
    (m1, s1), (m2, s2) = out
    return abs(m1 - m2) <= n_se * math.hypot(s1, s2)
