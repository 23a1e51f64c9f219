"""Linear-RNN constructions: subspace-retaining recurrences and a queue that solves the Copy Task exactly.

Everything here is plain numpy on small dense matrices; nothing is trained.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import pandas as pd

from ..autodiff import orthogonal_init
from ..errors import ShapeError

logger = logging.getLogger(__name__)

_TOL = 1e-10


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal columns spanning one task's hidden subspace."""

    U: np.ndarray

    def __post_init__(self) -> None:
        U = np.asarray(self.U, dtype=np.float64)
        if U.ndim != 2 or U.shape[1] > U.shape[0]:
            raise ShapeError(f"basis of shape {U.shape} is not n_h x p with p <= n_h")
        if np.linalg.norm(U.T @ U - np.eye(U.shape[1])) > _TOL:
            raise ShapeError("basis columns are not orthonormal")
        object.__setattr__(self, "U", U)

    @property
    def n_h(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.U.shape[1]


def subspace_overlap(a: SubspaceBasis, b: SubspaceBasis) -> float:
    return float(np.linalg.norm(a.U.T @ b.U))


def orthogonal_complement(U: np.ndarray) -> np.ndarray:
    n_h, p = U.shape
    if p == 0:
        return np.eye(n_h)
    full, _, _ = np.linalg.svd(U, full_matrices=True)
    return full[:, p:]


def build_subspace_rnn(
    bases: list[SubspaceBasis],
    blocks: Mapping[int, np.ndarray],
    off_blocks: Mapping[tuple[int, int], np.ndarray] | None = None,
) -> np.ndarray:
    """``W_hh = U_bar Q U_bar^T`` for the joint basis ``[U_1 ... U_K U~]``.

    ``blocks[k]`` is Q_kk (p_k x p_k). ``off_blocks[(l, k)]`` is Q_lk (p_l x p_k)
    and maps subspace k into subspace l. Every other block is zero.
    """
    if not bases:
        raise ShapeError("need at least one subspace")
    n_h = bases[0].n_h
    if any(b.n_h != n_h for b in bases):
        raise ShapeError("bases live in different hidden sizes")
    total = sum(b.p for b in bases)
    if total > n_h:
        raise ShapeError(f"subspaces of total dimension {total} cannot be orthogonal in {n_h} units")
    for a, b in itertools.combinations(bases, 2):
        if subspace_overlap(a, b) > _TOL:
            raise ShapeError("subspaces are not mutually orthogonal")

    joint = np.concatenate([b.U for b in bases], axis=1)
    U_bar = np.concatenate([joint, orthogonal_complement(joint)], axis=1)
    starts = np.cumsum([0] + [b.p for b in bases])

    Q = np.zeros((n_h, n_h))

    def place(l: int, k: int, block: np.ndarray) -> None:
        block = np.asarray(block, dtype=np.float64)
        if block.shape != (bases[l].p, bases[k].p):
            raise ShapeError(f"block ({l}, {k}) has shape {block.shape}, expected {(bases[l].p, bases[k].p)}")
        Q[starts[l] : starts[l + 1], starts[k] : starts[k + 1]] = block

    for k, block in blocks.items():
        place(k, k, block)
    for (l, k), block in (off_blocks or {}).items():
        place(l, k, block)
    return U_bar @ Q @ U_bar.T


def subspace_retention_error(W_hh: np.ndarray, U: np.ndarray | SubspaceBasis) -> float:
    """``||(I - U U^T) W_hh U||_F``: how much of S_k one step maps outside it."""
    U = U.U if isinstance(U, SubspaceBasis) else np.asarray(U, dtype=np.float64)
    WU = W_hh @ U
    return float(np.linalg.norm(WU - U @ (U.T @ WU)))


def interference_measure(W_hh: np.ndarray, U_from: np.ndarray | SubspaceBasis, U_to: np.ndarray | SubspaceBasis) -> float:
    """``||U_to^T W_hh U_from||_F``."""
    U_from = U_from.U if isinstance(U_from, SubspaceBasis) else U_from
    U_to = U_to.U if isinstance(U_to, SubspaceBasis) else U_to
    return float(np.linalg.norm(U_to.T @ W_hh @ U_from))


def random_bases(n_h: int, p_list: list[int], rng: np.random.Generator) -> list[SubspaceBasis]:
    """Subspaces drawn from one random orthonormal basis.

    Disjoint column blocks when they fit; otherwise windows spread evenly
    over the basis, which share as few columns as possible.
    """
    if any(p < 0 or p > n_h for p in p_list):
        raise ShapeError(f"subspace dimensions {p_list} must lie in 0..{n_h}")
    B = orthogonal_init(n_h, n_h, rng)
    K = len(p_list)
    if sum(p_list) <= n_h:
        starts = np.cumsum([0] + list(p_list))[:-1]
    else:
        starts = [round(k * (n_h - p) / max(K - 1, 1)) for k, p in enumerate(p_list)]
    return [SubspaceBasis(B[:, s : s + p]) for s, p in zip(starts, p_list)]


def interference_experiment(K: int, p_list: list[int], n_h: int, rng: np.random.Generator) -> pd.DataFrame:
    """One row per task: retention error of a block-diagonal recurrence and the unavoidable overlap.

    When the subspaces fit (sum p_k <= n_h) the recurrence is built exactly and
    every retention error is at machine precision. Otherwise the bases overlap
    and the recurrence is the sum of per-task rotations, which leaks.
    """
    if len(p_list) != K:
        raise ShapeError(f"{len(p_list)} subspace dimensions for {K} tasks")
    feasible = sum(p_list) <= n_h
    bases = random_bases(n_h, p_list, rng)
    blocks = {k: orthogonal_init(b.p, b.p, rng) for k, b in enumerate(bases)}
    if feasible:
        W = build_subspace_rnn(bases, blocks)
    else:
        W = sum(b.U @ blocks[k] @ b.U.T for k, b in enumerate(bases))
    bound = [np.sqrt(max(0, p_list[k] + p_list[l] - n_h)) for k, l in itertools.combinations(range(K), 2)]
    pairs = [subspace_overlap(a, b) for a, b in itertools.combinations(bases, 2)]
    rows = []
    for k, b in enumerate(bases):
        rows.append(
            {
                "task": k,
                "p": b.p,
                "n_h": n_h,
                "feasible": feasible,
                "retention_error": subspace_retention_error(W, b),
                "max_overlap": max(pairs, default=0.0),
                "overlap_lower_bound": max(bound, default=0.0),
            }
        )
    table = pd.DataFrame(rows)
    logger.info("interference K=%d p=%s n_h=%d: max overlap %.3f", K, p_list, n_h, table["max_overlap"].iloc[0])
    return table


@dataclass(frozen=True)
class QueueRNN:
    """Linear RNN whose hidden state is a queue of p+2 slots of F_out units plus a stop-flag unit."""

    p: int
    F_out: int
    W_xh: np.ndarray
    W_hh: np.ndarray
    W_hy: np.ndarray
    b_y: np.ndarray

    @property
    def n_h(self) -> int:
        return self.W_hh.shape[0]

    def slot(self, s: int) -> slice:
        return slice(s * self.F_out, (s + 1) * self.F_out)

    @property
    def n_slots(self) -> int:
        return self.p + 2


def build_queue_copy_rnn(p: int, F_out: int) -> QueueRNN:
    """Write inputs into slot 0, shift one slot per step, read slot p+1.

    A pattern bit written at step t reaches the exit slot at t+p+1, exactly
    when the basic Copy Task recalls it. The write slot and the exit slot are
    both kept, so there are p+2 slots and n_h = (p+2)*F_out + 1, one slot more
    than the tightest (p+1)*F_out + 1 construction that reads while it writes.
    """
    if p < 1 or F_out < 1:
        raise ShapeError(f"queue needs p >= 1 and F_out >= 1, got p={p}, F_out={F_out}")
    n_slots = p + 2
    stop = n_slots * F_out
    n_h = stop + 1
    F_in = F_out + 1

    W_xh = np.zeros((n_h, F_in))
    W_xh[:F_out, :F_out] = np.eye(F_out)
    W_xh[stop, F_out] = 1.0

    # cyclic block shift over the slots; the stop unit only holds the current flag
    W_hh = np.zeros((n_h, n_h))
    shift = np.roll(np.eye(n_slots), 1, axis=0)
    W_hh[:stop, :stop] = np.kron(shift, np.eye(F_out))

    W_hy = np.zeros((F_out, n_h))
    W_hy[:, (n_slots - 1) * F_out : stop] = 2.0 * np.eye(F_out)
    return QueueRNN(p=p, F_out=F_out, W_xh=W_xh, W_hh=W_hh, W_hy=W_hy, b_y=-np.ones(F_out))


def simulate_linear_rnn(rnn: QueueRNN, x: np.ndarray) -> np.ndarray:
    """T x B x F_out logits of the identity-activation recurrence from ``h_0 = 0``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[-1] != rnn.W_xh.shape[1]:
        raise ShapeError(f"input of shape {x.shape} for a queue with {rnn.W_xh.shape[1]} input features")
    h = np.zeros((x.shape[1], rnn.n_h))
    logits = np.empty((x.shape[0], x.shape[1], rnn.F_out))
    for t in range(x.shape[0]):
        h = h @ rnn.W_hh.T + x[t] @ rnn.W_xh.T
        logits[t] = h @ rnn.W_hy.T + rnn.b_y
    return logits
