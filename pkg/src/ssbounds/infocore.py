"""Discrete information measures and plug-in estimation from loss tensors.

Everything here works in nats. Probability tables are validated once, at
construction, against a fixed 1e-12 sum tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12


class InfiniteDivergence(ValueError):
    """Raised when a KL divergence is infinite (absolute continuity fails)."""


def _check_probs(probs: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(probs)):
        raise ValueError(f"{what}: non-finite probability")
    if np.any(probs < 0):
        raise ValueError(f"{what}: negative probability")
    total = probs.sum()
    if abs(total - 1.0) > PROB_TOL:
        raise ValueError(f"{what}: probabilities sum to {total!r}, not 1")
    return probs / total


@dataclass(frozen=True)
class DiscretePMF:
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if support.shape != probs.shape or support.size == 0:
            raise ValueError("support and probs must be nonempty and equally long")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", _check_probs(probs, "DiscretePMF"))

    @classmethod
    def bernoulli(cls, p: float) -> "DiscretePMF":
        return cls([0.0, 1.0], [1.0 - p, p])


@dataclass(frozen=True)
class JointPMF:
    """Joint law of a discrete V (rows) and a binary U (columns 0 and 1)."""

    v_support: np.ndarray
    table: np.ndarray
    counts: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        v_support = np.asarray(self.v_support, dtype=float).ravel()
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 2 or table.shape != (v_support.size, 2):
            raise ValueError(f"table must have shape ({v_support.size}, 2), got {table.shape}")
        if np.any(np.diff(v_support) <= 0):
            raise ValueError("v_support must be strictly increasing")
        object.__setattr__(self, "v_support", v_support)
        object.__setattr__(self, "table", _check_probs(table, "JointPMF"))

    @property
    def n_samples(self) -> int | None:
        return None if self.counts is None else int(self.counts.sum())

    def marginal_v(self) -> DiscretePMF:
        return DiscretePMF(self.v_support, self.table.sum(axis=1))

    def marginal_u(self) -> DiscretePMF:
        return DiscretePMF([0.0, 1.0], self.table.sum(axis=0))

    def conditional_v(self, u: int) -> DiscretePMF:
        col = self.table[:, u]
        mass = col.sum()
        if mass <= 0:
            raise ValueError(f"U={u} has zero probability; conditional law undefined")
        return DiscretePMF(self.v_support, col / mass)


@dataclass(frozen=True)
class TripleJointPMF:
    """Joint law over (L+, L-, U), each binary; indexed table[l_plus, l_minus, u]."""

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.shape != (2, 2, 2):
            raise ValueError(f"table must be 2x2x2, got {table.shape}")
        object.__setattr__(self, "table", _check_probs(table, "TripleJointPMF"))

    def joint_plus_u(self) -> JointPMF:
        return JointPMF([0.0, 1.0], self.table.sum(axis=1))

    def joint_minus_u(self) -> JointPMF:
        return JointPMF([0.0, 1.0], self.table.sum(axis=0))

    def joint_pair_u(self) -> JointPMF:
        # pair (l+, l-) encoded as 2*l+ + l-
        return JointPMF([0.0, 1.0, 2.0, 3.0], self.table.reshape(4, 2))


def _xlogx_sum(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return terms


def entropy(p: DiscretePMF) -> float:
    return float(max(0.0, -_xlogx_sum(p.probs).sum()))


def binary_entropy(p: float, unit: str = "nats") -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"binary_entropy: p={p!r} outside [0, 1]")
    h = float(-_xlogx_sum(np.array([p, 1.0 - p])).sum())
    h = max(0.0, h)
    if unit == "nats":
        return h
    if unit == "bits":
        return h / math.log(2)
    raise ValueError(f"unknown unit {unit!r}")


def kl_divergence(p: DiscretePMF, q: DiscretePMF) -> float:
    """KL(p || q) in nats. Raises InfiniteDivergence if p is not << q."""
    if p.support.shape != q.support.shape or not np.array_equal(p.support, q.support):
        raise ValueError("kl_divergence requires identical supports")
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        raise InfiniteDivergence("p puts mass where q has none")
    kl = np.sum(p.probs[mask] * np.log(p.probs[mask] / q.probs[mask]))
    return float(max(0.0, kl))


def mi_from_table(table: np.ndarray) -> np.ndarray:
    """Mutual information (nats) of one or many joint tables.

    ``table`` has shape (..., K, 2); the last two axes are the joint of V and
    U and need not be normalized (raw counts are fine).
    """
    table = np.asarray(table, dtype=float)
    total = table.sum(axis=(-2, -1), keepdims=True)
    p = table / total
    pv = p.sum(axis=-1, keepdims=True)
    pu = p.sum(axis=-2, keepdims=True)
    denom = pv * pu
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, p / np.where(denom > 0, denom, 1.0), 1.0)
        terms = np.where(p > 0, p * np.log(ratio), 0.0)
        hv = -np.sum(np.where(pv > 0, pv * np.log(np.where(pv > 0, pv, 1.0)), 0.0), axis=(-2, -1))
        hu = -np.sum(np.where(pu > 0, pu * np.log(np.where(pu > 0, pu, 1.0)), 0.0), axis=(-2, -1))
    mi = terms.sum(axis=(-2, -1))
    # rounding guard: 0 <= I <= min(H(V), H(U)) holds exactly in theory
    return np.clip(mi, 0.0, np.minimum(hv, hu))


def _miller_madow_shift(counts: np.ndarray) -> float:
    n = counts.sum()
    m_vu = np.count_nonzero(counts)
    m_v = np.count_nonzero(counts.sum(axis=1))
    m_u = np.count_nonzero(counts.sum(axis=0))
    # H_mm = H_plugin + (m - 1)/(2N) for each entropy in I = H(V) + H(U) - H(V,U)
    return ((m_v - 1) + (m_u - 1) - (m_vu - 1)) / (2.0 * n)


def mutual_information(j: JointPMF, miller_madow: bool = False) -> float:
    mi = float(mi_from_table(j.table))
    if miller_madow:
        if j.counts is None:
            raise ValueError("Miller-Madow correction needs sample counts")
        mi = max(0.0, mi + _miller_madow_shift(j.counts))
    return mi


def conditional_mi(table: np.ndarray) -> float:
    """I(X;U | Y) for a table indexed [x, y, u]."""
    table = np.asarray(table, dtype=float)
    table = table / table.sum()
    py = table.sum(axis=(0, 2))
    total = 0.0
    for y, w in enumerate(py):
        if w > 0:
            total += w * float(mi_from_table(table[:, y, :]))
    return total


def interaction_information(t: TripleJointPMF) -> float:
    """I(L+;U) - I(L+;U | L-), in nats; may be negative."""
    return mutual_information(t.joint_plus_u()) - conditional_mi(t.table)


def interaction_information_chain(t: TripleJointPMF) -> float:
    """Same quantity via the chain rule: I(L+;U) + I(L-;U) - I(L+,L-;U).

    Reduces to 2 I(L+;U) - I(L+,L-;U) when the two single-loss laws carry the
    same information about U.
    """
    return (
        mutual_information(t.joint_plus_u())
        + mutual_information(t.joint_minus_u())
        - mutual_information(t.joint_pair_u())
    )


def estimate_joint(
    samples: Iterable[tuple[float, int]],
    v_support: Sequence[float] | None = None,
) -> JointPMF:
    """Relative-frequency joint of (v, u) pairs; u must be 0 or 1."""
    arr = np.asarray(list(samples), dtype=float)
    if arr.size == 0:
        raise ValueError("estimate_joint needs at least one sample")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be (v, u) pairs")
    return joint_from_arrays(arr[:, 0], arr[:, 1], v_support)


def joint_from_arrays(v, u, v_support: Sequence[float] | None = None) -> JointPMF:
    v = np.asarray(v, dtype=float).ravel()
    u = np.asarray(u).ravel()
    if v.size == 0:
        raise ValueError("estimate_joint needs at least one sample")
    if not np.all((u == 0) | (u == 1)):
        raise ValueError("mask values must be 0 or 1")
    u = u.astype(np.intp)
    if v_support is None:
        support, codes = np.unique(v, return_inverse=True)
    else:
        support = np.asarray(v_support, dtype=float)
        if np.any(np.diff(support) <= 0):
            raise ValueError("declared support must be strictly increasing")
        codes = np.searchsorted(support, v)
        codes_c = np.clip(codes, 0, support.size - 1)
        bad = support[codes_c] != v
        if np.any(bad):
            raise ValueError(f"value {v[np.argmax(bad)]!r} outside declared support")
        codes = codes_c
    counts = np.zeros((support.size, 2), dtype=np.int64)
    np.add.at(counts, (codes.ravel(), u), 1)
    return JointPMF(support, counts / counts.sum(), counts=counts)


def codes_per_row(x: np.ndarray) -> tuple[np.ndarray, int]:
    """Integer-code each column of ``x`` (shape runs x rows) independently.

    Returns codes of the same shape and the largest per-row alphabet size.
    """
    x = np.asarray(x)
    codes = np.empty(x.shape, dtype=np.intp)
    width = 1
    for i in range(x.shape[1]):
        _, inv = np.unique(x[:, i], return_inverse=True)
        codes[:, i] = inv.ravel()
        width = max(width, int(inv.max()) + 1)
    return codes, width


def count_tables(codes: np.ndarray, u: np.ndarray, width: int) -> np.ndarray:
    """Count tables of shape (rows, width, 2) from per-row codes and masks."""
    runs, rows = codes.shape
    flat = (np.arange(rows)[None, :] * width + codes) * 2 + u.astype(np.intp)
    counts = np.bincount(flat.ravel(), minlength=rows * width * 2)
    return counts.reshape(rows, width, 2)


def plugin_mi_rows(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per-row plug-in I(X_i; U_i) for samples x, u of shape (runs, rows)."""
    codes, width = codes_per_row(x)
    return mi_from_table(count_tables(codes, u, width))


def pair_codes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Encode two per-row variables jointly as one array of pair codes."""
    ca, wa = codes_per_row(a)
    cb, _ = codes_per_row(b)
    return cb * wa + ca


def row_joints(t, row: int, variable: str = "delta", scope: str = "pooled", symmetrize: bool = True):
    """Plug-in joint(s) of a per-row loss variable against the mask bit.

    ``variable`` is one of ``"delta"`` (L_{i,1} - L_{i,0}), ``"plus"`` (the
    column-0 loss) or ``"pair"`` (both losses, coded as rank pairs).
    ``scope="pooled"`` merges every run; ``"per_supersample"`` returns one
    joint per supersample.

    For ``"plus"`` with ``symmetrize=True`` the column-1 loss is pooled in
    with the flipped mask, so the estimate uses both exchangeable halves of
    the row.
    """
    if not 0 <= row < t.n:
        raise IndexError(f"row {row} out of range for n={t.n}")
    if scope not in ("pooled", "per_supersample"):
        raise ValueError(f"unknown scope {scope!r}")
    vals = t.values[:, :, row, :]
    u = t.masks[:, :, row]
    if variable == "delta":
        v = vals[..., 1] - vals[..., 0]
    elif variable == "plus":
        v = vals[..., 0]
        if symmetrize:
            v = np.concatenate([v, vals[..., 1]], axis=1)
            u = np.concatenate([u, 1 - u], axis=1)
    elif variable == "pair":
        support0 = np.unique(vals[..., 0])
        support1 = np.unique(vals[..., 1])
        v = np.searchsorted(support0, vals[..., 0]) * support1.size + np.searchsorted(support1, vals[..., 1])
    else:
        raise ValueError(f"unknown variable {variable!r}")
    if scope == "pooled":
        return joint_from_arrays(v.ravel(), u.ravel())
    return [joint_from_arrays(v[j], u[j]) for j in range(t.k1)]
