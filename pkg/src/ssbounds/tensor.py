"""Loss tensors and mask matrices for the supersample construction.

A run is one (supersample j, mask m) pair. For each row i the mask bit
u = masks[j, m, i] puts column u of the supersample row in the training set
and column 1 - u in the test set; values[j, m, i, c] is the loss of the
trained model on entry (i, c).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOSS_KINDS = ("zero_one", "unit_interval", "real")


@dataclass(frozen=True)
class MaskMatrix:
    entries: np.ndarray  # k2 x n, values in {0, 1}
    balanced: bool = False

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2:
            raise ValueError("mask entries must be a k2 x n matrix")
        if not np.all((entries == 0) | (entries == 1)):
            raise ValueError("mask entries must be 0 or 1")
        entries = entries.astype(np.int8)
        if self.balanced:
            k2 = entries.shape[0]
            if k2 % 2 or np.any(entries.sum(axis=0) != k2 // 2):
                raise ValueError("balanced mask must have exactly k2/2 ones per column")
        object.__setattr__(self, "entries", entries)

    @property
    def k2(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]


@dataclass
class LossTensor:
    values: np.ndarray  # k1 x k2 x n x 2
    masks: np.ndarray  # k1 x k2 x n
    loss_kind: str = "zero_one"
    shared_masks: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 4 or values.shape[-1] != 2:
            raise ValueError(f"values must have shape (k1, k2, n, 2), got {values.shape}")
        k1, k2, n, _ = values.shape
        masks = self.masks
        if isinstance(masks, MaskMatrix):
            masks = masks.entries
        masks = np.asarray(masks)
        if masks.shape == (k2, n):
            masks = np.broadcast_to(masks, (k1, k2, n)).copy()
            self.shared_masks = True
        if masks.shape != (k1, k2, n):
            raise ValueError(f"masks must have shape {(k1, k2, n)} or {(k2, n)}, got {masks.shape}")
        if not np.all((masks == 0) | (masks == 1)):
            raise ValueError("mask entries must be 0 or 1")
        if self.shared_masks and k1 > 1 and np.any(masks != masks[:1]):
            raise ValueError("shared_masks set but masks differ across supersamples")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if not np.all(np.isfinite(values)):
            raise ValueError("loss values must be finite")
        bad = _kind_violation(values, self.loss_kind)
        if bad is not None:
            raise ValueError(f"loss value {values[bad]!r} at index {list(bad)} invalid for {self.loss_kind}")
        self.values = values
        self.masks = masks.astype(np.int8)

    @property
    def k1(self) -> int:
        return self.values.shape[0]

    @property
    def k2(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return self.values.shape[2]

    @property
    def train(self) -> np.ndarray:
        """Training-side loss per run and row, shape (k1, k2, n)."""
        return np.take_along_axis(self.values, self.masks[..., None].astype(np.intp), axis=-1)[..., 0]

    @property
    def test(self) -> np.ndarray:
        return np.take_along_axis(self.values, 1 - self.masks[..., None].astype(np.intp), axis=-1)[..., 0]

    @property
    def delta(self) -> np.ndarray:
        """Loss difference L_{i,1} - L_{i,0}, shape (k1, k2, n)."""
        return self.values[..., 1] - self.values[..., 0]

    @property
    def balanced(self) -> bool:
        """Every (supersample, row) has exactly k2/2 masks selecting each column."""
        if self.k2 % 2:
            return False
        return bool(np.all(self.masks.sum(axis=1) == self.k2 // 2))

    @property
    def bounded_unit(self) -> bool:
        return self.loss_kind in ("zero_one", "unit_interval")

    def is_interpolating(self) -> bool:
        return bool(np.all(self.train == 0))

    def first_non_interpolating(self) -> tuple[int, int] | None:
        bad = np.argwhere(self.train != 0)
        if bad.size == 0:
            return None
        j, m, _ = bad[0]
        return int(j), int(m)

    def pooled(self, x: np.ndarray) -> np.ndarray:
        """Flatten a (k1, k2, n) array to (runs, n)."""
        return x.reshape(self.k1 * self.k2, self.n)

    def plus_samples(self, symmetrize: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Samples of (single loss, mask) per row, shape (runs, n) each.

        With ``symmetrize`` the column-1 loss enters with the flipped mask;
        (L-, 1-U) has the same law as (L+, U) under row exchangeability.
        """
        lp = self.pooled(self.values[..., 0])
        u = self.pooled(self.masks)
        if not symmetrize:
            return lp, u
        lm = self.pooled(self.values[..., 1])
        return np.concatenate([lp, lm]), np.concatenate([u, 1 - u])

    def with_values(self, values: np.ndarray, loss_kind: str | None = None) -> "LossTensor":
        return LossTensor(values, self.masks.copy(), loss_kind or self.loss_kind, self.shared_masks, dict(self.metadata))


def _kind_violation(values: np.ndarray, kind: str):
    if kind == "zero_one":
        bad = (values != 0) & (values != 1)
    elif kind == "unit_interval":
        bad = (values < 0) | (values > 1)
    else:
        return None
    if np.any(bad):
        return tuple(int(i) for i in np.argwhere(bad)[0])
    return None
