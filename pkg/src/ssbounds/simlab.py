"""Synthetic hypercube classification tasks, a linear softmax trainer, and the
supersample sweep that turns them into loss tensors.

Seeds are derived from (master, n, j) for supersample data and (master, n)
for shared masks, so any cell of a sweep can be regenerated on its own.
Training is deterministic (zero init, full-batch GD).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .tensor import LossTensor, MaskMatrix

MASK_STREAM = 0x4D41534B  # keeps mask seeds apart from supersample seeds


@dataclass(frozen=True)
class DataSampler:
    n_classes: int = 2
    dim: int = 5
    class_sep: float = 10.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2 or self.n_classes > 2**self.dim:
            raise ValueError(f"n_classes must lie in [2, 2^dim], got {self.n_classes}")
        if self.class_sep <= 0 or self.noise_std <= 0:
            raise ValueError("class_sep and noise_std must be positive")

    def centers(self) -> np.ndarray:
        """First n_classes vertices of {0, sep}^dim in Gray-code order, mean zero."""
        gray = np.arange(self.n_classes) ^ (np.arange(self.n_classes) >> 1)
        bits = (gray[:, None] >> np.arange(self.dim)) & 1
        c = self.class_sep * bits.astype(float)
        return c - c.mean(axis=0)

    def sample(self, size, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        size = tuple(np.atleast_1d(size))
        y = rng.integers(0, self.n_classes, size=size)
        x = self.centers()[y] + self.noise_std * rng.standard_normal(size + (self.dim,))
        return x, y


def draw_supersample(s: DataSampler, n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """2n iid instances arranged as features (n, 2, dim) and labels (n, 2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(s.seed if seed is None else seed)
    return s.sample((n, 2), rng)


def balanced_masks(n: int, k2: int, seed=None) -> MaskMatrix:
    """Each column is an independent random permutation of k2/2 zeros and ones."""
    if k2 % 2:
        raise ValueError(f"balanced masks need an even k2, got {k2}")
    rng = np.random.default_rng(seed)
    base = np.repeat(np.array([0, 1], dtype=np.int8), k2 // 2)
    cols = rng.permuted(np.tile(base[:, None], (1, n)), axis=0)
    return MaskMatrix(cols, balanced=True)


def iid_masks(n: int, k2: int, seed=None) -> MaskMatrix:
    rng = np.random.default_rng(seed)
    return MaskMatrix(rng.integers(0, 2, size=(k2, n), dtype=np.int8))


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 0.01
    max_epochs: int = 500
    early_stop_train_error: float = 0.005
    init: str = "zeros"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.early_stop_train_error < 1:
            raise ValueError("early_stop_train_error must lie in [0, 1)")
        if self.init != "zeros":
            raise ValueError("only zero initialization is supported")


@dataclass(frozen=True)
class ModelWeights:
    matrix: np.ndarray  # (dim + 1) x n_classes, last row is the bias
    epochs: int = 0
    train_error: float = float("nan")

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("weights must be finite")


def _augment(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy_and_grad(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the (dim+1) x C weights."""
    xa = _augment(x)
    logp = _log_softmax(xa @ w)
    m = len(y)
    loss = -logp[np.arange(m), y].mean()
    p = np.exp(logp)
    p[np.arange(m), y] -= 1
    return float(loss), xa.T @ p / m


def _predict(w: np.ndarray, xa: np.ndarray) -> np.ndarray:
    return np.argmax(xa @ w, axis=-1)  # first maximum wins


def train_batch(
    x: np.ndarray, y: np.ndarray, cfg: TrainerConfig, n_classes: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Train B independent models at once on x (B, m, dim), y (B, m).

    Each model stops updating as soon as its own train error drops below the
    threshold, so the result matches training the models one by one.
    Returns weights (B, dim+1, C), final train errors and epochs used.
    """
    b, m, _ = x.shape
    if m == 0:
        raise ValueError("empty training set")
    xa = _augment(x)
    onehot = np.eye(n_classes)[y]
    w = np.zeros((b, xa.shape[-1], n_classes))
    epochs = np.zeros(b, dtype=np.int64)
    active = np.ones(b, dtype=bool)
    for _ in range(cfg.max_epochs):
        logits = xa @ w
        err = (np.argmax(logits, axis=-1) != y).mean(axis=-1)
        active &= err >= cfg.early_stop_train_error
        if not active.any():
            break
        p = np.exp(_log_softmax(logits[active]))
        grad = np.swapaxes(xa[active], 1, 2) @ (p - onehot[active]) / m
        w[active] -= cfg.learning_rate * grad
        epochs[active] += 1
    err = (np.argmax(xa @ w, axis=-1) != y).mean(axis=-1)
    return w, err, epochs


def train_linear_softmax(x: np.ndarray, y: np.ndarray, cfg: TrainerConfig, n_classes: int = 2) -> ModelWeights:
    w, err, epochs = train_batch(np.asarray(x, float)[None], np.asarray(y)[None], cfg, n_classes)
    return ModelWeights(w[0], int(epochs[0]), float(err[0]))


def evaluate_losses(w, x: np.ndarray, y: np.ndarray, surrogate_cap: float | None = None):
    """Zero-one losses of every supersample cell, shape (n, 2).

    With ``surrogate_cap`` also returns min(cross-entropy, cap) / cap.
    """
    w = w.matrix if isinstance(w, ModelWeights) else w
    xa = _augment(x)
    logits = xa @ w
    zo = (np.argmax(logits, axis=-1) != y).astype(float)
    if surrogate_cap is None:
        return zo
    ce = -np.take_along_axis(_log_softmax(logits), y[..., None], axis=-1)[..., 0]
    return zo, np.minimum(ce, surrogate_cap) / surrogate_cap


@dataclass(frozen=True)
class ExperimentConfig:
    sampler: DataSampler = field(default_factory=DataSampler)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    n_grid: tuple = (10, 25, 50, 75, 100)
    k1: int = 50
    k2: int = 100
    balanced_masks: bool = True
    shared_masks: bool = True
    seed: int = 0
    surrogate_cap: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if any(n < 1 for n in self.n_grid):
            raise ValueError("every n must be >= 1")
        if self.k1 < 1 or self.k2 < 1:
            raise ValueError("k1 and k2 must be >= 1")
        if self.balanced_masks and self.k2 % 2:
            raise ValueError("balanced masks need an even k2")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        sampler = DataSampler(**d.pop("sampler", {}))
        trainer = TrainerConfig(**d.pop("trainer", {}))
        return cls(sampler=sampler, trainer=trainer, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        return d


def _masks_for(cfg: ExperimentConfig, n: int, j: int | None) -> MaskMatrix:
    key = [cfg.seed, n, MASK_STREAM] + ([] if j is None else [j])
    seed = np.random.SeedSequence(key)
    make = balanced_masks if cfg.balanced_masks else iid_masks
    return make(n, cfg.k2, seed)


def supersample_seed(cfg: ExperimentConfig, n: int, j: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed, n, j])


def run_supersample(cfg: ExperimentConfig, n: int, j: int, masks: np.ndarray):
    """Train all k2 mask runs on supersample j; returns (k2, n, 2) losses."""
    x, y = draw_supersample(cfg.sampler, n, supersample_seed(cfg, n, j))
    rows = np.arange(n)
    xtr = x[rows, masks]  # (k2, n, dim)
    ytr = y[rows, masks]
    w, err, _ = train_batch(xtr, ytr, cfg.trainer, cfg.sampler.n_classes)
    xa = _augment(x)  # (n, 2, dim+1)
    logits = np.einsum("ncd,bdk->bnck", xa, w)
    zo = (np.argmax(logits, axis=-1) != y).astype(float)
    train_col = np.take_along_axis(zo, masks[..., None].astype(np.intp), axis=-1)[..., 0]
    assert np.allclose(train_col.mean(axis=-1), err)
    if cfg.surrogate_cap is None:
        return zo, None
    ce = -np.take_along_axis(_log_softmax(logits), np.broadcast_to(y, zo.shape)[..., None], axis=-1)[..., 0]
    return zo, np.minimum(ce, cfg.surrogate_cap) / cfg.surrogate_cap


def _threads() -> int:
    env = os.environ.get("SSB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, with_surrogate: bool = False) -> dict:
    """Loss tensor per n in the grid (zero-one losses).

    With ``with_surrogate`` (needs ``cfg.surrogate_cap``) each entry is a
    (zero_one, surrogate) pair sharing the same runs.
    """
    if with_surrogate and cfg.surrogate_cap is None:
        raise ValueError("surrogate losses need surrogate_cap in the config")
    out = {}
    for n in cfg.n_grid:
        if cfg.shared_masks:
            shared = _masks_for(cfg, n, None).entries
            masks = np.broadcast_to(shared, (cfg.k1, cfg.k2, n))
        else:
            masks = np.stack([_masks_for(cfg, n, j).entries for j in range(cfg.k1)])
        zo = np.empty((cfg.k1, cfg.k2, n, 2))
        sur = np.empty_like(zo) if cfg.surrogate_cap is not None else None

        def work(j):
            a, b = run_supersample(cfg, n, j, masks[j])
            zo[j] = a
            if sur is not None:
                sur[j] = b

        workers = min(_threads(), cfg.k1)
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                list(pool.map(work, range(cfg.k1)))
        else:
            for j in range(cfg.k1):
                work(j)
        meta = {"seed": cfg.seed, "n": n, "source": "simlab", "config": cfg.to_dict()}
        mask_arg = masks[0] if cfg.shared_masks else masks
        t_zo = LossTensor(zo, np.array(mask_arg), "zero_one", cfg.shared_masks, meta)
        if with_surrogate:
            t_sur = LossTensor(sur, np.array(mask_arg), "unit_interval", cfg.shared_masks,
                               dict(meta, surrogate_cap=cfg.surrogate_cap))
            out[n] = (t_zo, t_sur)
        else:
            out[n] = t_zo
    return out
