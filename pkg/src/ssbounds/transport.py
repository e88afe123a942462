"""1-D Wasserstein distance and the loss-difference Wasserstein bound."""

from __future__ import annotations

import numpy as np

from .infocore import DiscretePMF

EmpiricalLaw1D = DiscretePMF


def wasserstein1(p: EmpiricalLaw1D, q: EmpiricalLaw1D) -> float:
    """W1 between finitely supported laws on the real line, via the CDF integral."""
    grid = np.union1d(p.support, q.support)
    cdf_p = np.cumsum(np.bincount(np.searchsorted(grid, p.support), p.probs, grid.size))
    cdf_q = np.cumsum(np.bincount(np.searchsorted(grid, q.support), q.probs, grid.size))
    return float(np.sum(np.abs(cdf_p - cdf_q)[:-1] * np.diff(grid)))


def _row_numerators(delta: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, int]:
    """Per-row R^2 * E_U W1(P_{dL|U}, P_{dL}) for R runs, plus R^2.

    With counting CDFs C_u, C and n_u runs under bit u,
    P(u) W1(P_u, P) = integral |R C_u - n_u C| / R^2, so for lattice-valued
    losses every numerator is an exact integer and the bound is a single
    correctly rounded quotient.
    """
    if np.any(np.abs(delta) > 1):
        raise ValueError("loss differences outside [-1, 1]; losses must lie in [0, 1]")
    runs = delta.shape[0]
    out = np.empty(delta.shape[1])
    for i in range(delta.shape[1]):
        d, ui = delta[:, i], u[:, i]
        grid = np.unique(d)
        cdf = np.searchsorted(np.sort(d), grid, side="right").astype(float)
        num = 0.0
        for bit in (0, 1):
            sel = d[ui == bit]
            if sel.size == 0:
                raise ValueError(f"row {i}: mask bit {bit} never observed; conditional law undefined")
            cdf_u = np.searchsorted(np.sort(sel), grid, side="right").astype(float)
            num += np.sum(np.abs(runs * cdf_u - sel.size * cdf)[:-1] * np.diff(grid))
        out[i] = num
    return out, runs * runs


def wasserstein_row_terms(delta: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per-row E_U W1(P_{dL|U}, P_{dL}) from samples of shape (runs, n)."""
    num, denom = _row_numerators(delta, u)
    return num / denom


def bound_wasserstein(t) -> float:
    if not t.bounded_unit:
        raise ValueError("Wasserstein bound needs losses in [0, 1]")
    num, denom = _row_numerators(t.pooled(t.delta), t.pooled(t.masks))
    return float(np.sum(num) / (denom * t.n))
