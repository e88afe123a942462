"""Generalization-bound estimators computed from a loss tensor.

Every MI term is a pooled plug-in estimate per row. Single-loss terms
I(L+_i; U_i) use the symmetrized sample (L+, U) together with (L-, 1 - U);
see ``LossTensor.plus_samples``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .chaining import DyadicPartitionSequence, bound_chained_ld, bound_chained_single
from .infocore import pair_codes, plugin_mi_rows, count_tables, codes_per_row, mi_from_table
from .transport import bound_wasserstein

LN2 = math.log(2)
C1_GRID = np.logspace(-2, 3, 200)

BOUND_NAMES = (
    "err",
    "ld_cmi_disint",
    "ld_cmi",
    "ld_mi",
    "single_sq",
    "wasserstein",
    "chained_ld",
    "chained_single",
    "fast_rate",
    "fast_rate_opt",
    "interp_eq4",
    "interp_eq5",
    "variance",
    "sharpness",
    "min_vs",
)


class InfeasibleConstants(ValueError):
    def __init__(self, C1: float, C2: float, c1_scale: float, constraint: float):
        self.constraint = constraint
        super().__init__(
            f"(C1={C1}, C2={C2}) infeasible: e^(2C2) + e^(-2C2(C1*{c1_scale:g}+1)) = {constraint:.6g} > 2"
        )


def constraint_gap(c1_eff: float, C2: float) -> float:
    """e^(2 C2) + e^(-2 C2 (c1_eff + 1)) - 2; feasible iff <= 0."""
    return math.expm1(2 * C2) + math.expm1(-2 * C2 * (c1_eff + 1))


def max_feasible_c2(c1_eff: float, tol: float = 1e-15) -> float:
    """Largest C2 with constraint_gap(c1_eff, C2) <= 0, by bisection.

    The lower bracket C1/(4(C1+1)) is always feasible and ln(2)/2 never is.
    Returns the feasible end of the final bracket.
    """
    if c1_eff <= 0:
        raise ValueError("C1 must be positive")
    lo, hi = c1_eff / (4 * (c1_eff + 1)), LN2 / 2
    assert constraint_gap(c1_eff, lo) <= 0
    for _ in range(200):
        if hi - lo <= tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if constraint_gap(c1_eff, mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class FastRateConstants:
    C1: float
    C2: float
    c1_scale: float = 1.0  # 1 (weighted), gamma^2 (variance), lambda^2 (sharpness)
    value: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.C1 <= 0 or self.C2 <= 0:
            raise ValueError("C1 and C2 must be positive")

    @property
    def constraint(self) -> float:
        return constraint_gap(self.C1 * self.c1_scale, self.C2) + 2.0

    @property
    def feasible(self) -> bool:
        return constraint_gap(self.C1 * self.c1_scale, self.C2) <= 0

    def require_feasible(self):
        if not self.feasible:
            raise InfeasibleConstants(self.C1, self.C2, self.c1_scale, self.constraint)


class ErrEstimate(NamedTuple):
    err: float
    L_n: float
    L_mu: float


def err_estimate(t) -> ErrEstimate:
    # sum first, divide once: exact sums for lattice losses keep err and the
    # Wasserstein numerator on the same footing
    size = t.train.size
    L_n = float(t.train.sum() / size)
    L_mu = float(t.test.sum() / size)
    err = float((t.test - t.train).sum() / size)
    return ErrEstimate(err, L_n, L_mu)


def _require_unit(t, what: str):
    if not t.bounded_unit:
        raise ValueError(f"{what} needs losses in [0, 1]")


def _require_zero_one(t, what: str):
    if t.loss_kind != "zero_one":
        raise ValueError(f"{what} needs zero-one losses")


# -- per-row MI ---------------------------------------------------------------

def mi_delta_rows(t) -> np.ndarray:
    return plugin_mi_rows(t.pooled(t.delta), t.pooled(t.masks))


def mi_plus_rows(t, symmetrize: bool = True) -> np.ndarray:
    x, u = t.plus_samples(symmetrize)
    return plugin_mi_rows(x, u)


def mi_pair_rows(t) -> np.ndarray:
    codes = pair_codes(t.pooled(t.values[..., 0]), t.pooled(t.values[..., 1]))
    return plugin_mi_rows(codes, t.pooled(t.masks))


def cmi_delta_per_supersample(t) -> np.ndarray:
    """Disintegrated I^z(dL_i; U_i) for each supersample z, shape (k1, n)."""
    if t.k2 < 2:
        raise ValueError("disintegrated MI needs at least 2 masks per supersample")
    codes, width = codes_per_row(t.pooled(t.delta))
    codes = codes.reshape(t.k1, t.k2, t.n)
    out = np.empty((t.k1, t.n))
    for j in range(t.k1):
        out[j] = mi_from_table(count_tables(codes[j], t.masks[j], width))
    return out


# -- square-root bounds -------------------------------------------------------

def bound_ld_cmi(t) -> tuple[float, float]:
    """(disintegrated, conditional) loss-difference CMI bounds on |Err|."""
    _require_unit(t, "ld-CMI bound")
    cmi = cmi_delta_per_supersample(t)
    disint = float(np.sqrt(2 * cmi).mean(axis=0).mean())
    conditional = float(np.sqrt(2 * cmi.mean(axis=0)).mean())
    return disint, conditional


def bound_ld_mi(t) -> float:
    _require_unit(t, "ld-MI bound")
    return float(np.sqrt(2 * mi_delta_rows(t)).mean())


def bound_single_loss_sq(t, symmetrize: bool = True) -> float:
    _require_unit(t, "single-loss bound")
    return float(2 * np.sqrt(2 * mi_plus_rows(t, symmetrize)).mean())


class SymmetryResiduals(NamedTuple):
    exact_identity_residual: float
    rademacher_form_residual: float


def symmetry_decomposition(t) -> SymmetryResiduals:
    err = err_estimate(t).err
    u = t.pooled(t.masks).astype(float)
    sign_u = 1 - 2 * u  # (-1)^U
    eps = -sign_u  # (-1)^(1-U)
    lp = t.pooled(t.values[..., 0])
    lm = t.pooled(t.values[..., 1])
    split = ((sign_u * lm).mean(axis=0) + (eps * lp).mean(axis=0)).mean()
    rademacher = 2 * (eps * lp).mean(axis=0).mean()
    return SymmetryResiduals(abs(err - split), abs(err - rademacher))


# -- fast-rate family ---------------------------------------------------------

def _mean_single_mi(t) -> float:
    return float(mi_plus_rows(t).mean())


def bound_fast_rate(t, c: FastRateConstants) -> float:
    """Upper bound on L_mu: (1 + C1) L_n + sum_i I(L+_i; U_i) / (C2 n)."""
    _require_unit(t, "fast-rate bound")
    c.require_feasible()
    return _fast_rate_value(err_estimate(t).L_n, _mean_single_mi(t), c.C1, c.C2)


def _fast_rate_value(L_n: float, mi: float, C1: float, C2: float) -> float:
    return (1 + C1) * L_n + mi / C2


class FastRateOptimal(NamedTuple):
    value: float  # bound on L_mu
    C1: float | None
    C2: float | None
    note: str


def bound_fast_rate_optimal(t) -> FastRateOptimal:
    """Closed-form minimum over the relaxed region C2 <= C1 / (4 (C1 + 1))."""
    _require_unit(t, "fast-rate bound")
    L_n = err_estimate(t).L_n
    mi = _mean_single_mi(t)
    value = L_n + 4 * mi + 4 * math.sqrt(L_n * mi)
    if L_n == 0:
        return FastRateOptimal(value, None, None, "L_n = 0: the interpolating bound is tighter")
    if mi == 0:
        return FastRateOptimal(value, None, None, "zero information term: infimum approached as C1 -> 0")
    C1 = 2 * math.sqrt(mi / L_n)
    return FastRateOptimal(value, C1, C1 / (4 * (C1 + 1)), "")


class InterpolatingBounds(NamedTuple):
    eq4: float
    eq5: float


def bound_interpolating(t) -> InterpolatingBounds:
    _require_zero_one(t, "interpolating bounds")
    bad = t.first_non_interpolating()
    if bad is not None:
        raise ValueError(f"run (supersample {bad[0]}, mask {bad[1]}) has nonzero training loss")
    single = mi_plus_rows(t)
    pair = mi_pair_rows(t)
    eq4 = float(2 * single.mean() / LN2)
    eq5 = float((np.minimum(2 * single, pair) / LN2).mean())
    return InterpolatingBounds(eq4, eq5)


def gamma_variance(t, gamma: float) -> float:
    """Expected empirical second moment of training losses around (1 + gamma) L_S."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    train = t.train
    risk = train.mean(axis=-1, keepdims=True)
    value = float(((train - (1 + gamma) * risk) ** 2).mean())
    if t.loss_kind == "zero_one":
        closed = gamma_variance_identity(t, gamma)
        if abs(value - closed) > 1e-12:
            raise RuntimeError(f"variance identity broken: {value} vs {closed}")
    return value


def gamma_variance_identity(t, gamma: float) -> float:
    """L_n - (1 - gamma^2) E[L_S^2]; equals gamma_variance for zero-one losses."""
    train = t.train
    return float(train.mean() - (1 - gamma**2) * (train.mean(axis=-1) ** 2).mean())


def mean_sq_train_risk(t) -> float:
    return float((t.train.mean(axis=-1) ** 2).mean())


def _conditional_train_means(t) -> np.ndarray:
    """Per run and row, mean training loss of the selected instance over all
    masks (same supersample) that put that instance in training."""
    vals = t.values  # (k1, k2, n, 2)
    onehot = np.stack([1 - t.masks, t.masks], axis=-1).astype(float)
    counts = onehot.sum(axis=1)  # (k1, n, 2)
    if np.any(counts == 0):
        j, i, c = np.argwhere(counts == 0)[0]
        raise ValueError(f"instance (supersample {j}, row {i}, column {c}) is never used for training")
    means = (vals * onehot).sum(axis=1) / counts  # (k1, n, 2)
    return np.take_along_axis(
        np.broadcast_to(means[:, None], vals.shape), t.masks[..., None].astype(np.intp), axis=-1
    )[..., 0]


def lambda_sharpness(t, lam: float) -> float:
    """F(lambda) by its definition, with plug-in conditional means."""
    _check_lam(lam)
    _require_zero_one(t, "lambda-sharpness")
    cond = _conditional_train_means(t)
    value = float(((t.train - (1 + lam) * cond) ** 2).mean())
    closed = lambda_sharpness_identity(t, lam)
    if abs(value - closed) > 1e-12:
        raise RuntimeError(f"sharpness identity broken: {value} vs {closed}")
    return value


def lambda_sharpness_identity(t, lam: float) -> float:
    _check_lam(lam)
    cond = _conditional_train_means(t)
    return float(t.train.mean() - (1 - lam**2) * (cond**2).mean())


def _check_lam(lam: float):
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")


def bound_variance(t, gamma: float, c: FastRateConstants) -> float:
    """Bound on Err: C1 V(gamma) + sum_i I(L+_i; U_i) / (C2 n)."""
    _require_zero_one(t, "variance bound")
    _scaled(c, gamma**2).require_feasible()
    return c.C1 * gamma_variance(t, gamma) + _mean_single_mi(t) / c.C2


def bound_sharpness(t, lam: float, c: FastRateConstants) -> float:
    _require_zero_one(t, "sharpness bound")
    _scaled(c, lam**2).require_feasible()
    return c.C1 * lambda_sharpness(t, lam) + _mean_single_mi(t) / c.C2


def bound_min_vs(t, gamma: float, lam: float, c: FastRateConstants) -> float:
    _require_zero_one(t, "min variance/sharpness bound")
    _scaled(c, gamma**2).require_feasible()
    _scaled(c, lam**2).require_feasible()
    v, f = gamma_variance(t, gamma), lambda_sharpness(t, lam)
    return c.C1 * min(v, f) + _mean_single_mi(t) / c.C2


def _scaled(c: FastRateConstants, scale: float) -> FastRateConstants:
    return FastRateConstants(c.C1, c.C2, scale)


def optimize_constants(
    t, family: str = "weighted", gamma: float = 0.5, lam: float = 0.5, grid: np.ndarray = C1_GRID
) -> FastRateConstants:
    """Grid search over C1 with the largest feasible C2 for each C1.

    ``value`` on the result is the family's bound on Err. The relaxed-region
    optimum of C1 is added to the grid when it exists.
    """
    mi = _mean_single_mi(t)
    if family == "weighted":
        _require_unit(t, "fast-rate bound")
        slope, scale = err_estimate(t).L_n, 1.0
    elif family == "variance":
        _require_zero_one(t, "variance bound")
        slope, scale = gamma_variance(t, gamma), gamma**2
    elif family == "sharpness":
        _require_zero_one(t, "sharpness bound")
        slope, scale = lambda_sharpness(t, lam), lam**2
    elif family == "min_vs":
        _require_zero_one(t, "min variance/sharpness bound")
        slope = min(gamma_variance(t, gamma), lambda_sharpness(t, lam))
        scale = min(gamma, lam) ** 2
    else:
        raise ValueError(f"unknown family {family!r}")
    candidates = list(np.asarray(grid, dtype=float))
    if slope > 0 and mi > 0:
        candidates.append(2 * math.sqrt(mi / (slope * scale)))
    best = None
    for C1 in candidates:
        C2 = max_feasible_c2(C1 * scale)
        value = C1 * slope + mi / C2
        if best is None or value < best[0]:
            best = (value, C1, C2)
    value, C1, C2 = best
    return FastRateConstants(float(C1), float(C2), scale, float(value))


def fast_rate_grid_check(t, grid: np.ndarray = C1_GRID, fractions=(0.25, 0.5, 1.0)) -> float:
    """Largest L_mu - bound over feasible (C1, C2) pairs; <= 0 means no violation."""
    est = err_estimate(t)
    mi = _mean_single_mi(t)
    worst = -math.inf
    for C1 in grid:
        c2max = max_feasible_c2(C1)
        for frac in fractions:
            worst = max(worst, est.L_mu - _fast_rate_value(est.L_n, mi, C1, frac * c2max))
    return worst


# -- report -------------------------------------------------------------------

@dataclass
class BoundValue:
    name: str
    value: float
    C1: float | None = None
    C2: float | None = None
    gamma: float | None = None
    lam: float | None = None
    feasible: bool = True


@dataclass
class BoundReport:
    n: int
    err: float
    L_n: float
    L_mu: float
    bounds: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if abs((self.L_mu - self.L_n) - self.err) > 1e-12:
            raise ValueError("L_mu - L_n must equal err")

    def add(self, bv: BoundValue):
        self.bounds[bv.name] = bv

    def value(self, name: str) -> float:
        return self.err if name == "err" else self.bounds[name].value


def compute_report(
    t,
    names=None,
    gamma: float = 0.5,
    lam: float = 0.5,
    constants: tuple[float, float] | None = None,
    k_max: int = 12,
) -> BoundReport:
    """Evaluate every applicable bound (or just ``names``) on one tensor.

    Values are bounds on Err (|Err| for the two-sided ones). ``constants``
    fixes (C1, C2) for the fast-rate family; otherwise each family's
    constants come from ``optimize_constants``.
    """
    names = set(BOUND_NAMES if names is None else names)
    unknown = names - set(BOUND_NAMES)
    if unknown:
        raise ValueError(f"unknown bound names: {sorted(unknown)}")
    est = err_estimate(t)
    rep = BoundReport(t.n, est.err, est.L_n, est.L_mu)
    unit = t.bounded_unit
    zero_one = t.loss_kind == "zero_one"
    interp = zero_one and t.is_interpolating()

    diag = rep.diagnostics
    if unit:
        diag["mi_delta"] = mi_delta_rows(t)
        diag["mi_plus"] = mi_plus_rows(t)
        diag["mi_pair"] = mi_pair_rows(t)

    if unit and names & {"ld_cmi_disint", "ld_cmi"} and t.k2 >= 2:
        disint, cond = bound_ld_cmi(t)
        if "ld_cmi_disint" in names:
            rep.add(BoundValue("ld_cmi_disint", disint))
        if "ld_cmi" in names:
            rep.add(BoundValue("ld_cmi", cond))
    if unit and "ld_mi" in names:
        rep.add(BoundValue("ld_mi", float(np.sqrt(2 * diag["mi_delta"]).mean())))
    if unit and "single_sq" in names:
        rep.add(BoundValue("single_sq", float(2 * np.sqrt(2 * diag["mi_plus"]).mean())))
    if unit and "wasserstein" in names:
        rep.add(BoundValue("wasserstein", bound_wasserstein(t)))
    if "chained_ld" in names:
        seq = _delta_sequence(t, k_max)
        res = bound_chained_ld(t, seq)
        rep.add(BoundValue("chained_ld", res.total))
        diag["chained_ld_levels"] = res
    if "chained_single" in names:
        seq = _single_sequence(t, k_max)
        res = bound_chained_single(t, seq)
        rep.add(BoundValue("chained_single", res.total))
        diag["chained_single_levels"] = res

    mi_bar = float(diag["mi_plus"].mean()) if unit else None
    if unit and "fast_rate" in names:
        if constants is None:
            c = optimize_constants(t, "weighted")
            rep.add(BoundValue("fast_rate", c.value, c.C1, c.C2))
        else:
            c = FastRateConstants(*constants)
            value = _fast_rate_value(est.L_n, mi_bar, c.C1, c.C2) - est.L_n
            rep.add(BoundValue("fast_rate", value, c.C1, c.C2, feasible=c.feasible))
    if unit and "fast_rate_opt" in names:
        opt = bound_fast_rate_optimal(t)
        rep.add(BoundValue("fast_rate_opt", opt.value - est.L_n, opt.C1, opt.C2))
    if interp and names & {"interp_eq4", "interp_eq5"}:
        eq4, eq5 = bound_interpolating(t)
        if "interp_eq4" in names:
            rep.add(BoundValue("interp_eq4", eq4))
        if "interp_eq5" in names:
            rep.add(BoundValue("interp_eq5", eq5))
    if zero_one:
        v = gamma_variance(t, gamma)
        f = lambda_sharpness(t, lam)
        diag["gamma_variance"] = v
        diag["lambda_sharpness"] = f
        for name, family, slope, scale in (
            ("variance", "variance", v, gamma**2),
            ("sharpness", "sharpness", f, lam**2),
            ("min_vs", "min_vs", min(v, f), min(gamma, lam) ** 2),
        ):
            if name not in names:
                continue
            if constants is None:
                c = optimize_constants(t, family, gamma, lam)
                value, feasible = c.value, True
                C1, C2 = c.C1, c.C2
            else:
                C1, C2 = constants
                value = C1 * slope + mi_bar / C2
                feasible = constraint_gap(C1 * scale, C2) <= 0
            rep.add(BoundValue(name, value, C1, C2, gamma if name != "sharpness" else None,
                               lam if name != "variance" else None, feasible))
    return rep


def _delta_sequence(t, k_max: int) -> DyadicPartitionSequence:
    if t.bounded_unit:
        return DyadicPartitionSequence.for_delta(k_max)
    span = float(t.values.max() - t.values.min()) or 1.0
    k0 = -math.ceil(math.log2(2 * span))
    return DyadicPartitionSequence(-span, span, k0, max(k_max, k0))


def _single_sequence(t, k_max: int) -> DyadicPartitionSequence:
    if t.bounded_unit:
        return DyadicPartitionSequence.for_unit(k_max)
    lo, hi = float(t.values.min()), float(t.values.max())
    if hi == lo:
        hi = lo + 1.0
    k0 = -math.ceil(math.log2(hi - lo))
    return DyadicPartitionSequence(lo, hi, k0, max(k_max, k0))


# -- invariant suite ----------------------------------------------------------

class Check(NamedTuple):
    name: str
    ok: bool
    detail: str


def invariant_checks(t, gamma: float = 0.5, lam: float = 0.5) -> list[Check]:
    """Exact empirical-law invariants; the dominations assume balanced masks."""
    out = []
    est = err_estimate(t)
    out.append(Check("balanced_masks", t.balanced, "every (supersample, row) has k2/2 ones"))
    if abs(est.L_mu - est.L_n - est.err) > 1e-12:
        out.append(Check("err_consistency", False, f"L_mu - L_n = {est.L_mu - est.L_n!r}, err = {est.err!r}"))
    if t.bounded_unit:
        ld = bound_ld_mi(t)
        out.append(Check("err_le_ld_mi", abs(est.err) <= ld, f"|err| = {abs(est.err):.9g}, ld_mi = {ld:.9g}"))
        try:
            w = bound_wasserstein(t)
            out.append(Check("err_le_wasserstein", abs(est.err) <= w,
                             f"|err| = {abs(est.err):.9g}, wasserstein = {w:.9g}"))
        except ValueError as e:
            out.append(Check("err_le_wasserstein", False, str(e)))
        gap = float(np.max(mi_delta_rows(t) - mi_pair_rows(t)))
        out.append(Check("dpi_delta_le_pair", gap <= 1e-12, f"max I(dL;U) - I(pair;U) = {gap:.3g}"))
        worst = fast_rate_grid_check(t)
        out.append(Check("fast_rate_grid", worst <= 0, f"max L_mu - bound over feasible grid = {worst:.3g}"))
    if t.loss_kind == "zero_one":
        dv = abs(float(((t.train - (1 + gamma) * t.train.mean(-1, keepdims=True)) ** 2).mean())
                 - gamma_variance_identity(t, gamma))
        out.append(Check("variance_identity", dv <= 1e-12, f"|definition - identity| = {dv:.3g}"))
        try:
            cond = _conditional_train_means(t)
            df = abs(float(((t.train - (1 + lam) * cond) ** 2).mean()) - lambda_sharpness_identity(t, lam))
            out.append(Check("sharpness_identity", df <= 1e-12, f"|definition - identity| = {df:.3g}"))
        except ValueError as e:
            out.append(Check("sharpness_identity", False, str(e)))
        if t.is_interpolating():
            eq4, eq5 = bound_interpolating(t)
            out.append(Check("eq5_le_1", eq5 <= 1, f"eq5 = {eq5:.9g}"))
            out.append(Check("eq5_le_eq4", eq5 <= eq4, f"eq5 = {eq5:.9g}, eq4 = {eq4:.9g}"))
    return out
