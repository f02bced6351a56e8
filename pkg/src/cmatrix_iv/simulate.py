"""Seeded Monte Carlo engine for the C-matrix estimator family.

Three data-generating processes, one replication driver. Each round owns
an independent counter-based RNG stream keyed by ``(base_seed, round)``,
so results are bitwise-reproducible no matter how rounds are scheduled,
and every requested estimator sees the same draw within a round.

The processes:

* :class:`Homoskedastic` — many mutually independent standard-normal
  instruments plus loaded normal controls, homoskedastic bivariate-normal
  errors. Stress-tests the many-instrument regime.
* :class:`GroupHet` — 20 group dummies (2 big groups of 115, 18 small of
  15) with the error covariance flipping sign pattern between big and
  small groups. Stress-tests group-level heteroskedasticity.
* :class:`Outlier` — a sparse block design with one contaminated
  high-leverage row whose error is inflated by n^(1/3). Stress-tests
  robustness to a leverage/variance coincidence.

All three share the structural equation y = beta* x + (controls) + eps
with a single endogenous regressor and intercepts fixed at zero; a column
of ones still enters the regressions (as a control column, hence inside
the instrument stack for raw-mode estimators) except in the outlier
design, which by default carries no intercept at all.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design import DesignData, partial_out, project, stack
from .errors import DesignError
from .estimators import EstimatorSpec, estimate, resolve_named

__all__ = [
    "DEFAULT_ERROR_COV",
    "GROUP_COV_PLUS",
    "GROUP_COV_MINUS",
    "GROUP_SIZES",
    "Homoskedastic",
    "GroupHet",
    "Outlier",
    "RoundDraw",
    "EstimatorStats",
    "MonteCarloSummary",
    "DensityTable",
    "PRESETS",
    "preset",
    "default_estimators",
    "generate",
    "run",
    "summarize",
    "density_export",
]

#: Error covariance of (eps, eta) for the homoskedastic and outlier
#: processes: Var(eps)=0.8, Var(eta)=1, Cov=-0.6.
DEFAULT_ERROR_COV = ((0.8, -0.6), (-0.6, 1.0))

#: Group covariance with positive error correlation.
GROUP_COV_PLUS = ((0.25, 0.2), (0.2, 0.25))

#: Group covariance with negative error correlation.
GROUP_COV_MINUS = ((0.25, -0.1), (-0.1, 0.25))

#: Group sizes of the heteroskedastic design: two big, eighteen small.
GROUP_SIZES = (115, 115) + (15,) * 18


def _cov_array(cov, name: str) -> np.ndarray:
    arr = np.asarray(cov, dtype=np.float64)
    if arr.shape != (2, 2):
        raise DesignError(f"{name} must be 2x2, got shape {arr.shape}")
    if not np.allclose(arr, arr.T):
        raise DesignError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise DesignError(f"{name} must be positive definite") from None
    return arr


def _as_cov_tuple(cov) -> tuple:
    arr = np.asarray(cov, dtype=np.float64)
    return tuple(tuple(float(v) for v in row) for row in arr)


@dataclass(frozen=True)
class Homoskedastic:
    """Many-instrument design with homoskedastic errors.

    ``k_total`` and ``l_total`` count the stacked instrument and regressor
    columns of the raw-mode design *excluding* the intercept bookkeeping:
    the process draws ``k_total - l_total`` pure instruments and
    ``l_total`` loaded controls, then appends the intercept. Every pure
    instrument enters the first stage with loading ``pi_star``, every
    control with ``delta_star`` (first stage) and ``gamma_star``
    (second stage).
    """

    n: int = 500
    k_total: int = 50
    l_total: int = 10
    beta_star: float = 0.3
    gamma_star: float = 1.0
    pi_star: float = 0.08
    delta_star: float = 0.05
    error_cov: tuple = DEFAULT_ERROR_COV

    def __post_init__(self):
        object.__setattr__(self, "error_cov", _as_cov_tuple(self.error_cov))
        _cov_array(self.error_cov, "error_cov")
        if self.l_total < 0:
            raise DesignError(f"l_total must be >= 0, got {self.l_total}")
        if self.k_total <= self.l_total:
            raise DesignError(
                f"k_total ({self.k_total}) must exceed l_total "
                f"({self.l_total}): no pure instruments remain otherwise"
            )
        if self.n <= self.k_total + 2:
            raise DesignError(
                f"n ({self.n}) must exceed k_total + 2 ({self.k_total + 2})"
            )


@dataclass(frozen=True)
class GroupHet:
    """Group-dummy design with group-level heteroskedasticity.

    N = 500 observations in 20 groups (sizes :data:`GROUP_SIZES`). The
    instruments are the 19 dummies for groups 2..20; the only control is
    the intercept. ``setup`` selects which group type gets the
    positive-correlation covariance: setup 1 gives it to the small groups,
    setup 2 to the big groups. ``flip_assignment`` swaps that mapping.
    """

    setup: int = 1
    flip_assignment: bool = False
    beta_star: float = 0.3
    pi_star: float = 0.3
    plus_cov: tuple = GROUP_COV_PLUS
    minus_cov: tuple = GROUP_COV_MINUS

    def __post_init__(self):
        if self.setup not in (1, 2):
            raise DesignError(f"setup must be 1 or 2, got {self.setup!r}")
        for field in ("plus_cov", "minus_cov"):
            object.__setattr__(
                self, field, _as_cov_tuple(getattr(self, field))
            )
            _cov_array(getattr(self, field), field)

    @property
    def n(self) -> int:
        return int(sum(GROUP_SIZES))

    @property
    def big_groups_plus(self) -> bool:
        """Whether the two big groups draw the '+' covariance."""
        flag = self.setup == 2
        return (not flag) if self.flip_assignment else flag


@dataclass(frozen=True)
class Outlier:
    """Sparse block design with one contaminated high-leverage row.

    Requires ``n - 1`` to be a perfect square with root m >= 5. The
    instrument matrix has 5 columns: row 1 is ``((n-1)^(1/3), 0, 0, 0, 0)``
    and the remaining n-1 rows are m blocks of m rows, each block a 5x5
    identity above zeros. Row 1's error is inflated by ``n^(1/3)``, so the
    largest leverage coincides with the largest error variance.
    """

    n: int = 101
    include_intercept: bool = False
    beta_star: float = 0.3
    pi_star: float = 1.0
    error_cov: tuple = DEFAULT_ERROR_COV

    def __post_init__(self):
        object.__setattr__(self, "error_cov", _as_cov_tuple(self.error_cov))
        _cov_array(self.error_cov, "error_cov")
        m = math.isqrt(max(self.n - 1, 0))
        if m * m != self.n - 1 or m < 5:
            raise DesignError(
                f"n - 1 must be a perfect square with root >= 5 "
                f"(e.g. 101, 401, 901, 1601), got n={self.n}"
            )

    @property
    def block(self) -> int:
        """Block size m = sqrt(n - 1)."""
        return math.isqrt(self.n - 1)


SimDesign = Homoskedastic | GroupHet | Outlier


@dataclass(frozen=True)
class RoundDraw:
    """One simulated dataset with its ground truth.

    ``beta_true`` covers the raw-mode coefficient vector (endogenous
    first, then the control columns' second-stage loadings). ``r0`` is the
    realized concentration diagnostic: squared norm of the deterministic
    first-stage signal over the first-stage error variance.
    """

    data: DesignData
    beta_true: np.ndarray
    r0: float


#: Summary rows reported by default for the dense-instrument designs.
DEFAULT_NAMES = (
    "OLS",
    "TSLS",
    "Nagar",
    "AUK",
    "JIVE1",
    "JIVE2",
    "TSJI1",
    "TSJI2",
    "UIJIVE1",
    "UIJIVE2",
    "UOJIVE1",
    "UOJIVE2",
)

#: The outlier design ships no controls, so the partialled-mode names and
#: the k-class names degenerate; only the four jackknife-style rows run.
OUTLIER_NAMES = ("TSJI1", "TSJI2", "UOJIVE1", "UOJIVE2")


def default_estimators(design: SimDesign) -> tuple[str, ...]:
    """Default estimator row set for a design."""
    if isinstance(design, Outlier):
        return OUTLIER_NAMES
    return DEFAULT_NAMES


PRESETS: dict[str, SimDesign] = {
    "homoskedastic-1": Homoskedastic(),
    "homoskedastic-2": Homoskedastic(
        n=2000, k_total=200, l_total=40, pi_star=0.02, delta_star=0.02
    ),
    "grouphet-1": GroupHet(setup=1),
    "grouphet-2": GroupHet(setup=2),
    "outlier-101": Outlier(n=101),
    "outlier-401": Outlier(n=401),
    "outlier-901": Outlier(n=901),
    "outlier-1601": Outlier(n=1601),
}


def preset(name: str) -> SimDesign:
    """Look up a named preset design."""
    try:
        return PRESETS[name]
    except KeyError:
        raise DesignError(
            f"unknown design preset {name!r}; available: "
            f"{', '.join(sorted(PRESETS))}"
        ) from None


def round_rng(base_seed: int, round_index: int) -> np.random.Generator:
    """Counter-based RNG stream for one round.

    Streams for different rounds are statistically independent and do not
    depend on how many rounds run or in what order, which is what makes
    the engine's output independent of scheduling.
    """
    base_seed = int(base_seed)
    round_index = int(round_index)
    if base_seed < 0 or round_index < 0:
        raise ValueError("base_seed and round_index must be non-negative")
    key = (base_seed << 64) | round_index
    return np.random.Generator(np.random.Philox(key=key))


def _draw_errors(rng, cov, count):
    e = rng.standard_normal((count, 2)) @ np.linalg.cholesky(cov).T
    return e[:, 0], e[:, 1]


def _gen_homoskedastic(design: Homoskedastic, rng) -> RoundDraw:
    n, l_nom = design.n, design.l_total
    k1 = design.k_total - design.l_total
    cov = _cov_array(design.error_cov, "error_cov")
    zs = rng.standard_normal((n, k1))
    wl = rng.standard_normal((n, l_nom))
    eps, eta = _draw_errors(rng, cov, n)
    signal = zs.sum(axis=1) * design.pi_star + wl.sum(axis=1) * design.delta_star
    xs = signal + eta
    y = design.beta_star * xs + design.gamma_star * wl.sum(axis=1) + eps
    w = np.column_stack([np.ones(n), wl])
    data = DesignData(y=y, x_star=xs[:, None], w=w, z_star=zs)
    beta_true = np.concatenate(
        [[design.beta_star, 0.0], np.full(l_nom, design.gamma_star)]
    )
    r0 = float(signal @ signal) / cov[1, 1]
    return RoundDraw(data=data, beta_true=beta_true, r0=r0)


def _gen_grouphet(design: GroupHet, rng) -> RoundDraw:
    n = design.n
    gid = np.repeat(np.arange(len(GROUP_SIZES)), GROUP_SIZES)
    big = gid < 2
    cov_plus = _cov_array(design.plus_cov, "plus_cov")
    cov_minus = _cov_array(design.minus_cov, "minus_cov")
    big_plus = design.big_groups_plus
    eps = np.empty(n)
    eta = np.empty(n)
    for mask, cov in (
        (big, cov_plus if big_plus else cov_minus),
        (~big, cov_minus if big_plus else cov_plus),
    ):
        e, h = _draw_errors(rng, cov, int(mask.sum()))
        eps[mask] = e
        eta[mask] = h
    signal = design.pi_star * (gid != 0).astype(np.float64)
    xs = signal + eta
    y = design.beta_star * xs + eps
    dummies = (gid[:, None] == np.arange(1, len(GROUP_SIZES))[None, :])
    data = DesignData(
        y=y,
        x_star=xs[:, None],
        w=np.ones((n, 1)),
        z_star=dummies.astype(np.float64),
    )
    beta_true = np.array([design.beta_star, 0.0])
    r0 = float(signal @ signal) / cov_plus[1, 1]
    return RoundDraw(data=data, beta_true=beta_true, r0=r0)


def _gen_outlier(design: Outlier, rng) -> RoundDraw:
    n, m = design.n, design.block
    cov = _cov_array(design.error_cov, "error_cov")
    block = np.vstack([np.eye(5), np.zeros((m - 5, 5))])
    zs = np.vstack([np.zeros((1, 5)), np.tile(block, (m, 1))])
    zs[0, 0] = (n - 1) ** (1.0 / 3.0)
    eps, eta = _draw_errors(rng, cov, n)
    eps = eps.copy()
    eps[0] *= n ** (1.0 / 3.0)
    signal = design.pi_star * zs.sum(axis=1)
    xs = signal + eta
    y = design.beta_star * xs + eps
    w = np.ones((n, 1)) if design.include_intercept else None
    data = DesignData(y=y, x_star=xs[:, None], w=w, z_star=zs)
    if design.include_intercept:
        beta_true = np.array([design.beta_star, 0.0])
    else:
        beta_true = np.array([design.beta_star])
    r0 = float(signal @ signal) / cov[1, 1]
    return RoundDraw(data=data, beta_true=beta_true, r0=r0)


def generate(design: SimDesign, rng: np.random.Generator) -> RoundDraw:
    """Draw one dataset from a design.

    Parameters
    ----------
    design : Homoskedastic or GroupHet or Outlier
    rng : numpy.random.Generator
        Stream to consume; use :func:`round_rng` for replication-grade
        streams.

    Returns
    -------
    RoundDraw
    """
    if isinstance(design, Homoskedastic):
        return _gen_homoskedastic(design, rng)
    if isinstance(design, GroupHet):
        return _gen_grouphet(design, rng)
    if isinstance(design, Outlier):
        return _gen_outlier(design, rng)
    raise DesignError(
        f"unknown design type {type(design).__name__}; expected "
        f"Homoskedastic, GroupHet or Outlier"
    )


@dataclass(frozen=True)
class EstimatorStats:
    """Moments of one estimator across rounds, plus its failure count.

    ``bias`` is |mean - beta_true| over successful rounds; ``variance``
    uses the 1/R divisor so that mse = bias^2 + variance holds exactly.
    Rounds where estimation raised are excluded from the moments and
    counted in ``failures``; all statistics are NaN when every round
    failed.
    """

    bias: float
    variance: float
    mse: float
    failures: int


@dataclass(frozen=True)
class MonteCarloSummary:
    """Result of one replication run.

    ``estimates`` is the (rounds, len(labels)) matrix of per-round point
    estimates with NaN marking failed rounds — present only when the run
    was asked to keep them. ``notes`` carries estimator-resolution
    warnings (at most one per label).
    """

    design_label: str
    labels: tuple[str, ...]
    stats: dict[str, EstimatorStats]
    rounds: int
    base_seed: int
    beta_true: float
    notes: tuple[str, ...] = ()
    estimates: np.ndarray | None = None


def summarize(estimates, beta_true: float) -> tuple[float, float, float]:
    """Bias, variance and MSE of an estimate vector against the truth.

    Non-finite entries (failed rounds) are excluded. Variance uses the
    1/R divisor; with it, mse = bias^2 + variance is an exact identity.

    Parameters
    ----------
    estimates : array_like
    beta_true : float

    Returns
    -------
    (float, float, float)
        ``(bias, variance, mse)``; all NaN if no entry is finite.
    """
    arr = np.asarray(estimates, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("estimates vector is empty")
    finite = arr[np.isfinite(arr)]
    if finite.size == 0:
        return (float("nan"), float("nan"), float("nan"))
    mean = float(finite.mean())
    bias = abs(mean - beta_true)
    variance = float(np.mean((finite - mean) ** 2))
    mse = float(np.mean((finite - beta_true) ** 2))
    return (bias, variance, mse)


def _resolve_request(names, probe_data: DesignData):
    """Turn a mixed name/spec request into labeled specs."""
    stacked = stack(probe_data)
    specs: list[EstimatorSpec] = []
    for item in names:
        if isinstance(item, EstimatorSpec):
            specs.append(item)
        else:
            specs.append(
                resolve_named(
                    str(item), probe_data.n, stacked.k, stacked.l,
                    probe_data.l1,
                )
            )
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        raise ValueError(f"duplicate estimator labels requested: {dupes}")
    return specs


def run(
    design: SimDesign,
    names,
    rounds: int,
    base_seed: int,
    *,
    keep_estimates: bool = False,
    workers: int = 1,
) -> MonteCarloSummary:
    """Replicate a design and summarize every requested estimator.

    Each round draws a fresh dataset from its own RNG stream and
    evaluates all estimators on that same draw, sharing the instrument
    decomposition. Per-round estimation failures (singular systems,
    leverage-pinned weights) are recorded as NaN and counted — never
    silently dropped or propagated as a crash.

    Parameters
    ----------
    design : Homoskedastic or GroupHet or Outlier
    names : iterable of str or EstimatorSpec
        Named estimators are resolved against the design's realized
        dimensions; pass an :class:`EstimatorSpec` directly (with a
        distinct label) to run a custom family member.
    rounds : int
    base_seed : int
        Together with the round index this fully determines every draw.
    keep_estimates : bool, optional
        Keep the (rounds, estimators) matrix of point estimates on the
        summary, at the cost of memory.
    workers : int, optional
        Thread count for round evaluation. The output is identical for
        every value; threads only change wall time.

    Returns
    -------
    MonteCarloSummary
    """
    rounds = int(rounds)
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    names = list(names)
    if not names:
        raise ValueError("no estimators requested")

    probe = generate(design, round_rng(base_seed, 0))
    specs = _resolve_request(names, probe.data)
    labels = tuple(s.label for s in specs)
    notes = tuple(s.note for s in specs if s.note)
    beta_true = float(probe.beta_true[0])
    need_partial = any(s.partialled for s in specs)
    n_specs = len(specs)
    catch = (ArithmeticError, DesignError, np.linalg.LinAlgError)

    def one_round(r: int) -> np.ndarray:
        draw = generate(design, round_rng(base_seed, r))
        data = draw.data
        row = np.full(n_specs, np.nan)
        try:
            dec = project(stack(data).z)
        except catch:
            return row
        pdata = pdec = None
        if need_partial and data.l2 > 0:
            try:
                pdata = partial_out(data)
                pdec = project(pdata.z_t)
            except catch:
                pdata = pdec = None
        for j, spec in enumerate(specs):
            try:
                res = estimate(
                    spec,
                    data,
                    decomp=dec,
                    partialled=pdata,
                    partialled_decomp=pdec,
                )
                row[j] = res.beta_hat[0]
            except catch:
                pass
        return row

    estimates = np.full((rounds, n_specs), np.nan)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for r, row in enumerate(pool.map(one_round, range(rounds))):
                estimates[r] = row
    else:
        for r in range(rounds):
            estimates[r] = one_round(r)

    stats: dict[str, EstimatorStats] = {}
    for j, label in enumerate(labels):
        col = estimates[:, j]
        bias, variance, mse = summarize(col, beta_true)
        failures = int(np.count_nonzero(~np.isfinite(col)))
        stats[label] = EstimatorStats(
            bias=bias, variance=variance, mse=mse, failures=failures
        )
    return MonteCarloSummary(
        design_label=repr(design),
        labels=labels,
        stats=stats,
        rounds=rounds,
        base_seed=int(base_seed),
        beta_true=beta_true,
        notes=notes,
        estimates=estimates if keep_estimates else None,
    )


@dataclass(frozen=True)
class DensityTable:
    """Shared-bin histogram of per-round estimates, one count row per bin.

    ``edges`` has ``bins + 1`` entries; column ``counts[label][i]`` is the
    number of finite estimates of ``label`` in ``[edges[i], edges[i+1])``
    (last bin closed on the right).
    """

    edges: np.ndarray
    counts: dict[str, np.ndarray]


def density_export(summary: MonteCarloSummary, bins: int = 50) -> DensityTable:
    """Bin every estimator's kept estimates over one pooled range.

    Parameters
    ----------
    summary : MonteCarloSummary
        Must come from a run with ``keep_estimates=True``.
    bins : int, optional
        Number of equal-width bins spanning the pooled finite range of
        all estimators.

    Returns
    -------
    DensityTable

    Raises
    ------
    ValueError
        If the summary kept no estimates, no estimate is finite, or
        ``bins < 1``.
    """
    if summary.estimates is None:
        raise ValueError(
            "summary holds no per-round estimates; rerun with "
            "keep_estimates=True"
        )
    bins = int(bins)
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    pooled = summary.estimates[np.isfinite(summary.estimates)]
    if pooled.size == 0:
        raise ValueError("no finite estimates to bin")
    lo = float(pooled.min())
    hi = float(pooled.max())
    if lo == hi:
        lo -= 0.5
        hi += 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts = {}
    for j, label in enumerate(summary.labels):
        col = summary.estimates[:, j]
        counts[label] = np.histogram(col[np.isfinite(col)], bins=edges)[0]
    return DensityTable(edges=edges, counts=counts)
