"""Rolling out-of-sample harness and the unconditional coverage test."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import CurveSystem, LambdaBlocks, StateVector, compute_y
from .estimation import EstimationWindow, fit, residuals
from .pca import decompose, select_components
from .scenario import (
    ForecastEnvelope,
    ForecastSpec,
    envelope_from_ensemble,
    envelope_from_moments,
    gaussian_moments,
    simulate_paths,
)

__all__ = [
    "kupiec_lr",
    "significance_flag",
    "chi2_1_sf",
    "ExceedanceSeries",
    "CoverageReport",
    "count_exceedances",
    "RollingConfig",
    "RollingResult",
    "run_rolling",
]

logger = logging.getLogger(__name__)

CHI2_1_CRIT_95 = 3.8414588206941236
CHI2_1_CRIT_99 = 6.6348966010212145


def chi2_1_sf(x: float) -> float:
    """Survival function of chi-square with one degree of freedom."""
    if x < 0.0:
        raise ValueError("chi-square statistic must be nonnegative")
    return math.erfc(math.sqrt(0.5 * x))


def kupiec_lr(n1: int, n_obs: int, p: float) -> tuple[float, float]:
    """Unconditional-coverage likelihood ratio and its chi2(1) p-value.

    Tests that the exceedance frequency n1/n_obs equals 1 - p, with the
    0 * ln 0 = 0 convention at the boundary counts.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("coverage p must be in (0, 1)")
    if not 0 <= n1 <= n_obs or n_obs <= 0:
        raise ValueError("need 0 <= n1 <= n_obs with n_obs > 0")
    n0 = n_obs - n1
    pi1 = n1 / n_obs
    pi0 = n0 / n_obs
    lr = 0.0
    if n1 > 0:
        lr += n1 * math.log(pi1 / (1.0 - p))
    if n0 > 0:
        lr += n0 * math.log(pi0 / p)
    lr = max(2.0 * lr, 0.0)
    return lr, chi2_1_sf(lr)


def significance_flag(lr: float) -> str:
    if lr > CHI2_1_CRIT_99:
        return "**"
    if lr > CHI2_1_CRIT_95:
        return "*"
    return ""


@dataclass(frozen=True)
class ExceedanceSeries:
    """Exceedance indicators for one bucket / horizon / coverage level."""

    bucket: str
    horizon_steps: int
    coverage: float
    below: np.ndarray  # realized under the lower bound
    above: np.ndarray  # realized over the upper bound

    def __post_init__(self) -> None:
        below = np.asarray(self.below, dtype=bool)
        above = np.asarray(self.above, dtype=bool)
        if below.shape != above.shape:
            raise ValueError("below/above must align")
        object.__setattr__(self, "below", below)
        object.__setattr__(self, "above", above)

    @property
    def indicators(self) -> np.ndarray:
        return self.below | self.above

    @property
    def n_obs(self) -> int:
        return int(self.below.size)

    @property
    def n1(self) -> int:
        return int(self.indicators.sum())

    @property
    def n0(self) -> int:
        return self.n_obs - self.n1


@dataclass
class CoverageReport:
    """Per-bucket Kupiec statistics for one method / horizon."""

    method: str
    horizon_steps: int
    rows: list[dict] = field(default_factory=list)

    def add(self, series: ExceedanceSeries) -> None:
        lr, pval = kupiec_lr(series.n1, series.n_obs, series.coverage)
        self.rows.append(
            {
                "bucket": series.bucket,
                "coverage": series.coverage,
                "n_obs": series.n_obs,
                "n1": series.n1,
                "lr_uc": lr,
                "p_value_pct": 100.0 * pval,
                "flag": significance_flag(lr),
            }
        )

    def formatted_table(self) -> str:
        """Text table with one bucket per line, columns per coverage level."""
        levels = sorted({r["coverage"] for r in self.rows})
        buckets = []
        for r in self.rows:
            if r["bucket"] not in buckets:
                buckets.append(r["bucket"])
        by_key = {(r["bucket"], r["coverage"]): r for r in self.rows}
        head = "bucket"
        for p in levels:
            head += f" | n1  LR_UC   p-value%  (p={p:g})"
        lines = [head, "-" * len(head)]
        for b in buckets:
            line = f"{b:>6}"
            for p in levels:
                r = by_key.get((b, p))
                if r is None:
                    line += " | " + " " * 28
                    continue
                stat = f"{r['lr_uc']:.2f}"
                if r["flag"]:
                    stat += f" ({r['flag']})"
                line += f" | {r['n1']:>3} {stat:>10} {r['p_value_pct']:>8.2f}"
            lines.append(line)
        return "\n".join(lines)


def count_exceedances(
    envelopes: list[ForecastEnvelope],
    realized: np.ndarray,
    bucket_labels: list[str],
    horizon_steps: int,
) -> list[ExceedanceSeries]:
    """Exceedance series per bucket from aligned envelopes and realizations.

    realized has one row per forecast window, in the same order as envelopes.
    """
    realized = np.asarray(realized, dtype=float)
    if realized.shape[0] != len(envelopes):
        raise ValueError("one realized row per envelope is required")
    if realized.shape[1] != len(bucket_labels):
        raise ValueError("bucket labels do not match the realized dimension")
    lower = np.vstack([e.lower for e in envelopes])
    upper = np.vstack([e.upper for e in envelopes])
    coverage = envelopes[0].coverage
    if any(e.coverage != coverage for e in envelopes):
        raise ValueError("mixed coverage levels in one exceedance count")
    below = realized < lower
    above = realized > upper
    return [
        ExceedanceSeries(
            bucket=lbl,
            horizon_steps=horizon_steps,
            coverage=coverage,
            below=below[:, j],
            above=above[:, j],
        )
        for j, lbl in enumerate(bucket_labels)
    ]


@dataclass(frozen=True)
class RollingConfig:
    window_length: int = 156  # y observations per estimation window
    horizons: tuple[int, ...] = (1, 12, 52)
    coverage: tuple[float, ...] = (0.95, 0.99)
    methods: tuple[str, ...] = ("gaussian-closed-form", "bootstrap")
    n_paths: int = 10_000
    pca_threshold: float = 0.95
    K_s: int = 2
    gamma_tol: float = 1e-4
    max_iters: int = 200
    drift_mode: str = "exact-recursion"
    seed: int = 0
    stride: int = 1  # window ends every `stride` sampled observations


@dataclass
class RollingResult:
    bucket_labels: list[str]
    window_end_dates: list
    parameter_history: dict[str, np.ndarray]
    pca_history: dict[str, np.ndarray]
    envelopes: dict[tuple[str, int, float], list[ForecastEnvelope]]
    realized: dict[int, np.ndarray]
    exceedances: dict[tuple[str, int, float], list[ExceedanceSeries]]
    reports: list[CoverageReport]
    failed_windows: int


def _state_labels(sys: CurveSystem, curve_ids: list[str] | None) -> list[str]:
    names = curve_ids or ["f"] + [f"tenor{i}" for i in range(1, len(sys.block_sizes))]
    labels = []
    grids = [sys.discount_grid] + [g for _, g in sys.tenor_specs]
    for name, grid in zip(names, grids):
        labels += [f"{name}:{lbl}" for lbl in grid.bucket_labels()]
    return labels


def run_rolling(
    sys: CurveSystem,
    states: list[StateVector],
    config: RollingConfig,
    curve_ids: list[str] | None = None,
) -> RollingResult:
    """Windowed estimate-forecast-compare sweep over a sampled state series.

    states are weekly-sampled stacked state vectors. Each window of
    window_length consecutive increments is fitted, forecasts are issued at
    every configured horizon and method, and exceedances are counted against
    the realizations available inside the series.
    """
    W = config.window_length
    if len(states) < W + 1 + max(config.horizons):
        raise ValueError(
            "history too short for the window length and the longest horizon"
        )
    values = np.vstack([s.values for s in states])
    A = sys.full_transition_matrix()
    y_all = values[1:] - values[:-1] @ A.T
    blocks = LambdaBlocks.for_system(sys, K_s=config.K_s)
    labels = _state_labels(sys, curve_ids)

    window_ends = list(range(W, len(states) - 1 + 1, config.stride))
    # a window ending at state index t uses y rows [t - W, t)
    lam_hist, omega_hist, nll_hist, conv_hist = [], [], [], []
    gamma_entries: list[np.ndarray] = []
    pca_F, pca_phi = [], []
    env: dict[tuple[str, int, float], list[ForecastEnvelope]] = {}
    env_end_idx: dict[tuple[str, int, float], list[int]] = {}
    end_dates = []
    failed = 0

    for wi, t in enumerate(window_ends):
        y_win = y_all[t - W : t]
        window = EstimationWindow(y_series=y_win, sys=sys)
        try:
            result = fit(
                window, blocks, gamma_tol=config.gamma_tol, max_iters=config.max_iters
            )
        except (np.linalg.LinAlgError, ValueError) as exc:
            logger.warning("window ending at index %d failed to fit: %s", t, exc)
            failed += 1
            continue
        params = result.params
        end_dates.append(states[t].date)
        lam_hist.append(params.lam_blocks)
        omega_hist.append(params.omega)
        nll_hist.append(result.neg_log_lik)
        conv_hist.append(result.converged)
        gamma_entries.append(params.gamma[np.triu_indices(sys.D, k=1)])

        sig = params.sigma()
        pres = select_components(decompose(sig @ sig.T), config.pca_threshold)
        pca_F.append(pres.F)
        pca_phi.append(pres.phi)

        eta_hat = residuals(window, params)
        state_t = states[t]
        for horizon in config.horizons:
            moments = None
            for method in config.methods:
                if method == "gaussian-closed-form":
                    if moments is None:
                        moments = gaussian_moments(
                            sys, params, state_t, horizon, config.drift_mode
                        )
                    per_p = {
                        p: envelope_from_moments(*moments, p, method)
                        for p in config.coverage
                    }
                else:
                    spec = ForecastSpec(
                        horizon_steps=horizon,
                        n_paths=config.n_paths,
                        coverage=config.coverage,
                        method=method,
                        drift_mode=config.drift_mode,
                        seed=config.seed + 1000 * wi + horizon,
                    )
                    ens = simulate_paths(
                        sys, params, state_t, spec,
                        residual_pool=eta_hat if method == "bootstrap" else None,
                    )
                    per_p = {
                        p: envelope_from_ensemble(ens, p, method)
                        for p in config.coverage
                    }
                for p, e in per_p.items():
                    env.setdefault((method, horizon, p), []).append(e)
                    env_end_idx.setdefault((method, horizon, p), []).append(t)

    realized: dict[int, np.ndarray] = {}
    exceed: dict[tuple[str, int, float], list[ExceedanceSeries]] = {}
    reports: list[CoverageReport] = []
    for (method, horizon, p), env_list in env.items():
        idx = env_end_idx[(method, horizon, p)]
        keep = [i for i, t in enumerate(idx) if t + horizon < len(states)]
        if not keep:
            continue
        rl = np.vstack([values[idx[i] + horizon] for i in keep])
        realized[horizon] = rl
        series = count_exceedances(
            [env_list[i] for i in keep], rl, labels, horizon
        )
        exceed[(method, horizon, p)] = series
    for method in config.methods:
        for horizon in config.horizons:
            report = CoverageReport(method=method, horizon_steps=horizon)
            for p in config.coverage:
                for s in exceed.get((method, horizon, p), []):
                    report.add(s)
            if report.rows:
                reports.append(report)

    return RollingResult(
        bucket_labels=labels,
        window_end_dates=end_dates,
        parameter_history={
            "lambda": np.array(lam_hist),
            "omega": np.array(omega_hist),
            "neg_log_lik": np.array(nll_hist),
            "converged": np.array(conv_hist, dtype=bool),
            "gamma_upper": np.array(gamma_entries),
        },
        pca_history={"F": np.array(pca_F), "phi": np.array(pca_phi)},
        envelopes=env,
        realized=realized,
        exceedances=exceed,
        reports=reports,
        failed_windows=failed,
    )
