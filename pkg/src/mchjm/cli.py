"""Command-line entry point.

Subcommands: transform, estimate, pca, forecast, backtest, rolling,
make-fixture. Exit codes: 0 ok, 1 input/configuration error, 2 numerical
failure. Heavy imports happen after --threads is applied so the BLAS thread
count actually takes effect.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are input errors -> exit 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mchjm", description=__doc__)
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/OpenMP threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="YAML run config")
        sp.add_argument("--input", default=None, help="override input history CSV")
        sp.add_argument("--output-dir", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--drift-mode", default=None,
                        choices=["exact-recursion", "constant-drift"])

    common(sub.add_parser("transform", help="yields -> forwards / FRA files"))

    sp = sub.add_parser("estimate", help="fit the most recent window")
    common(sp)
    sp.add_argument("--gamma-tol", type=float, default=None)
    sp.add_argument("--n-boot", type=int, default=None,
                    help="bootstrap replicas (0 skips the bootstrap)")
    sp.add_argument("--window-length", type=int, default=None)

    sp = sub.add_parser("pca", help="eigenvalues / loadings of the fitted covariance")
    common(sp)
    sp.add_argument("--pca-threshold", type=float, default=None)
    sp.add_argument("--window-length", type=int, default=None)

    sp = sub.add_parser("forecast", help="confidence envelopes from the last window")
    common(sp)
    sp.add_argument("--n-paths", type=int, default=None)
    sp.add_argument("--window-length", type=int, default=None)

    sp = sub.add_parser("backtest", help="coverage tests from envelopes or counts")
    common(sp, need_config=False)
    sp.add_argument("--counts", default=None,
                    help="counts-only mode: CSV with bucket,coverage,n1,n_obs")
    sp.add_argument("--envelopes-dir", default=None,
                    help="directory of envelope CSVs from a previous run")

    sp = sub.add_parser("rolling", help="full rolling estimate/forecast/backtest sweep")
    common(sp)
    sp.add_argument("--window-length", type=int, default=None)
    sp.add_argument("--n-paths", type=int, default=None)
    sp.add_argument("--gamma-tol", type=float, default=None)

    sp = sub.add_parser("make-fixture", help="write a synthetic yield history CSV")
    sp.add_argument("--weeks", type=int, default=400)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", default="fixture_history.csv")
    sp.add_argument("--config-out", default=None,
                    help="also write a matching run config YAML")
    return p


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load(args):
    from . import data_io

    overrides = {
        "input": args.input,
        "output_dir": args.output_dir,
        "seed": args.seed,
        "drift_mode": args.drift_mode,
    }
    for name in ("gamma_tol", "n_boot", "window_length", "n_paths",
                 "pca_threshold"):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    config = data_io.load_config(args.config, overrides)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_io.dump_resolved_config(config, out / "resolved_config.yaml")
    return config, out


def _states(config):
    from . import data_io

    sys_ = data_io.build_system(config)
    histories = data_io.load_history(config.input, config)
    states = data_io.histories_to_states(sys_, histories, config)
    return sys_, histories, states


def _last_window_fit(sys_, states, config):
    import numpy as np

    from .dynamics import LambdaBlocks
    from .estimation import EstimationWindow, fit

    if len(states) < config.window_length + 1:
        raise ValueError(
            f"history has {len(states)} sampled rows; "
            f"window length {config.window_length} needs at least "
            f"{config.window_length + 1}"
        )
    values = np.vstack([s.values for s in states])
    A = sys_.full_transition_matrix()
    y_all = values[1:] - values[:-1] @ A.T
    window = EstimationWindow(y_series=y_all[-config.window_length:], sys=sys_)
    blocks = LambdaBlocks.for_system(sys_, K_s=config.K_s)
    result = fit(window, blocks, gamma_tol=config.gamma_tol,
                 max_iters=config.max_iters)
    return window, result


def _state_labels(sys_, config):
    labels = []
    grids = [sys_.discount_grid] + [g for _, g in sys_.tenor_specs]
    for cid, grid in zip(config.curve_ids, grids):
        labels += [f"{cid}:{lbl}" for lbl in grid.bucket_labels()]
    return labels


def cmd_transform(args) -> int:
    import pandas as pd

    from . import data_io
    from .curves import tenor_yields_to_fra, yields_to_forwards

    config, out = _load(args)
    sys_ = data_io.build_system(config)
    histories = data_io.load_history(config.input, config)

    for i, spec in enumerate(config.curves):
        hist = histories[spec.id]
        rows = []
        if spec.tenor == 0.0:
            kind, ops = "forward", sys_.spline[0]
            conv = lambda sn: yields_to_forwards(sn, ops)  # noqa: E731
        else:
            kind, ops = "fra", sys_.spline[i]
            tenor, grid = sys_.tenor_specs[i - 1]
            conv = lambda sn: tenor_yields_to_fra(sn, tenor, grid, ops)  # noqa: E731
        labels = hist.grid.bucket_labels()
        for sn in hist.snapshots:
            v = conv(sn).values
            rows += [
                (sn.date.isoformat(), spec.id, lbl, val)
                for lbl, val in zip(labels, v)
            ]
        df = pd.DataFrame(rows, columns=["date", "curve_id", "tenor_label", kind])
        dest = out / f"{kind}_{spec.id}.csv"
        df.to_csv(dest, index=False, float_format=data_io.FLOAT_FMT)
        print(f"wrote {dest}")
    return 0


def cmd_estimate(args) -> int:
    import numpy as np
    import pandas as pd

    from . import data_io
    from .estimation import bootstrap_errors

    config, out = _load(args)
    sys_, _, states = _states(config)
    window, result = _last_window_fit(sys_, states, config)
    if config.n_boot > 0 and result.converged:
        result = bootstrap_errors(
            window, result, n_boot=config.n_boot, seed=config.seed,
            gamma_tol=config.gamma_tol, max_iters=config.max_iters,
        )

    labels = _state_labels(sys_, config)
    blocks = result.params.blocks
    names = blocks.labels() + [f"omega[{lbl}]" for lbl in labels]
    values = np.concatenate([result.params.lam_blocks, result.params.omega])
    se = bias = None
    if result.std_errors is not None:
        se = np.concatenate([result.std_errors["lambda"],
                             result.std_errors["omega"]])
        bias = np.concatenate([result.bias["lambda"], result.bias["omega"]])
    df = pd.DataFrame({"name": names, "value": values})
    if se is not None:
        df["std_error"] = se
        df["bias"] = bias
    df.to_csv(out / "estimate_params.csv", index=False,
              float_format=data_io.FLOAT_FMT)
    data_io.write_matrix_csv(out / "estimate_gamma.csv", result.params.gamma,
                             columns=labels)

    lines = [
        f"window length      : {window.L}",
        f"negative log-lik   : {result.neg_log_lik:.6f}",
        f"sweeps             : {result.n_iters}",
        f"converged          : {result.converged}",
        f"bootstrap replicas : {result.n_boot}",
        "",
    ]
    for i, name in enumerate(blocks.labels()):
        line = f"{name:14s} = {result.params.lam_blocks[i]: .6f}"
        if result.std_errors is not None:
            sd = result.std_errors["lambda"][i]
            star = " (*)" if abs(result.params.lam_blocks[i]) > 2 * sd else ""
            line += f"  +/- {sd:.6f}{star}"
        lines.append(line)
    (out / "estimate.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_pca(args) -> int:
    import numpy as np

    from . import data_io
    from .pca import decompose, select_components

    config, out = _load(args)
    sys_, _, states = _states(config)
    _, result = _last_window_fit(sys_, states, config)
    sig = result.params.sigma()
    res = select_components(decompose(sig @ sig.T), config.pca_threshold)

    total = res.eigenvalues.sum()
    cum = np.cumsum(res.eigenvalues) / total if total > 0 else res.eigenvalues
    data_io.write_matrix_csv(
        out / "pca_eigenvalues.csv",
        np.column_stack([res.eigenvalues, cum]),
        columns=["eigenvalue", "cumulative_fraction"],
        index=np.arange(1, res.D + 1),
        index_label="component",
    )
    labels = _state_labels(sys_, config)
    data_io.write_matrix_csv(
        out / "pca_loadings.csv",
        res.W,
        columns=[f"W{j + 1}" for j in range(res.F)],
        index=labels,
        index_label="bucket",
    )
    print(f"F = {res.F} components explain {100 * res.phi:.2f}% "
          f"(threshold {100 * config.pca_threshold:g}%)")
    return 0


def cmd_forecast(args) -> int:
    import numpy as np
    import pandas as pd

    from . import data_io, plots
    from .estimation import residuals
    from .scenario import (
        ForecastSpec,
        envelope_from_ensemble,
        envelope_from_moments,
        forecast_yields_moments,
        gaussian_moments,
        simulate_paths,
    )

    config, out = _load(args)
    sys_, _, states = _states(config)
    window, result = _last_window_fit(sys_, states, config)
    params = result.params
    state = states[-1]
    labels = _state_labels(sys_, config)
    eta_hat = residuals(window, params)

    rows = []
    for horizon in config.horizons:
        moments = gaussian_moments(sys_, params, state, horizon,
                                   config.drift_mode)
        bands = {}
        for method in config.methods:
            for p in config.coverage:
                if method == "gaussian-closed-form":
                    env = envelope_from_moments(*moments, p, method)
                    bands[p] = (env.lower, env.upper)
                else:
                    spec = ForecastSpec(
                        horizon_steps=horizon, n_paths=config.n_paths,
                        coverage=config.coverage, method=method,
                        drift_mode=config.drift_mode,
                        seed=config.seed + horizon,
                    )
                    ens = simulate_paths(
                        sys_, params, state, spec,
                        residual_pool=eta_hat if method == "bootstrap" else None,
                    )
                    env = envelope_from_ensemble(ens, p, method)
                for j, lbl in enumerate(labels):
                    rows.append((method, horizon, p, lbl, env.lower[j],
                                 env.upper[j], env.mean[j], env.sd[j]))
        plots.plot_envelope_fan(
            np.concatenate([sys_.discount_grid.s]
                           + [g.s for _, g in sys_.tenor_specs]),
            moments[0], bands, current=state.values,
            title=f"state forecast, horizon {horizon} steps",
            path=out / "figures" / f"forecast_h{horizon}.svg",
        )
        ym, yc = forecast_yields_moments(*moments, sys_.spline[0])
        ybands = {
            p: (envelope_from_moments(ym, yc, p).lower,
                envelope_from_moments(ym, yc, p).upper)
            for p in config.coverage
        }
        plots.plot_envelope_fan(
            sys_.discount_grid.s, ym, ybands,
            title=f"discounting ZC yield forecast, horizon {horizon} steps",
            ylabel="yield",
            path=out / "figures" / f"forecast_yields_h{horizon}.svg",
        )
    df = pd.DataFrame(rows, columns=["method", "horizon_steps", "coverage",
                                     "bucket", "lower", "upper", "mean", "sd"])
    df.to_csv(out / "envelopes.csv", index=False,
              float_format=data_io.FLOAT_FMT)
    print(f"wrote {out / 'envelopes.csv'} and figures/")
    return 0


def _counts_backtest(path: str, out: Path | None) -> int:
    import pandas as pd

    from . import data_io
    from .backtest import kupiec_lr, significance_flag

    df = pd.read_csv(path)
    needed = {"bucket", "coverage", "n1", "n_obs"}
    if not needed <= set(df.columns):
        raise ValueError(f"counts file needs columns {sorted(needed)}")
    lrs, pvals, flags = [], [], []
    for _, row in df.iterrows():
        lr, pval = kupiec_lr(int(row["n1"]), int(row["n_obs"]),
                             float(row["coverage"]))
        lrs.append(lr)
        pvals.append(100.0 * pval)
        flags.append(significance_flag(lr))
    df["lr_uc"] = lrs
    df["p_value_pct"] = pvals
    df["flag"] = flags
    if out is not None:
        dest = out / "coverage_report.csv"
        df.to_csv(dest, index=False, float_format=data_io.FLOAT_FMT)
        print(f"wrote {dest}")
    with pd.option_context("display.width", 200, "display.max_rows", None):
        print(df.to_string(index=False,
                           float_format=lambda v: f"{v:.2f}"))
    return 0


def cmd_backtest(args) -> int:
    import numpy as np
    import pandas as pd

    from . import data_io
    from .backtest import CoverageReport, count_exceedances
    from .scenario import ForecastEnvelope

    out = None
    if args.config:
        config, out = _load(args)
    if args.counts:
        return _counts_backtest(args.counts, out)
    if not args.envelopes_dir or not args.config:
        raise ValueError("backtest needs --counts, or --envelopes-dir with --config")

    sys_, _, states = _states(config)
    values = np.vstack([s.values for s in states])
    date_index = {s.date.isoformat(): i for i, s in enumerate(states)}
    labels = _state_labels(sys_, config)

    frames = [pd.read_csv(f) for f in sorted(Path(args.envelopes_dir).glob("*.csv"))]
    if not frames:
        raise ValueError(f"no envelope CSVs under {args.envelopes_dir}")
    df = pd.concat(frames, ignore_index=True)
    reports = []
    for (method, horizon), sub in df.groupby(["method", "horizon_steps"]):
        report = CoverageReport(method=method, horizon_steps=int(horizon))
        for p, subp in sub.groupby("coverage"):
            envs, realized = [], []
            for date, win in subp.groupby("window_end_date", sort=True):
                t = date_index.get(date)
                if t is None or t + int(horizon) >= len(states):
                    continue
                win = win.set_index("bucket").loc[labels]
                envs.append(ForecastEnvelope(
                    lower=win["lower"].to_numpy(),
                    upper=win["upper"].to_numpy(),
                    mean=win["mean"].to_numpy(),
                    sd=win["sd"].to_numpy(),
                    coverage=float(p), method=method,
                ))
                realized.append(values[t + int(horizon)])
            if not envs:
                continue
            for series in count_exceedances(envs, np.vstack(realized),
                                            labels, int(horizon)):
                report.add(series)
        if report.rows:
            reports.append(report)
    _emit_reports(reports, out)
    return 0


def _emit_reports(reports, out: Path | None) -> None:
    import pandas as pd

    from . import data_io

    rows = []
    text = []
    for rep in reports:
        for r in rep.rows:
            rows.append({"method": rep.method,
                         "horizon_steps": rep.horizon_steps, **r})
        text.append(f"== {rep.method}, horizon {rep.horizon_steps} steps ==")
        text.append(rep.formatted_table())
        text.append("")
    body = "\n".join(text)
    print(body)
    if out is not None:
        pd.DataFrame(rows).to_csv(out / "coverage_report.csv", index=False,
                                  float_format=data_io.FLOAT_FMT)
        (out / "coverage_report.txt").write_text(body)
        print(f"wrote {out / 'coverage_report.csv'}")


def cmd_rolling(args) -> int:
    import numpy as np
    import pandas as pd

    from . import data_io, plots
    from .backtest import RollingConfig, run_rolling

    config, out = _load(args)
    sys_, _, states = _states(config)
    rc = RollingConfig(
        window_length=config.window_length,
        horizons=config.horizons,
        coverage=config.coverage,
        methods=config.methods,
        n_paths=config.n_paths,
        pca_threshold=config.pca_threshold,
        K_s=config.K_s,
        gamma_tol=config.gamma_tol,
        max_iters=config.max_iters,
        drift_mode=config.drift_mode,
        seed=config.seed,
        stride=config.window_stride,
    )
    result = run_rolling(sys_, states, rc, curve_ids=config.curve_ids)
    if result.failed_windows:
        logger.warning("%d windows failed to fit", result.failed_windows)

    dates = [d.isoformat() for d in result.window_end_dates]
    labels = result.bucket_labels
    lam = result.parameter_history["lambda"]
    lam_labels = (["lambda_s", "lambda_l"]
                  + [f"lambda_{cid}" for cid in config.curve_ids[1:]])
    params_mat = np.column_stack([
        lam,
        result.parameter_history["omega"],
        result.parameter_history["neg_log_lik"],
        result.parameter_history["converged"].astype(int),
    ])
    data_io.write_matrix_csv(
        out / "params.csv", params_mat,
        columns=lam_labels + [f"omega[{lbl}]" for lbl in labels]
        + ["neg_log_lik", "converged"],
        index=dates, index_label="window_end_date",
    )
    data_io.write_matrix_csv(
        out / "pca.csv",
        np.column_stack([result.pca_history["F"], result.pca_history["phi"]]),
        columns=["F", "explained_fraction"],
        index=dates, index_label="window_end_date",
    )

    env_dir = out / "envelopes"
    env_dir.mkdir(exist_ok=True)
    for (method, horizon, p), envs in sorted(result.envelopes.items()):
        rows = []
        for date, env in zip(dates, envs):
            for j, lbl in enumerate(labels):
                rows.append((method, horizon, p, date, lbl, env.lower[j],
                             env.upper[j], env.mean[j], env.sd[j]))
        df = pd.DataFrame(rows, columns=[
            "method", "horizon_steps", "coverage", "window_end_date",
            "bucket", "lower", "upper", "mean", "sd",
        ])
        df.to_csv(env_dir / f"{method}_h{horizon}_p{int(round(1000 * p))}.csv",
                  index=False, float_format=data_io.FLOAT_FMT)

    _emit_reports(result.reports, out)

    plot_dir = out / "plotdata"
    plot_dir.mkdir(exist_ok=True)
    data_io.write_matrix_csv(plot_dir / "lambda_history.csv", lam,
                             columns=lam_labels, index=dates,
                             index_label="window_end_date")
    data_io.write_matrix_csv(
        plot_dir / "factor_history.csv",
        np.column_stack([result.pca_history["F"], result.pca_history["phi"]]),
        columns=["F", "explained_fraction"],
        index=dates, index_label="window_end_date",
    )
    for horizon, realized in sorted(result.realized.items()):
        data_io.write_matrix_csv(plot_dir / f"realized_h{horizon}.csv",
                                 realized, columns=labels)

    fig_dir = out / "figures"
    plots.plot_parameter_history(result.window_end_dates, lam, lam_labels,
                                 title="risk-premium estimates",
                                 path=fig_dir / "lambda_history.svg")
    plots.plot_factor_history(result.window_end_dates,
                              result.pca_history["F"],
                              result.pca_history["phi"],
                              path=fig_dir / "factor_history.svg")
    show_buckets = [0, sys_.K]  # first discounting and first tenor bucket
    for (method, horizon, p), series_list in sorted(result.exceedances.items()):
        envs = result.envelopes[(method, horizon, p)]
        n = len(series_list[0].below)
        realized = result.realized[horizon]
        for j in show_buckets:
            if j >= len(labels):
                continue
            plots.plot_coverage_series(
                result.window_end_dates[:n],
                np.array([e.lower[j] for e in envs[:n]]),
                np.array([e.upper[j] for e in envs[:n]]),
                realized[:, j],
                title=f"{labels[j]}  {method}  h={horizon}  p={p:g}",
                path=fig_dir
                / f"coverage_{method}_h{horizon}_p{int(round(1000 * p))}_"
                  f"{labels[j].replace(':', '_')}.svg",
            )
    print(f"rolling sweep done: {len(dates)} windows, "
          f"{result.failed_windows} failed; artifacts under {out}")
    return 0


def cmd_make_fixture(args) -> int:
    from . import data_io, fixture

    sys_ = fixture.benchmark_system()
    params = fixture.default_true_params(sys_)
    states = fixture.simulate_states(sys_, params, n_steps=args.weeks,
                                     seed=args.seed)
    histories = fixture.states_to_yield_histories(
        sys_, states, curve_ids=["EONIA", "EUR3M"]
    )
    data_io.save_history(args.output, histories)
    print(f"wrote {args.output} ({args.weeks + 1} weekly rows per curve)")
    if args.config_out:
        cfg = {
            "curves": [
                {"id": "EONIA", "tenor": 0, "grid": list(fixture.EONIA_LABELS)},
                {"id": "EUR3M", "tenor": "3m",
                 "grid": list(fixture.EUR3M_LABELS)},
            ],
            "input": str(args.output),
            "dt": 1.0 / 52.0,
            "sampling_stride": 1,
            "seed": args.seed,
        }
        import yaml

        Path(args.config_out).write_text(yaml.safe_dump(cfg, sort_keys=False))
        print(f"wrote {args.config_out}")
    return 0


_COMMANDS = {
    "transform": cmd_transform,
    "estimate": cmd_estimate,
    "pca": cmd_pca,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "rolling": cmd_rolling,
    "make-fixture": cmd_make_fixture,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _apply_threads(getattr(args, "threads", None))
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"mchjm {args.command}: input error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, RuntimeError, Exception) as exc:  # numerical failure
        import numpy as np

        if isinstance(exc, (np.linalg.LinAlgError, FloatingPointError,
                            RuntimeError, ArithmeticError)):
            print(f"mchjm {args.command}: numerical failure: {exc}",
                  file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
