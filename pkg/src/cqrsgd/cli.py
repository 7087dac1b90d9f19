"""Command-line interface: generate data, train, calibrate, predict,
sweep, fit scaling laws, and evaluate bounds.

Artifacts
---------
* dataset CSV: feature columns then a final label column (the loader
  treats the last column as the label, all others as continuous);
* model JSON: {"gamma": ..., "theta": [...], "meta": {...}};
* calibration JSON: {"alpha": ..., "m": ..., "q_hat": ...};
* records CSV with fixed column order
  method,n,m,alpha,trial,delta,coverage,mean_length,q_hat,regime,seed;
* fit-summary JSON: {"mode": ..., "slope": ..., "intercept": ...,
  "r_squared": ..., "point_count": ...}.

Floats in JSON use Python's shortest round-trip representation (at most
17 significant digits), so reading a file back reproduces values
bit-exactly. All outputs are deterministic functions of the config plus
the master seed; the ``--workers`` flag changes only wall-clock time.

Exit codes: 0 success, 2 config error, 3 data error, 4 infeasible
calibration, 1 internal error. Each failure prints a one-line
diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, bounds, conformal, dataio, synthdata
from .analysis import ExperimentRecord, SweepPlan
from .conformal import CalibrationInfeasibleError, CqrModelPair
from .core import Dataset, LinearQuantileModel
from .dataio import RowError, SchemaError, TabularSchema
from .optimizer import SgdConfig, Schedule, sgd_train, successive_halving_tune

__all__ = ["main", "RECORD_COLUMNS", "write_records_csv", "read_records_csv"]

RECORD_COLUMNS = (
    "method",
    "n",
    "m",
    "alpha",
    "trial",
    "delta",
    "coverage",
    "mean_length",
    "q_hat",
    "regime",
    "seed",
)


class ConfigError(Exception):
    """Bad configuration or command arguments (exit 2)."""


class DataError(Exception):
    """Missing or unparseable input data (exit 3)."""


# ---------------------------------------------------------------------------
# artifact IO
# ---------------------------------------------------------------------------


def write_records_csv(records, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.method,
                    r.n,
                    r.m,
                    repr(r.alpha),
                    r.trial,
                    repr(r.delta),
                    repr(r.coverage),
                    repr(r.mean_length),
                    repr(r.q_hat),
                    r.regime,
                    r.seed,
                ]
            )


def read_records_csv(path) -> list[ExperimentRecord]:
    import csv

    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RECORD_COLUMNS:
            raise DataError(f"{path}: expected record columns {','.join(RECORD_COLUMNS)}")
        for row in reader:
            records.append(
                ExperimentRecord(
                    method=row["method"],
                    n=int(row["n"]),
                    m=int(row["m"]),
                    alpha=float(row["alpha"]),
                    trial=int(row["trial"]),
                    delta=float(row["delta"]),
                    coverage=float(row["coverage"]),
                    mean_length=float(row["mean_length"]),
                    q_hat=float(row["q_hat"]),
                    regime=row["regime"],
                    seed=int(row["seed"]),
                )
            )
    return records


def _load_dataset(path) -> Dataset:
    import csv

    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not header or len(header) < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")
    schema = TabularSchema.continuous(header[:-1], header[-1])
    try:
        return dataio.load_csv(path, schema)
    except (SchemaError, RowError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _save_model(model: LinearQuantileModel, path, meta: dict) -> None:
    payload = {"gamma": model.gamma, "theta": [float(v) for v in model.theta], "meta": meta}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _load_model(path) -> LinearQuantileModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return LinearQuantileModel(np.array(payload["theta"], dtype=float), payload["gamma"])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: not a valid model file ({exc})") from exc


def _load_calibration(path) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return {"alpha": float(payload["alpha"]), "m": int(payload["m"]), "q_hat": float(payload["q_hat"])}
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: not a valid calibration file ({exc})") from exc


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

_CONFIG_DEFAULTS: dict[str, dict[str, str]] = {
    "sweep": {
        "method": "cqr",
        "n_grid": "",
        "m_grid": "5000",
        "alpha_grid": "0.01,0.025,0.05,0.075,0.1,0.125,0.15,0.175,0.2",
        "trials": "20",
        "test_size": "2000",
        "oracle_mode": "trained",
        "master_seed": "0",
    },
    "synthetic": {
        "theta0": "",
        "alpha0": "0.005",
        "x_low": "1,1",
        "x_high": "20,20",
    },
    "sgd": {
        "batch_size": "64",
        "epochs": "10",
        "schedule": "constant",
        "rate": "0",
        "projection_radius": "0",
        "tune_grid_min": "1e-5",
        "tune_grid_max": "1",
        "tune_grid_points": "17",
    },
    "output": {
        "records": "records.csv",
        "skipped": "skipped.csv",
    },
}


def _parse_list(text: str, cast):
    return tuple(cast(tok.strip()) for tok in text.split(",") if tok.strip())


def load_config(path: str | None) -> dict[str, dict[str, str]]:
    """Merge an INI file over the defaults; unknown keys are errors."""
    merged = {sec: dict(keys) for sec, keys in _CONFIG_DEFAULTS.items()}
    if path is None:
        return merged
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section in parser.sections():
        if section not in merged:
            raise ConfigError(f"{path}: unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in merged[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
            merged[section][key] = value
    return merged


def _plan_and_spec(cfg, seed_override=None):
    try:
        master_seed = int(seed_override if seed_override is not None else cfg["sweep"]["master_seed"])
        n_grid = _parse_list(cfg["sweep"]["n_grid"], int) or analysis.log_spaced_ints(200, 20000, 8)
        rate = float(cfg["sgd"]["rate"])
        radius = float(cfg["sgd"]["projection_radius"])
        tune_grid = tuple(
            float(c)
            for c in np.geomspace(
                float(cfg["sgd"]["tune_grid_min"]),
                float(cfg["sgd"]["tune_grid_max"]),
                int(cfg["sgd"]["tune_grid_points"]),
            )
        )
        plan = SweepPlan(
            method=cfg["sweep"]["method"],
            n_grid=n_grid,
            m_grid=_parse_list(cfg["sweep"]["m_grid"], int),
            alpha_grid=_parse_list(cfg["sweep"]["alpha_grid"], float),
            trials=int(cfg["sweep"]["trials"]),
            test_size=int(cfg["sweep"]["test_size"]),
            master_seed=master_seed,
            oracle_mode=cfg["sweep"]["oracle_mode"],
            batch_size=int(cfg["sgd"]["batch_size"]),
            epochs=int(cfg["sgd"]["epochs"]),
            projection_radius=None if radius == 0 else radius,
            rate=None if rate == 0 else rate,
            tune_grid=tune_grid,
            schedule_kind=cfg["sgd"]["schedule"],
        )
        theta0_text = cfg["synthetic"]["theta0"].strip()
        alpha0 = float(cfg["synthetic"]["alpha0"])
        if theta0_text:
            spec = synthdata.SyntheticSpec(
                theta0=np.array(_parse_list(theta0_text, float)),
                alpha0=alpha0,
                x_low=np.array(_parse_list(cfg["synthetic"]["x_low"], float)),
                x_high=np.array(_parse_list(cfg["synthetic"]["x_high"], float)),
            )
        else:
            spec = synthdata.draw_spec(master_seed, d=2, alpha0=alpha0)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return plan, spec


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _parse_theta0(text: str | None, seed: int) -> synthdata.SyntheticSpec:
    if text:
        try:
            return synthdata.SyntheticSpec(theta0=np.array(_parse_list(text, float)))
        except ValueError as exc:
            raise ConfigError(f"bad --theta0: {exc}") from exc
    return synthdata.draw_spec(seed)


def cmd_synth(args) -> int:
    spec = _parse_theta0(args.theta0, args.seed)
    data = synthdata.sample(spec, args.count, args.seed)
    dataio.save_csv(data, args.out)
    print(f"wrote {args.count} samples (d={data.d}) to {args.out}")
    return 0


def _train_from_args(data: Dataset, gamma: float, args) -> tuple[LinearQuantileModel, dict]:
    radius = None if args.projection == 0 else args.projection
    if args.rate == 0:
        grid = tuple(float(c) for c in np.geomspace(args.tune_min, args.tune_max, args.tune_points))
        rate = successive_halving_tune(
            data,
            gamma,
            grid,
            budget=len(data),
            seed=args.seed,
            batch_size=args.batch_size,
            epochs=args.epochs,
            projection_radius=radius,
        )
    else:
        rate = args.rate
    cfg = SgdConfig(
        schedule=Schedule(args.schedule, rate),
        batch_size=args.batch_size,
        epochs=args.epochs,
        projection_radius=radius,
        seed=args.seed,
    )
    report = sgd_train(data, gamma, cfg)
    meta = {
        "rate": rate,
        "schedule": args.schedule,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "projection_radius": radius,
        "seed": args.seed,
        "steps": report.steps,
        "final_mean_batch_loss": float(report.mean_batch_loss_trace[-1]),
    }
    return LinearQuantileModel(report.final_theta, gamma), meta


def cmd_train(args) -> int:
    data = _load_dataset(args.data)
    model, meta = _train_from_args(data, args.gamma, args)
    _save_model(model, args.out, meta)
    print(f"trained gamma={args.gamma} model on {len(data)} samples -> {args.out}")
    return 0


def _models_from_args(args, alpha: float | None):
    if args.method == "cqr":
        if not (args.lower and args.upper):
            raise ConfigError("method 'cqr' needs --lower and --upper model files")
        lower, upper = _load_model(args.lower), _load_model(args.upper)
        if alpha is None:
            alpha = 2 * lower.gamma
        return CqrModelPair(lower, upper, alpha)
    if not args.model:
        raise ConfigError("method 'cmr' needs a --model file")
    return _load_model(args.model)


def cmd_calibrate(args) -> int:
    data = _load_dataset(args.data)
    models = _models_from_args(args, args.alpha)
    if args.method == "cqr":
        scores = conformal.cqr_scores(models, data.x, data.y)
    else:
        scores = conformal.cmr_scores(models, data.x, data.y)
    result = conformal.calibrate(scores, args.alpha)
    payload = {"alpha": result.alpha, "m": result.m, "q_hat": result.q_hat}
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"calibrated on {result.m} scores: q_hat={result.q_hat!r} -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    import csv

    data = _load_dataset(args.data)
    calib = _load_calibration(args.calibration)
    models = _models_from_args(args, calib["alpha"])
    if args.method == "cqr":
        lo, hi, empty = conformal.cqr_interval_bounds(models, calib["q_hat"], data.x)
    else:
        lo, hi, empty = conformal.cmr_interval_bounds(models, calib["q_hat"], data.x)
    lengths = conformal.interval_lengths(lo, hi, empty)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lo", "hi", "empty", "length"])
        for i in range(len(data)):
            if empty[i]:
                writer.writerow(["", "", 1, repr(0.0)])
            else:
                writer.writerow([repr(float(lo[i])), repr(float(hi[i])), 0, repr(float(lengths[i]))])
    print(f"wrote {len(data)} intervals ({int(empty.sum())} empty) to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    plan, spec = _plan_and_spec(cfg, seed_override=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = analysis.run_sweep(plan, spec, workers=args.workers)
    records_path = out_dir / cfg["output"]["records"]
    write_records_csv(result.records, records_path)
    if result.skipped:
        import csv

        with open(out_dir / cfg["output"]["skipped"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "m", "alpha", "trial", "reason"])
            for s in result.skipped:
                writer.writerow([s.n, s.m, repr(s.alpha), s.trial, s.reason])
    print(
        f"sweep complete: {len(result.records)} records, "
        f"{len(result.skipped)} skipped -> {records_path}"
    )
    return 0


def _fit_summary(fit, mode: str, extra: dict | None = None) -> dict:
    payload = {
        "mode": mode,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "point_count": fit.point_count,
    }
    if extra:
        payload.update(extra)
    return payload


def cmd_fit(args) -> int:
    import csv

    if args.mode == "loglog":
        try:
            with open(args.records, newline="", encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
            points = [(float(r[args.u_column]), float(r[args.v_column])) for r in rows]
        except OSError as exc:
            raise DataError(f"cannot read {args.records}: {exc}") from exc
        except (KeyError, ValueError) as exc:
            raise DataError(f"{args.records}: {exc}") from exc
        fit = analysis.fit_loglog(points)
        payload = _fit_summary(fit, "loglog", {"u_column": args.u_column, "v_column": args.v_column})
    else:
        records = read_records_csv(args.records)
        if args.mode == "slope-vs-n":
            fit = analysis.slope_vs_n(records, args.alpha, args.m)
            payload = _fit_summary(fit, args.mode, {"alpha": args.alpha, "m": args.m})
        elif args.mode == "intercepts-vs-alpha":
            alphas = sorted({r.alpha for r in records if r.m == args.m})
            fits = [(a, analysis.slope_vs_n(records, a, args.m)) for a in alphas]
            fit = analysis.intercepts_vs_alpha(fits)
            payload = _fit_summary(
                fit,
                args.mode,
                {"m": args.m, "per_alpha_slopes": {repr(a): f.slope for a, f in fits}},
            )
        else:  # inv-nalpha2
            alphas = tuple(float(a) for a in _parse_list(args.alphas, float))
            fit = analysis.slope_vs_inv_nalpha2(records, alphas)
            payload = _fit_summary(fit, args.mode, {"alphas": list(alphas)})
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"{payload['mode']}: slope={fit.slope!r} r2={fit.r_squared:.4f} -> {args.out}")
    return 0


def cmd_bounds(args) -> int:
    if args.spec:
        try:
            payload = json.loads(Path(args.spec).read_text(encoding="utf-8"))
            from .core import DistributionSpec

            dspec = DistributionSpec(**payload)
        except OSError as exc:
            raise DataError(f"cannot read {args.spec}: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise DataError(f"{args.spec}: not a valid distribution spec ({exc})") from exc
    else:
        spec = _parse_theta0(args.theta0, args.seed)
        dspec = synthdata.measure_distribution_spec(spec)
    consts = bounds.constants(dspec, args.alpha, args.n, args.delta)
    feasible = bounds.check_m_condition(consts.H, args.alpha, args.m)
    enforce = not args.no_enforce
    payload = {
        "alpha": args.alpha,
        "n": args.n,
        "m": args.m,
        "H": consts.H,
        "R": consts.R,
        "beta": consts.beta,
        "A": consts.A,
        "eps_n": consts.eps_n,
        "m_condition": feasible,
        "regime": bounds.classify_regime(args.n, args.m, args.alpha),
    }
    if feasible or not enforce:
        payload["cqr_bound"] = bounds.cqr_bound(dspec, args.alpha, args.n, args.m, enforce_condition=False)
        payload["cmr_bound"] = bounds.cmr_bound(dspec, args.alpha, args.n, args.m, enforce_condition=False)
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"bounds at (n={args.n}, m={args.m}, alpha={args.alpha}) -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=0.0, help="learning rate; 0 tunes by successive halving")
    p.add_argument("--schedule", choices=["inverse-time", "constant"], default="inverse-time")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--projection", type=float, default=0.0, help="projection radius; 0 disables")
    p.add_argument("--tune-min", type=float, default=1e-5)
    p.add_argument("--tune-max", type=float, default=1.0)
    p.add_argument("--tune-points", type=int, default=9)


def _add_model_flags(p):
    p.add_argument("--method", choices=["cqr", "cmr"], default="cqr")
    p.add_argument("--lower", help="lower quantile model JSON (cqr)")
    p.add_argument("--upper", help="upper quantile model JSON (cqr)")
    p.add_argument("--model", help="median model JSON (cmr)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqrsgd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta0", help="comma list; omitted means drawn from the seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one quantile model")
    p.add_argument("--data", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="compute the conformal threshold")
    _add_model_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="emit prediction intervals for a dataset")
    _add_model_flags(p)
    p.add_argument("--calibration", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="run an (n, m, alpha) experiment sweep")
    p.add_argument("--config", help="INI config; defaults reproduce the standard sweep")
    p.add_argument("--seed", type=int, help="override the config master seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit scaling-law regressions over records")
    p.add_argument("--records", required=True)
    p.add_argument(
        "--mode",
        choices=["loglog", "slope-vs-n", "intercepts-vs-alpha", "inv-nalpha2"],
        default="loglog",
    )
    p.add_argument("--u-column", default="u")
    p.add_argument("--v-column", default="v")
    p.add_argument("--alpha", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--alphas", default="0.01,0.02,0.025,0.03")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bounds", help="evaluate theory constants and bounds")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--spec", help="distribution-spec JSON; omitted means measured synthetic")
    p.add_argument("--theta0", help="synthetic direction vector (with no --spec)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-enforce", action="store_true", help="evaluate bounds even if the m condition fails")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except CalibrationInfeasibleError as exc:
        print(f"infeasible calibration: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single diagnostic line, nonzero exit
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
