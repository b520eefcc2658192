"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 invalid input data, 4 numerical
failure.  Every subcommand writes its files only after all computation has
finished, so a failed run leaves no partial output.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    asd_median_effect,
    avar_params,
    instantaneous_risk_rate,
    median_effect,
    median_effect_ci,
    sample_size_for_se,
)
from .core import Dataset, LognormalSpec, boxcox, expit
from .design import (
    SettingSpec,
    derive_truth,
    generate_dataset,
    parse_setting_id,
    replicate_seed,
    run_bias_study,
    table1_settings,
)
from .estimation import DEFAULT_MAX_ITER, DEFAULT_TOL, fit_fixed_lambda, fit_mle
from .evaluation import bin_local_risk, cross_validate, hosmer_lemeshow
from .exceptions import DataValidationError, DomainError, NumericalError
from .misspec import ARE_MC_N, SANDWICH_MC_N, empirical_are, misspec_cell

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
DEFAULT_SEED = 20090410

COMPARE_FIELDS = ["model", "q", "loglik", "aic", "slope", "slope_se", "median_effect", "are"]
SIM_SUMMARY_FIELDS = [
    "setting", "replicates", "n", "convergence_rate",
    "bias_beta0", "bias_beta1", "bias_lambda", "rmse_beta0", "rmse_beta1", "rmse_lambda",
]
SIM_ESTIMATE_FIELDS = ["setting", "replicate", "converged", "beta0", "beta1", "lambda"]
AVAR_FIELDS = [
    "setting", "q", "asd_lambda", "asd_beta1", "asd_median_effect", "n_for_se_lambda_0125",
]
MISSPEC_FIELDS = [
    "setting", "lambda", "q", "gamma0", "gamma1", "asd_gamma1", "median_effect", "are",
]
GOF_FIELDS = ["model", "groups", "statistic", "df", "p_value"]
CV_FIELDS = ["model", "folds", "mae", "mse"]
BIN_FIELDS = ["bin", "x_min", "x_max", "count", "observed_risk"]


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    output_dir: Path
    seed: int = DEFAULT_SEED
    input_path: Path | None = None
    q: tuple = ()
    grid_max: float = 2.5
    grid_step: float = 0.05
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    replicates: int = 100
    n: int = 5000
    mc_n: int = ARE_MC_N
    sandwich_mc_n: int = SANDWICH_MC_N
    folds: int = 10
    groups_min: int = 5
    groups_max: int = 12
    bins: int | None = None
    setting: str = "all"
    x_at: tuple = ()
    emit_data: bool = False

    def validate(self):
        positive = {
            "grid-max": self.grid_max, "grid-step": self.grid_step, "tol": self.tol,
            "max-iter": self.max_iter, "replicates": self.replicates, "n": self.n,
            "mc-n": self.mc_n, "sandwich-mc-n": self.sandwich_mc_n,
        }
        for name, v in positive.items():
            if not v > 0:
                raise UsageError(f"--{name} must be positive")
        if self.mc_n < 1000 or self.sandwich_mc_n < 1000:
            raise UsageError("Monte Carlo sizes must be at least 1000")
        if self.folds < 2:
            raise UsageError("--folds must be >= 2")
        if not 3 <= self.groups_min <= self.groups_max:
            raise UsageError("need 3 <= --groups-min <= --groups-max")
        if self.bins is not None and self.bins < 1:
            raise UsageError("--bins must be >= 1")
        if any(not q >= 0 for q in self.q):
            raise UsageError("--q values must be >= 0")
        if any(not x > 0 for x in self.x_at):
            raise UsageError("--x-at values must be > 0")
        return self

    @property
    def grid(self) -> np.ndarray:
        k = int(math.floor(self.grid_max / self.grid_step + 1e-9))
        return np.round(np.arange(k + 1) * self.grid_step, 12)

    def fit_kwargs(self) -> dict:
        return {"grid": self.grid, "tol": self.tol, "max_iter": self.max_iter}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _kv_text(pairs) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in pairs)


def read_dataset_csv(path) -> Dataset:
    """Read a CSV whose header names columns ``x`` and ``y``.

    Extra columns are ignored; LF and CRLF line endings are accepted.
    Errors name the offending line (the header is line 1).
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise DataValidationError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataValidationError(f"{path}: empty file")
        names = [h.strip().lower() for h in header]
        if "x" not in names or "y" not in names:
            raise DataValidationError(f"{path}: header must name columns x and y, got {header}")
        ix, iy = names.index("x"), names.index("y")
        xs, ys, bad = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                sx, sy = row[ix].strip(), row[iy].strip()
            except IndexError:
                raise DataValidationError(f"{path}: line {line}: expected at least {max(ix, iy) + 1} columns") from None
            if not sx or not sy:
                raise DataValidationError(f"{path}: line {line}: missing value")
            try:
                x = float(sx)
            except ValueError:
                raise DataValidationError(f"{path}: line {line}, column x: cannot parse {sx!r}") from None
            try:
                y = float(sy)
            except ValueError:
                raise DataValidationError(f"{path}: line {line}, column y: cannot parse {sy!r}") from None
            if not (x > 0 and math.isfinite(x)):
                bad.append(f"line {line}: x = {sx} is not a positive finite number")
            if y not in (0.0, 1.0):
                bad.append(f"line {line}: y = {sy} is not 0 or 1")
            xs.append(x)
            ys.append(y)
    if bad:
        shown = "; ".join(bad[:10]) + (f"; ... ({len(bad)} problems)" if len(bad) > 10 else "")
        raise DataValidationError(f"{path}: {shown}")
    if not xs:
        raise DataValidationError(f"{path}: no data rows")
    return Dataset(np.array(xs), np.array(ys))


def _load(cfg: RunConfig) -> Dataset:
    if cfg.input_path is None:
        raise UsageError(f"{cfg.command} requires --input")
    return read_dataset_csv(cfg.input_path)


def _settings(cfg: RunConfig) -> list[SettingSpec]:
    if cfg.setting.strip().lower() == "all":
        return table1_settings()
    try:
        return [parse_setting_id(s) for s in cfg.setting.split(",") if s.strip()]
    except (ValueError, DomainError) as exc:
        raise UsageError(str(exc)) from None


def _model_label(q) -> str:
    return "boxcox" if q is None else f"q={q:g}"


def cmd_fit(cfg: RunConfig) -> dict:
    data = _load(cfg)
    fit = fit_mle(data, **cfg.fit_kwargs())
    dist = LognormalSpec.fit(data.x)
    p = fit.params
    pairs = [
        ("n", data.n), ("beta0", p.beta0), ("beta1", p.beta1), ("lambda", p.lam),
        ("se_beta0", fit.se[0]), ("se_beta1", fit.se[1]), ("se_lambda", fit.se[2]),
        ("loglik", fit.loglik), ("aic", fit.aic), ("converged", fit.converged),
        ("iterations", fit.iterations), ("boundary", fit.boundary),
        ("mu_hat", dist.mu), ("sigma_hat", dist.sigma),
    ]
    for q in cfg.q:
        est = median_effect_ci(fit, dist.mu, q)
        tag = f"q{q:g}"
        pairs += [
            (f"median_effect_{tag}", est.value), (f"median_effect_se_{tag}", est.se),
            (f"median_effect_ci_lower_{tag}", est.ci_lower),
            (f"median_effect_ci_upper_{tag}", est.ci_upper),
        ]
    for x in cfg.x_at:
        pairs.append((f"risk_rate_x{x:g}", instantaneous_risk_rate(p, x)))
    if fit.message:
        pairs.append(("message", fit.message.replace("\n", " ")))
    files = {"fit_report.txt": _kv_text(pairs)}
    if cfg.bins is not None:
        bins = bin_local_risk(data, cfg.bins)
        files["local_risk.csv"] = _csv_text(
            BIN_FIELDS, [(i, b.x_min, b.x_max, b.count, b.risk) for i, b in enumerate(bins)]
        )
        xg = np.geomspace(data.x.min(), data.x.max(), 200)
        curves = [expit(p.beta0 + p.beta1 * boxcox(xg, p.lam))]
        heads = ["x", "risk_boxcox"]
        for q in cfg.q:
            f = fit_fixed_lambda(data, q)
            curves.append(expit(f.beta0 + f.beta1 * boxcox(xg, q)))
            heads.append(f"risk_q{q:g}")
        files["risk_curves.csv"] = _csv_text(heads, zip(xg, *curves))
    return files


def cmd_compare(cfg: RunConfig) -> dict:
    data = _load(cfg)
    fit = fit_mle(data, **cfg.fit_kwargs())
    mu = LognormalSpec.fit(data.x).mu
    p = fit.params
    rows = [("boxcox", p.lam, fit.loglik, fit.aic, p.beta1, fit.se[1], float("nan"), float("nan"))]
    for q in cfg.q:
        f = fit_fixed_lambda(data, q)
        med = median_effect(p, mu, q)
        are = empirical_are(f.beta1, med) if med != 0 else float("nan")
        rows.append((_model_label(q), q, f.loglik, f.aic, f.beta1, f.se[1], med, are))
    return {"compare.csv": _csv_text(COMPARE_FIELDS, rows)}


def cmd_simulate(cfg: RunConfig) -> dict:
    summary, estimates, files = [], [], {}
    for s in _settings(cfg):
        rep = run_bias_study(s, cfg.replicates, cfg.n, cfg.seed, **cfg.fit_kwargs())
        summary.append(
            (s.id, rep.replicates, rep.n_per_replicate, rep.convergence_rate, *rep.bias, *rep.rmse)
        )
        for k, (est, ok) in enumerate(zip(rep.estimates, rep.converged)):
            estimates.append((s.id, k, bool(ok), *est))
        if cfg.emit_data:
            truth, dist = derive_truth(s)
            d = generate_dataset(truth, dist, cfg.n, replicate_seed(cfg.seed, 0))
            files[f"data_{s.id}.csv"] = _csv_text(["x", "y"], zip(d.x, d.y.astype(int)))
    files["simulate_summary.csv"] = _csv_text(SIM_SUMMARY_FIELDS, summary)
    files["simulate_estimates.csv"] = _csv_text(SIM_ESTIMATE_FIELDS, estimates)
    return files


def cmd_avar(cfg: RunConfig) -> dict:
    qs = cfg.q or tuple(np.arange(9) * 0.25)
    rows = []
    for s in _settings(cfg):
        truth, dist = derive_truth(s)
        av = avar_params(truth, dist)
        asd_lam, asd_b1 = math.sqrt(av[2, 2]), math.sqrt(av[1, 1])
        for q in qs:
            rows.append((
                s.id, q, asd_lam, asd_b1, asd_median_effect(truth, dist, q, av),
                sample_size_for_se(asd_lam),
            ))
    return {"avar.csv": _csv_text(AVAR_FIELDS, rows)}


def cmd_misspec(cfg: RunConfig) -> dict:
    qs = cfg.q or tuple(np.arange(9) * 0.25)
    rows = []
    for s in _settings(cfg):
        truth, dist = derive_truth(s)
        for q in qs:
            r = misspec_cell(truth, dist, q, cfg.mc_n, cfg.sandwich_mc_n, cfg.seed)
            rows.append((s.id, s.lam, q, r.gamma0, r.gamma1, r.asd_gamma1, r.median_effect, r.are))
    return {"misspec.csv": _csv_text(MISSPEC_FIELDS, rows)}


def _risk_models(cfg: RunConfig, data: Dataset):
    fit = fit_mle(data, **cfg.fit_kwargs())
    p = fit.params
    out = [("boxcox", expit(p.beta0 + p.beta1 * boxcox(data.x, p.lam)))]
    for q in cfg.q:
        f = fit_fixed_lambda(data, q)
        out.append((_model_label(q), expit(f.beta0 + f.beta1 * boxcox(data.x, q))))
    return out


def cmd_gof(cfg: RunConfig) -> dict:
    data = _load(cfg)
    rows = []
    for label, risks in _risk_models(cfg, data):
        for g in range(cfg.groups_min, cfg.groups_max + 1):
            r = hosmer_lemeshow(risks, data.y, g)
            rows.append((label, g, r.statistic, r.df, r.p_value))
    return {"gof.csv": _csv_text(GOF_FIELDS, rows)}


def cmd_cv(cfg: RunConfig) -> dict:
    data = _load(cfg)
    rows = []
    for model in ("boxcox", *cfg.q):
        r = cross_validate(data, model, cfg.folds, cfg.seed)
        rows.append((_model_label(None if model == "boxcox" else model), r.folds, r.mae, r.mse))
    return {"cv.csv": _csv_text(CV_FIELDS, rows)}


COMMANDS = {
    "fit": cmd_fit,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "avar": cmd_avar,
    "misspec": cmd_misspec,
    "gof": cmd_gof,
    "cv": cmd_cv,
}

# per-command default for --q when the flag is omitted
_Q_DEFAULTS = {"fit": (0.0, 0.5, 1.0), "compare": (1.0, 0.5, 0.0), "gof": (1.0, 0.5, 0.0), "cv": (1.0, 0.5, 0.0)}


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxcoxlogit", description="Logistic regression with a Box-Cox transformed exposure."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", type=Path, default=Path("."), help="directory for output files")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--q", type=_float_list, default=None, help="comma-separated fixed shapes")
    common.add_argument("--grid-max", type=float, default=2.5, help="upper end of the profile grid")
    common.add_argument("--grid-step", type=float, default=0.05, help="profile grid spacing")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="BFGS gradient tolerance")
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help="BFGS iteration cap")

    data_in = argparse.ArgumentParser(add_help=False)
    data_in.add_argument("--input", type=Path, required=True, help="CSV with columns x,y")

    settings = argparse.ArgumentParser(add_help=False)
    settings.add_argument("--setting", default="all", help="setting id(s) such as P1-R2-L05-S1, or 'all'")

    p = sub.add_parser("fit", parents=[common, data_in], help="fit the model and report effects")
    p.add_argument("--bins", type=int, default=None, help="bin size for observed local risks")
    p.add_argument("--x-at", type=_float_list, default=(), help="exposures for the risk rate")

    sub.add_parser("compare", parents=[common, data_in], help="Box-Cox fit versus fixed shapes")

    p = sub.add_parser("simulate", parents=[common, settings], help="bias/RMSE simulation study")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--emit-data", action="store_true", help="also write one simulated dataset per setting")

    sub.add_parser("avar", parents=[common, settings], help="asymptotic standard deviations")

    p = sub.add_parser("misspec", parents=[common, settings], help="limits of fixed-shape fits")
    p.add_argument("--mc-n", type=int, default=ARE_MC_N, help="draws for the limiting coefficients")
    p.add_argument("--sandwich-mc-n", type=int, default=SANDWICH_MC_N, help="draws for the sandwich")

    p = sub.add_parser("gof", parents=[common, data_in], help="Hosmer-Lemeshow sweep")
    p.add_argument("--groups-min", type=int, default=5)
    p.add_argument("--groups-max", type=int, default=12)

    p = sub.add_parser("cv", parents=[common, data_in], help="stratified cross-validation")
    p.add_argument("--folds", type=int, default=10)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    known = {k: v for k, v in vars(ns).items() if v is not None}
    cfg = RunConfig(command=ns.command, output_dir=known.pop("output_dir"))
    q = known.pop("q", None)
    cfg.q = q if q is not None else _Q_DEFAULTS.get(ns.command, ())
    if "input" in known:
        cfg.input_path = known.pop("input")
    for k, v in known.items():
        if hasattr(cfg, k):
            setattr(cfg, k, v)
    return cfg.validate()


def _write(out_dir: Path, files: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = config_from_args(ns)
        files = COMMANDS[cfg.command](cfg)
        _write(cfg.output_dir, files)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    report = files.get("fit_report.txt")
    if report:
        sys.stdout.write(report)
    for name in files:
        print(f"wrote {cfg.output_dir / name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
