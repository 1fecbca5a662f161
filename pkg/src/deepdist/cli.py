"""Command-line interface: simulate, forecast, evaluate, backtest, compare, plot.

Every command writes flat files into ``--out`` (created if needed). Each
artifact records the hash of the resolved configuration that produced it,
and the configuration itself is written next to it as
``config-<command>.json``. Errors are reported on stderr as a single line::

    deepdist: error code=<exit> type=<ErrorClass> message=<text>

Exit codes: 0 success, 2 usage/configuration error, 3 data error,
4 numeric or estimation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from deepdist import data, pipeline, plots, risk, scoring
from deepdist.distributions import Kind
from deepdist.errors import (
    ConfigError,
    DataError,
    DomainError,
    EstimationError,
    InsufficientDataError,
    NumericError,
    ShapeError,
)
from deepdist.forecaster import Architecture, ModelConfig

log = logging.getLogger("deepdist")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_MODEL_FIELDS = {f.name for f in fields(ModelConfig)} - {"architecture", "kind", "seed"}

DEFAULTS = {
    "model": "lstm",
    "dist": "sstd",
    "alpha": [0.05, 0.01],
    "seed": 0,
    "min_train": 1008,
    "step": 504,
    "val_frac": 0.33,
    "n_boot": 10_000,
    "threshold": 0.05,
    "dgp": "garch_normal",
    "n": 3000,
    **{k: v for k, v in ModelConfig().to_dict().items() if k in _MODEL_FIELDS},
}


class UsageError(Exception):
    pass


# --- configuration ----------------------------------------------------------------


def _parse_value(key: str, text: str):
    text = text.strip()
    default = DEFAULTS.get(key)
    if key not in DEFAULTS:
        raise UsageError(f"unknown config key {key!r}")
    try:
        if isinstance(default, list):
            return [type(default[0])(v) for v in text.split(",") if v.strip()]
        if key == "patience":
            return None if text.lower() in ("", "none") else int(text)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {text!r}") from None
    return text


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{path}: config file not found")
    out = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _parse_value(key, value)
    return out


def resolve_config(args, command: str) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config))
    for key in ("model", "dist", "seed", "dgp", "n"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "alpha", None) is not None:
        cfg["alpha"] = _parse_value("alpha", args.alpha)
    for a in cfg["alpha"]:
        if not 0 < a < 0.5:
            raise UsageError(f"alpha values must lie in (0, 0.5), got {a}")
    cfg["command"] = command
    return cfg


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def model_config(cfg: dict) -> ModelConfig:
    kw = {k: cfg[k] for k in _MODEL_FIELDS}
    kw["lstm_units"] = tuple(kw["lstm_units"])
    arch = Architecture(cfg["model"])
    return ModelConfig(architecture=arch, kind=Kind.from_code(cfg["dist"]), seed=cfg["seed"], **kw)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out: Path, cfg: dict) -> str:
    chash = pipeline.config_hash(cfg)
    _write_json(out / f"config-{cfg['command']}.json", {"config_hash": chash, "config": cfg})
    return chash


def _require_input(args) -> Path:
    if not args.input:
        raise UsageError("--input is required")
    path = Path(args.input)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    return path


# --- commands -------------------------------------------------------------------


def cmd_simulate(args) -> None:
    cfg = resolve_config(args, "simulate")
    out = _prepare_out(args)
    chash = _finish(out, cfg)
    sim = data.simulate(cfg["dgp"], None, cfg["n"], cfg["seed"])
    tmp = out / "simulated.csv"
    data.write_simulation_csv(sim, tmp)
    body = tmp.read_text(encoding="utf-8")
    tmp.write_text(f"# config_hash={chash}\n" + body, encoding="utf-8")
    print(tmp)


def cmd_forecast(args) -> None:
    cfg = resolve_config(args, "forecast")
    path = _require_input(args)
    cfg["input"] = path.name
    cfg["input_sha256"] = file_digest(path)
    out = _prepare_out(args)
    series = data.to_returns(data.load_csv(path))
    prep = pipeline.prepare(series, cfg["min_train"], cfg["step"], cfg["val_frac"])
    kind = Kind.from_code(cfg["dist"])
    if cfg["model"] == "garch":
        chash = _finish(out, cfg)
        run = pipeline.run_garch(prep, kind, cfg["seed"])
        stream = run.stream
        _write_json(out / "garch_params.json", {
            "config_hash": chash,
            "iterations": [p.to_dict() for p in run.params],
        })
    else:
        mcfg = model_config(cfg)
        chash = _finish(out, cfg)
        run = pipeline.run_neural(prep, mcfg, cfg["seed"], keep_models=True)
        stream = run.stream
        for k, model in enumerate(run.models):
            model.write_log(out / f"training_log_{k:02d}.csv")
    pipeline.write_stream(stream, out / "forecasts.csv", chash)
    print(out / "forecasts.csv")


def _stream_config(args, command: str):
    cfg = resolve_config(args, command)
    path = _require_input(args)
    cfg["input"] = path.name
    cfg["input_sha256"] = file_digest(path)
    return cfg, pipeline.read_stream(path)


def evaluate_payload(stream: pipeline.ForecastStream, chash: str) -> tuple[dict, scoring.ScoreSummary]:
    summary = scoring.summarize(stream.spec, stream.realized)
    payload = {"config_hash": chash, "model": stream.model, **summary.to_dict()}
    return payload, summary


def cmd_evaluate(args) -> None:
    cfg, stream = _stream_config(args, "evaluate")
    out = _prepare_out(args)
    chash = _finish(out, cfg)
    payload, summary = evaluate_payload(stream, chash)
    (out / "scores.json").write_text(scoring.dumps_fixed(payload), encoding="utf-8")
    with open(out / "pit.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={chash}\ndate,pit\n")
        for d, u in zip(stream.dates, summary.pit):
            fh.write(f"{d},{float(u)!r}\n")
    print(out / "scores.json")


def backtest_payload(stream: pipeline.ForecastStream, cfg: dict, chash: str) -> dict:
    reports = [risk.backtest(stream.spec, stream.realized, a, seed=cfg["seed"], n_boot=cfg["n_boot"])
               for a in cfg["alpha"]]
    return {
        "config_hash": chash,
        "model": stream.model,
        "threshold": cfg["threshold"],
        "reports": [r.to_dict() for r in reports],
    }


def cmd_backtest(args) -> None:
    cfg, stream = _stream_config(args, "backtest")
    out = _prepare_out(args)
    chash = _finish(out, cfg)
    payload = backtest_payload(stream, cfg, chash)
    (out / "backtest.json").write_text(scoring.dumps_fixed(payload), encoding="utf-8")
    table = report_table([(stream.model or "model", None, payload)], cfg["threshold"])
    (out / "backtest.txt").write_text(f"# config_hash={chash}\n" + table, encoding="utf-8")
    print(out / "backtest.json")


# --- reporting --------------------------------------------------------------------


def _fmt(v, key: str = "p") -> str:
    """Same rendering as the JSON artifacts, so joined reports repeat inputs verbatim."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "---"
    return scoring.format_number(key, float(v))


def _pflag(p, threshold) -> str:
    if p is None:
        return "---"
    return _fmt(p) + ("(R)" if p < threshold else "")


def report_rows(scores: dict | None, backtest: dict | None, threshold: float) -> list[tuple[str, str]]:
    """Rows in the order LPS, CRPS, PIT, exceedances, then per-alpha test p-values."""
    rows = []
    if scores is not None:
        rows.append(("LPS", _fmt(scores["mean_lps"], "mean_lps")))
        rows.append(("CRPS", _fmt(scores["mean_crps"], "mean_crps")))
        rows.append(("PIT p-value", _fmt(scores["pit_pvalue"])))
    if backtest is not None:
        reps = backtest["reports"]
        rows.append(("VaR exc.", "/".join(str(r["exceedances"]) for r in reps)))
        rows.append(("VaR exc. (%)", "/".join(_fmt(r["exceedance_percent"], "exceedance_percent") for r in reps)))
        for r in reps:
            rows.append((f"Kupiec {_pct(r['alpha'])}", _pflag(_num(r["kupiec_p"]), threshold)))
        for r in reps:
            rows.append((f"Christoff. {_pct(r['alpha'])}", _pflag(_num(r["christoffersen_p_cc"]), threshold)))
        for r in reps:
            rows.append((f"ES bootstrap {_pct(r['alpha'])}", _pflag(_num(r["es_bootstrap_p"]), threshold)))
            rows.append((f"ES sample {_pct(r['alpha'])}", _pflag(_num(r["es_sample_p"]), threshold)))
    return rows


def _num(v):
    return None if v is None else float(v)


def _pct(alpha) -> str:
    return f"{100 * float(alpha):g}%"


def report_table(columns: list, threshold: float, best: dict | None = None) -> str:
    """Plain-text table: one column per (name, scores, backtest) triple.

    Cells named in ``best`` (row label -> column index) get a ``*`` suffix.
    """
    names = [c[0] for c in columns]
    row_sets = [report_rows(c[1], c[2], threshold) for c in columns]
    for label, idx in (best or {}).items():
        row_sets[idx] = [(lab, val + "*" if lab == label else val) for lab, val in row_sets[idx]]
    labels = []
    for rs in row_sets:
        for label, _ in rs:
            if label not in labels:
                labels.append(label)
    cells = [dict(rs) for rs in row_sets]
    width0 = max([len("Metric")] + [len(s) for s in labels])
    widths = [max([len(n)] + [len(c.get(l, "")) for l in labels]) for n, c in zip(names, cells)]
    lines = ["  ".join(["Metric".ljust(width0)] + [n.rjust(w) for n, w in zip(names, widths)])]
    for label in labels:
        lines.append("  ".join([label.ljust(width0)]
                               + [c.get(label, "").rjust(w) for c, w in zip(cells, widths)]))
    return "\n".join(lines) + "\n"


def _best_markers(columns: list) -> dict:
    """Index of the best column per criterion (lowest LPS/CRPS, highest PIT p, closest coverage)."""
    best = {}
    scored = [(i, c[1]) for i, c in enumerate(columns) if c[1] is not None]
    if scored:
        best["LPS"] = min(scored, key=lambda t: float(t[1]["mean_lps"]))[0]
        best["CRPS"] = min(scored, key=lambda t: float(t[1]["mean_crps"]))[0]
        best["PIT p-value"] = max(scored, key=lambda t: float(t[1]["pit_pvalue"]))[0]
    tested = [(i, c[2]) for i, c in enumerate(columns) if c[2] is not None]
    if tested:
        for k, rep in enumerate(tested[0][1]["reports"]):
            alpha = float(rep["alpha"])
            best[f"VaR exc. {_pct(alpha)}"] = min(
                tested,
                key=lambda t: abs(float(t[1]["reports"][k]["exceedance_percent"]) - 100 * alpha),
            )[0]
    return best


def cmd_compare(args) -> None:
    cfg = resolve_config(args, "compare")
    if not args.input:
        raise UsageError("--input takes one or more run directories (comma-separated)")
    dirs = [Path(p) for p in args.input.split(",") if p]
    columns, digests = [], []
    for d in dirs:
        if not d.is_dir():
            raise DataError(f"{d}: not a directory")
        s_path, b_path = d / "scores.json", d / "backtest.json"
        if not s_path.exists() and not b_path.exists():
            raise DataError(f"{d}: neither scores.json nor backtest.json present")
        scores = _load_json(s_path) if s_path.exists() else None
        bt = _load_json(b_path) if b_path.exists() else None
        name = (scores or bt).get("model") or d.name
        columns.append((name, scores, bt))
        digests.append({"dir": d.name, **{p.name: file_digest(p) for p in (s_path, b_path) if p.exists()}})
    cfg["inputs"] = digests
    out = _prepare_out(args)
    chash = _finish(out, cfg)
    best = _best_markers(columns)
    table = report_table(columns, cfg["threshold"], best)
    legend = "Best per criterion: " + ", ".join(f"{k}={columns[i][0]}" for k, i in best.items()) + "\n"
    (out / "compare.txt").write_text(f"# config_hash={chash}\n" + table + legend, encoding="utf-8")
    payload = {
        "config_hash": chash,
        "columns": [{"name": n, "scores": s, "backtest": b} for n, s, b in columns],
        "best": {k: columns[i][0] for k, i in best.items()},
    }
    _write_json(out / "compare.json", payload)
    print(out / "compare.txt")


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


def cmd_plot(args) -> None:
    cfg, stream = _stream_config(args, "plot")
    out = _prepare_out(args)
    chash = _finish(out, cfg)
    var = {a: np.atleast_1d(risk.var_forecast(stream.spec, a)) for a in cfg["alpha"]}
    (out / "var.svg").write_text(plots.var_svg(stream.realized, var, chash), encoding="utf-8")
    pit = np.atleast_1d(scoring.pit(stream.spec, stream.realized))
    (out / "pit.svg").write_text(plots.pit_histogram_svg(pit, chash), encoding="utf-8")
    print(out / "var.svg")


# --- entry point ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepdist", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, input_help=None):
        if input_help:
            p.add_argument("--input", help=input_help)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="key=value file overriding defaults")
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", help="comma-separated VaR tolerances (default 0.05,0.01)")
        return p

    p = common(sub.add_parser("simulate", help="write a synthetic price CSV with ground truth"))
    p.add_argument("--dgp", choices=[d.value for d in data.DGP])
    p.add_argument("--n", type=int, help="number of returns")
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("forecast", help="walk-forward forecasts"), "price CSV (date,close)")
    p.add_argument("--model", choices=["cnn", "lstm", "garch"])
    p.add_argument("--dist", choices=["n", "std", "sstd"])
    p.set_defaults(func=cmd_forecast)

    p = common(sub.add_parser("evaluate", help="LPS, CRPS and PIT of a forecast stream"), "forecasts.csv")
    p.set_defaults(func=cmd_evaluate)

    p = common(sub.add_parser("backtest", help="VaR/ES backtests of a forecast stream"), "forecasts.csv")
    p.set_defaults(func=cmd_backtest)

    p = common(sub.add_parser("compare", help="join evaluate/backtest outputs"),
               "comma-separated run directories")
    p.set_defaults(func=cmd_compare)

    p = common(sub.add_parser("plot", help="SVG plots of VaR bands and PIT histogram"), "forecasts.csv")
    p.set_defaults(func=cmd_plot)
    return parser


_EXIT_FOR = [
    ((UsageError, ConfigError), EXIT_USAGE),
    ((DataError, InsufficientDataError, ShapeError, FileNotFoundError), EXIT_DATA),
    ((NumericError, EstimationError, DomainError, FloatingPointError), EXIT_NUMERIC),
]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required (simulate, forecast, evaluate, backtest, compare, plot)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except Exception as exc:  # mapped to exit codes below
        for types, code in _EXIT_FOR:
            if isinstance(exc, types):
                message = " ".join(str(exc).split())
                print(f"deepdist: error code={code} type={type(exc).__name__} message={message}",
                      file=sys.stderr)
                return code
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
