"""Command-line front end.

Input files are CSV or TSV with the response in the first column and the
regressors in the remaining columns, one row per time point; a non-numeric
first line is treated as a header.  Every command writes ``key: value`` lines
followed by tab-separated tables, starting with a provenance block.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import RegressionDataset
from .detection import ThresholdPolicy, auto_select, collapse_by_count, detect, solution_path
from .errors import DomainError, InfeasibleError, InputError, StageError
from .estimation import estimate, anchor_intervals
from .inference import DEFAULT_B, infer_all
from .simulate import (
    RNG_NAME,
    ScenarioConfig,
    Stopwatch,
    evaluate_detection,
    generate_scenario,
    repetition_seeds,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "MCSCAN_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- input


def read_dataset(path) -> RegressionDataset:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise InputError(f"{path} is empty")
    delim = "\t" if "\t" in lines[0] else ","
    try:
        [float(v) for v in lines[0].split(delim)]
    except ValueError:
        lines = lines[1:]
    try:
        rows = [[float(v) for v in ln.split(delim)] for ln in lines]
        arr = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric or ragged data ({exc})") from None
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise InputError(f"{path}: need a response column and at least one regressor")
    return RegressionDataset(arr[:, 1:], arr[:, 0])


def write_dataset(path, data: RegressionDataset) -> None:
    header = ",".join(["y"] + [f"x{i + 1}" for i in range(data.p)])
    np.savetxt(path, np.column_stack([data.y, data.X]), delimiter=",", header=header, comments="", fmt="%.17g")


def parse_threshold(text: str) -> ThresholdPolicy:
    text = text.strip().lower()
    try:
        if text in ("auto", "automatic"):
            return ThresholdPolicy.automatic()
        if text.startswith("fixed:"):
            return ThresholdPolicy.fixed(float(text[6:]))
        if text == "default":
            return ThresholdPolicy()
        if text.startswith("default:"):
            return ThresholdPolicy("default", float(text[8:]))
    except ValueError:
        pass
    raise UsageError(f"bad --threshold {text!r}; use auto, fixed:<v>, default or default:<c>")


def _policy(args) -> ThresholdPolicy:
    pol = parse_threshold(args.threshold)
    trim = None if args.trim in (None, "default") else _number(args.trim, "--trim")
    return ThresholdPolicy(pol.kind, pol.value, trim)


def _number(text, flag):
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"{flag} expects a number, got {text!r}") from None


def _cv_or_number(text, flag):
    return "cv" if text == "cv" else _number(text, flag)


def _int_list(text, flag):
    if text is None:
        return None
    try:
        return [int(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers") from None


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer") from None


# ---------------------------------------------------------------- output


class Report:
    def __init__(self, command, **prov):
        self.lines = [f"# mcscan {__version__}", f"command: {command}"]
        self.lines += [f"{k}: {_fmt(v)}" for k, v in prov.items()]

    def kv(self, key, value):
        self.lines.append(f"{key}: {_fmt(value)}")

    def table(self, name, header, rows):
        self.lines += ["", f"[{name}]", "\t".join(header)]
        self.lines += ["\t".join(_fmt(v) for v in row) for row in rows]

    def text(self):
        return "\n".join(self.lines) + "\n"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v) if v else "-"
    if v is None:
        return "none"
    return str(v)


def _emit(report: Report, output):
    if output in (None, "-"):
        sys.stdout.write(report.text())
    else:
        Path(output).write_text(report.text())


# ---------------------------------------------------------------- commands


def _segment(args, data, threads):
    policy = _policy(args)
    res = detect(data, policy, args.standardize, threads, single_change=args.single)
    return res, policy


def cmd_detect(args):
    data = read_dataset(args.input)
    threads = _threads(args)
    res, policy = _segment(args, data, threads)
    rep = Report("detect", n=data.n, p=data.p, threshold_policy=args.threshold, mode=res.mode,
                 threshold=res.threshold_used, trim=res.trim, standardized=res.standardized)
    rep.kv("change_points", list(res.change_points))
    rep.table("peaks", ["a", "b", "k", "T", "coord"],
              [(pk.interval.a, pk.interval.b, pk.k_star, pk.t_star, pk.argmax_coord) for pk in res.peaks])
    return rep


def cmd_path(args):
    data = read_dataset(args.input)
    trim = None if args.trim in (None, "default") else _number(args.trim, "--trim")
    path = solution_path(data, trim, args.standardize, _threads(args))
    chosen = auto_select(path)
    rep = Report("path", n=data.n, p=data.p, trim=path.trim, standardized=path.standardized)
    rep.kv("selected_change_points", list(chosen.change_points))
    rep.table("path", ["num_cps", "threshold_low", "threshold_high", "score", "change_points"],
              [(en.num_cps, en.threshold_low, en.threshold_high, en.score, list(en.change_points) or "-")
               for en in path.entries])
    rep.table("elbow", ["num_cps", "score"], [(en.num_cps, en.score) for en in collapse_by_count(path)])
    return rep


def _change_points(args, data, threads):
    cps = _int_list(args.change_points, "--change-points")
    if cps is not None:
        return sorted(cps), "given"
    res, _ = _segment(args, data, threads)
    return list(res.change_points), f"detected ({args.threshold})"


def cmd_estimate(args):
    data = read_dataset(args.input)
    threads = _threads(args)
    cps, source = _change_points(args, data, threads)
    lam = _cv_or_number(args.lam, "--lambda")
    rep = Report("estimate", n=data.n, p=data.p, method=args.method, change_point_source=source)
    rep.kv("change_points", cps)
    rows, summary = [], []
    for anchor in anchor_intervals(cps, data.n):
        try:
            est = estimate(data, anchor, args.method, lam)
        except InfeasibleError as exc:
            raise StageError(str(exc), stage=args.method.lower(), change_index=anchor.j) from exc
        summary.append((anchor.j, anchor.theta_hat, anchor.a, anchor.b, est.method, est.lam,
                        est.kkt_residual, est.converged, int(np.count_nonzero(est.delta))))
        rows += [(anchor.j, i + 1, v) for i, v in enumerate(est.delta)]
    rep.table("estimates", ["j", "theta", "a", "b", "method", "lambda", "residual", "converged", "nonzeros"], summary)
    rep.table("delta", ["j", "coord", "value"], rows)
    return rep


def cmd_infer(args):
    data = read_dataset(args.input)
    threads = _threads(args)
    cps, source = _change_points(args, data, threads)
    bands = infer_all(
        data, cps, alpha=args.alpha, split=args.split, method=args.ci, eps=args.eps, B=args.B,
        seed=args.seed, threads=threads,
        lam=_cv_or_number(args.lam, "--lambda"), eta=_cv_or_number(args.eta, "--eta"),
    )
    rep = Report("infer", n=data.n, p=data.p, alpha=args.alpha, B=args.B, ci=args.ci, split=args.split,
                 eps=args.eps, seed=args.seed, rng=RNG_NAME, change_point_source=source)
    rep.kv("change_points", cps)
    rep.kv("bands", len(bands))
    rep.table("bands", ["j", "theta", "a", "b", "lambda", "eta", "quantile", "location_factor", "half_width",
                        "quantile_source", "rejected"],
              [(j, bd.provenance["theta_hat"], bd.provenance["a"], bd.provenance["b"], bd.provenance["lam"],
                bd.provenance["eta"], bd.quantile, bd.provenance["location_factor"], bd.half_width,
                bd.provenance["quantile_source"], [i + 1 for i in bd.rejected_set] or "-")
               for j, bd in enumerate(bands, start=1)])
    rep.table("intervals", ["j", "coord", "lower", "center", "upper", "rejected"],
              [(j, i + 1, bd.lower[i], bd.center[i], bd.upper[i], i in bd.rejected_set)
               for j, bd in enumerate(bands, start=1) for i in range(bd.p)])
    return rep


def _scenario(args) -> ScenarioConfig:
    if args.config:
        try:
            cfg = ScenarioConfig.from_text(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from None
    else:
        cfg = ScenarioConfig(scenario=args.scenario or "M1")
    updates = {k: getattr(args, k) for k in ("n", "p") if getattr(args, k) is not None}
    if args.scenario:
        updates["scenario"] = args.scenario
    if args.change_points:
        updates["change_points"] = tuple(_int_list(args.change_points, "--change-points"))
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        kw = {**cfg.__dict__, **updates}
        if kw["scenario"].upper() == "M3":
            kw["change_points"] = ()
        cfg = ScenarioConfig(**kw)
    return cfg


def cmd_simulate(args):
    try:
        cfg = _scenario(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    outdir = Path(args.output_dir) if args.output_dir else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    threads = _threads(args)
    rep = Report("simulate", scenario=cfg.scenario, n=cfg.n, p=cfg.p, seed=cfg.seed, reps=args.reps, rng=RNG_NAME)
    rep.kv("truth_change_points", list(cfg.change_points))
    rows = []
    for r, ss in enumerate(repetition_seeds(cfg.seed, args.reps)):
        data, truth = generate_scenario(cfg, ss)
        if outdir:
            write_dataset(outdir / f"data_{r:04d}.csv", data)
            (outdir / f"truth_{r:04d}.txt").write_text(
                f"theta = {','.join(str(c) for c in truth.change_points)}\n"
            )
        with Stopwatch() as sw:
            res, _ = _segment(args, data, threads)
        ev = evaluate_detection(res.change_points, truth.change_points, data.n)
        rows.append((r, ev.q_hat, list(res.change_points) or "-", ev.errors or "-", ev.hausdorff, ev.v_measure, sw.elapsed))
    if outdir:
        (outdir / "config.txt").write_text(cfg.to_text())
    rep.table("reports", ["rep", "q_hat", "change_points", "errors", "hausdorff", "v_measure", "runtime"], rows)
    return rep


def cmd_bench(args):
    ns = _int_list(args.grid_n, "--grid-n")
    ps = _int_list(args.grid_p, "--grid-p")
    threads = _threads(args)
    rep = Report("bench", seed=args.seed, rng=RNG_NAME, threshold_policy=args.threshold)
    rows = []
    for n in ns:
        for p in ps:
            rng = np.random.default_rng(np.random.SeedSequence([args.seed, n, p]))
            data = RegressionDataset(rng.standard_normal((n, p)), rng.standard_normal(n))
            times = []
            for _ in range(args.reps):
                with Stopwatch() as sw:
                    _segment(args, data, threads)
                times.append(sw.elapsed)
            rows.append((n, p, args.reps, min(times), float(np.median(times))))
    rep.table("timings", ["n", "p", "reps", "min_seconds", "median_seconds"], rows)
    return rep


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcscan", description="Change points, differential estimates and simultaneous bands "
                     "for piecewise linear regression.")
    parser.add_argument("--version", action="version", version=f"mcscan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", "-i", required=True, help="CSV/TSV file, response first")
        p.add_argument("--output", "-o", help="output file (default stdout)")
        p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")

    def detection(p):
        p.add_argument("--threshold", default="default", help="auto | fixed:<v> | default[:c]")
        p.add_argument("--trim", default="default", help="trimming, a number or 'default'")
        p.add_argument("--standardize", action="store_true", help="MAD-standardise x_t y_t first")
        p.add_argument("--single", action="store_true", help="assume exactly one change")

    def given(p):
        p.add_argument("--change-points", help="comma-separated change points (skip detection)")

    p = sub.add_parser("detect", help="detect change points")
    common(p)
    detection(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("path", help="solution path and elbow selection")
    common(p)
    p.add_argument("--trim", default="default")
    p.add_argument("--standardize", action="store_true")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("estimate", help="differential parameters at each change")
    common(p)
    detection(p)
    given(p)
    p.add_argument("--method", default="lope", choices=["lope", "clom", "naive"])
    p.add_argument("--lambda", dest="lam", default="cv", help="cv or a value")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("infer", help="simultaneous confidence bands")
    common(p)
    detection(p)
    given(p)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--B", type=int, default=DEFAULT_B)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", action="store_true", help="even/odd sample splitting")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--ci", default="boot", choices=["gauss", "boot"])
    p.add_argument("--lambda", dest="lam", default="cv")
    p.add_argument("--eta", default="cv")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="generate scenario data and detection reports")
    common(p, needs_input=False)
    detection(p)
    p.add_argument("--scenario", type=str.upper, choices=["M1", "M2", "M3"])
    p.add_argument("--config", help="key = value scenario file")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--change-points")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", help="write data_XXXX.csv and truth_XXXX.txt here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="detection timings over an (n, p) grid")
    common(p, needs_input=False)
    detection(p)
    p.add_argument("--grid-n", default="500,1000,2000")
    p.add_argument("--grid-p", default="100,500")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "reps", 1) < 1:
            raise UsageError("--reps must be positive")
        if hasattr(args, "threshold"):
            parse_threshold(args.threshold)  # flag errors before any file is read
        _emit(args.func(args), args.output)
        return EXIT_OK
    except UsageError as exc:
        print(f"mcscan: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StageError, InfeasibleError) as exc:
        stage = getattr(exc, "stage", None) or "lp"
        where = f" (change {exc.change_index})" if getattr(exc, "change_index", None) else ""
        print(f"mcscan: numerical failure in stage {stage}{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, DomainError, ValueError, OSError) as exc:
        print(f"mcscan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
