"""Command-line front end.

Subcommands ``fit``, ``test``, ``simulate``, ``predict`` and ``diagnose``.
Settings come from a YAML file (``--config``) and command-line flags, with
flags taking precedence. Exit codes: 0 success, 2 invalid input or
configuration, 3 runtime failure, 4 file-system failure.

All result files are deterministic for a fixed seed; wall-clock
information only goes to ``run.log``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .chain import PosteriorChain
from .errors import CTFError, ConfigurationError, InputError
from .inference import (batch_means_mcse, classification_error, lag_inclusion,
                        maximal_order_distribution, parse_hypotheses, posterior_mean_transition,
                        predict_one_step, run_tests, running_quantiles)
from .model import Hyperparams, Schedule
from .seqdata import FORMATS, EncodedSequence, build_lag_design, load_sequence
from .simgen import CASES, default_q, fit as fit_model, lag_contexts, parse_case, run_experiment

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
_HYPER_KEYS = ("alpha", "alpha0", "gamma", "phi", "L")


class UsageError(InputError):
    pass


def bundled_toy_config() -> Path:
    """Path of the example configuration shipped with the package."""
    return Path(str(resources.files("ctfmarkov") / "data" / "toy.yaml"))


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    input_path: Path | None = None
    format: str = "plain"
    alphabet: list | None = None
    header: bool = False
    q: int | None = None
    hyper: dict = field(default_factory=dict)
    schedule: Schedule = field(default_factory=Schedule)
    seed: int = 0
    mode: str = "exact"
    holdout: int = 0
    init_iters: int = 100
    out: Path = Path("ctf_out")
    threads: int = 1

    def to_json(self) -> dict:
        d = asdict(self)
        d["input_path"] = str(self.input_path) if self.input_path else None
        del d["out"]  # keeps results independent of where they are written
        d["schedule"] = asdict(self.schedule)
        return d


def _read_yaml(path) -> tuple[dict, Path]:
    p = Path(path)
    text = p.read_text()
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise UsageError(f"{p}: invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{p}: top level must be a mapping")
    return doc, p.parent


def _schedule(value) -> Schedule:
    if isinstance(value, Schedule):
        return value
    if isinstance(value, str):
        return Schedule.parse(value)
    if isinstance(value, dict):
        unknown = set(value) - {"n_iter", "n_burn", "thin"}
        if unknown:
            raise UsageError(f"unknown schedule keys {sorted(unknown)}")
        return Schedule(**{k: int(v) for k, v in value.items()})
    raise UsageError(f"schedule must be 'n_iter,n_burn,thin' or a mapping, got {value!r}")


def _int(name, value, lo=None):
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be an integer, got {value!r}") from None
    if isinstance(value, float) and value != v:
        raise UsageError(f"{name} must be an integer, got {value!r}")
    if lo is not None and v < lo:
        raise UsageError(f"{name} must be at least {lo}, got {v}")
    return v


def build_config(args) -> RunConfig:
    """Merge defaults, the config file and command-line flags (in that order)."""
    doc, base = _read_yaml(args.config) if getattr(args, "config", None) else ({}, Path.cwd())
    cfg = RunConfig()
    inp = doc.get("input", {})
    if isinstance(inp, str):
        inp = {"path": inp}
    if inp.get("path") is not None:
        p = Path(inp["path"])
        cfg.input_path = p if p.is_absolute() else base / p
    cfg.format = inp.get("format", cfg.format)
    cfg.alphabet = inp.get("alphabet")
    cfg.header = bool(inp.get("header", False))
    if "q" in doc:
        cfg.q = doc["q"]
    hyper = doc.get("hyper", {}) or {}
    unknown = set(hyper) - set(_HYPER_KEYS)
    if unknown:
        raise UsageError(f"unknown hyperparameter keys {sorted(unknown)}")
    cfg.hyper = dict(hyper)
    if "schedule" in doc:
        cfg.schedule = _schedule(doc["schedule"])
    for key in ("seed", "mode", "holdout", "init_iters", "threads"):
        if key in doc:
            setattr(cfg, key, doc[key])
    if "out" in doc:
        p = Path(doc["out"])
        cfg.out = p if p.is_absolute() else base / p

    # command-line overrides
    if getattr(args, "input", None):
        cfg.input_path = Path(args.input)
    if getattr(args, "format", None):
        cfg.format = args.format
    if getattr(args, "q", None) is not None:
        cfg.q = args.q
    if getattr(args, "holdout", None) is not None:
        cfg.holdout = args.holdout
    if args.seed is not None:
        cfg.seed = args.seed
    if args.schedule is not None:
        cfg.schedule = _schedule(args.schedule)
    if args.stirling:
        cfg.mode = "stirling"
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out = Path(args.out)

    cfg.seed = _int("seed", cfg.seed, 0)
    cfg.threads = _int("threads", cfg.threads, 1)
    cfg.holdout = _int("holdout", cfg.holdout, 0)
    cfg.init_iters = _int("init_iters", cfg.init_iters, 0)
    if cfg.q is not None:
        cfg.q = _int("q", cfg.q, 1)
    if cfg.mode not in ("exact", "stirling"):
        raise UsageError(f"mode must be 'exact' or 'stirling', got {cfg.mode!r}")
    if cfg.format not in FORMATS:
        raise UsageError(f"format must be one of {FORMATS}, got {cfg.format!r}")
    return cfg


# ---------------------------------------------------------------- output helpers

def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_files(out: Path, files: dict) -> None:
    """Write all outputs at once, after every computation has succeeded."""
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def _log(out: Path, command: str, message: str) -> None:
    stamp = _dt.datetime.now().isoformat(timespec="seconds")
    with open(out / "run.log", "a") as fh:
        fh.write(f"{stamp} {command} {message}\n")


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in r))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def diagnostics_files(chain: PosteriorChain, batch_len: int = 100) -> dict:
    """Trace table, running quantiles and Monte Carlo standard errors."""
    q = chain.q
    head = ["iter", "loglik", "n_clusters"] + [f"k{j + 1}" for j in range(q)] + [f"ktilde{j + 1}" for j in range(q)]
    rows = [[int(chain.iters[s]), float(chain.loglik[s]), int(chain.n_clusters[s]),
             *map(int, chain.k[s]), *map(int, chain.ktilde[s])] for s in range(len(chain))]
    files = {"traces.csv": _csv_text(head, rows)}

    series = {"loglik": chain.loglik}
    if chain.snapshots is not None:
        for c in range(chain.snapshots.shape[2]):
            series[f"ctx0_p{c}"] = chain.snapshots[:, 0, c]
    quant = {name: running_quantiles(tr, (0.05, 0.5, 0.95)) for name, tr in series.items()}
    qhead = ["iter"] + [f"{name}_{tag}" for name in series for tag in ("q05", "q50", "q95")]
    qrows = [[int(chain.iters[s])] + [float(quant[name][i, s]) for name in series for i in range(3)]
             for s in range(len(chain))]
    files["quantiles.csv"] = _csv_text(qhead, qrows)

    mcse = {}
    traces = dict(series)
    for j in range(q):
        traces[f"ktilde{j + 1}_gt1"] = (chain.ktilde[:, j] > 1).astype(float)
    for name, tr in traces.items():
        try:
            se = batch_means_mcse(tr, batch_len)
        except InputError:
            se = None
        mcse[name] = {"mean": float(np.mean(tr)), "mcse": se}
    files["diagnostics.json"] = _dump_json({"batch_len": batch_len, "n_samples": len(chain), "mcse": mcse})
    return files


def _snapshot_files(chain: PosteriorChain, positions, truth) -> dict:
    q = chain.contexts.shape[1]
    head = ["index", "position"] + [f"lag{j + 1}" for j in range(q)] + ["truth"]
    rows = [[i, int(positions[i]), *map(int, chain.contexts[i]), None if truth[i] < 0 else int(truth[i])]
            for i in range(chain.contexts.shape[0])]
    S, N, C0 = chain.snapshots.shape
    shead = ["iter", "index"] + [f"p{c}" for c in range(C0)]
    srows = [[int(chain.iters[s]), i, *map(float, chain.snapshots[s, i])] for s in range(S) for i in range(N)]
    return {"contexts.csv": _csv_text(head, rows), "snapshots.csv": _csv_text(shead, srows)}


def load_run(run_dir) -> tuple[PosteriorChain, dict]:
    """Reload a fitted run (chain, summary and any stored snapshots)."""
    d = Path(run_dir)
    summary = json.loads((d / "summary.json").read_text())
    chain = PosteriorChain.from_jsonl(d / "chain.jsonl", Schedule(**summary["schedule"]))
    chain.meta = summary
    if (d / "contexts.csv").exists() and (d / "snapshots.csv").exists():
        with open(d / "contexts.csv") as fh:
            ctx_rows = list(csv.DictReader(fh))
        q = summary["q"]
        chain.contexts = np.array([[int(r[f"lag{j + 1}"]) for j in range(q)] for r in ctx_rows], dtype=np.int64)
        chain.meta["positions"] = [int(r["position"]) for r in ctx_rows]
        chain.meta["truth"] = [int(r["truth"]) if r["truth"] != "" else None for r in ctx_rows]
        snap = np.loadtxt(d / "snapshots.csv", delimiter=",", skiprows=1, ndmin=2)
        N, C0 = len(ctx_rows), summary["C0"]
        if snap.shape[0] != len(chain) * N:
            raise ConfigurationError(f"{d / 'snapshots.csv'} does not match the chain length")
        chain.snapshots = snap[:, 2:].reshape(len(chain), N, C0)
    return chain, summary


# ---------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    cfg = build_config(args)
    if cfg.input_path is None:
        raise UsageError("no input sequence; set input.path in the config or pass --input")
    if cfg.q is None:
        raise UsageError("maximal order q is required (config key 'q' or --q)")
    seq = load_sequence(cfg.input_path, cfg.format, cfg.alphabet, cfg.header)
    T_fit = seq.T - cfg.holdout
    if T_fit <= cfg.q:
        raise UsageError(f"sequence length after holdout ({T_fit}) must exceed q={cfg.q}")
    try:
        hyper = Hyperparams.default(seq.C0, cfg.q, schedule=cfg.schedule, **cfg.hyper)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    data = build_lag_design(EncodedSequence(seq.y[:T_fit], seq.alphabet), cfg.q)
    if cfg.holdout:
        positions = np.arange(T_fit, seq.T)
        contexts = lag_contexts(seq.y, cfg.q, T_fit, seq.T)
        truth = seq.y[T_fit:]
    else:
        positions = np.array([seq.T])
        contexts = np.array([[seq.y[seq.T - j] for j in range(1, cfg.q + 1)]], dtype=np.int64)
        truth = np.array([-1])

    cfg.out.mkdir(parents=True, exist_ok=True)
    _log(cfg.out, "fit", f"start T={seq.T} q={cfg.q} seed={cfg.seed} schedule={cfg.schedule}")
    chain = fit_model(data, hyper, cfg.seed, contexts=contexts, mode=cfg.mode, init_iters=cfg.init_iters)

    files = {}
    lines = [json.dumps(r) for r in chain.records()]
    files["chain.jsonl"] = "\n".join(lines) + "\n"
    summary = {
        "version": __version__,
        "config": cfg.to_json(),
        "alphabet": list(seq.alphabet),
        "T": seq.T, "T_fit": T_fit, "q": cfg.q, "C0": seq.C0,
        "n_counts": data.n_counts.tolist(),
        "hyper": {"alpha": hyper.alpha, "alpha0": hyper.alpha0, "gamma": hyper.gamma.tolist(),
                  "phi": hyper.phi, "L": int(hyper.L)},
        "schedule": asdict(cfg.schedule),
        "n_samples": len(chain),
        "inclusion": lag_inclusion(chain).tolist(),
        "order_pmf": maximal_order_distribution(chain).tolist(),
    }
    files["summary.json"] = _dump_json(summary)
    files.update(_snapshot_files(chain, positions, truth))
    files.update(diagnostics_files(chain))
    _write_files(cfg.out, files)
    _log(cfg.out, "fit", f"done samples={len(chain)}")
    print(f"inclusion: {' '.join(f'{v:.3f}' for v in summary['inclusion'])}")
    print(f"wrote {', '.join(sorted(files))} to {cfg.out}")
    return EXIT_OK


def _run_dir(args) -> Path:
    d = Path(args.chain) if args.chain else (Path(args.out) if args.out else None)
    if d is None:
        cfg = build_config(args)
        d = cfg.out
    return d


def cmd_test(args) -> int:
    tests = parse_hypotheses(Path(args.hypotheses).read_text())
    if not tests:
        raise UsageError(f"{args.hypotheses}: no hypotheses found")
    run_dir = _run_dir(args)
    chain, summary = load_run(run_dir)
    for t in tests:
        for h in (t["h0"], t["h1"]):
            h.lag_ops(chain.q)
    n_counts = np.array(summary["n_counts"])
    results = run_tests(chain, tests, n_counts, summary["hyper"]["gamma"], summary["hyper"]["phi"])
    out = Path(args.out) if args.out else run_dir
    head = ["name", "h0", "h1", "prior0", "prior1", "post0", "post1", "bf10"]
    rows = [[r["name"], r["h0"], r["h1"], r["p0"], r["p1"], r["post0"], r["post1"], r["bf10"]] for r in results]
    _write_files(out, {"tests.json": _dump_json(results), "tests.csv": _csv_text(head, rows)})
    _log(out, "test", f"{len(results)} hypotheses from {args.hypotheses}")
    for r in results:
        bf = r["bf10"] if isinstance(r["bf10"], str) or r["bf10"] is None else f"{r['bf10']:.4g}"
        print(f"{r['name']}: P(H0)={r['post0']:.4f} P(H1)={r['post1']:.4f} BF10={bf}")
    return EXIT_OK


def cmd_predict(args) -> int:
    if args.horizon != 1:
        raise UsageError("only one-step-ahead prediction (horizon=1) is supported")
    run_dir = _run_dir(args)
    chain, summary = load_run(run_dir)
    if chain.snapshots is None:
        raise ConfigurationError(f"{run_dir} has no stored transition snapshots; rerun fit")
    probs = posterior_mean_transition(chain)
    probs = probs / probs.sum(axis=1, keepdims=True)
    pred = predict_one_step(probs)
    alphabet = summary["alphabet"]
    truth = chain.meta.get("truth", [])
    with_truth = not args.no_truth and truth and all(t is not None for t in truth)
    head = ["position", "predicted"] + [f"p_{a}" for a in alphabet] + (["truth", "correct"] if with_truth else [])
    rows = []
    for i in range(probs.shape[0]):
        row = [chain.meta["positions"][i], alphabet[pred[i]], *probs[i]]
        if with_truth:
            row += [alphabet[truth[i]], int(pred[i] == truth[i])]
        rows.append(row)
    files = {"predictions.csv": _csv_text(head, rows)}
    out = Path(args.out) if args.out else run_dir
    if with_truth:
        err = classification_error(pred, np.array(truth))
        files["predict_summary.json"] = _dump_json({"n": len(rows), "classification_error": err})
        print(f"classification error: {err:.4f} over {len(rows)} positions")
    _write_files(out, files)
    _log(out, "predict", f"{len(rows)} positions")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    run_dir = _run_dir(args)
    chain, _ = load_run(run_dir)
    files = diagnostics_files(chain, args.batch_len)
    out = Path(args.out) if args.out else run_dir
    _write_files(out, files)
    _log(out, "diagnose", f"batch_len={args.batch_len}")
    diag = json.loads(files["diagnostics.json"])
    for name, v in diag["mcse"].items():
        se = "n/a" if v["mcse"] is None else f"{v['mcse']:.4g}"
        print(f"{name}: mean={v['mean']:.4g} mcse={se}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc, _ = _read_yaml(args.config) if args.config else ({}, None)
    sim = doc.get("simulate", {}) or {}
    case = args.case or sim.get("case")
    if case is None:
        raise UsageError(f"--case is required; valid cases are {', '.join(CASES)} or 'C0:lag,lag,..'")
    try:
        label, C0, lags = parse_case(case)
    except InputError:
        raise UsageError(f"unknown case {case!r}; valid cases are {', '.join(CASES)} "
                         "or a custom 'C0:lag,lag,..'") from None
    T = _int("T", args.T if args.T is not None else sim.get("T", 500), 2)
    N = _int("N", args.N if args.N is not None else sim.get("N", 500), 1)
    reps = _int("reps", args.reps if args.reps is not None else sim.get("reps", 10), 1)
    seed = _int("seed", args.seed if args.seed is not None else doc.get("seed", 0), 0)
    threads = _int("threads", args.threads if args.threads is not None else doc.get("threads", 1), 1)
    sched = args.schedule if args.schedule is not None else doc.get("schedule")
    sched = _schedule(sched) if sched is not None else Schedule.desk()
    mode = "stirling" if args.stirling else doc.get("mode", "exact")
    q = default_q(lags)
    if T <= q:
        raise UsageError(f"T={T} must exceed q={q} for case {label}")
    hyp_path = args.hypotheses or sim.get("hypotheses")
    hyps = None
    if hyp_path:
        tests = parse_hypotheses(Path(hyp_path).read_text())
        for t in tests:
            t["h1"].lag_ops(q)
        hyps = {t["name"]: t["h1"] for t in tests}
    hyper = Hyperparams.default(C0, q, schedule=sched, **(doc.get("hyper") or {}))
    out = Path(args.out) if args.out else Path(doc.get("out", "ctf_sim"))
    out.mkdir(parents=True, exist_ok=True)
    _log(out, "simulate", f"start case={label} T={T} N={N} reps={reps} seed={seed}")

    def progress(rep, rows, detail):
        ctf = rows[0]
        print(f"rep {rep}: avg_l1={ctf['avg_l1']:.4f} class_err={ctf['class_err']:.3f}", flush=True)
        _log(out, "simulate", f"rep {rep} wall_secs={ctf['wall_secs']}")

    res = run_experiment((C0, lags), T, N, reps, hyper=hyper, seed=seed, mode=mode,
                         hypotheses=hyps, threads=threads, progress=progress)
    for r in res.rows:
        r["case"] = label
    tmp = out / "metrics.csv"
    res.to_csv(tmp, timings=args.timings)
    files = {"aggregate.json": res.aggregate_json() + "\n",
             "replicates.json": _dump_json([{k: v for k, v in d.items() if k not in ("chain", "truth")}
                                            for d in res.replicates])}
    _write_files(out, files)
    _log(out, "simulate", "done")
    for method, agg in res.aggregate().items():
        print(f"{method}: avg_l1={agg['avg_l1']['mean']:.4f}±{agg['avg_l1']['se']:.4f} "
              f"class_err={agg['class_err']['mean']:.4f}±{agg['class_err']['se']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="YAML run configuration")
    g.add_argument("--seed", type=int, help="master random seed")
    g.add_argument("--out", help="output directory")
    g.add_argument("--threads", type=int, help="worker threads for independent replicates")
    g.add_argument("--stirling", action="store_true", help="use the large-count k update")
    g.add_argument("--schedule", help="n_iter,n_burn,thin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctfmarkov", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run the sampler on a sequence")
    _common(p)
    p.add_argument("--input", help="sequence file")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--q", type=int, help="maximal order")
    p.add_argument("--holdout", type=int, help="trailing positions kept out of the fit for prediction")
    p.add_argument("--toy", action="store_true", help="use the bundled example configuration")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="posterior probabilities and Bayes factors of hypotheses")
    _common(p)
    p.add_argument("hypotheses", help="hypotheses file, one 'name: H0 [| H1] [| p0 p1]' per line")
    p.add_argument("--chain", help="directory written by fit (default: --out or the config's out)")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="simulation study on a synthetic case")
    _common(p)
    p.add_argument("--case", help=f"one of {', '.join(CASES)} or 'C0:lag,lag,..'")
    p.add_argument("--T", type=int, help="training length")
    p.add_argument("--N", type=int, help="test length")
    p.add_argument("--reps", type=int, help="replicates")
    p.add_argument("--hypotheses", help="hypotheses file; P(H1) is recorded per replicate")
    p.add_argument("--timings", action="store_true", help="fill wall_secs in metrics.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="one-step-ahead predictions at stored contexts")
    _common(p)
    p.add_argument("--chain", help="directory written by fit")
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--no-truth", action="store_true", help="omit the truth and correctness columns")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("diagnose", help="trace tables, running quantiles and MCSEs")
    _common(p)
    p.add_argument("--chain", help="directory written by fit")
    p.add_argument("--batch-len", type=int, default=100)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "toy", False) and not args.config:
        args.config = str(bundled_toy_config())
    try:
        return args.func(args)
    except (InputError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CTFError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
