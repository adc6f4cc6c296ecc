"""Command-line driver: ``dgpcl run|static|summarize|tricands|predict``.

Configs are YAML mappings whose keys mirror :class:`ExperimentConfig`.
Repetition ``k`` of a run seeded with ``s`` draws from
``numpy.random.default_rng(SeedSequence([s, k]))``, so any single rep can be
replayed on its own. Worker-pool width comes from ``DGPCL_WORKERS`` (default 1).
"""
import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from . import acquisition as acq
from .design import SURROGATES, ConfigError, ExperimentConfig, make_surrogate, run_sequential, run_static
from .posterior import aggregate
from .testfns import get_function
from .tricands import MAX_DIM, DegenerateError, targeted_subsample, tricands

HEADER = [
    "rep", "iter", "n", "method", "sensitivity", "specificity", "f1",
    "rmse", "crps", "fit_time_s", "acq_time_s", "seed",
]
METRICS = ("sensitivity", "specificity", "f1", "rmse", "crps")
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
WORKERS_ENV = "DGPCL_WORKERS"

logger = logging.getLogger("dgpcl")


def rep_rng(seed, rep):
    return np.random.default_rng(np.random.SeedSequence([seed, rep]))


def load_config(path, seed=None):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    if seed is not None:
        raw["seed"] = seed
    return ExperimentConfig.from_dict(raw)


def _fmt(v):
    return repr(float(v))


def _rows(cfg, rep, records, timings, static):
    out = []
    for i, r in enumerate(records):
        fit_t = r.fit_time_s if timings else 0.0
        acq_t = r.acq_time_s if timings else 0.0
        method = cfg.surrogate + "-static" if static else cfg.method
        out.append([
            rep, 0 if static else i, r.n, method,
            _fmt(r.sensitivity), _fmt(r.specificity), _fmt(r.f1), _fmt(r.rmse), _fmt(r.crps),
            _fmt(fit_t), _fmt(acq_t), cfg.seed,
        ])
    return out


def _one_rep(cfg, rep, static, checkpoint_dir):
    """Worker body; returns (rows-ready records, error message or None)."""
    f = get_function(cfg.function)
    rng = rep_rng(cfg.seed, rep)
    try:
        if static:
            return [run_static(cfg, f, rng)], None
        ckpt = os.path.join(checkpoint_dir, f"rep{rep:04d}") if checkpoint_dir else None
        return run_sequential(cfg, f, rng, checkpoint_dir=ckpt), None
    except Exception as err:  # keep partial output; report after flushing
        return getattr(err, "records", []), f"{type(err).__name__}: {err}"


def _execute(cfg, out, static, timings, checkpoint_dir=None, workers=None):
    workers = workers or int(os.environ.get(WORKERS_ENV, "1"))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER)
    failed = 0
    reps = range(cfg.reps)
    if workers > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_one_rep, cfg, k, static, checkpoint_dir) for k in reps]
            results = (fut.result() for fut in futures)  # rep order, whatever finishes first
            failed = _flush(cfg, writer, out, results, static, timings)
    else:
        results = (_one_rep(cfg, k, static, checkpoint_dir) for k in reps)
        failed = _flush(cfg, writer, out, results, static, timings)
    return EXIT_RUNTIME if failed else EXIT_OK


def _flush(cfg, writer, out, results, static, timings):
    failed = 0
    for rep, (records, err) in enumerate(results):
        writer.writerows(_rows(cfg, rep, records, timings, static))
        out.flush()
        if err is not None:
            failed += 1
            logger.error("rep %d failed after %d records: %s", rep, len(records), err)
    return failed


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def cmd_experiment(args, static):
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as err:
        logger.error("config error: %s", err)
        return EXIT_CONFIG
    out = _open_out(args.out)
    try:
        return _execute(cfg, out, static, timings=not args.no_timings,
                        checkpoint_dir=getattr(args, "checkpoint_dir", None))
    finally:
        if out is not sys.stdout:
            out.close()


def summarize(rows):
    """Quartiles of each metric per (method, n) across reps, in first-seen method order."""
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], int(r["n"])), []).append([float(r[m]) for m in METRICS])
    methods = list(dict.fromkeys(m for m, _ in groups))
    out = []
    for key in sorted(groups, key=lambda k: (methods.index(k[0]), k[1])):
        vals = np.array(groups[key])
        q = np.percentile(vals, [25, 50, 75], axis=0)
        out.append([key[0], key[1], vals.shape[0]] + [_fmt(v) for v in q.T.ravel()])
    return out


def cmd_summarize(args):
    rows = []
    try:
        for path in args.results:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != HEADER:
                    raise ValueError(f"{path} is not a results CSV (header {reader.fieldnames})")
                rows.extend(reader)
        table = summarize(rows)
    except (OSError, ValueError) as err:
        logger.error("%s", err)
        return EXIT_CONFIG
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["method", "n", "reps"] + [f"{m}_{q}" for m in METRICS for q in ("q25", "median", "q75")])
    writer.writerows(table)
    return EXIT_OK


def read_design(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError("empty design file")
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]  # header
    try:
        X = np.array([[float(v) for v in r] for r in rows])
    except ValueError as err:
        raise ValueError(f"malformed design CSV: {err}") from None
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("malformed design CSV: ragged or empty rows")
    if not np.all(np.isfinite(X)) or X.min() < 0 or X.max() > 1:
        raise ValueError("design points must be finite and lie in [0, 1]^d")
    return X


def cmd_tricands(args):
    try:
        X = read_design(args.design)
    except (OSError, ValueError) as err:
        logger.error("%s", err)
        return EXIT_CONFIG
    if X.shape[1] > MAX_DIM:
        logger.error("d=%d exceeds the triangulation limit of %d", X.shape[1], MAX_DIM)
        return EXIT_CONFIG
    try:
        cands = tricands(X, alpha=args.alpha)
        if args.n_max is not None:
            if args.y is None:
                raise ValueError("--n-max needs responses (--y) and --g to rank design points")
            from .acquisition import Threshold

            y = np.loadtxt(args.y, delimiter=",", ndmin=1)
            cands = targeted_subsample(cands, y, Threshold(args.g), args.n_max, rep_rng(args.seed, 0))
    except (ValueError, DegenerateError) as err:
        logger.error("%s", err)
        return EXIT_RUNTIME
    sys.stdout.write(cands.to_csv())
    return EXIT_OK


def cmd_predict(args):
    try:
        X = read_design(args.design)
        y = np.loadtxt(args.y, delimiter=",", ndmin=1)
        Xnew = read_design(args.at)
        if y.shape != (X.shape[0],):
            raise ValueError(f"{X.shape[0]} design rows but {y.size} responses")
        if Xnew.shape[1] != X.shape[1]:
            raise ValueError(f"prediction points have {Xnew.shape[1]} columns, design has {X.shape[1]}")
        if args.burn >= args.iters:
            raise ValueError(f"burn-in {args.burn} leaves an empty chain of {args.iters}")
        thr = None if args.g is None else acq.Threshold(args.g, args.direction)
    except (OSError, ValueError) as err:
        logger.error("%s", err)
        return EXIT_CONFIG
    model = make_surrogate(args.surrogate)
    try:
        model.fit(X, y, rep_rng(args.seed, 0), n_iter=args.iters, burn=args.burn, thin=args.thin)
        ms = model.predict_moments(Xnew)
    except Exception as err:  # numerical failure inside the sampler
        logger.error("%s: %s", type(err).__name__, err)
        return EXIT_RUNTIME
    agg = aggregate(ms)
    cols = [agg.mu, agg.sigma]
    head = [f"x{h + 1}" for h in range(X.shape[1])] + ["mu", "sigma"]
    if thr is not None:
        cols += [acq.failure_prob(agg.mu, agg.sigma, thr), acq.mcmc_entropy(ms, thr)]
        head += ["p_fail", "entropy"]
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(head)
    for i, x in enumerate(Xnew):
        writer.writerow([_fmt(v) for v in x] + [_fmt(c[i]) for c in cols])
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dgpcl", description="Contour location with deep GP surrogates.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "sequential design, one row per (rep, iter)"),
                        ("static", "one-shot LHS fit, one row per rep")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="YAML experiment config")
        sp.add_argument("--out", default=None, help="CSV path (default stdout)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--no-timings", action="store_true",
                        help="write 0 in the timing columns (byte-reproducible output)")
        if name == "run":
            sp.add_argument("--checkpoint-dir", default=None, help="resume/snapshot directory")

    sm = sub.add_parser("summarize", help="per (method, n) metric quartiles across reps")
    sm.add_argument("results", nargs="+", help="CSV files written by run or static")

    tp = sub.add_parser("tricands", help="print triangulation candidates for a design CSV")
    tp.add_argument("design")
    tp.add_argument("--alpha", type=float, default=0.9)
    tp.add_argument("--n-max", type=int, default=None)
    tp.add_argument("--y", default=None, help="responses, one per design row")
    tp.add_argument("--g", type=float, default=0.0)
    tp.add_argument("--seed", type=int, default=0)

    pp = sub.add_parser("predict", help="fit one surrogate to a design and predict at new points")
    pp.add_argument("design", help="design CSV, values in [0, 1]")
    pp.add_argument("y", help="responses, one per design row")
    pp.add_argument("at", help="CSV of prediction points")
    pp.add_argument("--surrogate", choices=SURROGATES, default="dgp-ess")
    pp.add_argument("--iters", type=int, default=10_000)
    pp.add_argument("--burn", type=int, default=8_000)
    pp.add_argument("--thin", type=int, default=4)
    pp.add_argument("--g", type=float, default=None, help="limit state; adds p_fail and entropy columns")
    pp.add_argument("--direction", choices=[d.value for d in acq.Direction], default="fail_above")
    pp.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    if args.command == "run":
        return cmd_experiment(args, static=False)
    if args.command == "static":
        return cmd_experiment(args, static=True)
    if args.command == "summarize":
        return cmd_summarize(args)
    if args.command == "predict":
        return cmd_predict(args)
    return cmd_tricands(args)


if __name__ == "__main__":
    sys.exit(main())
