"""Command-line runner: bounds, certificate suites and scaling experiments.

Exit codes: 0 success, 1 certificate failure, 2 usage or configuration error.
Reports go to stdout as JSON (and to ``--out`` when given); experiment tables
are CSV.  Outputs depend only on the arguments and the seed, never on the
thread count or the clock.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds, certify, chaos2, covlab, leadlag, montecarlo
from .covlab import DomainError, GaussianMatrixSpec, SeedSpec
from .softminmax import min_sum_topk

SEED_ENV = "MINMAX_SEED"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved invocation embedded in every run record (thread count excluded)."""

    command: str
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, **self.params}


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _csv_text(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(float(r[h])) if isinstance(r[h], float) else r[h] for h in header])
    return buf.getvalue()


def _write_table(rows, header, out, config: ExperimentConfig) -> None:
    """CSV to ``out`` plus a ``<out>.json`` run record, or CSV to stdout."""
    text = _csv_text(rows, header)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        record = _dumps({"config": config.to_dict(), "out": out, "rows": len(rows)})
        Path(str(out) + ".json").write_text(record, encoding="utf-8")
        sys.stdout.write(record)
    else:
        sys.stdout.write(text)


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_bound(args) -> int:
    gamma = args.gamma
    n, m = args.n, args.m
    if args.spec_x or args.spec_y:
        if not (args.spec_x and args.spec_y):
            raise UsageError("--spec-x and --spec-y must be given together")
        sx = GaussianMatrixSpec.from_dict(_load_json(args.spec_x))
        sy = GaussianMatrixSpec.from_dict(_load_json(args.spec_y))
        gamma = covlab.gamma_discrepancy(sx, sy)
        n, m = sx.n, sx.m
    if gamma is None:
        raise UsageError("need --gamma or a pair of spec files")
    if args.kind == "order-stat":
        d = args.d if args.d is not None else m
        if d is None or args.h is None:
            raise UsageError("--order-stat needs -d and -h")
        rep = bounds.order_stat_bound(d, args.h, gamma)
    elif args.kind == "chatterjee":
        if m is None:
            raise UsageError("--chatterjee needs -m")
        rep = bounds.chatterjee_bound(m, gamma)
    else:
        if n is None or m is None:
            raise UsageError("--gordon needs -n and -m")
        rep = bounds.gordon_bound(n, m, args.k, gamma)
    params = {
        "kind": args.kind, "n": n, "m": m, "k": args.k, "d": args.d, "h": args.h, "gamma": gamma,
        "spec_x": args.spec_x, "spec_y": args.spec_y,
    }
    _emit(_dumps({**rep.to_dict(), "config": ExperimentConfig("bound", None, params).to_dict()}), args.out)
    return 0


def _overrides(args) -> dict:
    ov = {k: getattr(args, k) for k in ("trials", "pairs", "reps", "specs", "vectors")}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            ov[key] = json.loads(val)
        except json.JSONDecodeError:
            raise UsageError(f"--set value for {key!r} is not JSON: {val!r}") from None
    return ov


def cmd_certify(args) -> int:
    if args.suite not in certify.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(sorted(certify.SUITES))}")
    defaults = certify.load_defaults(args.defaults)
    seed = _resolve_seed(args.seed)
    rep = certify.run_suite(args.suite, _overrides(args), SeedSpec(seed), args.threads, defaults)
    run = ExperimentConfig("certify", seed, {"suite": args.suite, "defaults": args.defaults})
    doc = {"seed": seed, "run": run.to_dict(), **rep.to_dict()}
    _emit(_dumps(doc), args.out)
    if not rep.passed:
        names = ", ".join(r["name"] for r in rep.failures) or "no records"
        print(f"certificate failures: {names}", file=sys.stderr)
        return 1
    return 0


def cmd_chaos(args) -> int:
    if not args.spec:
        raise UsageError("--spec is required")
    spec = chaos2.QuadraticFormMatrixSpec.from_dict(_load_json(args.spec))
    seed = _resolve_seed(args.seed)
    rows = chaos2.scaling_experiment(spec, args.family_steps, args.copies, args.reps, SeedSpec(seed))
    run = ExperimentConfig(
        "chaos", seed, {"spec": args.spec, "family_steps": args.family_steps, "copies": args.copies, "reps": args.reps}
    )
    _write_table(rows, ["t", "kappa4_max", "ks", "shape"], args.out, run)
    return 0


def _parse_Ns(text: str) -> list[int]:
    try:
        Ns = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--Ns must be comma-separated integers, got {text!r}") from None
    if not Ns:
        raise UsageError("--Ns is empty")
    return Ns


def cmd_leadlag(args) -> int:
    Ns = _parse_Ns(args.Ns)
    defaults = certify.load_defaults(args.defaults)
    if args.config:
        config = leadlag.LeadLagConfig.from_dict(_load_json(args.config))
    else:
        config = certify.leadlag_config({**defaults["leadlag"], "Ns": Ns})
    seed = _resolve_seed(args.seed)
    moment_reps = args.moment_reps or defaults["leadlag"]["moment_reps"]
    rows = leadlag.convergence_experiment(config, Ns, args.reps, SeedSpec(seed), moment_reps)
    run = ExperimentConfig(
        "leadlag", seed, {"config": config.to_dict(), "Ns": Ns, "reps": args.reps, "moment_reps": moment_reps}
    )
    _write_table(rows, ["N", "m", "reps", "ks", "shape", "seed"], args.out, run)
    return 0


def _load_any_spec(path: str):
    doc = _load_json(path)
    if "A" in doc:
        return chaos2.QuadraticFormMatrixSpec.from_dict(doc)
    return GaussianMatrixSpec.from_dict(doc)


def cmd_sample(args) -> int:
    spec = _load_any_spec(args.spec)
    seed = _resolve_seed(args.seed)
    vals = montecarlo.statistic_values(
        spec, lambda x: min_sum_topk(x, args.k), args.reps, SeedSpec(seed), args.threads
    )
    rows = [{"value": float(v)} for v in vals]
    run = ExperimentConfig("sample", seed, {"spec": args.spec, "k": args.k, "reps": args.reps})
    _write_table(rows, ["value"], args.out, run)
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, out_help: str = "output path") -> None:
    p.add_argument("--seed", type=int, default=None, help=f"root seed (fallback: ${SEED_ENV}, then 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: CPU count)")
    p.add_argument("--out", default=None, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minmaxcmp", description="Min-max comparison bounds lab")
    sub = parser.add_subparsers(dest="command", required=True)

    pb = sub.add_parser("bound", add_help=False, help="evaluate a closed-form bound")
    pb.add_argument("--help", action="help", help="show this help message and exit")
    kind = pb.add_mutually_exclusive_group()
    kind.add_argument("--gordon", dest="kind", action="store_const", const="gordon")
    kind.add_argument("--chatterjee", dest="kind", action="store_const", const="chatterjee")
    kind.add_argument("--order-stat", dest="kind", action="store_const", const="order-stat")
    pb.set_defaults(kind="gordon")
    pb.add_argument("-n", type=int)
    pb.add_argument("-m", type=int)
    pb.add_argument("-k", type=int, default=1)
    pb.add_argument("-d", type=int, help="vector length (order statistics)")
    pb.add_argument("-h", type=int, help="order statistic index (1 = smallest)")
    pb.add_argument("--gamma", type=float)
    pb.add_argument("--spec-x")
    pb.add_argument("--spec-y")
    pb.add_argument("--out", default=None)
    pb.set_defaults(func=cmd_bound)

    pc = sub.add_parser("certify", help="run a certificate suite")
    pc.add_argument("suite", help=f"one of: {', '.join(sorted(certify.SUITES))}")
    for name in ("trials", "pairs", "reps", "specs", "vectors"):
        pc.add_argument(f"--{name}", type=int, default=None)
    pc.add_argument("--set", action="append", metavar="KEY=JSON", help="override a threshold or setting")
    pc.add_argument("--defaults", default=None, help="alternative defaults JSON")
    _common(pc, "also write the JSON report here")
    pc.set_defaults(func=cmd_certify)

    px = sub.add_parser("chaos", help="fourth-moment scaling table for a quadratic-form spec")
    px.add_argument("--spec", help="quadratic-form spec JSON")
    px.add_argument("--family-steps", type=int, default=5)
    px.add_argument("--copies", type=int, default=16)
    px.add_argument("--reps", type=int, default=20000)
    _common(px, "CSV output path")
    px.set_defaults(func=cmd_chaos)

    pl = sub.add_parser("leadlag", help="lead-lag Kolmogorov-distance convergence table")
    pl.add_argument("--config", help="lead-lag config JSON (default: packaged defaults)")
    pl.add_argument("--Ns", default="50,100,200,400")
    pl.add_argument("--reps", type=int, default=10000)
    pl.add_argument("--moment-reps", type=int, default=None)
    pl.add_argument("--defaults", default=None)
    _common(pl, "CSV output path")
    pl.set_defaults(func=cmd_leadlag)

    ps = sub.add_parser("sample", help="dump min-of-top-k samples as single-column CSV")
    ps.add_argument("--spec", required=True, help="Gaussian or quadratic-form spec JSON")
    ps.add_argument("-k", type=int, default=1)
    ps.add_argument("--reps", type=int, default=10000)
    _common(ps, "CSV output path")
    ps.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    covlab.set_threads(threads)
    try:
        return args.func(args)
    except (UsageError, DomainError, MemoryError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
