"""Command-line interface: ``qlog <subcommand> [options]``.

Every JSON report has the form
``{"command", "version", "seed", "config", "result"}`` with floats printed
at 17 significant digits, so identical invocations give byte-identical
output.  Exit codes: 0 success, 1 a certified inequality failed
(``verify``), 2 configuration error, 3 degenerate structure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from . import bounds as bd
from . import coupling as cpl
from . import laws
from . import pmf as pm
from . import reference as ref
from . import structures as st
from .config import ConfigError, ExperimentConfig

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_DEGENERATE = 0, 1, 2, 3

DEFAULT_LAW = {"family": "poisson", "theta": {"kind": "constant", "theta": 1.0}}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj) -> str:
    """Deterministic JSON with floats at 17 significant digits and sorted keys."""
    if obj is None or isinstance(obj, bool):
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{dumps(k)}: {dumps(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if hasattr(obj, "to_dict"):
        return dumps(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".17g") if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(args, config: dict, result, table=None) -> None:
    if args.emit == "csv":
        if table is None:
            raise ConfigError(f"{args.command} has no CSV form; use --emit json")
        text = _csv(*table)
    else:
        text = dumps({"command": args.command, "version": __version__, "seed": args.seed,
                      "config": config, "result": result}) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# configuration helpers
# ---------------------------------------------------------------------------

def _experiment(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig(law=dict(DEFAULT_LAW), n=getattr(args, "n", None) or 100)
    if getattr(args, "n", None) is not None:
        cfg.n = args.n
    if getattr(args, "a", None) is not None:
        cfg.a = args.a
    if getattr(args, "theta", None) is not None and not getattr(args, "config", None):
        cfg.law = {"family": "poisson", "theta": {"kind": "constant", "theta": args.theta}}
    cfg.__post_init__()
    return cfg


def _float_range(spec: str) -> list[float]:
    """``lo:step:hi`` (inclusive) or a comma list."""
    if ":" in spec:
        lo, step, hi = (float(v) for v in spec.split(":"))
        k = int(math.floor((hi - lo) / step + 1e-9))
        return [round(lo + j * step, 12) for j in range(k + 1)]
    return [float(v) for v in spec.split(",")]


def _int_list(spec: str) -> list[int]:
    return [int(v) for v in spec.split(",")]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_dist(args):
    cfg = _experiment(args)
    law = cfg.build_law()
    t = st.weighted_sum_pmf(law, cfg.a, cfg.n)
    rows = [(t.offset + k, float(p)) for k, p in enumerate(t.probs)]
    res = {"offset": t.offset, "probs": t.probs, "tail_mass": t.tail_mass,
           "d1": pm.unit_shift_tv(t).value, "mean": pm.expectation(t, compensated=True)}
    _emit(args, cfg.to_dict(), res, (("k", "prob"), rows))


def cmd_cp(args):
    q = ref.cp_pmf(args.theta, args.n, args.m_max)
    rows = [(q.offset + k, float(p)) for k, p in enumerate(q.probs)]
    if args.upto is not None:
        rows = [r for r in rows if r[0] <= args.upto]
    res = {"offset": q.offset, "probs": [r[1] for r in rows], "tail_mass": q.tail_mass}
    _emit(args, {"theta": args.theta, "n": args.n, "m_max": args.m_max}, res, (("k", "prob"), rows))


def cmd_dickman(args):
    s = ref.dickman(args.theta, args.grid, args.xmax)
    xs = np.round(np.arange(0, args.xmax + args.step / 2, args.step), 12)
    rows = []
    for x in xs:
        rho = float(ref.rho(x, args.grid, args.xmax)) if x <= args.xmax else 0.0
        p = float(s.p_theta(x)) if (x > 0 or args.theta >= 1) else math.inf
        f = float(s.f_theta(x)) if 0 < x <= 1 else None
        F = float(s.F_theta(x)) if 0 < x <= 1 else None
        rows.append((float(x), rho, p, f, F))
    res = {"x": [r[0] for r in rows], "rho": [r[1] for r in rows], "p_theta": [r[2] for r in rows],
           "f_theta": [r[3] for r in rows], "F_theta": [r[4] for r in rows],
           "total_mass": s.total_mass(), "p_at_one": s.p_at_one}
    table = (("x", "rho", "p_theta", "f_theta", "F_theta"),
             [tuple("" if v is None else v for v in r) for r in rows])
    _emit(args, {"theta": args.theta, "grid": args.grid, "xmax": args.xmax, "step": args.step}, res, table)


def _coupling_config(args, cfg: ExperimentConfig) -> cpl.CouplingConfig:
    c = dict(cfg.coupling)
    for key in ("strategy", "psi", "r", "s"):
        v = getattr(args, key, None)
        if v is not None:
            c[key] = v
    trials = args.trials if args.trials is not None else cfg.trials
    try:
        return cpl.CouplingConfig(n=cfg.n, a=cfg.a, psi=float(c.get("psi", 1 / 16)), r=int(c.get("r", 1)),
                                  s=int(c.get("s", 2)), k=c.get("k"), strategy=c.get("strategy", "blocked"),
                                  seed=args.seed, trials=trials)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_couple(args):
    cfg = _experiment(args)
    law = cfg.build_law()
    cc = _coupling_config(args, cfg)
    t = st.weighted_sum_pmf(law, cfg.a, cfg.n)
    res = {"exact_d1": pm.unit_shift_tv(t).value}
    if cc.strategy == "mineka":
        b, su = cpl.mineka_bound(law, cfg.a, cfg.n, args.blocking)
        res.update({"bound": b, "sum_u": su})
    else:
        est, ci = cpl.estimate_shift_tv(law, cc, workers=args.threads)
        res.update({"estimate": est, "ci95": ci})
        res["traces_sample"] = [tr.to_dict() for tr in cpl.run_trials(law, cc, range(min(args.sample, cc.trials)))]
    _emit(args, {"experiment": cfg.to_dict(), "coupling": cc.to_dict()}, res)


def cmd_tv(args):
    cfg = _experiment(args)
    law = cfg.build_law()
    t = st.weighted_sum_pmf(law, cfg.a, cfg.n)
    cp = ref.cp_pmf(law.theta, cfg.n)
    tv = pm.tv_distance(t, cp)
    res = {"d1": pm.unit_shift_tv(t).value, "tv_to_cp": tv.value, "tv_radius": tv.radius,
           "max_point_mass": pm.max_point_mass(t)}
    _emit(args, cfg.to_dict(), res)


def cmd_largest(args):
    cfg = _experiment(args)
    law = cfg.build_law()
    n = cfg.n
    table = st.spectrum_table(law, n, store="sparse")
    table.require()
    xs = _float_range(args.xs)
    s = ref.dickman(law.theta)
    rows = []
    for x in xs:
        exact = st.largest_cdf_exact(law, table, n, x)
        rows.append((x, exact, float(s.F_theta(x))))
    res = {"x": xs, "cdf": [r[1] for r in rows], "limit": [r[2] for r in rows]}
    _emit(args, cfg.to_dict(), res, (("x", "cdf_exact", "limit_F_theta"), rows))


def cmd_small(args):
    cfg = _experiment(args)
    law = cfg.build_law()
    ns = _int_list(args.ns) if args.ns else [cfg.n]
    a = args.a if args.a is not None else max(cfg.a, 1)
    rows = []
    for n in ns:
        if law.family == "poisson":
            val = st.small_tv_highprec(law, n, a)
            text = str(val)
            val = float(val) if float(val) > 0 else text
        else:
            table = st.spectrum_table(law, n)
            val = st.small_tv_exact(law, table, n, a)
        rows.append((n, a, val))
    res = {"n": ns, "a": a, "tv": [r[2] for r in rows]}
    _emit(args, {"experiment": cfg.to_dict(), "ns": ns, "a": a}, res, (("n", "a", "tv"), rows))


def cmd_sample(args):
    cfg = _experiment(args)
    law = cfg.build_law()
    table = st.spectrum_table(law, cfg.n)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    samples = st.sample_structures(law, table, args.count, rng)
    sizes = np.arange(1, cfg.n + 1)
    largest = np.array([int(np.max(np.nonzero(row)[0]) + 1) for row in samples])
    comps = samples.sum(axis=1)
    res = {"count": args.count, "conserved": bool(np.all(samples @ sizes == cfg.n)),
           "mean_counts": samples.mean(axis=0), "largest": largest, "components": comps}
    rows = [(j, int(largest[j]), int(comps[j])) for j in range(args.count)]
    _emit(args, {"experiment": cfg.to_dict(), "count": args.count}, res,
          (("sample", "largest", "components"), rows))


def cmd_theta(args):
    cfg = _experiment(args)
    law = cfg.build_law()
    horizon = args.horizon or cfg.n
    seq = law.seq
    res = {"theta": law.theta, "values": law.theta_values(min(horizon, args.show))}
    if args.delta_m:
        res["delta_m"] = laws.delta_m_theta(seq, args.delta_m, law.theta, horizon)
        if isinstance(seq, laws.Sinusoid):
            res["analytic_bound"] = laws.sinusoid_block_bound(seq, args.delta_m)
    if args.witness:
        D = _int_list(args.witness)
        w = laws.qlc_witness(seq, D, (1, horizon))
        res["witness"] = None if w is None else w.to_dict()
        res["degenerate_case"] = laws.degenerate_cosine_case(seq)
    _emit(args, {"experiment": cfg.to_dict(), "horizon": horizon}, res)


def regression_grid() -> list[dict]:
    """The laws used by ``verify --grid default``."""
    return [
        {"family": "poisson", "theta": {"kind": "constant", "theta": 1.0}},
        {"family": "poisson", "theta": {"kind": "sinusoid", "theta": 1.0,
                                        "terms": [[0.5, math.sqrt(2) / 10, 0.3]]}},
        {"family": "negbin", "theta": {"kind": "semigroup", "p": "irreducible", "q": 2, "size": 512}},
    ]


def cmd_verify(args):
    if args.config:
        cfg = _experiment(args)
        cells = [(cfg.law, cfg.n, cfg.a)]
        echo = cfg.to_dict()
    elif args.grid == "default":
        ns = _int_list(args.ns)
        as_ = _int_list(args.as_)
        cells = [(law, n, a) for law in regression_grid() for n in ns for a in as_]
        echo = {"grid": "default", "ns": ns, "as": as_}
    else:
        raise ConfigError("verify needs --config or --grid default")
    reports, ok = [], True
    built = {}
    for law_d, n, a in cells:
        key = dumps(law_d)
        if key not in built:
            cfg = ExperimentConfig(law=law_d, n=n, a=a)
            built[key] = cfg.build_law()
        law = built[key]
        ctx = bd.BoundContext(law, n, a)
        g = bd.verify_global(law, n, a, ctx, scaled=False)
        loc = bd.verify_local(law, None, n, a, ctx=ctx)
        tails = [bd.tail_bound_check(law, n, j, a, ctx) for j in (n // 16, n // 4, n // 2)]
        cps = [ref.cp_small_tail_check(law.theta, n, j) for j in (n // 16, n // 4, n // 2)]
        entry = {"law": law_d, "n": n, "a": a, "global": g, "local": loc,
                 "tail": [list(t) for t in tails], "cp_tail": [list(t) for t in cps]}
        cell_ok = g.ok and loc.ok and all(t[2] for t in tails) and all(t[2] for t in cps)
        entry["pass"] = cell_ok
        ok &= cell_ok
        reports.append(entry)
    _emit(args, echo, {"pass": ok, "reports": reports})
    return EXIT_OK if ok else EXIT_CERT


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlog", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qlog {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--emit", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="write the report here instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("dist", cmd_dist, "exact law of T_{a,n}")
    sp.add_argument("--n", type=int)
    sp.add_argument("--a", type=int)
    sp.add_argument("--theta", type=float)

    sp = add("cp", cmd_cp, "compound Poisson law cp(theta, n)")
    sp.add_argument("--theta", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m-max", type=int, dest="m_max")
    sp.add_argument("--upto", type=int, help="only emit k <= UPTO (default: n)")

    sp = add("dickman", cmd_dickman, "Dickman function and density tables")
    sp.add_argument("--theta", type=float, default=1.0)
    sp.add_argument("--grid", type=float, default=1e-4)
    sp.add_argument("--xmax", type=int, default=20)
    sp.add_argument("--step", type=float, default=0.05, help="output spacing")

    sp = add("couple", cmd_couple, "coupling estimate of D^1")
    sp.add_argument("--n", type=int)
    sp.add_argument("--a", type=int)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--strategy", choices=cpl.STRATEGIES)
    sp.add_argument("--psi", type=float)
    sp.add_argument("--r", type=int)
    sp.add_argument("--s", type=int)
    sp.add_argument("--blocking", choices=("pairs",), default=None)
    sp.add_argument("--sample", type=int, default=3, help="traces to include")

    sp = add("tv", cmd_tv, "D^1(T_{a,n}) and the distance to cp(theta, n)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--a", type=int)
    sp.add_argument("--theta", type=float)

    sp = add("largest", cmd_largest, "largest-component distribution")
    sp.add_argument("--n", type=int)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--xs", default="0.1:0.05:1.0")

    sp = add("small", cmd_small, "small-component total variation")
    sp.add_argument("--a", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--ns", help="comma-separated sizes")
    sp.add_argument("--theta", type=float)

    sp = add("sample", cmd_sample, "sample component spectra")
    sp.add_argument("--n", type=int)
    sp.add_argument("--count", type=int, default=1000)
    sp.add_argument("--theta", type=float)

    sp = add("theta", cmd_theta, "theta-sequence diagnostics")
    sp.add_argument("--n", type=int)
    sp.add_argument("--delta-m", type=int, dest="delta_m")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--witness", help="comma-separated jump sizes for the blocking-condition search")
    sp.add_argument("--show", type=int, default=20, help="how many theta_i to list")
    sp.add_argument("--theta", type=float)

    sp = add("verify", cmd_verify, "certify the explicit inequalities")
    sp.add_argument("--grid", choices=("default",))
    sp.add_argument("--ns", default="128,256,512")
    sp.add_argument("--as", dest="as_", default="0,3,15")
    sp.add_argument("--n", type=int)
    sp.add_argument("--a", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "cp" and args.upto is None and args.emit == "csv":
        args.upto = args.n
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"qlog: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except st.DegenerateStructureError as exc:
        print(f"qlog: degenerate structure: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"qlog: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
