"""``alohajam`` command line: sweep, figures, simulate, coupled, verify.

Exit codes: 0 ok, 1 configuration error, 2 verify failures, 3 unexpected
instability.
"""

import argparse
import csv
import io
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext

import numpy as np

from . import bounds as B
from . import verify as V
from .errors import DomainError, InsufficientDataError
from .queue_model import SideInfo, SystemParams, TruncationSpec, Uniform, Vector, dtmc_stationary_truncated
from .sim import MIN_ACTIVE, SimConfig, channel_stats, coupled_run, plugin_mi, simulate, write_trace_csv
from .svg import line_chart

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_UNSTABLE = 0, 1, 2, 3

SWEEP_COLUMNS = ["n", "p", "alpha", "lambda", "beta", "lb_s1", "lb_s2", "q2_opt", "lb_s3", "q3_opt",
                 "w3_opt", "ub", "beta_bar", "clamped"]
SIM_COLUMNS = ["sim_pi_n", "sim_pi_n_se", "sim_mi_per_slot", "sim_mi_per_slot_se"]
FIG_P = (0.01, 0.2, 0.4, 0.6, 0.8, 0.9)
FIG_ALPHA = tuple(round(0.05 + 0.01 * i, 2) for i in range(95))

FLOAT_KEYS = {"p", "lambda", "alpha", "q", "w", "tol"}
INT_KEYS = {"n", "horizon", "warmup", "seed", "qmax", "runs"}
LIST_KEYS = {"qvec", "p_grid", "alpha_grid", "strategies"}
BOOL_KEYS = {"expect_stable", "record_trace", "sim_confirm"}
KNOWN = FLOAT_KEYS | INT_KEYS | LIST_KEYS | BOOL_KEYS | {"policy"}


class ConfigError(ValueError):
    pass


def parse_config(text):
    """Flat ``key=value`` lines; ``#`` starts a comment. Lists are comma separated."""
    cfg = {}
    for num, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {num}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN:
            raise ConfigError(f"line {num}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {num}: duplicate key {key!r}")
        try:
            if key in FLOAT_KEYS:
                cfg[key] = float(val)
            elif key in INT_KEYS:
                cfg[key] = int(val)
            elif key in BOOL_KEYS:
                low = val.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(val)
                cfg[key] = low in ("true", "1", "yes")
            elif key == "strategies":
                cfg[key] = [s.strip() for s in val.split(",") if s.strip()]
            elif key in LIST_KEYS:
                cfg[key] = [float(s) for s in val.split(",") if s.strip()]
            else:
                cfg[key] = val
        except ValueError:
            raise ConfigError(f"line {num}: bad value for {key!r}: {val!r}") from None
    if "lambda" in cfg and "alpha" in cfg:
        raise ConfigError("give lambda or alpha, not both")
    return cfg


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


def params_from(cfg):
    n = cfg.get("n", 2)
    p = cfg.get("p", 0.5)
    if "lambda" in cfg:
        return SystemParams(n, cfg["lambda"], p)
    return SystemParams.from_alpha(cfg.get("alpha", 0.8), p, n)


def policy_from(cfg, n):
    kind = cfg.get("policy", "uniform")
    if kind == "uniform":
        return Uniform(cfg.get("q", 0.0))
    if kind == "sideinfo":
        if n != 2:
            raise ConfigError("policy=sideinfo needs n=2")
        return SideInfo(cfg.get("q", 0.0), cfg.get("w", 0.0))
    if kind == "vector":
        qs = cfg.get("qvec")
        if qs is None or len(qs) != n:
            raise ConfigError(f"policy=vector needs qvec with {n} entries")
        return Vector(tuple(qs))
    raise ConfigError(f"unknown policy {kind!r}")


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def _executor(jobs):
    return ProcessPoolExecutor(max_workers=jobs) if jobs and jobs > 1 else nullcontext(None)


def _map(ex, fn, items):
    return list(ex.map(fn, items)) if ex is not None else [fn(x) for x in items]


def _derive_seed(seed, index):
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def _sweep_point(task):
    n, p, a, strategies, sim = task
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            row = B.bounds_row(n, p, a, strategies)
        except DomainError as exc:
            row = B.BoundsRow(n=n, p=p, alpha=a, lam=math.nan, beta=1.0 - a, errors={"params": str(exc)})
        extra = None
        if sim is not None:
            extra = _sim_confirm(row, *sim)
    return row, extra


def _sim_confirm(row, horizon, warmup, seed):
    q = row.q2_opt if row.q2_opt is not None else 0.0
    params = SystemParams.from_alpha(row.alpha, row.p, row.n)
    try:
        st = simulate(params, Uniform(q), SimConfig(horizon, warmup, seed))
        cs = channel_stats(st)
    except (DomainError, InsufficientDataError) as exc:
        row.errors["sim"] = str(exc)
        return [None] * len(SIM_COLUMNS)
    n = row.n
    return [st.occupancy.pi[n], st.occupancy_se[n], cs["mi_per_slot"],
            cs["mi_per_active_slot_se"] * cs["active_fraction"]]


def cmd_sweep(args, cfg):
    n = cfg.get("n", 2)
    ps = sorted(cfg.get("p_grid", list(FIG_P)))
    alphas = sorted(cfg.get("alpha_grid", list(V.GRID_ALPHA)))
    strategies = tuple(cfg.get("strategies", B.STRATEGIES))
    if not ps or not alphas:
        raise ConfigError("p_grid and alpha_grid must be non-empty")
    if any(not 0 < v < 1 for v in ps + alphas):
        raise ConfigError("grid values must lie in (0, 1)")
    if any(s not in B.STRATEGIES for s in strategies):
        raise ConfigError(f"strategies must be a subset of {','.join(B.STRATEGIES)}")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    confirm = cfg.get("sim_confirm", False)
    tasks = []
    for i, (p, a) in enumerate((p, a) for p in ps for a in alphas):
        sim = (cfg.get("horizon", 10**5), cfg.get("warmup", 10**3), _derive_seed(seed, i)) if confirm else None
        tasks.append((n, p, a, strategies, sim))
    with _executor(args.jobs) as ex:
        results = _map(ex, _sweep_point, tasks)
    results.sort(key=lambda r: (r[0].p, r[0].alpha))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS + (SIM_COLUMNS if confirm else []))
    for row, extra in results:
        cells = [row.n, row.p, row.alpha, row.lam, row.beta, row.lb_s1, row.lb_s2, row.q2_opt, row.lb_s3,
                 row.q3_opt, row.w3_opt, row.ub, row.beta_bar, row.clamped]
        w.writerow([fmt(c) for c in cells + (extra or [])])
        for name, msg in sorted(row.errors.items()):
            print(f"note: p={fmt(row.p)} alpha={fmt(row.alpha)} {name}: {msg}", file=sys.stderr)
    out = args.out or "sweep.csv"
    _write(out, buf.getvalue())
    print(f"wrote {len(results)} rows to {out}")
    return EXIT_OK


def _figure_point(pa):
    p, a = pa
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        params = SystemParams.from_alpha(a, p)
        return p, a, B.lb_strategy2(params).rate, B.ub_two_user(params).rate


def figure_name(p):
    return f"fig_p{p:g}"


def cmd_figures(args, cfg):
    out = args.out or "figures"
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create {out}: {exc}") from None
    pts = [(p, a) for p in FIG_P for a in FIG_ALPHA]
    with _executor(args.jobs) as ex:
        vals = _map(ex, _figure_point, pts)
    for p in FIG_P:
        rows = sorted((a, lb, ub) for pp, a, lb, ub in vals if pp == p)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "lb_s2", "ub"])
        for a, lb, ub in rows:
            w.writerow([fmt(a), fmt(lb), fmt(ub)])
        base = os.path.join(out, figure_name(p))
        _write(base + ".csv", buf.getvalue())
        xs = [r[0] for r in rows]
        top = max(r[2] for r in rows)
        ymax = max(0.1, math.ceil(top * 10) / 10)
        svg = line_chart(
            [("upper bound", xs, [r[2] for r in rows]), ("achievable (strategy 2)", xs, [r[1] for r in rows])],
            title=f"Upper bound and achievable rate, p = {p:g}", xlabel="offered load alpha",
            ylabel="bits per slot", xlim=(0.0, 1.0), ylim=(0.0, ymax),
            xticks=[0, 0.2, 0.4, 0.6, 0.8, 1.0], yticks=[round(ymax * i / 5, 3) for i in range(6)])
        _write(base + ".svg", svg)
    print(f"wrote {2 * len(FIG_P)} files to {out}")
    return EXIT_OK


def _write(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _sim_config(args, cfg):
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    return SimConfig(horizon=cfg.get("horizon", 10**5), warmup=cfg.get("warmup", 10**3), seed=seed,
                     record_trace=cfg.get("record_trace", False))


def cmd_simulate(args, cfg):
    params = params_from(cfg)
    policy = policy_from(cfg, params.n)
    sc = _sim_config(args, cfg)
    st = simulate(params, policy, sc)
    lines = [
        ("n", params.n), ("p", params.p), ("lambda", params.lam), ("alpha", params.alpha),
        ("policy", " ".join(fmt(v) for v in policy.jam_vector(params.n)[1:])),
        ("horizon", sc.horizon), ("warmup", sc.warmup), ("seed", sc.seed), ("slots", st.slots),
    ]
    lines += [(f"pi[{k}]", v) for k, v in enumerate(st.occupancy.pi)]
    lines += [(f"pi_se[{k}]", v) for k, v in enumerate(st.occupancy_se)]
    try:
        cs = channel_stats(st)
    except InsufficientDataError:
        cs = {"crossover_hat": math.nan, "crossover_se": math.nan, "active_fraction": st.active_fraction,
              "active_fraction_se": math.nan, "mi_per_active_slot": plugin_mi(st.joint),
              "mi_per_active_slot_se": math.nan}
        cs["mi_per_slot"] = cs["mi_per_active_slot"] * st.active_fraction
        lines.append(("note", f"fewer than {MIN_ACTIVE} active slots"))
    lines += [(k, cs[k]) for k in ("active_fraction", "active_fraction_se", "crossover_hat", "crossover_se",
                                   "mi_per_active_slot", "mi_per_active_slot_se", "mi_per_slot")]
    lines += [(f"jam_fraction[{k}]", v) for k, v in enumerate(st.jam_fraction) if k > 0]
    if "qmax" in cfg:
        trunc = TruncationSpec(cfg["qmax"], cfg.get("tol", 1e-9))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            oracle = dtmc_stationary_truncated(params, policy, trunc)
        lines += [(f"oracle_pi[{k}]", v) for k, v in enumerate(oracle.pi)]
        lines += [("oracle_tail", oracle.tail), ("oracle_certified", bool(oracle.certified))]
    lines += [("arrivals", st.arrivals), ("departures", st.departures), ("queue_mean", st.queue_mean),
              ("queue_max", st.queue_max), ("verdict", st.verdict), ("digest", st.digest())]
    for k, v in lines:
        print(f"{k}\t{v if isinstance(v, str) else fmt(v)}")
    if sc.record_trace:
        path = args.out or "trace.csv"
        try:
            write_trace_csv(st, path)
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from None
    if cfg.get("expect_stable", False) and st.verdict == "unstable":
        print("unexpected instability", file=sys.stderr)
        return EXIT_UNSTABLE
    return EXIT_OK


def _coupled_task(task):
    params, policy, horizon, warmup, seed = task
    r = coupled_run(params, policy, SimConfig(horizon, warmup, seed))
    return seed, r


def cmd_coupled(args, cfg):
    params = params_from(cfg)
    policy = policy_from(cfg, params.n)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    runs = cfg.get("runs", 1)
    if runs < 1:
        raise ConfigError("runs must be positive")
    horizon, warmup = cfg.get("horizon", 10**5), cfg.get("warmup", 0)
    SimConfig(horizon, warmup, seed)  # validate before fanning out
    tasks = [(params, policy, horizon, warmup, seed + i) for i in range(runs)]
    with _executor(args.jobs) as ex:
        res = _map(ex, _coupled_task, tasks)
    print("seed\tslots\tviolations\tbusy_all_jammed\tbusy_all_unjammed")
    for s, r in res:
        print(f"{s}\t{r.slots}\t{r.violations}\t{fmt(r.busy_all_jammed)}\t{fmt(r.busy_all_unjammed)}")
    viol = sum(r.violations for _, r in res)
    order = sum(not r.busy_order_holds for _, r in res)
    print(f"# runs={runs} violations={viol} busy_order_failures={order}")
    return EXIT_OK


def cmd_verify(args, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with _executor(args.jobs) as ex:
            recs = V.run_all(ex)
    text = "".join(r.line() + "\n" for r in recs)
    sys.stdout.write(text)
    if args.out:
        _write(args.out, text)
    fails = sum(r.status == "fail" for r in recs)
    print(f"# checks={len(recs)} pass={len(recs) - fails} fail={fails}")
    return EXIT_VERIFY if fails else EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "figures": cmd_figures, "simulate": cmd_simulate,
            "coupled": cmd_coupled, "verify": cmd_verify}


def _add_globals(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="flat key=value config file")
    parser.add_argument("--out", default=d, help="output file or directory")
    parser.add_argument("--seed", type=int, default=d, help="base seed (overrides the config)")
    parser.add_argument("--jobs", type=int, default=d, help="worker processes")


def build_parser():
    parser = argparse.ArgumentParser(prog="alohajam", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"sweep": "bounds over a (p, alpha) grid to CSV",
             "figures": "rate curves per attempt probability (CSV + SVG)",
             "simulate": "one seeded simulation run",
             "coupled": "jammed vs unjammed runs on shared randomness",
             "verify": "cross-validation report"}
    for name in COMMANDS:
        _add_globals(sub.add_parser(name, help=helps[name]), suppress=True)
    return parser


class _ArgError(Exception):
    pass


def main(argv=None):
    parser = build_parser()
    parser.error = lambda msg: (_ for _ in ()).throw(_ArgError(msg))
    try:
        args = parser.parse_args(argv)
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be positive")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except _ArgError as exc:
        print(f"alohajam: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, DomainError) as exc:
        print(f"alohajam: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
