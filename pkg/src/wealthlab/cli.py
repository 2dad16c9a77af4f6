"""Command-line front end.

Subcommands::

    wealthlab net        --net ring:10
    wealthlab simulate   --net complete:10 --sigma2 0.5 --horizon 20
    wealthlab moments    --net star:5 --sigma2 0.5 --sample geometric:0.001:10:30
    wealthlab regimes    --sigma2 0.5 --n 10000
    wealthlab reproduce  fig1a --out results/

Exit codes: 0 ok, 2 usage or configuration error, 3 runtime failure or
failed acceptance check.

Settings resolve as defaults < ``--config FILE`` (``key = value`` lines,
keys named after :class:`~wealthlab.sde.SimConfig` fields) < flags.
Every run that writes files also writes ``config.txt`` (the effective
settings, re-usable with ``--config``) and ``manifest.json``.

CSV files are comma separated with ``#`` metadata lines first; the first
of them names the schema and its version. ``simulate`` columns::

    t, var_mean, var_stderr, pearson_d1..pearson_dD, mad, kendall, spearman,
    vA_mean, vA_median, then extras: pearson_d*_stderr, mad_sq, vA_stderr,
    p_vA_below_1, pop_var_mean, pop_rel_diff, pop_fluct

``t`` is the sample time snapped to the step grid. ``kendall`` and
``spearman`` refer to the tracked pair (the first distance-1 pair).
``moments`` columns::

    t, var_mean, pearson_d1..pearson_dD, t1, t2, t3, t3_exact, t_equilibration

with the transition times repeated on every row (``nan`` where undefined).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__, experiments, moments, regimes, stats
from .exceptions import (
    CapacityError,
    ConfigError,
    DisconnectedNetworkError,
    DomainError,
    EdgeListError,
    InvalidPairError,
    InvalidSizeError,
    WealthLabError,
)
from .network import ExchangeNetwork, build_complete, from_descriptor, shortest_path_lengths, stationary_wealth
from .sde import NEG_POLICIES, SimConfig, geometric_times, make_accumulator, run_ensemble

SCHEMA_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

# bad input rather than a failed run
_USAGE_ERRORS = (ConfigError, DomainError, CapacityError, EdgeListError, InvalidSizeError,
                 InvalidPairError, DisconnectedNetworkError)

# config-file key -> argparse dest
_KEY_TO_DEST = {
    "net": "net",
    "sigma2": "sigma2",
    "sigma": "sigma",
    "dt": "dt",
    "horizon": "horizon",
    "realisations": "realisations",
    "master_seed": "seed",
    "seed": "seed",
    "init": "init",
    "tax_rate": "tax",
    "tax": "tax",
    "neg_policy": "neg_policy",
    "epsilon": "epsilon",
    "sample_times": "sample",
    "sample": "sample",
    "threads": "threads",
    "max_distance": "max_distance",
    "n": "n",
    "t2_constant": "t2_constant",
}

_DEFAULTS = {
    "dt": "1e-3",
    "realisations": "10000",
    "seed": "0",
    "init": "one",
    "tax": "0",
    "neg_policy": "reject-realisation",
    "epsilon": "1e-12",
    "t2_constant": "1",
}


class UsageError(Exception):
    """Bad flags or configuration; reported with exit code 2."""


@dataclass
class RunManifest:
    command: str
    config: dict
    network: dict
    code_version: str = __version__
    started: str = ""
    wall_clock_s: float = 0.0
    seeds: dict = field(default_factory=dict)
    discarded: int = 0
    clamp_events: int = 0
    outputs: list = field(default_factory=list)

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifest.json")
        if "manifest.json" not in self.outputs:
            self.outputs.append("manifest.json")
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=_json_default)
            fh.write("\n")
        return path


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


# -- parsing helpers -------------------------------------------------------------

def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Returns dest -> raw string."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or not key:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            if key not in _KEY_TO_DEST:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[_KEY_TO_DEST[key]] = value.strip()
    return out


def parse_sample(spec: str) -> tuple:
    """``geometric:a:b:k`` or ``list:t1,t2,...``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "geometric":
            a, b, k = rest.split(":")
            return geometric_times(float(a), float(b), int(k))
        if kind == "list":
            times = tuple(float(x) for x in rest.replace(" ", "").split(",") if x)
            if not times:
                raise ValueError("empty list")
            return times
    except ValueError as exc:
        raise UsageError(f"bad --sample {spec!r}: {exc}") from None
    raise UsageError(f"bad --sample {spec!r}: expected geometric:a:b:k or list:t1,t2,...")


def parse_init(spec: str):
    if spec in ("one", "stationary"):
        return spec
    if spec.startswith("file:"):
        path = spec[5:]
        try:
            with open(path) as fh:
                text = "\n".join(line.split("#", 1)[0] for line in fh)
            return tuple(float(x) for x in text.replace(",", " ").split())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read initial wealth from {path}: {exc}") from None
    raise UsageError(f"bad --init {spec!r}: expected one, stationary or file:PATH")


def _num(settings, key, kind=float):
    raw = settings.get(key)
    if raw is None:
        return None
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"{key} must be {'an integer' if kind is int else 'a number'}, got {raw!r}") from None


def _sigma(settings, required=True):
    s2 = _num(settings, "sigma2")
    s = _num(settings, "sigma")
    if s2 is None and s is None:
        if required:
            raise UsageError("--sigma2 is required")
        return None
    if s2 is None:
        s2 = s * s
    if not s2 >= 0 or not math.isfinite(s2):
        raise UsageError(f"sigma2 must be finite and >= 0, got {s2}")
    return math.sqrt(s2)


def _network(settings, required=True) -> ExchangeNetwork | None:
    desc = settings.get("net")
    if desc is None:
        if required:
            raise UsageError("--net is required")
        return None
    try:
        return from_descriptor(desc)
    except OSError as exc:
        raise UsageError(f"cannot open network file: {exc}") from None


def _sample_times(settings):
    """Sample times and horizon; the default is 20 geometric times up to the horizon."""
    horizon = _num(settings, "horizon")
    if horizon is not None and not horizon > 0:
        raise UsageError("horizon must be positive")
    if settings.get("sample"):
        times = parse_sample(settings["sample"])
        if horizon is None:
            horizon = max(times)
    else:
        horizon = 20.0 if horizon is None else horizon
        times = geometric_times(min(1e-2, horizon / 10), horizon, 20)
    return times, horizon


def describe_network(net: ExchangeNetwork) -> dict:
    """Structural description: equal for structurally equal networks whatever their names."""
    if net.is_complete:
        return {"kind": "complete", "n_agents": net.n_agents, "n_edges": net.n_edges}
    digest = hashlib.sha256(np.ascontiguousarray(net._csr_arrays()[1]).tobytes()
                            + np.ascontiguousarray(net._csr_arrays()[0]).tobytes()).hexdigest()[:16]
    return {"kind": "graph", "n_agents": net.n_agents, "n_edges": net.n_edges, "adjacency_sha256": digest}


def _fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, schema, meta, columns, rows):
    """Write ``rows`` (sequences aligned with ``columns``) with a metadata header."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: wealthlab.{schema}/{SCHEMA_VERSION}\n")
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _write_config(out_dir, settings, keys) -> str:
    path = os.path.join(out_dir, "config.txt")
    with open(path, "w") as fh:
        for k in keys:
            if settings.get(k) is not None:
                fh.write(f"{k} = {settings[k]}\n")
    return "config.txt"


def _prepare_out(settings):
    out = settings.get("out") or "wealthlab_out"
    os.makedirs(out, exist_ok=True)
    return out


# -- commands --------------------------------------------------------------------

def cmd_net(settings) -> int:
    net = _network(settings)
    info = describe_network(net)
    info.update(name=net.name, avg_degree=net.avg_degree, connected=bool(net.is_connected),
                min_degree=int(net.degrees.min()), max_degree=int(net.degrees.max()))
    if net.is_connected:
        info["equilibration_scale"] = regimes.equilibration_scale(net) if net.n_agents <= 2000 else None
    print(json.dumps(info, indent=2, default=_json_default))
    if settings.get("out"):
        out = _prepare_out(settings)
        rows = []
        w = stationary_wealth(net) if net.is_connected else np.full(net.n_agents, np.nan)
        rows = [(i, int(k), w[i]) for i, k in enumerate(net.degrees)]
        write_csv(os.path.join(out, "agents.csv"), "net", {"network": json.dumps(describe_network(net))},
                  ["agent", "degree", "stationary_wealth"], rows)
        outputs = ["agents.csv"]
        if not net.is_complete or net.n_agents <= 4000:
            with open(os.path.join(out, "edges.txt"), "w") as fh:
                fh.write(net.to_edge_list())
            outputs.append("edges.txt")
        outputs.append(_write_config(out, settings, ["net"]))
        RunManifest("net", {"net": settings["net"]}, describe_network(net), outputs=outputs,
                    started=_now()).write(out)
    return EXIT_OK


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


SIM_KEYS = ["net", "sigma2", "dt", "horizon", "realisations", "master_seed", "init", "tax_rate",
            "neg_policy", "epsilon", "sample_times", "max_distance"]


def _effective(settings, sigma, times, horizon):
    """Settings as config-file keys, with resolved values written exactly."""
    return {
        "net": settings["net"], "sigma2": repr(sigma * sigma) if settings.get("sigma2") is None
        else settings["sigma2"],
        "dt": settings.get("dt"), "horizon": repr(horizon), "realisations": settings.get("realisations"),
        "master_seed": settings.get("seed"), "init": settings.get("init"), "tax_rate": settings.get("tax"),
        "neg_policy": settings.get("neg_policy"), "epsilon": settings.get("epsilon"),
        "sample_times": "list:" + ",".join(repr(float(t)) for t in times),
        "max_distance": settings.get("max_distance"),
    }


def build_sim_config(settings) -> tuple[SimConfig, ExchangeNetwork]:
    sigma = _sigma(settings)
    net = _network(settings)
    times, horizon = _sample_times(settings)
    policy = settings.get("neg_policy")
    if policy not in NEG_POLICIES:
        raise UsageError(f"--neg-policy must be one of {', '.join(NEG_POLICIES)}")
    seed = _num(settings, "seed", int)
    cfg = SimConfig(sigma=sigma, sample_times=times, dt=_num(settings, "dt"), horizon=horizon,
                    realisations=_num(settings, "realisations", int),
                    master_seed=seed, init=parse_init(settings["init"]), tax_rate=_num(settings, "tax"),
                    neg_policy=policy, epsilon=_num(settings, "epsilon"))
    cfg.initial_wealth(net)  # size check before the run starts
    return cfg, net


def simulation_table(acc):
    """Columns and rows of the ``simulate`` CSV for a filled accumulator."""
    S = len(acc.times)
    var, var_se = acc.mean_variance(with_se=True)
    if acc.pair_classes is not None:
        dists = list(acc.pair_classes.distances)
        corr, corr_se = acc.class_pearson(with_se=True)
    else:
        dists, corr, corr_se = [], np.zeros((S, 0)), np.zeros((S, 0))
    mad = acc.mean_abs_dev()
    if acc.tracked_pair is not None and acc.count >= 2:
        ranks = stats.rank_correlation_curve(acc)
    else:
        ranks = np.full((S, 2), np.nan)
    va_mean, va_se = acc.va_mean(with_se=True)
    va_med = acc.va_median()
    below = acc.prob_va_below(1.0)
    pop = stats.population_vs_ensemble(acc)
    pop_mean = acc.population_variances.mean(axis=0)
    cols = (["t", "var_mean", "var_stderr"] + [f"pearson_d{d}" for d in dists]
            + ["mad", "kendall", "spearman", "vA_mean", "vA_median"]
            + [f"pearson_d{d}_stderr" for d in dists]
            + ["mad_sq", "vA_stderr", "p_vA_below_1", "pop_var_mean", "pop_rel_diff", "pop_fluct"])
    rows = []
    for s in range(S):
        rows.append([acc.times[s], var[s], var_se[s], *corr[s], mad.value[s], ranks[s, 0], ranks[s, 1],
                     va_mean[s], va_med[s], *corr_se[s], mad.squared[s], va_se[s], below[s],
                     pop_mean[s], pop.rel_difference[s], pop.rel_fluctuation[s]])
    return cols, rows


def cmd_simulate(settings) -> int:
    cfg, net = build_sim_config(settings)
    max_d = _num(settings, "max_distance", int)
    threads = _threads(settings)
    out = _prepare_out(settings)
    eff = _effective(settings, cfg.sigma, cfg.sample_times, cfg.horizon)
    t0 = time.perf_counter()
    started = _now()
    acc = run_ensemble(cfg, net, accumulator=make_accumulator(cfg, net, max_distance=max_d), threads=threads)
    cols, rows = simulation_table(acc)
    meta = {"command": "simulate", "network": json.dumps(describe_network(net)),
            "realisations_used": acc.count, "discarded": acc.discarded, "clamp_events": acc.clamp_events}
    meta.update({k: v for k, v in eff.items() if v is not None and k not in ("net", "sample_times")})
    write_csv(os.path.join(out, "simulate.csv"), "simulate", meta, cols, rows)
    outputs = ["simulate.csv", _write_config(out, eff, SIM_KEYS)]
    RunManifest("simulate", eff, describe_network(net), started=started,
                wall_clock_s=time.perf_counter() - t0, seeds={"master_seed": cfg.master_seed},
                discarded=acc.discarded, clamp_events=acc.clamp_events, outputs=outputs).write(out)
    print(f"wrote {os.path.join(out, 'simulate.csv')} ({acc.count} realisations, {acc.discarded} discarded)")
    return EXIT_OK


def _threads(settings):
    """Requested worker count, clamped to what numba was started with (results do not depend on it)."""
    k = _num(settings, "threads", int)
    if k is None:
        return None
    if k < 1:
        raise UsageError("--threads must be >= 1")
    import numba

    cap = numba.config.NUMBA_NUM_THREADS
    if k > cap:
        print(f"wealthlab: --threads {k} exceeds the {cap} available; using {cap}", file=sys.stderr)
        k = cap
    return k


def _safe(fn, *args):
    try:
        return fn(*args)
    except (DomainError, ValueError, ZeroDivisionError):
        return None


def moment_table(net, sigma, times, init="one", tax_rate=0.0, t2_constant=1.0):
    """Columns and rows of the ``moments`` CSV."""
    n = net.n_agents
    if init == "one" or (init == "stationary" and net.is_complete):
        v0 = np.ones(n)
    elif init == "stationary":
        v0 = stationary_wealth(net).astype(float)
    else:
        v0 = np.asarray(init, dtype=float)
        if len(v0) != n:
            raise ConfigError(f"initial wealth has {len(v0)} entries, network has {n} agents")
    trans = [_safe(regimes.t1, sigma)]
    if net.is_complete:
        trans += [_safe(regimes.t2, sigma, n), _safe(regimes.t3, sigma, n), _safe(regimes.t3_exact, sigma, n)]
    else:
        trans += [regimes.t2_general(net, t2_constant) if sigma < 1 else None, None, None]
    trans.append(_safe(regimes.equilibration_scale, net) if n <= 2000 or net.is_complete else None)

    rows = []
    if net.is_complete and np.all(v0 == 1.0):
        dists = [1]
        for s in moments.complete_trajectory(sigma, n, times, tax_rate=tax_rate):
            corr = s.correlation if s.variance != 0 else math.nan
            rows.append([s.t, s.variance, corr, *trans])
    else:
        dist = shortest_path_lengths(net)
        dists = list(range(1, int(dist.max()) + 1))
        iu, ju = np.triu_indices(n, k=1)
        dpair = dist[iu, ju]
        masks = [dpair == d for d in dists]
        states = moments.integrate_general(net, sigma, moments.GeneralMomentState.deterministic(v0), times,
                                           tax_rate=tax_rate)
        for st in states:
            cov = st.covariance
            sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
            c = cov[iu, ju]
            p = sd[iu] * sd[ju]
            with np.errstate(invalid="ignore", divide="ignore"):
                corr = [c[m].sum() / p[m].sum() for m in masks]
            rows.append([st.t, float(np.diag(cov).mean()), *corr, *trans])
    cols = (["t", "var_mean"] + [f"pearson_d{d}" for d in dists]
            + ["t1", "t2", "t3", "t3_exact", "t_equilibration"])
    return cols, rows


MOMENT_KEYS = ["net", "sigma2", "horizon", "init", "tax_rate", "sample_times", "t2_constant"]


def cmd_moments(settings) -> int:
    sigma = _sigma(settings)
    net = _network(settings)
    times, horizon = _sample_times(settings)
    init = parse_init(settings["init"])
    tax = _num(settings, "tax")
    if tax < 0:
        raise UsageError("tax must be >= 0")
    out = _prepare_out(settings)
    started, t0 = _now(), time.perf_counter()
    cols, rows = moment_table(net, sigma, times, init, tax, _num(settings, "t2_constant"))
    eff = {"sigma2": settings.get("sigma2") or repr(sigma * sigma), "horizon": repr(horizon),
           "init": settings["init"], "tax_rate": settings["tax"], "t2_constant": settings["t2_constant"],
           "sample_times": "list:" + ",".join(repr(float(t)) for t in times)}
    meta = {"command": "moments", "network": json.dumps(describe_network(net))}
    meta.update({k: v for k, v in eff.items() if k != "sample_times"})
    write_csv(os.path.join(out, "moments.csv"), "moments", meta, cols, rows)
    eff["net"] = settings["net"]
    outputs = ["moments.csv", _write_config(out, eff, MOMENT_KEYS)]
    RunManifest("moments", eff, describe_network(net), started=started,
                wall_clock_s=time.perf_counter() - t0, outputs=outputs).write(out)
    print(f"wrote {os.path.join(out, 'moments.csv')}")
    return EXIT_OK


def regime_report(sigma, net, horizon=None, init="one", t2_constant=1.0, analytic=False) -> dict:
    if sigma >= 1:
        if analytic:
            raise DomainError(
                f"sigma^2 = {sigma * sigma:g} >= 1: the single-agent variance diverges (divergent moments), "
                "so the regime boundaries have no closed form")
        rep = regimes.RegimeReport(sigma * sigma, net.n_agents, net.name, math.nan)
        rep.t_equilibration = regimes.equilibration_scale(net)
        d = rep.to_dict()
        d["note"] = "sigma^2 >= 1: no closed-form boundaries; measure transitions from simulated correlations"
        return d
    if horizon is None:
        if sigma == 0:
            horizon = 10.0
        elif net.is_complete:
            horizon = 10.0 * max(regimes.t2(sigma, net.n_agents), regimes.t3(sigma, net.n_agents))
        else:
            horizon = 10.0 * max(regimes.t1(sigma), regimes.t2_general(net, t2_constant))
    rep = regimes.classify_timeline(sigma, net, horizon, init=init, t2_constant=t2_constant)
    return rep.to_dict()


def cmd_regimes(settings) -> int:
    sigma = _sigma(settings)
    n = _num(settings, "n", int)
    if settings.get("net") is not None:
        net = _network(settings)
    elif n is not None:
        net = build_complete(n)
    else:
        raise UsageError("regimes needs --n N or --net DESCRIPTOR")
    init = settings["init"]
    if init not in ("one", "stationary"):
        init = "custom"
    d = regime_report(sigma, net, _num(settings, "horizon"), init, _num(settings, "t2_constant"),
                      analytic=bool(settings.get("analytic")))
    d["sigma2"] = _num(settings, "sigma2") if settings.get("sigma2") is not None else sigma * sigma
    text = json.dumps(d, indent=2, default=_json_default, allow_nan=True)
    print(text)
    if settings.get("out"):
        out = _prepare_out(settings)
        with open(os.path.join(out, "regimes.json"), "w") as fh:
            fh.write(text + "\n")
        cfg = {"sigma2": settings.get("sigma2") or repr(sigma * sigma), "horizon": settings.get("horizon"),
               "init": settings["init"], "t2_constant": settings["t2_constant"]}
        if settings.get("net") is not None:
            cfg["net"] = settings["net"]
        else:
            cfg["n"] = settings["n"]
        outputs = ["regimes.json", _write_config(out, cfg, ["net", "n", "sigma2", "horizon", "init",
                                                             "t2_constant"])]
        RunManifest("regimes", cfg, describe_network(net), started=_now(), outputs=outputs).write(out)
    return EXIT_OK


def cmd_reproduce(settings) -> int:
    fig = settings["figure"]
    recipe = experiments.RECIPES[fig]
    kwargs = {}
    if fig != "fig1b":
        for key, dest, kind in (("realisations", "realisations", int), ("dt", "dt", float),
                                ("seed", "seed", int), ("threads", "threads", int)):
            if settings.get(f"_flag_{key}") is not None:
                kwargs[dest] = _num({dest: settings[f"_flag_{key}"]}, dest, kind)
        if "threads" in kwargs:
            kwargs["threads"] = _threads(kwargs)
    out = _prepare_out(settings)
    started, t0 = _now(), time.perf_counter()
    res = recipe(**kwargs)
    outputs = []
    for name, rows in res.tables.items():
        if not rows:
            continue
        cols = list(rows[0])
        meta = {"command": f"reproduce {fig}", **{k: v for k, v in res.params.items()}}
        write_csv(os.path.join(out, f"{name}.csv"), f"reproduce.{name}", meta, cols,
                  [[r[c] for c in cols] for r in rows])
        outputs.append(f"{name}.csv")
    with open(os.path.join(out, f"{fig}_summary.csv"), "w", newline="") as fh:
        fh.write(f"# schema: wealthlab.reproduce.summary/{SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "passed", "detail"])
        for c in res.checks:
            w.writerow([c.name, c.passed, c.detail])
    outputs.append(f"{fig}_summary.csv")
    params = {k: v for k, v in res.params.items()}
    RunManifest(f"reproduce {fig}", params, {}, started=started, wall_clock_s=time.perf_counter() - t0,
                seeds={"master_seed": params.get("seed")}, discarded=res.discarded, outputs=outputs).write(out)
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {fig}.{c.name}: {c.detail}")
    return EXIT_OK if res.passed else EXIT_RUNTIME


# -- argument parsing -------------------------------------------------------------

def _add(p, *names, **kw):
    kw.setdefault("default", None)
    p.add_argument(*names, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wealthlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    _add(common, "--config", help="key = value settings file (overridden by flags)")
    _add(common, "--out", help="output directory")

    p = sub.add_parser("net", parents=[common], help="describe an exchange network")
    _add(p, "--net", help="complete:N | ring:N | star:N | file:PATH")

    def model_flags(p):
        _add(p, "--net", help="complete:N | ring:N | star:N | file:PATH")
        _add(p, "--sigma2", help="noise variance sigma^2")
        _add(p, "--horizon", help="final time (default: last sample time, or 20)")
        _add(p, "--tax", help="taxation rate r (default 0)")
        _add(p, "--init", help="one | stationary | file:PATH (default one)")
        _add(p, "--sample", help="geometric:a:b:k or list:t1,t2,...")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo ensemble statistics")
    model_flags(p)
    _add(p, "--dt", help="time step (default 1e-3)")
    _add(p, "--realisations", help="number of realisations (default 10000)")
    _add(p, "--seed", help="master seed (default 0)")
    _add(p, "--neg-policy", dest="neg_policy", help=" | ".join(NEG_POLICIES))
    _add(p, "--epsilon", help="floor for clamp-to-epsilon")
    _add(p, "--threads", help="worker threads")
    _add(p, "--max-distance", dest="max_distance", help="largest pair distance reported")

    p = sub.add_parser("moments", parents=[common], help="exact variance and correlation trajectories")
    model_flags(p)
    _add(p, "--t2-constant", dest="t2_constant", help="prefactor of the network synchronisation time")

    p = sub.add_parser("regimes", parents=[common], help="regime boundaries as JSON")
    _add(p, "--sigma2", help="noise variance sigma^2")
    _add(p, "--n", help="agents on a complete network")
    _add(p, "--net", help="network descriptor instead of --n")
    _add(p, "--horizon", help="end of the reported timeline")
    _add(p, "--init", help="one | stationary")
    _add(p, "--t2-constant", dest="t2_constant", help="prefactor of the network synchronisation time")
    p.add_argument("--analytic", action="store_true", help="require closed-form boundaries")

    p = sub.add_parser("reproduce", parents=[common], help="desk-scale figure recipes with checks")
    p.add_argument("figure", choices=experiments.FIGURES)
    _add(p, "--realisations")
    _add(p, "--dt")
    _add(p, "--seed")
    _add(p, "--threads")
    return parser


COMMANDS = {"net": cmd_net, "simulate": cmd_simulate, "moments": cmd_moments, "regimes": cmd_regimes,
            "reproduce": cmd_reproduce}


def resolve_settings(args) -> dict:
    """Merge defaults < config file < flags into one dict of raw strings."""
    settings = dict(_DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for k, v in vars(args).items():
        if v is not None and k != "config":
            settings[k] = v
    if args.command == "reproduce":
        # recipes carry their own pinned defaults; only explicit flags override them
        for k in ("realisations", "dt", "seed", "threads"):
            settings[f"_flag_{k}"] = getattr(args, k)
    return settings


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        settings = resolve_settings(args)
        return COMMANDS[args.command](settings)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"wealthlab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _USAGE_ERRORS as exc:
        print(f"wealthlab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WealthLabError as exc:
        print(f"wealthlab {args.command}: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        # network descriptors and edge lists are user input
        print(f"wealthlab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
