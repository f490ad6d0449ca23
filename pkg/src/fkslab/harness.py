"""Experiment runner: config validation, dispatch, run directories, CSV/JSONL/SVG."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .clusters import BoundarySpec, BondConfig
from .events import (SamplerSpec, disconnection_free, estimate_many, slab_connection,
                     unique_frequency, u_sequence, u_radii, far_corners)
from .geometry import RegionSpec, build_region
from .ising import weak_mixing_gap, wired_surface_tension_estimate
from .oracle import CapExceeded, FkParams, fk_connection_probs, fk_edge_marginals
from .renorm import renorm_pipeline
from .sampler import run_chain, default_kernel
from .rng import stream
from .stats import EstimatorResult, FLAG_BOUND

log = logging.getLogger("fkslab")

COLUMNS = ["experiment", "d", "q", "p", "eps", "L", "N", "M", "K", "delta", "C", "ell", "bc", "seed",
           "chains", "samples", "estimate", "stderr", "derived_name", "derived_value",
           "derived_stderr", "flag"]
CSV_VERSION = 1
SUBCOMMANDS = ("oracle", "sample", "estimate", "sweep", "surface", "unique", "usequence", "renorm",
               "mixing", "report")

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_BOUND = 0, 2, 3, 4

DEFAULTS = dict(
    region="box", d=2, L=None, N=None, M=None, K=None, bc="free", p=0.5, q=2.0, eps=0.0,
    samples=1000, burn_in=1000, thin=10, segments=1, chains=1, batches=20, kernel=None, init="zeros",
    delta=0.5, C=1, ell=None, c0=1.0, s=0.5, targets=None, observable="edge_density",
    kind="wired", axis=None, values=None, base=None, seed=0, output="runs", dump_samples=False,
    plot=True, run_dir=None,
)


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def schema():
    return json.loads(resources.files("fkslab").joinpath("config.schema.json").read_text())


def validate(cfg: dict) -> dict:
    """Merge defaults and check the config against the shipped schema."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        raise ConfigError([f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors])
    full = dict(DEFAULTS)
    full.update(cfg)
    problems = []
    if full["subcommand"] == "sweep":
        if not full.get("axis") or full.get("values") is None:
            problems.append("sweep: needs 'axis' and 'values'")
        elif full.get("base") not in SUBCOMMANDS or full.get("base") in ("sweep", "report"):
            problems.append("base: sweep needs a base subcommand to repeat")
        elif not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in full["values"]):
            problems.append(f"values: axis {full['axis']!r} needs numeric values")
        elif full["axis"] not in DEFAULTS or full["axis"] in ("seed",) or not _numeric_field(full["axis"]):
            problems.append(f"axis: {full['axis']!r} is not a numeric config field")
    if full["segments"] > full["samples"]:
        problems.append("segments: more segments than samples")
    if problems:
        raise ConfigError(problems)
    return full


def _numeric_field(name):
    props = schema()["properties"].get(name, {})
    kinds = props.get("type", [])
    kinds = [kinds] if isinstance(kinds, str) else kinds
    return any(k in ("number", "integer") for k in kinds)


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


# --- rows --------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def make_row(experiment, cfg, res: EstimatorResult | None = None, **over):
    """One CSV row; parameters come from the result record, then the config."""
    rec = dict(res.params) if res is not None else {}
    row = {}
    for col in COLUMNS[1:13]:
        row[col] = over.get(col, rec.get(col, cfg.get(col)))
    row["experiment"] = experiment
    row["seed"] = cfg["seed"]
    row["chains"] = cfg["segments"]
    if res is not None:
        row.update(samples=res.samples, estimate=res.estimate, stderr=res.stderr,
                   derived_name=res.derived_name, derived_value=res.derived_value,
                   derived_stderr=res.derived_stderr, flag=res.flag)
    for k in ("samples", "estimate", "stderr", "derived_name", "derived_value", "derived_stderr", "flag"):
        if k in over:
            row[k] = over[k]
    return {c: _fmt(row.get(c)) for c in COLUMNS}


def csv_text(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# --- dispatch ----------------------------------------------------------------


def _region(cfg):
    kind = cfg["region"]
    if kind == "edge":
        from .geometry import single_edge
        return single_edge(cfg["d"])
    if kind == "plaquette":
        from .geometry import plaquette
        return plaquette(cfg["d"])
    sizes = {"box": ("N",), "slab": ("L", "N"), "rect": ("L", "M"), "halfbox": ("K",)}[kind]
    missing = [s for s in sizes if cfg.get(s) is None]
    if missing:
        raise ConfigError([f"{m}: region {kind!r} needs {m}" for m in missing])
    return build_region(RegionSpec(kind, cfg["d"], **{s: cfg[s] for s in sizes}))


def _bc(cfg, region):
    if cfg["bc"] == "free":
        return BoundarySpec.free()
    if cfg["bc"] == "wired":
        return BoundarySpec.wired(region)
    raise ConfigError([f"bc: unknown boundary condition {cfg['bc']!r}"])


def _sampler(cfg, region, bc):
    return SamplerSpec(region, bc, cfg["p"], cfg["q"], cfg["eps"], kernel=cfg["kernel"],
                       burn_in=cfg["burn_in"], thin=cfg["thin"], init=cfg["init"])


def _knobs(cfg):
    return dict(samples=cfg["samples"], seed=cfg["seed"], segments=cfg["segments"], chains=cfg["chains"],
                burn_in=cfg["burn_in"], thin=cfg["thin"], kernel=cfg["kernel"], n_batches=cfg["batches"])


def do_oracle(cfg, ctx):
    region = _region(cfg)
    bc = _bc(cfg, region)
    params = FkParams(cfg["p"], cfg["q"])
    rows = []
    if cfg["observable"] == "connection":
        pairs = _pairs(cfg, region)
        probs = fk_connection_probs(region, bc, params, pairs)
        values = [(f"connection:{a}-{b}", float(pr)) for (a, b), pr in zip(pairs, probs)]
    else:
        values = [(f"edge:{e}", float(v)) for e, v in enumerate(fk_edge_marginals(region, bc, params))]
    head = dict(region=dict(kind=cfg["region"], d=cfg["d"], **{k: cfg[k] for k in "LNMK" if cfg.get(k) is not None}),
                bc=cfg["bc"], params=dict(p=cfg["p"], q=cfg["q"]))
    ctx.documents["oracle.json"] = [dict(head, observable=name, value=v) for name, v in values]
    return [make_row(f"oracle_{name}", cfg, samples=1, estimate=v, stderr=0.0) for name, v in values]


def _pairs(cfg, region):
    origin = region.index((0,) * region.d) if region.n_inner > 2 else 0
    targets = cfg["targets"] or [list(region.vertices[-1])]
    return [(origin, region.index(t)) for t in targets]


def do_sample(cfg, ctx):
    region = _region(cfg)
    bc = _bc(cfg, region)
    spec = _sampler(cfg, region, bc)
    params = FkParams(cfg["p"], cfg["q"])
    sprinkle = stream(cfg["seed"], "sprinkle", "dump")
    dens = []
    for state in run_chain(region, bc, params, cfg["samples"], cfg["seed"], "dump",
                           burn_in=cfg["burn_in"], thin=cfg["thin"], kernel=spec.kernel, init=cfg["init"]):
        gamma = (sprinkle.random(region.n_edges) < cfg["eps"]).astype(np.uint8)
        dens.append(state.bonds.mean())
        if cfg["dump_samples"]:
            ctx.samples.append(dict(sweep=state.sweep, omega=BondConfig(state.bonds, region).to_hex(),
                                    gamma=BondConfig(gamma, region).to_hex()))
    from .stats import pooled
    mean, se = pooled([np.array(dens)])
    return [make_row("open_density", cfg, samples=cfg["samples"], estimate=float(mean), stderr=float(se))]


def do_estimate(cfg, ctx):
    obs_name = cfg["observable"]
    if obs_name == "disconnection":
        res = disconnection_free(cfg["L"], cfg["delta"], cfg["C"], cfg["p"], cfg["q"], d=cfg["d"], **_knobs(cfg))
        return [make_row("disconnection_free", cfg, res)]
    if obs_name == "slab_connection":
        targets = cfg["targets"] or far_corners(cfg["L"], cfg["N"], cfg["d"])
        out = slab_connection(cfg["L"], cfg["N"], cfg["p"], cfg["q"], cfg["eps"], targets, d=cfg["d"], **_knobs(cfg))
        return [make_row(f"slab_connection:{','.join(map(str, r.params['x']))}", cfg, r) for r in out]
    region = _region(cfg)
    bc = _bc(cfg, region)
    spec = _sampler(cfg, region, bc)
    pairs = _pairs(cfg, region) if cfg["targets"] or obs_name == "connection" else []
    from .events import connected_pairs
    conn_names = [f"connection:{a}-{b}" for a, b in pairs]
    if obs_name == "edge_density":
        def obs(w, g):
            conn = connected_pairs(w | g, region, pairs, bc).astype(np.float64)
            return np.concatenate([w.astype(np.float64), conn])
        names = [f"edge:{e}" for e in range(region.n_edges)] + conn_names
    elif obs_name == "connection":
        obs = lambda w, g: connected_pairs(w | g, region, pairs, bc).astype(np.float64)
        names = conn_names
    else:
        raise ConfigError([f"observable: unknown observable {obs_name!r}"])
    mean, se, _ = estimate_many(obs, spec, cfg["samples"], cfg["seed"], (obs_name,), cfg["segments"], cfg["chains"],
                               cfg["batches"])
    return [make_row(n, cfg, samples=cfg["samples"], estimate=float(m), stderr=float(s))
            for n, m, s in zip(names, mean, se)]


def do_surface(cfg, ctx):
    if cfg["kind"] == "free":
        res = disconnection_free(cfg["L"], cfg["delta"], cfg["C"], cfg["p"], cfg["q"], d=cfg["d"], **_knobs(cfg))
    else:
        res = wired_surface_tension_estimate(cfg["L"], cfg["M"] or cfg["L"], cfg["p"], d=cfg["d"], **_knobs(cfg))
    return [make_row(res.observable, cfg, res)]


def do_unique(cfg, ctx):
    out = unique_frequency(cfg["L"], cfg["delta"], cfg["p"], cfg["eps"], cfg["q"], d=cfg["d"], bc=cfg["bc"],
                           **_knobs(cfg))
    return [make_row(r.observable, cfg, r) for r in out]


def do_usequence(cfg, ctx):
    L, delta = cfg["L"], cfg["delta"]
    R, radii = u_radii(L, delta)
    region = build_region(RegionSpec.box(R, cfg["d"]))
    spec = _sampler(cfg, region, BoundarySpec.free())
    k = len(radii)

    def obs(w, g):
        seq = u_sequence(w, g, region, L, delta)
        us = [float(u) for _, u in seq.values]
        halv = [float(v) for _, v in sorted(seq.halving().items())]
        return us + halv

    mean, se, _ = estimate_many(obs, spec, cfg["samples"], cfg["seed"], ("usequence", L), cfg["segments"],
                               cfg["chains"], cfg["batches"])
    rows = [make_row(f"U_{i}", cfg, samples=cfg["samples"], estimate=float(mean[i]), stderr=float(se[i]))
            for i in range(k)]
    for j in range(len(mean) - k):
        rows.append(make_row(f"halving_{j}", cfg, samples=cfg["samples"], estimate=float(mean[k + j]),
                             stderr=float(se[k + j])))
    return rows


def do_renorm(cfg, ctx):
    rep = renorm_pipeline(cfg["L"], cfg["N"], cfg["p"], cfg["eps"], cfg["delta"], cfg["samples"], cfg["seed"],
                          d=cfg["d"], q=cfg["q"], segments=cfg["segments"], chains=cfg["chains"],
                          burn_in=cfg["burn_in"], thin=cfg["thin"], kernel=cfg["kernel"],
                          keep_fields=cfg["dump_samples"])
    n = cfg["samples"]
    rows = [make_row("eta_density", cfg, samples=n, estimate=rep["eta_density"][0], stderr=rep["eta_density"][1]),
            make_row("eta_origin_cluster", cfg, samples=n, estimate=rep["eta_origin_cluster"][0],
                     stderr=rep["eta_origin_cluster"][1])]
    for u, m, s in rep["eta_far"]:
        rows.append(make_row(f"eta_connect:{u[0]},{u[1]}", cfg, samples=n, estimate=m, stderr=s))
    for x, m, s in rep["direct"]:
        rows.append(make_row(f"direct_connect:{','.join(map(str, x))}", cfg, samples=n, estimate=m, stderr=s))
    rows.append(make_row("alpha_hat", cfg, samples=n, estimate=rep["alpha_hat"], stderr=rep["alpha_se"]))
    rows.append(make_row("witness_violations", cfg, samples=n, estimate=float(rep["witness_violations"]), stderr=0.0))
    rows.append(make_row("full_box_open", cfg, samples=n, estimate=rep["full_box_open"], stderr=0.0))
    if rep["fields"]:
        ctx.samples.extend(dict(sample=i, n=f.n, eta_rle=f.rle()) for i, f in enumerate(rep["fields"]))
    return rows


def do_mixing(cfg, ctx):
    res = weak_mixing_gap(cfg["K"], cfg["s"], cfg["p"], d=cfg["d"], **_knobs(cfg))
    return [make_row("weak_mixing_gap", cfg, res)]


DISPATCH = dict(oracle=do_oracle, sample=do_sample, estimate=do_estimate, surface=do_surface,
                unique=do_unique, usequence=do_usequence, renorm=do_renorm, mixing=do_mixing)


def do_sweep(cfg, ctx):
    base = dict(cfg, subcommand=cfg["base"])
    rows = []
    for v in cfg["values"]:
        sub = dict(base)
        sub[cfg["axis"]] = v
        rows.extend(DISPATCH[cfg["base"]](sub, ctx))
    ctx.curve = (cfg["axis"], cfg["values"], rows)
    return rows


DISPATCH["sweep"] = do_sweep


# --- persistence --------------------------------------------------------------


@dataclass
class RunContext:
    samples: list = field(default_factory=list)
    curve: tuple | None = None
    documents: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    config_hash: str
    started: str
    finished: str
    version: str
    seed: int
    rows: list
    run_dir: str
    exit_code: int = EXIT_OK

    @property
    def csv(self):
        return csv_text(self.rows)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _run_dir(cfg, digest):
    if cfg.get("run_dir"):
        path = Path(cfg["run_dir"])
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
        path = Path(cfg["output"]) / f"{stamp}-{cfg['subcommand']}-{digest[:8]}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def run(config: dict) -> RunRecord:
    """Validate, dispatch and persist one experiment."""
    cfg = validate(config)
    if cfg["subcommand"] == "report":
        raise ConfigError(["subcommand: use report() on an existing run directory"])
    digest = config_hash(cfg)
    path = _run_dir(cfg, digest)
    (path / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    (path / "MANIFEST").write_text("status: incomplete\n")
    started = _now()
    ctx = RunContext()
    t0 = time.perf_counter()
    log.info("running %s into %s", cfg["subcommand"], path)
    rows = DISPATCH[cfg["subcommand"]](cfg, ctx)
    (path / "results.csv").write_text(csv_text(rows))
    files = ["config.json", "results.csv"]
    if ctx.samples:
        with open(path / "samples.jsonl", "w") as fh:
            for rec in ctx.samples:
                fh.write(json.dumps(rec) + "\n")
        files.append("samples.jsonl")
    for name, doc in ctx.documents.items():
        (path / name).write_text(json.dumps(doc, indent=2) + "\n")
        files.append(name)
    if cfg["plot"] and ctx.curve is not None:
        plot_curve(path / "curve.svg", *ctx.curve)
        files.append("curve.svg")
    code = EXIT_BOUND if any(r["flag"] == FLAG_BOUND for r in rows) else EXIT_OK
    record = RunRecord(digest, started, _now(), __version__, cfg["seed"], rows, str(path), code)
    meta = dict(config_hash=digest, started=started, finished=record.finished, version=__version__,
                seed=cfg["seed"], csv_version=CSV_VERSION, rows=len(rows),
                wall_seconds=round(time.perf_counter() - t0, 3), exit_code=code)
    (path / "run.json").write_text(json.dumps(meta, indent=2) + "\n")
    files.append("run.json")
    (path / "MANIFEST").write_text("status: complete\n" + "".join(f"{f}\n" for f in files))
    return record


def plot_curve(path, axis, values, rows):
    """Estimate with a +-2 stderr band for every experiment name along the sweep."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = {}
    per = len(rows) // max(1, len(values))
    for i, r in enumerate(rows):
        x = values[i // per] if per else values[0]
        est = float(r["estimate"]) if r["estimate"] else float("nan")
        se = float(r["stderr"]) if r["stderr"] else 0.0
        series.setdefault(r["experiment"], []).append((x, est, se))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, pts in list(series.items())[:12]:
        xs, ys, ss = map(np.array, zip(*pts))
        ax.plot(xs, ys, marker="o", label=name)
        ax.fill_between(xs, ys - 2 * ss, ys + 2 * ss, alpha=0.2)
    ax.set_xlabel(axis)
    ax.set_ylabel("estimate")
    if len(series) <= 12:
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def report(run_dir) -> str:
    """Plain-text summary of a finished run directory."""
    path = Path(run_dir)
    manifest = (path / "MANIFEST").read_text() if (path / "MANIFEST").exists() else "status: missing\n"
    if not (path / "results.csv").exists():
        return f"{path}: {manifest.splitlines()[0]}, no results"
    with open(path / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    lines = [f"{path} ({manifest.splitlines()[0]})"]
    for r in rows:
        extra = f"  {r['derived_name']}={r['derived_value']}" if r["derived_name"] else ""
        flag = f"  [{r['flag']}]" if r["flag"] else ""
        lines.append(f"{r['experiment']:<32} {r['estimate']:>22} +- {r['stderr']:<22}{extra}{flag}")
    return "\n".join(lines)
