"""Reproducible experiment runner.

Config files are plain text with named blocks of key = value pairs
(geometry, curvature, experiment, output). Runs write fixed-schema CSV
files plus a manifest; reruns of an identical config reproduce identical
CSV bytes. Exit codes: 0 success, 2 invalid config, 3 numerical failure,
4 acceptance failure (report mode).
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import evolution as ev
from . import geometry as geo
from . import oracle
from . import spectral as sp
from . import stochastic as st
from .errors import (
    AcceptanceFailure,
    ConfigInvalid,
    NumericalFailure,
    SchemaMismatch,
    StripLabError,
)

__all__ = ["ExperimentConfig", "RunManifest", "load_config", "run", "emit_plot", "main"]

_KINDS = ("jacobi", "spectrum", "mu", "nu-sweep", "hardy", "evolve", "mc", "report")


@dataclass(eq=False)
class ExperimentConfig:
    a: float
    L: float
    n1: int
    n2: int
    profile_kind: str
    profile_params: dict
    kind: str
    controls: dict
    out_dir: Path
    source_path: Path = None
    source_bytes: bytes = b""

    def build_profile(self) -> geo.CurvatureProfile:
        p = self.profile_params
        k = self.profile_kind
        if k == "zero":
            return geo.zero_profile()
        if k == "gaussian-bump":
            return geo.gaussian_bump(
                amplitude=p["amplitude"],
                width=p["width"],
                support_radius=p["support_radius"],
                center=p.get("center", 0.0),
                plateau_fraction=p.get("plateau_fraction", 0.6),
            )
        if k == "constant-on-box":
            return geo.constant_on_box(p["value"], p["half_length"])
        if k == "ruled":
            return geo.ruled_profile(
                p["theta_dot_max"],
                p["support_radius"],
                plateau_fraction=p.get("plateau_fraction", 0.5),
            )
        raise ConfigInvalid(f"unknown profile kind {k!r}")

    def build_metric(self):
        prof = self.build_profile()
        geom = geo.StripGeometry(a=self.a, L=self.L, n1=self.n1, n2=self.n2)
        if self.profile_kind == "ruled":
            return geo.ruled_strip(prof, geom)
        return geo.solve_jacobi(prof, geom), prof


@dataclass(eq=False)
class RunManifest:
    config_hash: str
    version: str
    wall_seconds: float
    outputs: list = field(default_factory=list)

    def write(self, path: Path) -> None:
        lines = [
            f"config_hash = {self.config_hash}",
            f"tool_version = {self.version}",
            f"wall_seconds = {self.wall_seconds:.3f}",
        ]
        lines += [f"output = {name}" for name in self.outputs]
        path.write_text("\n".join(lines) + "\n")


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(tok) for tok in raw.split(",") if tok.strip()]
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("inf", "+inf"):
        return math.inf
    try:
        if any(ch in raw for ch in ".eE") and not raw.lstrip("+-").isdigit():
            return float(raw)
        return int(raw)
    except ValueError:
        return raw


def load_config(path, out_override=None, seed_override=None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(f"config file {path} does not exist")
    raw = path.read_bytes()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(raw.decode())
    except configparser.Error as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}")
    for section in ("geometry", "curvature", "experiment"):
        if section not in cp:
            raise ConfigInvalid(f"missing [{section}] block")
    g = {k: _parse_value(v) for k, v in cp["geometry"].items()}
    c = {k: _parse_value(v) for k, v in cp["curvature"].items()}
    e = {k: _parse_value(v) for k, v in cp["experiment"].items()}
    out = cp["output"].get("dir", "out") if "output" in cp else "out"
    out = os.environ.get("OUTPUT_DIR", out)
    if out_override:
        out = out_override
    if seed_override is not None:
        e["seed"] = int(seed_override)
    try:
        cfg = ExperimentConfig(
            a=float(g["a"]),
            L=float(g["l"]),
            n1=int(g["n1"]),
            n2=int(g["n2"]),
            profile_kind=str(c.pop("kind")),
            profile_params=c,
            kind=str(e.pop("kind")),
            controls=e,
            out_dir=Path(out),
            source_path=path,
            source_bytes=raw,
        )
    except KeyError as exc:
        raise ConfigInvalid(f"missing required key {exc}")
    if cfg.kind not in _KINDS:
        raise ConfigInvalid(f"unknown experiment kind {cfg.kind!r}")
    try:
        prof = cfg.build_profile()
        geom = geo.StripGeometry(a=cfg.a, L=cfg.L, n1=cfg.n1, n2=cfg.n2)
        geo.check_compatible(prof, geom, closed_form=(cfg.profile_kind == "ruled"))
    except StripLabError as exc:
        raise ConfigInvalid(str(exc))
    return cfg


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def _write_csv(path: Path, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _exp_jacobi(cfg, outdir):
    metric, prof = cfg.build_metric()
    table = geo.metric_table(metric, prof)
    p = outdir / "metric.csv"
    _write_csv(
        p,
        ["x1[len]", "x2[len]", "f[1]", "d2f[1/len]", "K[1/len^2]", "V[1/len^2]"],
        table,
    )
    return [p.name]


def _exp_spectrum(cfg, outdir):
    metric, _ = cfg.build_metric()
    pair = sp.assemble_hk(metric)
    k = int(cfg.controls.get("k", 4))
    res = sp.lowest_eigenpairs(pair, k=k)
    p = outdir / "spectrum.csv"
    rows = [
        (cfg.L, i, res.eigenvalues[i], res.residuals[i]) for i in range(k)
    ]
    _write_csv(p, ["parameter[len]", "index[1]", "eigenvalue[1/time]", "residual[1]"], rows)
    return [p.name]


def _exp_mu(cfg, outdir):
    metric, prof = cfg.build_metric()
    mu = sp.transverse_mu_profile(metric, metric.x1)
    bound = sp.thin_strip_bound(prof, cfg.a, x1=metric.x1)
    p = outdir / "mu.csv"
    _write_csv(
        p,
        ["x1[len]", "mu[1/time]", "thin_bound[1/time]"],
        zip(metric.x1, mu, bound.values),
    )
    return [p.name]


def _exp_nu_sweep(cfg, outdir):
    metric, _ = cfg.build_metric()
    s_lattice = cfg.controls.get("s_lattice", [0.0, 1.0, 2.0, 4.0, 8.0])
    if not isinstance(s_lattice, list):
        s_lattice = [s_lattice]
    half = float(cfg.controls.get("frame_half_width", 16.0))
    cells = int(cfg.controls.get("frame_cells", 640))
    gy = sp.make_y_grid(metric, half, cells)
    rows = []
    for s in s_lattice:
        res = sp.lowest_eigenpairs(sp.assemble_Ls(metric, float(s), gy), k=1)
        rows.append((float(s), 0, res.eigenvalues[0], res.residuals[0]))
    p = outdir / "nu_sweep.csv"
    _write_csv(p, ["s[1]", "index[1]", "nu[1]", "residual[1]"], rows)
    return [p.name]


def _exp_hardy(cfg, outdir):
    metric, _ = cfg.build_metric()
    pair = sp.assemble_hk(metric)
    cert = sp.pick_hardy_interval(metric)
    x10 = 0.5 * (cert.J[0] + cert.J[1])
    rho = (cert.c_K / (1.0 + (metric.x1 - x10) ** 2))[:, None] * np.ones_like(metric.x2)[None, :]
    trials = int(cfg.controls.get("trials", 100))
    seed = int(cfg.controls.get("seed", 0))
    margin = sp.hardy_verify(pair, rho, trials=trials, seed=seed)
    p = outdir / "hardy.csv"
    _write_csv(
        p,
        ["c[1]", "C[1]", "lambda_J[1/time]", "c_K[1/time]", "margin[1/time]",
         "J_lo[len]", "J_hi[len]", "trials[1]", "seed[1]"],
        [(cert.c, cert.C, cert.lambda_J, cert.c_K, margin, cert.J[0], cert.J[1], trials, seed)],
    )
    return [p.name]


def _exp_evolve(cfg, outdir):
    metric, _ = cfg.build_metric()
    pair = sp.assemble_hk(metric)
    e1h = pair.meta["e1_discrete"]
    ctr = cfg.controls
    alpha = float(ctr.get("alpha", 1.0))
    t_end = float(ctr.get("t_end", 100.0))
    step = float(ctr.get("checkpoint_step", 0.5))
    window = ctr.get("fit_window", [5.0, min(100.0, t_end)])
    dt = float(ctr.get("dt", min(0.01, (window[1] - window[0]) / 2000.0)))
    u0 = ev.weighted_initial(pair, str(ctr.get("initial", "mode")), alpha=alpha)
    t_grid = np.arange(0.0, t_end + 1e-9, step)
    tr = ev.evolve(pair, u0, t_grid, dt=dt, shift=e1h, record_mode1=True)
    p = outdir / "trajectory.csv"
    _write_csv(
        p,
        ["t[time]", "norm_f[1]", "norm_wf[1]", "mode1_fraction[1]"],
        zip(tr.times, tr.norm_f, tr.norm_wf, tr.mode1_fraction),
    )
    fit = ev.fit_decay(tr, e1h, (float(window[0]), float(window[1])))
    q = outdir / "decay_fit.json"
    record = {
        "lambda_hat": fit.lambda_hat,
        "gamma_hat": fit.gamma_hat,
        "stderr_lambda": fit.stderr_lambda,
        "stderr_gamma": fit.stderr_gamma,
        "window_lo": fit.window[0],
        "window_hi": fit.window[1],
        "residual_norm": fit.residual_norm,
        "reference_rate": e1h,
    }
    q.write_text(json.dumps(record, sort_keys=True, indent=1) + "\n")
    return [p.name, q.name]


def _exp_mc(cfg, outdir):
    metric, _ = cfg.build_metric()
    sde = st.sde_from_metric(metric)
    ctr = cfg.controls
    x0 = ctr.get("x0", [0.0, 0.0])
    lattice = ctr.get("t_lattice", [1.0])
    if not isinstance(lattice, list):
        lattice = [lattice]
    lattice = [float(t) for t in lattice]
    dt = float(ctr.get("dt", 1e-3))
    n_paths = int(ctr.get("n_paths", 10000))
    seed = int(ctr.get("seed", 0))
    ens = st.simulate_killed(
        sde, (float(x0[0]), float(x0[1])), t_max=max(lattice), dt=dt,
        n_paths=n_paths, seed=seed, checkpoints=lattice, box_limit=cfg.L,
    )
    box = ctr.get("box", None)
    B = None if box in (None, "all") else ((float(box[0]), float(box[1])), (float(box[2]), float(box[3])))
    rows = []
    for t in lattice:
        e = st.survival_estimate(ens, B, t)
        rows.append(
            (t, int(ens.alive_at(t).sum()), e.probability,
             e.probability - e.half_width, e.probability + e.half_width)
        )
    p = outdir / "mc.csv"
    _write_csv(p, ["t[time]", "alive[1]", "estimate[1]", "ci_low[1]", "ci_high[1]"], rows)
    names = [p.name]
    if ctr.get("dump_paths", False):
        q = outdir / "paths.csv"
        rows = []
        for ci, t in enumerate(ens.checkpoint_times):
            for pid in range(ens.n_paths):
                rows.append((pid, t, ens.positions[ci, pid, 0], ens.positions[ci, pid, 1]))
        _write_csv(q, ["path_id[1]", "t[time]", "x1[len]", "x2[len]"], rows)
        names.append(q.name)
    return names


def _exp_report(cfg, outdir):
    from .acceptance import run_all

    include_slow = bool(cfg.controls.get("include_slow", True))
    results = run_all(include_slow=include_slow)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = f"criterion {r.number:2d} [{status}] {r.name}: {r.detail} ({r.seconds:.1f}s)"
        lines.append(line)
        print(line)
    p = outdir / "report.txt"
    p.write_text("\n".join(lines) + "\n")
    if not all(r.passed for r in results):
        raise AcceptanceFailure("one or more acceptance criteria failed")
    return [p.name]


_DISPATCH = {
    "jacobi": _exp_jacobi,
    "spectrum": _exp_spectrum,
    "mu": _exp_mu,
    "nu-sweep": _exp_nu_sweep,
    "hardy": _exp_hardy,
    "evolve": _exp_evolve,
    "mc": _exp_mc,
    "report": _exp_report,
}


def run(cfg: ExperimentConfig) -> RunManifest:
    """Dispatch the configured experiment and write outputs plus a manifest."""
    t0 = time.perf_counter()
    outdir = cfg.out_dir / cfg.kind
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        outputs = _DISPATCH[cfg.kind](cfg, outdir)
    except (StripLabError, KeyboardInterrupt):
        raise
    except Exception as exc:
        raise NumericalFailure(f"{cfg.kind} experiment failed: {exc}") from exc
    manifest = RunManifest(
        config_hash=hashlib.sha256(cfg.source_bytes).hexdigest(),
        version=__version__,
        wall_seconds=time.perf_counter() - t0,
        outputs=[f"{cfg.kind}/{name}" for name in outputs],
    )
    manifest.write(outdir / "manifest.txt")
    return manifest


# ---------------------------------------------------------------- plotting --

_GUIDE_SLOPES = (-0.25, -0.75, -0.5, -1.5)


def _svg_document(width, height, body) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def _read_csv(path: Path):
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise SchemaMismatch(f"{path} has no data rows")
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        rows.append([float(tok) if tok not in ("inf", "-inf", "nan") else float(tok) for tok in ln.split(",")])
    return header, np.array(rows)


def emit_plot(csv_path, kind: str, out_path=None) -> Path:
    """Standalone vector graphic for a CSV: scatter plus reference guides."""
    csv_path = Path(csv_path)
    header, data = _read_csv(csv_path)
    W, H, pad = 640, 480, 60
    body = [
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
    ]

    def to_px(u, v, ulim, vlim):
        x = pad + (u - ulim[0]) / (ulim[1] - ulim[0] + 1e-300) * (W - 2 * pad)
        y = H - pad - (v - vlim[0]) / (vlim[1] - vlim[0] + 1e-300) * (H - 2 * pad)
        return x, y

    if kind == "decay-loglog":
        if len(header) < 2 or not header[0].startswith("t"):
            raise SchemaMismatch("decay-loglog expects a trajectory CSV")
        t = data[:, 0]
        y = data[:, 1]
        good = (t > 0) & (y > 0) & np.isfinite(y)
        if good.sum() < 2:
            raise SchemaMismatch("no positive samples to draw")
        lu = np.log10(1.0 + t[good])
        lv = np.log10(y[good])
        ulim = (lu.min(), lu.max())
        vlim = (lv.min() - 0.2, lv.max() + 0.2)
        for slope in _GUIDE_SLOPES:
            xs = np.linspace(*ulim, 2)
            ys = lv[0] + slope * (xs - lu[0])
            (x0, y0), (x1, y1) = to_px(xs[0], ys[0], ulim, vlim), to_px(xs[1], ys[1], ulim, vlim)
            body.append(
                f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x1:.1f}" y2="{y1:.1f}" '
                f'stroke="gray" stroke-dasharray="4 3"/>'
            )
            body.append(
                f'<text x="{x1 - 40:.1f}" y="{y1 - 4:.1f}" font-size="11" fill="gray">{slope}</text>'
            )
        for u, v in zip(lu, lv):
            x, y0 = to_px(u, v, ulim, vlim)
            body.append(f'<circle cx="{x:.1f}" cy="{y0:.1f}" r="2.5" fill="crimson"/>')
        body.append(f'<text x="{W // 2 - 40}" y="{H - 18}" font-size="13">log10(1+t)</text>')
        body.append(f'<text x="10" y="{H // 2}" font-size="13">log10(norm)</text>')
    elif kind == "nu-vs-s":
        if len(header) < 3 or not header[0].startswith("s"):
            raise SchemaMismatch("nu-vs-s expects a frame-sweep CSV")
        s = data[:, 0]
        nu = data[:, 2]
        ulim = (s.min() - 0.3, s.max() + 0.3)
        vlim = (min(0.2, nu.min() - 0.05), max(0.85, nu.max() + 0.05))
        for level in (0.25, 0.75):
            x0, y0 = to_px(ulim[0], level, ulim, vlim)
            x1, y1 = to_px(ulim[1], level, ulim, vlim)
            body.append(
                f'<line x1="{x0:.1f}" y1="{y0:.1f}" x2="{x1:.1f}" y2="{y1:.1f}" '
                f'stroke="gray" stroke-dasharray="4 3"/>'
            )
            body.append(f'<text x="{x1 - 30:.1f}" y="{y1 - 4:.1f}" font-size="11" fill="gray">{level}</text>')
        for u, v in zip(s, nu):
            x, y = to_px(u, v, ulim, vlim)
            body.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="navy"/>')
        body.append(f'<text x="{W // 2 - 10}" y="{H - 18}" font-size="13">s</text>')
        body.append(f'<text x="14" y="{H // 2}" font-size="13">nu</text>')
    elif kind == "histogram":
        if data.shape[1] < 2:
            raise SchemaMismatch("histogram expects (bin, mass) columns")
        xs = data[:, 0]
        ms = data[:, 1]
        ulim = (xs.min(), xs.max() + (xs[1] - xs[0] if len(xs) > 1 else 1.0))
        vlim = (0.0, ms.max() * 1.1 + 1e-12)
        wpx = (W - 2 * pad) / max(len(xs), 1)
        for u, v in zip(xs, ms):
            x, y = to_px(u, v, ulim, vlim)
            body.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{wpx * 0.9:.1f}" '
                f'height="{H - pad - y:.1f}" fill="seagreen"/>'
            )
    else:
        raise SchemaMismatch(f"unknown plot kind {kind!r}")

    out = Path(out_path) if out_path else csv_path.with_suffix(f".{kind}.svg")
    out.write_text(_svg_document(W, H, body))
    return out


# -------------------------------------------------------------------- main --

def _run_one(args_tuple):
    path, out, seed = args_tuple
    cfg = load_config(path, out_override=out, seed_override=seed)
    run(cfg)
    return str(path)


def _oracle_query(tokens):
    """Tiny evaluator: 'survival|kernel|p0|modes key=value ...'."""
    if not tokens:
        raise ConfigInvalid("oracle query is empty")
    what, kv = tokens[0], {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ConfigInvalid(f"malformed oracle argument {tok!r}")
        key, val = tok.split("=", 1)
        kv[key] = _parse_value(val)
    if what == "survival":
        B = None if kv.get("box", "all") in ("all", None) else (
            (kv["box"][0], kv["box"][1]), (kv["box"][2], kv["box"][3])
        )
        v, tail = oracle.flat_survival(
            (kv.get("x1", 0.0), kv.get("x2", 0.0)), B, kv["t"], kv["a"]
        )
        print(f"survival = {v:.10g} (tail bound {tail:.3g})")
    elif what == "kernel":
        v, tail = oracle.flat_kernel(
            (kv["x1"], kv["x2"]), (kv["y1"], kv["y2"]), kv["t"], kv["a"]
        )
        print(f"kernel = {v:.10g} (tail bound {tail:.3g})")
    elif what == "p0":
        print(f"p0 = {oracle.killed_halfline_kernel(kv['t'], kv['x'], kv['y']):.10g}")
    elif what == "modes":
        for m in oracle.transverse_modes(kv["a"], int(kv.get("n", 3))):
            print(f"n = {m.index}  energy = {m.energy:.10g}")
    else:
        raise ConfigInvalid(f"unknown oracle query {what!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="strip-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run experiments from config files")
    p_run.add_argument("configs", nargs="+")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--jobs", type=int, default=1)

    p_rep = sub.add_parser("report", help="run the acceptance suite")
    p_rep.add_argument("config", nargs="?", default=None)
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--skip-slow", action="store_true")

    p_or = sub.add_parser("oracle", help="evaluate closed-form quantities")
    p_or.add_argument("query", nargs="+")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            jobs = max(1, args.jobs)
            tasks = [(p, args.out, args.seed) for p in args.configs]
            if jobs == 1 or len(tasks) == 1:
                for t in tasks:
                    _run_one(t)
            else:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    list(pool.map(_run_one, tasks))
        elif args.command == "report":
            from .acceptance import run_all

            if args.config:
                cfg = load_config(args.config, out_override=args.out)
                cfg.controls["include_slow"] = not args.skip_slow
                cfg.kind = "report"
                run(cfg)
            else:
                results = run_all(include_slow=not args.skip_slow)
                for r in results:
                    status = "PASS" if r.passed else "FAIL"
                    print(
                        f"criterion {r.number:2d} [{status}] {r.name}: "
                        f"{r.detail} ({r.seconds:.1f}s)"
                    )
                if not all(r.passed for r in results):
                    raise AcceptanceFailure("one or more acceptance criteria failed")
        elif args.command == "oracle":
            _oracle_query(args.query)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AcceptanceFailure as exc:
        print(f"acceptance: {exc}", file=sys.stderr)
        return 4
    except StripLabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
