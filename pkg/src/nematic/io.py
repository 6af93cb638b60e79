"""Configuration files, on-disk formats and run orchestration.

Config files are flat ``key = value`` text with ``#`` comments.  Keys are the
scenario parameters (see :class:`nematic.scenarios.Scenario`) plus the run
keys in :data:`RUN_DEFAULTS`.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from .diagnostics import (DiagnosticsSink, energy_margins, gronwall_compare, integrability_check,
                          records_to_csv, summarize_series)
from .errors import ConfigError, SolverError
from .grid import Boundary, State, make_grid
from .linear import LinearSolveConfig
from .picard import PicardConfig, _steps_between, advance
from .scenarios import Scenario, build_scenario
from .weak import WeakConfig, weak_advance

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4

RUN_DEFAULTS: dict[str, Any] = {
    "integrator": "picard",  # picard | weak | both
    "output_dir": "out",
    "window": 0.0,  # 0 -> one step per window
    "tol_fixed_point": 1e-10,
    "max_picard": 50,
    "p": 2.0,
    "q": 6.0,
    "linear_tol": 1e-10,
    "linear_max_iter": 0,  # 0 -> 10 * cells
    "C_env": 1.0,
    "cfl_safety": 0.5,
}
INTEGRATORS = ("picard", "weak", "both")
_SCENARIO_KEYS = {f.name for f in fields(Scenario)} - {"name"}


# --------------------------------------------------------------------------- #
# atomic writes


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write the whole file to a temporary sibling, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------- #
# config


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    integrator: str
    output_dir: str
    window: float
    tol_fixed_point: float
    max_picard: int
    p: float
    q: float
    linear_tol: float
    linear_max_iter: int
    C_env: float
    cfl_safety: float

    def picard(self) -> PicardConfig:
        sc = self.scenario
        return PicardConfig(dt=sc.dt, window=self.window or None,
                            tol_fixed_point=self.tol_fixed_point, max_picard=self.max_picard,
                            mu=sc.mu, lam=sc.lam, gamma=sc.gamma, p=self.p, q=self.q)

    def weak(self) -> WeakConfig:
        sc = self.scenario
        return WeakConfig(dt=sc.dt, mu=sc.mu, lam=sc.lam, gamma=sc.gamma,
                          cfl_safety=self.cfl_safety)

    def linear(self) -> LinearSolveConfig:
        return LinearSolveConfig(self.linear_tol, self.linear_max_iter or None)

    def resolved(self) -> dict[str, Any]:
        d = {k: v for k, v in asdict(self).items() if k != "scenario"}
        d["scenario"] = asdict(self.scenario)
        return d


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value: str, default: Any) -> Any:
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            v = float(value)
            if not math.isfinite(v):
                raise ValueError
            return v
    except ValueError:
        raise ConfigError(f"{key}: cannot interpret {value!r}") from None
    return value


def config_from_dict(raw: dict[str, str]) -> RunConfig:
    raw = dict(raw)
    name = raw.pop("scenario", None)
    if name is None:
        raise ConfigError("config must name a scenario")
    run = dict(RUN_DEFAULTS)
    overrides = {}
    for key, value in raw.items():
        if key in RUN_DEFAULTS:
            run[key] = _convert(key, value, RUN_DEFAULTS[key])
        elif key in _SCENARIO_KEYS:
            overrides[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    sc = build_scenario(name, overrides)
    if run["integrator"] not in INTEGRATORS:
        raise ConfigError(f"integrator must be one of {', '.join(INTEGRATORS)}")
    cfg = RunConfig(scenario=sc, **run)
    try:
        cfg.picard().steps_per_window
        _steps_between(0.0, sc.t_end, sc.dt)
        cfg.weak()
        cfg.linear()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(parse_config_text(text))


def config_hash(cfg: RunConfig) -> str:
    """sha256 of the canonical resolved config, ignoring where output goes."""
    d = cfg.resolved()
    d.pop("output_dir")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------- #
# snapshots

MAGIC = b"ELF1"
_BOUNDARY_BYTE = {Boundary.DIRICHLET: 0, Boundary.PERIODIC: 1}


def snapshot_bytes(state: State) -> bytes:
    """``ELF1 | dim u32 | n_i u32... | boundary u8 | t f64 | u, F (row-major), P``.

    Integers and floats are little-endian; each field component is stored in
    C order (last axis fastest).
    """
    g = state.grid
    head = MAGIC + struct.pack("<I", g.dim) + struct.pack(f"<{g.dim}I", *g.n)
    head += struct.pack("<B", _BOUNDARY_BYTE[g.boundary]) + struct.pack("<d", state.t)
    body = np.concatenate([state.u.ravel(), state.F.ravel(), state.P.ravel()])
    return head + body.astype("<f8").tobytes()


def snapshot_from_bytes(blob: bytes, L: float | tuple[float, ...] = 1.0) -> State:
    """Inverse of :func:`snapshot_bytes`.  Box lengths are not stored, so the
    caller supplies them."""
    if blob[:4] != MAGIC:
        raise ValueError("not an ELF1 snapshot")
    (dim,) = struct.unpack_from("<I", blob, 4)
    if dim not in (2, 3):
        raise ValueError("corrupt snapshot header")
    n = struct.unpack_from(f"<{dim}I", blob, 8)
    off = 8 + 4 * dim
    (bb,) = struct.unpack_from("<B", blob, off)
    (t,) = struct.unpack_from("<d", blob, off + 1)
    off += 9
    boundary = {v: k for k, v in _BOUNDARY_BYTE.items()}[bb]
    grid = make_grid(dim, n, L, boundary)
    N = grid.ncells
    data = np.frombuffer(blob, dtype="<f8", offset=off)
    if data.size != (1 + dim + dim * dim) * N:
        raise ValueError("snapshot payload has the wrong length")
    data = data.astype(float)
    u = data[: dim * N].reshape((dim, *n))
    F = data[dim * N: (dim + dim * dim) * N].reshape((dim, dim, *n))
    P = data[(dim + dim * dim) * N:].reshape(n)
    return State(t, u, F, P, grid)


def write_snapshot(path: str | os.PathLike, state: State) -> None:
    atomic_write(path, snapshot_bytes(state))


def read_snapshot(path: str | os.PathLike, L: float | tuple[float, ...] = 1.0) -> State:
    return snapshot_from_bytes(Path(path).read_bytes(), L)


# --------------------------------------------------------------------------- #
# runs


@dataclass
class RunSummary:
    scenario: str
    config_hash: str
    integrator: str
    final_time: float
    worst_energy_margin: float
    max_div_residual: float
    H_end: float
    picard_iters_total: int
    picard_iters_max: int
    picard_ratio_max: float
    integral_G: float
    record_cadence: float
    gronwall_max_X: float | None
    gronwall_passed: bool | None
    exit_status: int
    message: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class _Runner:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.every = cfg.scenario.snapshot_every

    def sink(self) -> DiagnosticsSink:
        c = self.cfg
        sc = c.scenario
        return DiagnosticsSink(sc.mu, sc.lam, sc.gamma, c.p, c.q, keep_states=c.integrator == "both")

    def snapshotter(self, tag: str):
        count = [0]

        def cb(state: State) -> None:
            count[0] += 1
            if self.every and count[0] % self.every == 0:
                write_snapshot(self.out / f"snap_{tag}_{count[0]:06d}.elf", state)
        return cb

    def integrate(self, tag: str, s0: State, sink: DiagnosticsSink) -> None:
        c = self.cfg
        if self.every:
            write_snapshot(self.out / f"snap_{tag}_{0:06d}.elf", s0)
        if tag == "picard":
            advance(s0, c.scenario.t_end, c.picard(), c.linear(), sink,
                    on_window=self.snapshotter(tag))
        else:
            weak_advance(s0, c.scenario.t_end, c.weak(), c.linear(), sink,
                         on_step=self.snapshotter(tag))


def _gronwall_csv(rep) -> str:
    lines = ["t,X,bound,diff_dissipation"]
    for t, x, b, d in zip(rep.times, rep.X, rep.bound, rep.diff_dissipation):
        lines.append(",".join(format(float(v), ".17g") for v in (t, x, b, d)))
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig | str | os.PathLike, output_dir: str | os.PathLike | None = None,
        ) -> RunSummary:
    """Execute a configured run and write its outputs under the output dir:
    ``diagnostics_<integrator>.csv``, optional ``snap_*.elf``,
    ``gronwall.csv`` (both integrators) and ``summary.json``.

    Config problems raise :class:`ConfigError` before anything is written.
    Solver failures are recorded in the summary (exit status 3) together with
    the diagnostics gathered up to the failure.
    """
    if not isinstance(cfg, RunConfig):
        cfg = load_config(cfg)
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    sc = cfg.scenario
    runner = _Runner(cfg, out)
    tags = ["picard", "weak"] if cfg.integrator == "both" else [cfg.integrator]
    sinks = {tag: runner.sink() for tag in tags}
    status, message = EXIT_OK, "ok"
    s0 = sc.initial_state(cfg.linear())
    for tag in tags:
        try:
            runner.integrate(tag, s0, sinks[tag])
        except SolverError as exc:
            status, message = exc.exit_code, f"{tag}: {type(exc).__name__}: {exc}"
            log.warning("run failed: %s", message)
            break
    for tag in tags:
        if sinks[tag].records:
            atomic_write(out / f"diagnostics_{tag}.csv", records_to_csv(sinks[tag].records))

    g_max = g_pass = None
    if cfg.integrator == "both" and status == EXIT_OK:
        ss, sw = sinks["picard"], sinks["weak"]
        rep = gronwall_compare(ss.records, sw.records, ss.states, sw.states, cfg.C_env)
        atomic_write(out / "gronwall.csv", _gronwall_csv(rep))
        g_max, g_pass = rep.max_X, bool(rep.passed)

    main = sinks[tags[0]].records
    stats = summarize_series(main) if main else {}
    summary = RunSummary(
        scenario=sc.name,
        config_hash=config_hash(cfg),
        integrator=cfg.integrator,
        final_time=stats.get("final_time", s0.t),
        worst_energy_margin=float(energy_margins(main)[1].min()) if main else 0.0,
        max_div_residual=stats.get("max_div_residual", 0.0),
        H_end=stats.get("H_end", 0.0),
        picard_iters_total=stats.get("picard_iters_total", 0),
        picard_iters_max=stats.get("picard_iters_max", 0),
        picard_ratio_max=max((r.picard_ratio for r in main), default=0.0),
        integral_G=integrability_check(main, cfg.C_env) if main else 0.0,
        record_cadence=cfg.picard().steps_per_window * sc.dt if tags[0] == "picard" else sc.dt,
        gronwall_max_X=g_max,
        gronwall_passed=g_pass,
        exit_status=status,
        message=message,
    )
    atomic_write(out / "summary.json", summary.to_json())
    return summary
