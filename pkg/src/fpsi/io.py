"""Flat key=value configuration, CSV ledgers/reports and legacy-ASCII VTK output."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .assembly import PhysicalParams
from .errors import ConfigError
from .scheme import LEDGER_COLUMNS, Thresholds

OUT_DIR_ENV = "FPSI_OUT_DIR"
KERNELS = ("bump",)
INITIAL_KINDS = ("zero", "smooth", "plate_drop", "fold")
REFERENCE_KINDS = ("rest", "separable")
SWEEP_KINDS = ("consistency", "mollifier")
SWEEP_MODES = ("paired", "reference")

REQUIRED = ("nx", "ny", "dt", "T", "delta")
REPORT_COLUMNS = (("delta", "max_E") + tuple(f"term_{k:02d}" for k in range(1, 12))
                  + ("fitted_order", "floor_estimate", "bootstrap_min_det", "bootstrap_grad_gap"))
MOLLIFIER_COLUMNS = ("delta", "h1_error", "grad_max_error", "fitted_order_h1", "fitted_order_grad")


@dataclass
class RunConfig:
    """Validated run configuration; ``delta = 0`` disables the regularization."""

    params: PhysicalParams
    nx: int
    ny: int
    dt: float
    T: float
    delta: float
    h_aux_factor: float = 8.0
    kernel: str = "bump"
    order: int = 6
    thresholds: Thresholds = field(default_factory=Thresholds)
    init: str = "smooth"
    init_amp: float = 0.01
    snapshot_stride: int = 0
    out: str = "."
    reference: str = "separable"
    ref_amp: float = 0.05
    sweep_kind: str = "consistency"
    sweep_deltas: tuple = (0.2, 0.1, 0.05)
    sweep_mode: str = "paired"

    def to_flat(self) -> dict:
        out = dict(self.params.as_dict())
        for f in fields(self):
            if f.name in ("params", "thresholds"):
                continue
            out[f.name] = getattr(self, f.name)
        out["margin_R"] = self.thresholds.margin_R
        out["margin_det"] = self.thresholds.margin_det
        out["norm_cap"] = self.thresholds.norm_cap
        return out


_PARAM_KEYS = tuple(f.name for f in fields(PhysicalParams))
_INT_KEYS = ("nx", "ny", "order", "snapshot_stride")
_FLOAT_KEYS = ("dt", "T", "delta", "h_aux_factor", "init_amp", "ref_amp", "margin_R", "margin_det", "norm_cap")
_STR_KEYS = {"kernel": KERNELS, "init": INITIAL_KINDS, "reference": REFERENCE_KINDS,
             "sweep_kind": SWEEP_KINDS, "sweep_mode": SWEEP_MODES, "out": None}
_LIST_KEYS = ("sweep_deltas",)
KNOWN_KEYS = _PARAM_KEYS + _INT_KEYS + _FLOAT_KEYS + tuple(_STR_KEYS) + _LIST_KEYS


def _num(key, text, kind):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def parse_config(text: str) -> RunConfig:
    """Parse flat ``key = value`` text (``#`` comments, case-sensitive keys)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {k!r}")
        if k in raw:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        raw[k] = v
    for k in REQUIRED:
        if k not in raw:
            raise ConfigError(f"missing required key {k!r}")
    params = PhysicalParams(**{k: _num(k, raw[k], float) for k in _PARAM_KEYS if k in raw}).validate()
    kw = {}
    for k in _INT_KEYS:
        if k in raw:
            kw[k] = _num(k, raw[k], int)
    for k in _FLOAT_KEYS:
        if k in raw:
            kw[k] = _num(k, raw[k], float)
    for k, allowed in _STR_KEYS.items():
        if k in raw:
            if allowed is not None and raw[k] not in allowed:
                raise ConfigError(f"{k}: {raw[k]!r} not one of {allowed}")
            kw[k] = raw[k]
    if "sweep_deltas" in raw:
        kw["sweep_deltas"] = tuple(_num("sweep_deltas", s.strip(), float) for s in raw["sweep_deltas"].split(","))
    thr = Thresholds(**{k: kw.pop(k) for k in ("margin_R", "margin_det", "norm_cap") if k in kw})
    cfg = RunConfig(params=params, thresholds=thr, **kw)
    return validate_config(cfg)


def validate_config(cfg: RunConfig) -> RunConfig:
    m = min(cfg.params.L, cfg.params.R)
    if cfg.nx < 1 or cfg.ny < 1:
        raise ConfigError("nx, ny: mesh counts must be ≥ 1")
    if not cfg.dt > 0:
        raise ConfigError(f"dt = {cfg.dt} violates Δt > 0")
    if not cfg.T > 0:
        raise ConfigError(f"T = {cfg.T} violates T > 0")
    if not (0 <= cfg.delta < m):
        raise ConfigError(f"delta = {cfg.delta} violates 0 ≤ δ < min(L,R) = {m}")
    for d in cfg.sweep_deltas:
        if not (0 < d < m):
            raise ConfigError(f"sweep_deltas: {d} violates 0 < δ < min(L,R) = {m}")
    if not cfg.h_aux_factor >= 1:
        raise ConfigError("h_aux_factor must be ≥ 1")
    if cfg.order < 1:
        raise ConfigError("order must be ≥ 1")
    if cfg.snapshot_stride < 0:
        raise ConfigError("snapshot_stride must be ≥ 0")
    t = cfg.thresholds
    if not (t.margin_R > 0 and t.margin_det > 0 and t.norm_cap > 1):
        raise ConfigError("thresholds: margin_R, margin_det > 0 and norm_cap > 1 required")
    return cfg


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (all keys written, defaults included)."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in cfg.to_flat().items())


def format_float(v: float) -> str:
    """Locale-independent 17-significant-digit float formatting."""
    return format(float(v), ".17g")


def output_dir(cli_value: str | None, cfg: RunConfig | None = None) -> Path:
    """Environment override first, then the command-line value, then the config."""
    env = os.environ.get(OUT_DIR_ENV)
    p = Path(env or cli_value or (cfg.out if cfg else "."))
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_csv(path, header, rows):
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def write_ledger_csv(path, ledger) -> None:
    _write_csv(path, LEDGER_COLUMNS, ([getattr(r, c) for c in LEDGER_COLUMNS] for r in ledger.rows))


def write_report_csv(path, report) -> None:
    rows = ([r.delta, r.max_E, *r.terms, r.fitted_order, r.floor_estimate, r.bootstrap_min_det,
             r.bootstrap_grad_gap] for r in report.rows)
    _write_csv(path, REPORT_COLUMNS, rows)


def write_mollifier_csv(path, rows) -> None:
    _write_csv(path, MOLLIFIER_COLUMNS, ([getattr(r, c) for c in MOLLIFIER_COLUMNS] for r in rows))


# ------------------------------------------------------------------ VTK

def _vtk_grid(fh, points, cells, cell_type):
    fh.write(f"POINTS {len(points)} double\n")
    for x, y in points:
        fh.write(f"{format_float(x)} {format_float(y)} 0\n")
    k = cells.shape[1]
    fh.write(f"CELLS {len(cells)} {len(cells) * (k + 1)}\n")
    for c in cells:
        fh.write(f"{k} " + " ".join(str(int(i)) for i in c) + "\n")
    fh.write(f"CELL_TYPES {len(cells)}\n")
    fh.write(f"{cell_type}\n" * len(cells))


def write_vtk(path, title: str, points, cells, point_data: dict, cell_type: int = 5) -> None:
    """Legacy-ASCII unstructured grid; vector data are (n, 2) arrays, scalars (n,)."""
    points = np.asarray(points, float)
    cells = np.asarray(cells, int)
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        _vtk_grid(fh, points, cells, cell_type)
        if point_data:
            fh.write(f"POINT_DATA {len(points)}\n")
        for name, arr in point_data.items():
            arr = np.asarray(arr, float)
            if arr.ndim == 2:
                fh.write(f"VECTORS {name} double\n")
                for v in arr:
                    fh.write(f"{format_float(v[0])} {format_float(v[1])} 0\n")
            else:
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in arr:
                    fh.write(format_float(v) + "\n")


def write_state_vtk(out_dir, disc, state, tag: str) -> list:
    """Fluid velocity on the deformed domain, Biot displacement and pressure on the
    reference domain, and the plate profile as a polyline."""
    from .transforms import PlateField, ale_map

    S, lay, R = disc.spaces, disc.layout, disc.params.R
    out_dir = Path(out_dir)
    fm = S.velocity.mesh
    plate = PlateField(S.plate, state.omega)
    fv = fm.vertices
    u = S.velocity.evaluate(state.X[lay.block("u")], fv)[0]
    files = []
    p = out_dir / f"fluid_{tag}.vtk"
    write_vtk(p, f"fluid t={format_float(state.t)}", ale_map(plate, fv, R), fm.cells, {"velocity": u})
    files.append(p)
    bm = S.displacement.mesh
    bv = bm.vertices
    eta = S.displacement.evaluate(state.X[lay.block("eta")], bv)[0]
    xi = S.displacement.evaluate(state.xi[lay.block("eta")], bv)[0]
    pr = S.pressure.evaluate(state.X[lay.block("p")], bv)[0][:, 0]
    p = out_dir / f"biot_{tag}.vtk"
    write_vtk(p, f"biot t={format_float(state.t)}", bv, bm.cells,
              {"displacement": eta, "velocity": xi, "pressure": pr})
    files.append(p)
    xs = S.plate.nodes
    w = S.plate.evaluate(state.omega, xs, 0)
    p = out_dir / f"plate_{tag}.vtk"
    segs = np.column_stack([np.arange(len(xs) - 1), np.arange(1, len(xs))])
    write_vtk(p, f"plate t={format_float(state.t)}", np.column_stack([xs, w]), segs,
              {"displacement": w}, cell_type=3)
    files.append(p)
    return files
