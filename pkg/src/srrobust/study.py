"""Robustness study: thresholds/ARL table and STADD/RE grids.

Every cell is computed by the integral-equation solver.  Outputs are
UTF-8 CSV with LF line endings, numbers printed to 6 significant digits,
written once after the cells are sorted so repeated runs are
byte-identical.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import calibrate, montecarlo
from .detect import Procedure
from .errors import InvalidInputError, SRError
from .model import GaussianModel, zeta
from .solver import GridConfig, build_grid, evaluate_grid, solve_arl

THETA_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))
TABLE1_GAMMAS = tuple(float(100 * k) for k in range(1, 11)) + (1e4,)
STADD_GAMMAS = (1e2, 1e3, 1e4)
QUICK_THETAS = (0.1, 0.4, 0.7, 1.0)
CONTOUR_LEVELS = (0.05, 0.10, 0.25, 0.50)

STADD_HEADER = ["theta_putative", "theta_true", "gamma", "threshold", "arl", "stadd", "re", "error"]
TABLE1_HEADER = ["theta_putative", "zeta", "gamma", "threshold", "arl", "error"]


@dataclass
class StudyConfig:
    theta_grid: Sequence[float] = THETA_GRID
    gamma_list: Sequence[float] = TABLE1_GAMMAS + ()
    threshold_mode: str = "zeta"
    output_dir: Optional[Path] = None
    grid: GridConfig = GridConfig(estimate_error=False)
    workers: int = 1

    def __post_init__(self):
        if not self.theta_grid or not self.gamma_list:
            raise InvalidInputError("theta_grid and gamma_list must be nonempty")
        if any(t == 0 for t in self.theta_grid):
            raise InvalidInputError("theta values must be nonzero")
        if self.threshold_mode not in ("zeta", "exact"):
            raise InvalidInputError(f"unknown threshold_mode {self.threshold_mode!r}")

    @classmethod
    def quick(cls, **kw):
        kw.setdefault("theta_grid", QUICK_THETAS)
        return cls(**kw)


def fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if isinstance(v, str):
        return v
    return f"{v:.6g}"


def _parse(s: str) -> float:
    return math.nan if s == "NA" else float(s)


def _write_csv(path: Path, header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(text.encode("utf-8"))
    return text


def _threshold(gamma, theta_putative, mode, grid_config):
    if mode == "zeta":
        return calibrate.threshold_from_zeta(gamma, theta_putative)
    return calibrate.calibrate_exact(gamma, theta_putative, config=grid_config).threshold_exact


# ------------------------------------------------------ threshold table


@dataclass
class Table1Row:
    theta_putative: float
    zeta: float
    gamma: float
    threshold: float
    arl: float
    error: str = ""


def _table1_cell(theta_putative, gamma, mode, grid_config):
    z = zeta(theta_putative)
    try:
        a = _threshold(gamma, theta_putative, mode, grid_config)
        grid = build_grid(GaussianModel(0.0, theta_putative), a, grid_config.n_nodes,
                          grid_config.scheme, grid_config)
        return Table1Row(theta_putative, z, gamma, a, solve_arl(grid))
    except SRError as exc:
        return Table1Row(theta_putative, z, gamma, math.nan, math.nan, f"{type(exc).__name__}: {exc}")


def run_table1(config: StudyConfig) -> List[Table1Row]:
    """zeta, A = zeta * gamma and the solver's actual ARL for every cell."""
    cells = [(th, g) for th in config.theta_grid for g in config.gamma_list]
    args = [(th, g, config.threshold_mode, config.grid) for th, g in cells]
    rows = _map(_table1_cell, args, config.workers)
    rows.sort(key=lambda r: (r.theta_putative, r.gamma))
    if config.output_dir is not None:
        write_table1_csv(rows, Path(config.output_dir) / "table1.csv")
    return rows


def write_table1_csv(rows, path=None) -> str:
    return _write_csv(path, TABLE1_HEADER,
                      [(r.theta_putative, r.zeta, r.gamma, r.threshold, r.arl, r.error) for r in rows])


# ------------------------------------------------------------- STADD grid


@dataclass
class ReGrid:
    """STADD and RE over putative (rows) x true (cols) post-change means."""

    rows: List[float]
    cols: List[float]
    stadd: np.ndarray
    re: np.ndarray
    gamma: float
    thresholds: np.ndarray
    arl: np.ndarray
    errors: Dict[Tuple[int, int], str] = field(default_factory=dict)

    def ideal_index(self, j: int) -> Optional[int]:
        try:
            return self.rows.index(self.cols[j])
        except ValueError:
            return None

    def optimality_violations(self, rel_tol: float = 0.0):
        """Cells where a misspecified detector beats the tuned one."""
        bad = []
        for j in range(len(self.cols)):
            i0 = self.ideal_index(j)
            if i0 is None:
                continue
            ideal = self.stadd[i0, j]
            for i in range(len(self.rows)):
                if self.stadd[i, j] < ideal * (1 - rel_tol):
                    bad.append((self.rows[i], self.cols[j]))
        return bad

    def cell(self, theta_putative, theta_true):
        i = self.rows.index(theta_putative)
        j = self.cols.index(theta_true)
        return self.stadd[i, j], self.re[i, j]


def _stadd_row(theta_putative, thetas, gamma, mode, grid_config):
    n = len(thetas)
    out = {"stadd": [math.nan] * n, "arl": math.nan, "threshold": math.nan, "errors": {}}
    try:
        a = _threshold(gamma, theta_putative, mode, grid_config)
        out["threshold"] = a
        base = build_grid(GaussianModel(theta_putative, theta_putative), a, grid_config.n_nodes,
                          grid_config.scheme, grid_config)
        out["arl"] = solve_arl(base)
    except SRError as exc:
        reason = f"{type(exc).__name__}: {exc}"
        out["errors"] = {j: reason for j in range(n)}
        return out
    for j, theta in enumerate(thetas):
        try:
            grid = base if theta == theta_putative else base.with_theta_true(theta)
            out["stadd"][j] = evaluate_grid(grid)["stadd"]
        except SRError as exc:
            out["errors"][j] = f"{type(exc).__name__}: {exc}"
    return out


def run_stadd_grid(gamma: float, config: StudyConfig) -> ReGrid:
    """STADD and RE for every (theta_putative, theta_true) pair at one gamma.

    Each row uses the threshold for its own theta_putative at the shared
    gamma; RE is measured against the diagonal cell of the same column.
    """
    if not any(math.isclose(gamma, g) for g in config.gamma_list):
        raise InvalidInputError(f"gamma={gamma:g} is not in the configured gamma_list")
    thetas = sorted(config.theta_grid)
    args = [(th, thetas, gamma, config.threshold_mode, config.grid) for th in thetas]
    rows = _map(_stadd_row, args, config.workers)

    n = len(thetas)
    stadd = np.array([r["stadd"] for r in rows], dtype=float)
    errors = {}
    for i, r in enumerate(rows):
        for j, reason in r["errors"].items():
            errors[(i, j)] = reason
    re = np.full((n, n), math.nan)
    for j in range(n):
        ideal = stadd[j, j]
        if math.isfinite(ideal) and ideal > 0:
            re[:, j] = (stadd[:, j] - ideal) / ideal
            re[j, j] = 0.0
    regrid = ReGrid(list(thetas), list(thetas), stadd, re, float(gamma),
                    np.array([r["threshold"] for r in rows]), np.array([r["arl"] for r in rows]), errors)
    if config.output_dir is not None:
        write_regrid_csv(regrid, Path(config.output_dir) / f"stadd_gamma{int(gamma)}.csv")
    return regrid


def write_regrid_csv(regrid: ReGrid, path=None) -> str:
    rows = []
    for i, th in enumerate(regrid.rows):
        for j, t in enumerate(regrid.cols):
            rows.append((th, t, regrid.gamma, regrid.thresholds[i], regrid.arl[i],
                         regrid.stadd[i, j], regrid.re[i, j], regrid.errors.get((i, j), "")))
    return _write_csv(path, STADD_HEADER, rows)


def read_regrid_csv(source) -> ReGrid:
    """Parse a file written by :func:`write_regrid_csv` (path or CSV text)."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text(encoding="utf-8")
    records = list(csv.DictReader(io.StringIO(text)))
    if not records or list(records[0].keys()) != STADD_HEADER:
        raise InvalidInputError("not a STADD grid CSV")
    rows = sorted({float(r["theta_putative"]) for r in records})
    cols = sorted({float(r["theta_true"]) for r in records})
    n, m = len(rows), len(cols)
    stadd = np.full((n, m), math.nan)
    re = np.full((n, m), math.nan)
    thr = np.full(n, math.nan)
    arl = np.full(n, math.nan)
    errors = {}
    for r in records:
        i = rows.index(float(r["theta_putative"]))
        j = cols.index(float(r["theta_true"]))
        stadd[i, j] = _parse(r["stadd"])
        re[i, j] = _parse(r["re"])
        thr[i] = _parse(r["threshold"])
        arl[i] = _parse(r["arl"])
        if r["error"]:
            errors[(i, j)] = r["error"]
    return ReGrid(rows, cols, stadd, re, float(records[0]["gamma"]), thr, arl, errors)


# --------------------------------------------------------------- heat map


@dataclass
class HeatmapGrid:
    triples: List[Tuple[float, float, float]]
    levels: Tuple[float, ...]
    within: Dict[float, np.ndarray]

    def band_width(self, level: float, row: int) -> int:
        """Number of cells in a row whose RE is at or below ``level``."""
        return int(self.within[level][row].sum())


def emit_heatmap_grid(regrid: ReGrid, path=None, levels=CONTOUR_LEVELS) -> HeatmapGrid:
    """Dense (theta_putative, theta_true, RE) triples for external plotting.

    The text file is gnuplot-friendly: comment header listing the contour
    levels, one triple per line, a blank line between putative-value rows.
    """
    triples = []
    lines = [f"# gamma {fmt(regrid.gamma)}",
             "# contour_levels " + ",".join(fmt(v) for v in levels),
             "# theta_putative theta_true re"]
    for i, th in enumerate(regrid.rows):
        for j, t in enumerate(regrid.cols):
            v = float(regrid.re[i, j])
            triples.append((th, t, v))
            lines.append(f"{fmt(th)} {fmt(t)} {fmt(v)}")
        lines.append("")
    within = {lv: np.nan_to_num(regrid.re, nan=math.inf) <= lv for lv in levels}
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return HeatmapGrid(triples, tuple(levels), within)


# ---------------------------------------------------------------- driver


def mc_spot_check(regrid: ReGrid, replications: int, seed: int, workers: int = 1):
    """Monte Carlo STADD on the diagonal of a grid (change at 10 * gamma)."""
    out = []
    nu = montecarlo.default_change_point(regrid.gamma)
    for i, th in enumerate(regrid.rows):
        j = regrid.cols.index(th) if th in regrid.cols else None
        if j is None or not math.isfinite(regrid.thresholds[i]):
            continue
        cfg = montecarlo.McConfig(replications=replications, seed=seed, change_point_nu=nu,
                                  worker_count=workers)
        est = montecarlo.estimate_stadd(GaussianModel(th, th), Procedure.SR, regrid.thresholds[i], cfg)
        out.append((th, th, regrid.gamma, regrid.thresholds[i], regrid.stadd[i, j],
                    est.mean, est.std_error, est.replications_used, est.truncation_count))
    return out


MC_HEADER = ["theta_putative", "theta_true", "gamma", "threshold", "stadd_solver", "mc_mean", "mc_se",
             "reps", "truncated"]


def run_study(gammas: Sequence[float], config: StudyConfig, table1: bool = True,
              mc_replications: int = 0, seed: int = montecarlo.DEFAULT_SEED) -> dict:
    """Write table1.csv, stadd_gamma*.csv, re_gamma*.dat (and optionally mc_check.csv)."""
    out = Path(config.output_dir) if config.output_dir is not None else None
    result = {"grids": {}}
    if table1:
        result["table1"] = run_table1(config)
    mc_rows = []
    for g in gammas:
        regrid = run_stadd_grid(g, config)
        result["grids"][g] = regrid
        emit_heatmap_grid(regrid, None if out is None else out / f"re_gamma{int(g)}.dat")
        if mc_replications:
            mc_rows.extend(mc_spot_check(regrid, mc_replications, seed, config.workers))
    if mc_replications and out is not None:
        _write_csv(out / "mc_check.csv", MC_HEADER, mc_rows)
    result["mc"] = mc_rows
    return result


def _map(fn, args, workers):
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args)))
