"""Generic grid-sweep executor: deterministic, parallel, resumable.

Cells are laid out row-major in axis-declaration order and evaluated in
fixed chunks of 1000; output is a pure function of the sweep spec regardless
of the parallelism degree. CSV output is flushed chunk-by-chunk so an
interrupted sweep can be resumed against the partial file.
"""

from __future__ import annotations

import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ValidationError
from .params import SystemParams, load_params

__all__ = ["AxisSpec", "SweepSpec", "SweepResult", "run_sweep",
           "write_result", "run_rows_parallel", "EVALUATOR_COLUMNS"]

CHUNK = 1000


@dataclass(frozen=True)
class AxisSpec:
    path: str                 # dotted parameter path or a named sweep axis
    start: float
    stop: float
    count: int
    scale: str = "linear"     # linear | log

    def values(self):
        if self.count < 2:
            raise ValidationError("axis.count", "need at least 2 points")
        if self.scale == "linear":
            return np.linspace(self.start, self.stop, self.count)
        if self.scale == "log":
            if self.start <= 0 or self.stop <= 0:
                raise ValidationError("axis.range",
                                      "log-scale ranges must be positive")
            return np.geomspace(self.start, self.stop, self.count)
        raise ValidationError("axis.scale", f"unknown scale {self.scale!r}")


@dataclass(frozen=True)
class SweepSpec:
    axes: list
    evaluator: str
    base: SystemParams
    options: dict = field(default_factory=dict)
    jobs: int = 1


@dataclass
class SweepResult:
    axes: list
    evaluator: str
    columns: list
    cells: list          # row-major dicts: indices, axis_values, status, values
    meta: dict = field(default_factory=dict)
    elapsed: float = 0.0     # wall seconds; never serialized into data files

    def cell(self, *indices):
        axes_counts = [a.count for a in self.axes]
        flat = 0
        for idx, n in zip(indices, axes_counts):
            flat = flat * n + idx
        return self.cells[flat]


# --------------------------------------------------------------------------
# Evaluators
# --------------------------------------------------------------------------

def _xi_table_cell(p: SystemParams, options):
    from .gain_medium import atomic_steady_state_linear, xi_coefficients
    try:
        xi = xi_coefficients(p.atom, atomic_steady_state_linear(p.atom))
    except Exception as exc:
        return dict(status="error", message=f"{type(exc).__name__}: {exc}")
    row = dict(status="ok")
    for name, z in zip(("xi11", "xi12", "xi21", "xi22"), xi.as_tuple()):
        row[f"re_{name}"] = z.real
        row[f"im_{name}"] = z.imag
    return row


def _entanglement_cell(p: SystemParams, options):
    from .entanglement import _entanglement_cell as impl, CovarianceMatrix
    row = impl(p, paper_literal=options.get("paper_literal", False))
    if options.get("include_covariance") and row.get("status") in ("ok", "unphysical"):
        from .entanglement import entangle
        _, _, V = entangle(p, paper_literal=options.get("paper_literal", False))
        if V is not None:
            row["V"] = V.V.tolist()
    return row


def _bistability_cell(p: SystemParams, options):
    from . import bistability as bi
    frame = options.get("frame", "beyond-rwa")
    mode = options.get("mode", 1)
    mu = options.get("mu")
    if mu is None:
        mu = p.cavity.mu if p.cavity.mu is not None else 1.0
    delta0 = options.get("delta0", p.cavity.delta01)
    P = options.get("P", p.cavity.P1)
    try:
        if frame == "rwa":
            roots = bi.rwa_roots(p, mode, P, delta0=delta0)
            ivals = [r.I for r in roots]
        else:
            roots = bi.coupled_roots(p, P, delta0, mu)
            ivals = [r.I1 for r in roots]
        return dict(status="ok", n_roots=len(ivals),
                    I1_low=min(ivals), I1_high=max(ivals),
                    fold_P_low=None, fold_P_high=None, topology=None)
    except Exception as exc:
        return dict(status="error", message=f"{type(exc).__name__}: {exc}",
                    n_roots=None)


EVALUATORS = {
    "xi-table": _xi_table_cell,
    "entanglement": _entanglement_cell,
    "bistability": _bistability_cell,
}

EVALUATOR_COLUMNS = {
    "xi-table": ["re_xi11", "im_xi11", "re_xi12", "im_xi12",
                 "re_xi21", "im_xi21", "re_xi22", "im_xi22"],
    "entanglement": ["stable", "E_N", "Lambda", "Gamma1", "Gamma2",
                     "G12", "G21"],
    "bistability": ["n_roots", "I1_low", "I1_high", "fold_P_low",
                    "fold_P_high", "topology"],
}

# special per-cell parameter injections used by the bistability evaluator
_CELL_OPTION_AXES = {"delta0": "delta0", "P": "P"}


def _axis_paths(name):
    """Resolve an axis name to the dotted parameter paths it drives."""
    from .entanglement import SWEEP_AXES
    if name in SWEEP_AXES:
        return SWEEP_AXES[name]
    if name in _CELL_OPTION_AXES:
        return []          # passed through evaluator options instead
    if "." in name:
        return [name]
    raise ValidationError("axis.path", f"unknown axis {name!r}")


def _cell_params(base: SystemParams, axes, axis_values, options):
    opts = dict(options)
    updates = {}
    for ax, val in zip(axes, axis_values):
        paths = _axis_paths(ax.path)
        if not paths:
            opts[_CELL_OPTION_AXES[ax.path]] = float(val)
        for path in paths:
            updates[path] = float(val)
    p = base.replace(**updates) if updates else base
    return p, opts


def _eval_range(spec: SweepSpec, start: int, stop: int):
    """Evaluate cells [start, stop); top-level so it pickles for workers."""
    fn = EVALUATORS[spec.evaluator]
    value_grids = [a.values() for a in spec.axes]
    counts = [a.count for a in spec.axes]
    out = []
    for flat in range(start, stop):
        idx = []
        rem = flat
        for n in reversed(counts):
            idx.append(rem % n)
            rem //= n
        idx = tuple(reversed(idx))
        axis_values = tuple(float(value_grids[k][i]) for k, i in enumerate(idx))
        try:
            p, opts = _cell_params(spec.base, spec.axes, axis_values,
                                   spec.options)
            p.validate()
            row = fn(p, opts)
        except Exception as exc:
            row = dict(status="error", message=f"{type(exc).__name__}: {exc}")
        row = dict(row)
        row["indices"] = idx
        row["axis_values"] = axis_values
        out.append(row)
    return out


def run_sweep(spec: SweepSpec, out_path=None, fmt="csv",
              resume=False) -> SweepResult:
    """Evaluate every cell exactly once, deterministically.

    When ``out_path`` is given with csv format, completed chunks are flushed
    to the file as they finish; with ``resume=True`` an existing partial file
    is extended instead of recomputed. Progress is reported on stderr as
    ``cells_done/total`` lines.
    """
    if spec.evaluator not in EVALUATORS:
        raise ValidationError("evaluator",
                              f"unknown evaluator {spec.evaluator!r}; known: "
                              f"{sorted(EVALUATORS)}")
    t0 = time.monotonic()
    total = 1
    for a in spec.axes:
        total *= a.count
    columns = EVALUATOR_COLUMNS[spec.evaluator]

    done = 0
    csv_file = None
    if out_path is not None and fmt == "csv":
        header = _csv_header(spec.evaluator, spec.axes, columns)
        if resume and os.path.exists(out_path):
            with open(out_path, "r", encoding="utf-8") as fh:
                lines = fh.read().splitlines()
            if lines and lines[0] != header:
                raise ValidationError("resume", "existing file header differs")
            done = max(0, len(lines) - 1)
            # align to a chunk boundary so flushes stay byte-identical
            done = (done // CHUNK) * CHUNK
            with open(out_path, "r+", encoding="utf-8") as fh:
                kept = lines[:1 + done]
                fh.seek(0)
                fh.truncate()
                fh.write("".join(s + "\n" for s in kept))
            csv_file = open(out_path, "a", encoding="utf-8")
        else:
            csv_file = open(out_path, "w", encoding="utf-8")
            csv_file.write(header + "\n")
            csv_file.flush()

    cells = []
    starts = list(range(done, total, CHUNK))
    try:
        if spec.jobs > 1 and total - done > CHUNK // 2:
            with ProcessPoolExecutor(max_workers=spec.jobs) as ex:
                futures = [ex.submit(_eval_range, spec, s, min(s + CHUNK, total))
                           for s in starts]
                for s, fut in zip(starts, futures):
                    chunk_rows = fut.result()
                    cells.extend(chunk_rows)
                    if csv_file is not None:
                        for row in chunk_rows:
                            csv_file.write(_csv_row(spec.evaluator, row, columns) + "\n")
                        csv_file.flush()
                    print(f"{min(s + CHUNK, total)}/{total}", file=sys.stderr)
        else:
            for s in starts:
                chunk_rows = _eval_range(spec, s, min(s + CHUNK, total))
                cells.extend(chunk_rows)
                if csv_file is not None:
                    for row in chunk_rows:
                        csv_file.write(_csv_row(spec.evaluator, row, columns) + "\n")
                    csv_file.flush()
                print(f"{min(s + CHUNK, total)}/{total}", file=sys.stderr)
    finally:
        if csv_file is not None:
            csv_file.close()

    result = SweepResult(axes=list(spec.axes), evaluator=spec.evaluator,
                         columns=columns, cells=cells,
                         meta=dict(spec.options),
                         elapsed=time.monotonic() - t0)
    if out_path is not None and fmt == "json":
        write_result(result, out_path, "json", base=spec.base)
    return result


def run_rows_parallel(row_fn, items, jobs=1, payloads=None, worker=None):
    """Order-preserving map used by the phase-diagram row scans.

    With jobs > 1 a picklable ``worker(payload)`` plus ``payloads`` must be
    supplied; otherwise ``row_fn`` runs inline.
    """
    if jobs > 1 and worker is not None and payloads is not None:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(worker, payloads))
    return [row_fn(item) for item in items]


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


def _csv_header(evaluator, axes, columns):
    if evaluator == "bistability":
        names = [a.path for a in axes]
    else:
        names = [f"axis{k + 1}" for k in range(len(axes))]
    while len(names) < 2:
        names.append("axis2")
    return ",".join(names + columns)


def _csv_row(evaluator, row, columns):
    vals = [_fmt(v) for v in row.get("axis_values", ())]
    while len(vals) < 2:
        vals.append("")
    ok_statuses = ("ok", "unphysical")
    for col in columns:
        if col == "stable":
            vals.append(_fmt(row.get("stable")))
        elif row.get("status") in ok_statuses or col in ("n_roots",):
            vals.append(_fmt(row.get(col)))
        elif row.get("status") == "unstable" and col in ("Gamma1", "Gamma2",
                                                         "G12", "G21"):
            vals.append(_fmt(row.get(col)))
        else:
            vals.append("")
    return ",".join(vals)


def write_result(result: SweepResult, path, fmt="csv", base=None):
    """Serialize a sweep result; csv per the per-evaluator schema, json as a
    full reproducible mirror (spec echo included)."""
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_csv_header(result.evaluator, result.axes, result.columns)
                     + "\n")
            for row in result.cells:
                fh.write(_csv_row(result.evaluator, row, result.columns) + "\n")
        return path
    if fmt == "json":
        doc = {
            "spec": {
                "evaluator": result.evaluator,
                "axes": [asdict(a) for a in result.axes],
                "options": _jsonable(result.meta),
            },
            "columns": result.columns,
            "cells": [_jsonable(row) for row in result.cells],
        }
        if base is not None:
            doc["spec"]["base_params"] = base.to_dict()
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, default=_json_default)
        os.replace(tmp, path)
        return path
    raise ValidationError("format", f"unknown format {fmt!r}")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
