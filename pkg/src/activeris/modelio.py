"""Text serialization of :class:`~activeris.saa.LiftedModel`.

Two formats:

``ir``
    Self-describing line format, versioned and exactly invertible. Layout::

        activeris-ir 1
        meta <json object, sorted keys>
        dims <n_vars> <n_rows> <nnz>
        var <j> <name> <B|C> <lower> <upper>          (one per variable)
        row <i> <name> <lo> <hi> <k> <col>:<val> ...  (one per row)
        soc rotated <g_index> <t_index>
        end

    Numbers are Python ``repr`` floats (``inf``/``-inf`` for open bounds), so
    reading and writing again reproduces the file byte for byte.

``cbf``
    Conic Benchmark Format version 3 for external mixed-integer conic
    solvers. Every model row and finite variable bound becomes an ``L+``
    entry, two-sided equalities become ``L=``, and ``t >= g^2`` is the rotated
    cone ``(t, 1/2, g)``, i.e. ``2 t (1/2) >= g^2``. The objective is zero.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from activeris.saa import LiftedModel, VariableLayout

IR_MAGIC = "activeris-ir"
IR_VERSION = 1
FORMATS = ("ir", "cbf")


def _num(x: float) -> str:
    return repr(float(x))


def model_to_ir(model: LiftedModel) -> str:
    A = model.A.tocsr()
    A.sort_indices()
    lines = [f"{IR_MAGIC} {IR_VERSION}"]
    meta = dict(model.meta)
    meta["pairs"] = [[int(i), int(j)] for i, j in model.layout.pairs]
    lines.append("meta " + json.dumps(meta, sort_keys=True, separators=(",", ":")))
    lines.append(f"dims {len(model.names)} {A.shape[0]} {A.nnz}")
    for j, name in enumerate(model.names):
        kind = "B" if model.integer[j] else "C"
        lines.append(f"var {j} {name} {kind} {_num(model.lower[j])} {_num(model.upper[j])}")
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        terms = " ".join(f"{int(c)}:{_num(v)}" for c, v in zip(A.indices[lo:hi], A.data[lo:hi]))
        head = f"row {i} {model.row_names[i]} {_num(model.row_lo[i])} {_num(model.row_hi[i])} {hi - lo}"
        lines.append(f"{head} {terms}" if terms else head)
    lines.append(f"soc rotated {model.soc[0]} {model.soc[1]}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def model_from_ir(text: str) -> LiftedModel:
    lines = text.splitlines()
    if not lines or lines[0].split() != [IR_MAGIC, str(IR_VERSION)]:
        raise ValueError(f"not an {IR_MAGIC} version {IR_VERSION} file")
    it = iter(lines[1:])

    def expect(tag: str) -> list[str]:
        line = next(it, None)
        if line is None:
            raise ValueError(f"unexpected end of file, wanted {tag!r}")
        parts = line.split(" ")
        if parts[0] != tag:
            raise ValueError(f"expected {tag!r} line, got {line[:40]!r}")
        return parts

    meta_line = next(it, "")
    if not meta_line.startswith("meta "):
        raise ValueError("missing meta line")
    meta = json.loads(meta_line[5:])
    pairs = np.array(meta.pop("pairs"), dtype=np.int64).reshape(-1, 2)
    _, n, m, nnz = expect("dims")
    n, m, nnz = int(n), int(m), int(nnz)

    names, lower, upper, integer = [], np.empty(n), np.empty(n), np.zeros(n, dtype=bool)
    for j in range(n):
        _, idx, name, kind, lo, hi = expect("var")
        if int(idx) != j:
            raise ValueError(f"variable index {idx} out of order")
        names.append(name)
        integer[j] = kind == "B"
        lower[j], upper[j] = float(lo), float(hi)

    indptr = np.zeros(m + 1, dtype=np.int64)
    indices, data = [], []
    row_names, row_lo, row_hi = [], np.empty(m), np.empty(m)
    for i in range(m):
        parts = expect("row")
        if int(parts[1]) != i:
            raise ValueError(f"row index {parts[1]} out of order")
        row_names.append(parts[2])
        row_lo[i], row_hi[i] = float(parts[3]), float(parts[4])
        k = int(parts[5])
        terms = parts[6:]
        if len(terms) != k:
            raise ValueError(f"row {i}: declared {k} terms, found {len(terms)}")
        for t in terms:
            c, v = t.split(":")
            indices.append(int(c))
            data.append(float(v))
        indptr[i + 1] = indptr[i] + k
    if indptr[-1] != nnz:
        raise ValueError("nonzero count mismatch")
    _, kind, g_idx, t_idx = expect("soc")
    if kind != "rotated":
        raise ValueError(f"unsupported cone {kind!r}")
    expect("end")

    A = sp.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), indptr), shape=(m, n)
    )
    layout = VariableLayout(int(meta["N"]), int(meta["S"]), pairs)
    if layout.n != n:
        raise ValueError("variable count does not match the layout")
    return LiftedModel(
        layout=layout,
        names=names,
        lower=lower,
        upper=upper,
        integer=integer,
        A=A,
        row_lo=row_lo,
        row_hi=row_hi,
        row_names=row_names,
        soc=(int(g_idx), int(t_idx)),
        meta=meta,
    )


def model_to_cbf(model: LiftedModel) -> str:
    """Conic Benchmark Format v3 text of the feasibility model."""
    A = model.A.tocsr()
    A.sort_indices()
    n, m = len(model.names), A.shape[0]
    eq = np.isfinite(model.row_lo) & (model.row_lo == model.row_hi)

    acoord: list[tuple[int, int, float]] = []
    bcoord: list[tuple[int, float]] = []
    r = 0

    def add_row(i: int, sign: float, const: float) -> None:
        nonlocal r
        lo, hi = A.indptr[i], A.indptr[i + 1]
        for c, v in zip(A.indices[lo:hi], A.data[lo:hi]):
            acoord.append((r, int(c), sign * float(v)))
        if const != 0.0:
            bcoord.append((r, const))
        r += 1

    # linear rows as  a x - lo >= 0  and  hi - a x >= 0
    for i in range(m):
        if eq[i]:
            continue
        if math.isfinite(model.row_lo[i]):
            add_row(i, 1.0, -float(model.row_lo[i]))
        if math.isfinite(model.row_hi[i]):
            add_row(i, -1.0, float(model.row_hi[i]))
    n_rows_lp = r
    # variable bounds
    for j in range(n):
        if math.isfinite(model.lower[j]):
            acoord.append((r, j, 1.0))
            if model.lower[j] != 0.0:
                bcoord.append((r, -float(model.lower[j])))
            r += 1
        if math.isfinite(model.upper[j]):
            acoord.append((r, j, -1.0))
            bcoord.append((r, float(model.upper[j])))
            r += 1
    n_lplus = r
    for i in np.flatnonzero(eq):
        add_row(int(i), 1.0, -float(model.row_lo[i]))
    n_eq = r - n_lplus
    g_idx, t_idx = model.soc
    acoord.append((r, t_idx, 1.0))
    bcoord.append((r + 1, 0.5))
    acoord.append((r + 2, g_idx, 1.0))
    r += 3

    cones = [("L+", n_lplus)]
    if n_eq:
        cones.append(("L=", n_eq))
    cones.append(("QR", 3))

    out = ["# activeris feasibility model", f"# tau={_num(model.meta['tau'])} kappa={model.meta['kappa']}"]
    out += [f"# linear rows {n_rows_lp}, bound rows {n_lplus - n_rows_lp}, equalities {n_eq}", ""]
    out += ["VER", "3", "", "OBJSENSE", "MIN", ""]
    out += ["VAR", f"{n} 1", f"F {n}", ""]
    ints = np.flatnonzero(model.integer)
    out += ["INT", str(ints.size)] + [str(int(j)) for j in ints] + [""]
    out += ["CON", f"{r} {len(cones)}"] + [f"{k} {c}" for k, c in cones] + [""]
    out += ["ACOORD", str(len(acoord))] + [f"{i} {j} {_num(v)}" for i, j, v in acoord] + [""]
    out += ["BCOORD", str(len(bcoord))] + [f"{i} {_num(v)}" for i, v in bcoord]
    return "\n".join(out) + "\n"


def export_model(model: LiftedModel, fmt: str = "ir") -> str:
    if fmt == "ir":
        return model_to_ir(model)
    if fmt == "cbf":
        return model_to_cbf(model)
    raise ValueError(f"unsupported model format {fmt!r}; choose from {FORMATS}")


def write_model(model: LiftedModel, path: str | Path, fmt: str = "ir") -> None:
    from activeris.storage import atomic_write_text

    atomic_write_text(path, export_model(model, fmt))


def read_model(path: str | Path) -> LiftedModel:
    return model_from_ir(Path(path).read_text())
