"""File formats: snapshots, basis triplets with metadata, JSON, manifests."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .assembly import DofMap
from .cem import MultiscaleSpace
from .coeff import CoefficientField


def fmt(x) -> str:
    return f"{float(x):.17g}"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_snapshot(path, dofmap: DofMap, u, p) -> None:
    """Nodal p, u1, u2 on the full fine grid, rows top to bottom, row-major."""
    g = dofmap.grid
    fields = [dofmap.expand_p(p), *dofmap.expand_u(u)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "x", "y", "p", "u1", "u2"])
        for r, iy in enumerate(range(g.n_y, -1, -1)):
            for ix in range(g.n_x + 1):
                k = g.node_index(ix, iy)
                x, y = g.nodes[k]
                w.writerow([r, ix, fmt(x), fmt(y), *(fmt(f[k]) for f in fields)])


def read_snapshot(path, dofmap: DofMap):
    g = dofmap.grid
    p = np.zeros(g.n_nodes)
    u1, u2 = np.zeros(g.n_nodes), np.zeros(g.n_nodes)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k = g.node_index(int(row["col"]), g.n_y - int(row["row"]))
            p[k], u1[k], u2[k] = float(row["p"]), float(row["u1"]), float(row["u2"])
    inner = g.interior_nodes
    u = np.empty(2 * inner.size)
    u[0::2], u[1::2] = u1[inner], u2[inner]
    return u, p[inner]


def export_basis(stem, space: MultiscaleSpace, field_: CoefficientField, gp, J: int) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (row, col, value triplets) and ``<stem>.json`` metadata."""
    stem = Path(stem)
    csv_path, meta_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    M = space.basis.tocoo()
    order = np.lexsort((M.row, M.col))
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for r, c, v in zip(M.row[order], M.col[order], M.data[order]):
            w.writerow([int(r), int(c), fmt(v)])
    write_json(meta_path, {
        "tag": space.tag, "shape": list(space.basis.shape), "layers": space.layers, "J": J,
        "coarse_n": gp.coarse.n_x, "fine_n": gp.fine.n_x,
        "element": space.element, "local_index": space.local_index,
        "coefficient_seed": field_.seed, "coefficient_hash": field_.digest(),
    })
    return csv_path, meta_path


def import_basis(stem, field_: CoefficientField) -> MultiscaleSpace:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    if meta["coefficient_hash"] != field_.digest():
        raise ValueError("basis was built for a different coefficient field (hash mismatch)")
    data = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    rows, cols = data[:, 0].astype(int), data[:, 1].astype(int)
    basis = sp.csc_matrix((data[:, 2], (rows, cols)), shape=tuple(meta["shape"]))
    return MultiscaleSpace(basis, np.array(meta["element"]), np.array(meta["local_index"]),
                           meta["layers"], meta["tag"])
