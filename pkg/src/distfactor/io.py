"""File formats: counts tables, adjacency, tree files, draws directories.

Counts file
    Delimited text (tab, or comma for ``.csv``).  Header: a location column
    name followed by category labels; each row: location id then integer
    counts.

Adjacency file
    Either an edge list, one ``id_i id_j`` pair per line using location ids
    from the counts file (symmetric closure applied), or a dense M x M
    whitespace-separated matrix in counts-file row order.  ``#`` starts a
    comment.  Rows are normalized on load.

Draws directory
    ``manifest.json`` plus one file per parameter.  Text files hold one
    retained draw per line, the parameter flattened in C order, values
    written with 17 significant digits (exact round trip); binary files are
    ``.npy``.  Shapes are recorded in the manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .dpm import DpmDraws
from .embedding import CountMatrix
from .model import PosteriorDraws, SpatialWeights
from .tree import CategorySpace, PartitionTree, parse_tree, serialize_tree

FLOAT_FMT = "%.17g"


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _delimiter(path) -> str:
    return "," if str(path).lower().endswith(".csv") else "\t"


def read_counts(path) -> CountMatrix:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=_delimiter(path)) if r and not r[0].startswith("#")]
    if len(rows) < 2:
        raise ValueError(f"{path}: counts file needs a header and at least one row")
    header = [h.strip() for h in rows[0]]
    labels = header[1:]
    locs, data = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        locs.append(row[0].strip())
        try:
            data.append([int(x) for x in row[1:]])
        except ValueError as err:
            raise ValueError(f"{path}:{lineno}: non-integer count ({err})") from None
    return CountMatrix(np.array(data, dtype=np.int64).reshape(len(locs), len(labels)), tuple(locs), tuple(labels))


def write_counts(path, counts: CountMatrix, location_header: str = "location") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=_delimiter(path), lineterminator="\n")
        w.writerow([location_header, *counts.labels])
        for loc, row in zip(counts.locations, counts.counts):
            w.writerow([loc, *map(int, row)])


def space_from_counts(counts: CountMatrix) -> CategorySpace:
    return CategorySpace.from_labels(counts.labels)


def read_tree(path, space: CategorySpace) -> PartitionTree:
    return parse_tree(Path(path).read_text(encoding="utf-8"), space)


def write_tree(path, tree: PartitionTree) -> None:
    Path(path).write_text(serialize_tree(tree), encoding="utf-8")


def read_adjacency(path, locations) -> SpatialWeights:
    lines = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    n = len(locations)
    if _is_dense(lines, locations):
        return SpatialWeights.from_adjacency(np.array([[float(x) for x in ln] for ln in lines]))
    index = {loc: i for i, loc in enumerate(locations)}
    edges = []
    for ln in lines:
        if len(ln) != 2:
            raise ValueError(f"{path}: edge lines need exactly two location ids")
        try:
            edges.append((index[ln[0]], index[ln[1]]))
        except KeyError as err:
            raise ValueError(f"{path}: unknown location id {err.args[0]!r}") from None
    return SpatialWeights.from_edges(edges, n)


def _is_dense(lines, locations) -> bool:
    n = len(locations)
    if len(lines) != n or any(len(ln) != n for ln in lines) or not _all_numeric(lines):
        return False
    # with two numeric location ids both readings parse; prefer the edge list
    return not (n == 2 and all(tok in set(locations) for ln in lines for tok in ln))


def _all_numeric(lines) -> bool:
    try:
        [float(x) for ln in lines for x in ln]
    except ValueError:
        return False
    return True


def write_edges(path, W: SpatialWeights, locations) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for i, j in zip(*np.nonzero(np.triu(W.W + W.W.T))):
            fh.write(f"{locations[i]} {locations[j]}\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _save_array(directory: Path, name: str, arr: np.ndarray, binary: bool) -> str:
    if binary:
        fname = f"{name}.npy"
        np.save(directory / fname, np.ascontiguousarray(arr))
    else:
        fname = f"{name}.tsv"
        flat = np.asarray(arr, dtype=float).reshape(arr.shape[0], -1)
        np.savetxt(directory / fname, flat, fmt=FLOAT_FMT, delimiter="\t")
    return fname


def _load_array(directory: Path, entry: dict) -> np.ndarray:
    path = directory / entry["file"]
    shape = tuple(entry["shape"])
    if path.suffix == ".npy":
        return np.load(path)
    arr = np.loadtxt(path, delimiter="\t", ndmin=2)
    return arr.reshape(shape).astype(entry.get("dtype", "float64"))


def write_draws(directory, draws, extra: dict | None = None, binary: bool = False) -> None:
    """Persist factor-model or DPM draws with a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    if isinstance(draws, DpmDraws):
        arrays = {"labels": draws.labels, "alpha": draws.alpha[:, None]}
        model = "dpm"
    else:
        arrays = {n: getattr(draws, n) for n in PosteriorDraws.PARAMETERS if getattr(draws, n) is not None}
        model = "factor"
    for name, arr in arrays.items():
        fname = _save_array(directory, name, arr, binary)
        files[name] = {"file": fname, "shape": list(arr.shape), "dtype": str(arr.dtype)}
    manifest = {
        "format": "distfactor-draws/1",
        "version": __version__,
        "model": model,
        "draws": len(draws),
        "files": files,
        "metadata": draws.metadata,
    }
    if model == "dpm":
        manifest["eta"] = draws.eta
    if extra:
        manifest.update(extra)
    write_json(directory / "manifest.json", manifest)


def read_manifest(directory) -> dict:
    return read_json(Path(directory) / "manifest.json")


def read_draws(directory):
    directory = Path(directory)
    manifest = read_manifest(directory)
    arrays = {name: _load_array(directory, entry) for name, entry in manifest["files"].items()}
    if manifest["model"] == "dpm":
        return DpmDraws(arrays["labels"].astype(np.int64), arrays["alpha"][:, 0], manifest["eta"], manifest["metadata"])
    return PosteriorDraws(
        **{n: arrays.get(n) for n in PosteriorDraws.PARAMETERS}, metadata=manifest["metadata"]
    )


def write_table(path, header, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)
