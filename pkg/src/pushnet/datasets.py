"""Dataset ingestion: raw public formats to the canonical file triple.

Canonical layout inside a dataset directory:

* ``edges.txt``    - edge list with ``N <n>`` header (see graph module)
* ``features.txt`` - sparse triplet feature file (``n d nnz`` header)
* ``labels.txt``   - ``node_id label_id`` lines

Supported raw formats: the citation-network ``.content``/``.cites`` pair
(string node ids, binary bag-of-words, string class labels) and the
compressed ``.npz`` bundle used by the co-authorship benchmarks (CSR
adjacency + CSR attributes + label vector). Nothing is downloaded; paths
are always supplied by the caller.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ParseError
from .graph import (
    Graph,
    _graph_from_edge_set,
    load_features,
    load_labels,
    read_edge_list,
    write_edge_list,
    write_features,
    write_labels,
)

__all__ = [
    "load_dataset",
    "write_canonical",
    "ingest_canonical",
    "ingest_content_cites",
    "ingest_npz",
]


def load_dataset(data_dir, dense_csv: bool = False) -> tuple[Graph, np.ndarray, np.ndarray]:
    """Read the canonical triple from a directory."""
    data_dir = Path(data_dir)
    for name in ("edges.txt", "features.txt", "labels.txt"):
        if not (data_dir / name).exists():
            raise ParseError(f"dataset directory {data_dir} is missing {name}")
    g = read_edge_list(data_dir / "edges.txt")
    x = load_features(data_dir / "features.txt", dense_csv=dense_csv)
    if x.shape[0] != g.n:
        raise DomainError(f"feature rows ({x.shape[0]}) != node count ({g.n})")
    labels = load_labels(data_dir / "labels.txt", g.n)
    return g, x, labels


def write_canonical(out_dir, g: Graph, x: np.ndarray, labels: np.ndarray) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_edge_list(out_dir / "edges.txt", g)
    write_features(out_dir / "features.txt", x)
    write_labels(out_dir / "labels.txt", labels)


def ingest_canonical(edges_path, features_path, labels_path, out_dir,
                     dense_csv: bool = False) -> tuple[int, int, int]:
    """Validate user-supplied generic files and copy them into canonical
    form; returns (n, d, c)."""
    g = read_edge_list(edges_path)
    x = load_features(features_path, dense_csv=dense_csv)
    if x.shape[0] != g.n:
        raise DomainError(f"feature rows ({x.shape[0]}) != node count ({g.n})")
    labels = load_labels(labels_path, g.n)
    write_canonical(out_dir, g, x, labels)
    return g.n, x.shape[1], int(labels.max()) + 1 if labels.size else 0


def ingest_content_cites(content_path, cites_path, out_dir) -> tuple[int, int, int]:
    """Citation-network raw pair: ``<id> <d binary features> <label>`` per
    content line, ``<id> <id>`` per citation line.

    Node ids become 0-based in content-file order; class names map to
    0..c-1 alphabetically. Citations mentioning unknown ids are skipped.
    """
    ids: dict[str, int] = {}
    rows: list[list[str]] = []
    with open(content_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens:
                continue
            if len(tokens) < 3:
                raise ParseError(f"content line {lineno}: need id, features, label")
            node_id = tokens[0]
            if node_id in ids:
                raise ParseError(f"content line {lineno}: duplicate node id {node_id!r}")
            ids[node_id] = len(ids)
            rows.append(tokens)
    if not rows:
        raise ParseError("content file holds no records")
    d = len(rows[0]) - 2
    if any(len(r) - 2 != d for r in rows):
        raise ParseError("content file: inconsistent feature width")
    n = len(rows)
    x = np.zeros((n, d), dtype=np.float64)
    class_names = sorted({r[-1] for r in rows})
    class_index = {name: i for i, name in enumerate(class_names)}
    labels = np.zeros(n, dtype=np.int64)
    for i, tokens in enumerate(rows):
        try:
            x[i] = [float(t) for t in tokens[1:-1]]
        except ValueError:
            raise ParseError(f"content record {i}: non-numeric feature value") from None
        labels[i] = class_index[tokens[-1]]

    pairs: set[tuple[int, int]] = set()
    skipped = 0
    with open(cites_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens:
                continue
            if len(tokens) != 2:
                raise ParseError(f"cites line {lineno}: expected two ids")
            a, b = tokens
            if a not in ids or b not in ids:
                skipped += 1
                continue
            u, v = ids[a], ids[b]
            if u > v:
                u, v = v, u
            pairs.add((u, v))
    g = _graph_from_edge_set(n, pairs)
    write_canonical(out_dir, g, x, labels)
    if skipped:
        import warnings
        warnings.warn(f"skipped {skipped} citation lines referencing unknown ids",
                      stacklevel=2)
    return n, d, len(class_names)


def ingest_npz(npz_path, out_dir) -> tuple[int, int, int]:
    """Co-authorship benchmark bundle: CSR adjacency (``adj_*``), CSR
    attributes (``attr_*``) and a dense ``labels`` vector."""
    with np.load(npz_path, allow_pickle=False) as bundle:
        required = ("adj_data", "adj_indices", "adj_indptr", "adj_shape",
                    "attr_data", "attr_indices", "attr_indptr", "attr_shape",
                    "labels")
        for key in required:
            if key not in bundle:
                raise ParseError(f"npz bundle is missing array {key!r}")
        adj = sp.csr_matrix(
            (bundle["adj_data"], bundle["adj_indices"], bundle["adj_indptr"]),
            shape=tuple(bundle["adj_shape"]))
        attr = sp.csr_matrix(
            (bundle["attr_data"], bundle["attr_indices"], bundle["attr_indptr"]),
            shape=tuple(bundle["attr_shape"]))
        labels = np.asarray(bundle["labels"], dtype=np.int64)

    n = adj.shape[0]
    if adj.shape[0] != adj.shape[1]:
        raise DomainError("npz adjacency is not square")
    if attr.shape[0] != n or labels.shape[0] != n:
        raise DomainError("npz arrays disagree on node count")
    coo = sp.triu(adj + adj.T, k=0).tocoo()
    pairs = {(int(min(i, j)), int(max(i, j))) for i, j in zip(coo.row, coo.col)}
    g = _graph_from_edge_set(n, pairs)
    x = np.asarray(attr.todense(), dtype=np.float64)
    write_canonical(out_dir, g, x, labels)
    return n, x.shape[1], int(labels.max()) + 1
