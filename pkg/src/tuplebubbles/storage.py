"""Model directory serialization.

Layout::

    <model_dir>/model.json     manifest: format tag, config echo, bubble list
    <model_dir>/b0000.tb ...   one file per bubble (sorted by bubble id)

A bubble file is a compact JSON header (sorted keys), a newline, then the
raw little-endian array payload; the header records dtype/offset/length for
every array.  CPTs are stored as integer co-occurrence counts (dense or
coordinate form, whichever is smaller) so serialization is byte-identical
across runs and probabilities are reconstructed exactly on load.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bayesnet import AttrClasses, Bucket, ChowLiuNetwork, CompressedCPT, \
    ModelParams, TreeStructure
from .errors import ModelFormatError
from .partition import AttrIndexEntry, BloomFilter, BubbleIndex, TupleBubble
from .estimator import BubbleModel

FORMAT_TAG = "tuplebubbles-model/1"


class _ArrayWriter:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def put(self, array: np.ndarray, dtype: str) -> dict:
        data = np.ascontiguousarray(array, dtype=np.dtype(dtype)).tobytes()
        spec = {"off": self.offset, "n": int(array.size), "dt": dtype}
        self.chunks.append(data)
        self.offset += len(data)
        return spec


class _ArrayReader:
    def __init__(self, payload: bytes):
        self.payload = payload

    def get(self, spec: dict) -> np.ndarray:
        dt = np.dtype(spec["dt"])
        start = spec["off"]
        end = start + spec["n"] * dt.itemsize
        return np.frombuffer(self.payload[start:end], dtype=dt).copy()


def _classes_header(classes: AttrClasses, writer: _ArrayWriter) -> dict:
    return {
        "mcv": writer.put(classes.mcv_codes, "<i8"),
        "b_lo": writer.put(np.array([b.lo for b in classes.buckets]), "<i8"),
        "b_hi": writer.put(np.array([b.hi for b in classes.buckets]), "<i8"),
        "b_u": writer.put(np.array([b.distinct for b in classes.buckets]), "<i8"),
    }


def _classes_from_header(attr: str, header: dict, reader: _ArrayReader) -> AttrClasses:
    mcv = reader.get(header["mcv"]).astype(np.int64)
    lo = reader.get(header["b_lo"])
    hi = reader.get(header["b_hi"])
    u = reader.get(header["b_u"])
    buckets = [Bucket(i, int(lo[i]), int(hi[i]), int(u[i])) for i in range(len(lo))]
    return AttrClasses(attr, mcv, buckets)


def _counts_header(counts: np.ndarray, writer: _ArrayWriter) -> dict:
    rows, cols = np.nonzero(counts)
    nnz = len(rows)
    dense_bytes = counts.size * 4
    coo_bytes = nnz * (2 + 2 + 4)
    if coo_bytes < dense_bytes:
        return {
            "kind": "coo",
            "shape": [int(counts.shape[0]), int(counts.shape[1])],
            "rows": writer.put(rows, "<u2"),
            "cols": writer.put(cols, "<u2"),
            "vals": writer.put(counts[rows, cols], "<u4"),
        }
    return {
        "kind": "dense",
        "shape": [int(counts.shape[0]), int(counts.shape[1])],
        "vals": writer.put(counts.ravel(), "<u4"),
    }


def _counts_from_header(header: dict, reader: _ArrayReader) -> np.ndarray:
    shape = tuple(header["shape"])
    if header["kind"] == "dense":
        return reader.get(header["vals"]).astype(np.int64).reshape(shape)
    counts = np.zeros(shape, dtype=np.int64)
    rows = reader.get(header["rows"]).astype(np.int64)
    cols = reader.get(header["cols"]).astype(np.int64)
    vals = reader.get(header["vals"]).astype(np.int64)
    counts[rows, cols] = vals
    return counts


def _bubble_bytes(bubble: TupleBubble, network: ChowLiuNetwork,
                  index: BubbleIndex) -> bytes:
    writer = _ArrayWriter()
    nodes = {}
    if not network.degenerate:
        for node in network.order:
            cpt = network.cpts[node]
            nodes[node] = {
                "classes": _classes_header(cpt.child_classes, writer),
                "counts": _counts_header(cpt.counts, writer),
            }
    index_header = {}
    for col in sorted(index.entries):
        entry = index.entries[col]
        index_header[col] = {
            "min": entry.min_code, "max": entry.max_code,
            "distinct": entry.distinct,
            "m_bits": entry.filter.m_bits, "n_hashes": entry.filter.n_hashes,
            "bits": writer.put(entry.filter.bits, "u1"),
        }
    header = {
        "id": bubble.id,
        "relations": list(bubble.relations),
        "n_rows": bubble.n_rows,
        "source": bubble.source,
        "attr_map": sorted([rel, attr, col]
                           for (rel, attr), col in bubble.attr_map.items()),
        "network": {
            "degenerate": network.degenerate,
            "n_rows": network.n_rows,
            "root": None if network.degenerate else network.root,
            "parents": {} if network.degenerate else dict(network.structure.parents),
            "order": [] if network.degenerate else list(network.order),
            "nodes": nodes,
        },
        "params": {"k_mcv": network.params.k_mcv,
                   "buckets": network.params.buckets,
                   "samples": network.params.samples},
        "index": index_header,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return head + b"\n" + b"".join(writer.chunks)


def _bubble_from_bytes(data: bytes) -> tuple[TupleBubble, ChowLiuNetwork, BubbleIndex]:
    newline = data.index(b"\n")
    header = json.loads(data[:newline].decode())
    reader = _ArrayReader(data[newline + 1:])

    attr_map = {(rel, attr): col for rel, attr, col in header["attr_map"]}
    bubble = TupleBubble(
        id=header["id"],
        relations=tuple(header["relations"]),
        n_rows=header["n_rows"],
        table=None,
        source=header["source"],
        attr_map=attr_map,
    )

    params = ModelParams(**header["params"])
    net_h = header["network"]
    if net_h["degenerate"]:
        network = ChowLiuNetwork(bubble.id, net_h["n_rows"], None, {}, params)
    else:
        classes = {node: _classes_from_header(node, spec["classes"], reader)
                   for node, spec in net_h["nodes"].items()}
        cpts = {}
        for node, spec in net_h["nodes"].items():
            parent = net_h["parents"][node]
            cpts[node] = CompressedCPT(
                child=node, parent=parent,
                child_classes=classes[node],
                parent_classes=classes[parent] if parent is not None else None,
                counts=_counts_from_header(spec["counts"], reader))
        structure = TreeStructure(net_h["root"], dict(net_h["parents"]),
                                  list(net_h["order"]))
        network = ChowLiuNetwork(bubble.id, net_h["n_rows"], structure, cpts, params)

    entries = {}
    for col, spec in header["index"].items():
        bits = reader.get(spec["bits"]).astype(np.uint8)
        entries[col] = AttrIndexEntry(
            min_code=spec["min"], max_code=spec["max"], distinct=spec["distinct"],
            filter=BloomFilter(spec["m_bits"], spec["n_hashes"], bits))
    return bubble, network, BubbleIndex(entries)


def save_model(model: BubbleModel, path: str | Path, config_echo: dict) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    ordered = sorted(model.bubbles, key=lambda b: b.id)
    manifest_bubbles = []
    for i, bubble in enumerate(ordered):
        filename = f"b{i:04d}.tb"
        data = _bubble_bytes(bubble, model.networks[bubble.id],
                             model.indexes[bubble.id])
        (path / filename).write_bytes(data)
        manifest_bubbles.append({"id": bubble.id, "file": filename,
                                 "n_rows": bubble.n_rows,
                                 "relations": list(bubble.relations)})
    manifest = {
        "format": FORMAT_TAG,
        "config": config_echo,
        "bubbles": manifest_bubbles,
    }
    (path / "model.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    manifest_path = path / "model.json"
    if not manifest_path.exists():
        raise ModelFormatError(f"no model manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT_TAG:
        raise ModelFormatError(
            f"model format {manifest.get('format')!r} does not match the "
            f"supported {FORMAT_TAG!r}; rebuild the model")
    return manifest


def load_model(path: str | Path, catalog) -> BubbleModel:
    """Load bubbles, networks, and indexes; the catalog is supplied by the
    caller because dictionaries live with the raw data, not the model."""
    path = Path(path)
    manifest = read_manifest(path)
    bubbles = []
    networks = {}
    indexes = {}
    for entry in manifest["bubbles"]:
        data = (path / entry["file"]).read_bytes()
        bubble, network, index = _bubble_from_bytes(data)
        bubbles.append(bubble)
        networks[bubble.id] = network
        indexes[bubble.id] = index
    return BubbleModel(catalog=catalog, bubbles=bubbles, networks=networks,
                       indexes=indexes)


def model_bytes(path: str | Path) -> int:
    path = Path(path)
    return sum(f.stat().st_size for f in path.glob("*") if f.is_file())
