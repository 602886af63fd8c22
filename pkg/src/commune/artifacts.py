"""CSV/JSON artifacts exchanged between pipeline stages."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .cluster import Partition
from .errors import ParseError
from .pse import EmbeddingMatrix


def write_embeddings_csv(emb: EmbeddingMatrix, path):
    if emb.node_ids is None:
        raise ValueError("embedding has no node ids to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["geoid"] + [f"dim_{j}" for j in range(emb.d)])
        for geoid, row in zip(emb.node_ids, emb.values):
            w.writerow([geoid] + [repr(float(x)) for x in row])


def read_embeddings_csv(path) -> EmbeddingMatrix:
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "geoid" or len(header) < 2:
            raise ParseError("embeddings file needs a 'geoid' column followed by dimensions", 1)
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            try:
                rows.append([float(x) for x in row[1:]])
            except ValueError:
                raise ParseError("non-numeric embedding value", reader.line_num) from None
            ids.append(row[0])
    if not rows:
        raise ParseError("embeddings file has no rows", 2)
    return EmbeddingMatrix(np.asarray(rows), "csv", tuple(ids))


def write_assignments_csv(node_ids, p: Partition, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["geoid", "community"])
        for geoid, c in zip(node_ids, p.labels):
            w.writerow([geoid, int(c)])


def read_assignments_csv(path) -> dict[str, int]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or [h.strip() for h in header[:2]] != ["geoid", "community"]:
            raise ParseError("assignments file needs columns geoid,community", 1)
        for row in reader:
            if not row:
                continue
            try:
                out[row[0].strip()] = int(row[1])
            except (ValueError, IndexError):
                raise ParseError("malformed assignment row", reader.line_num) from None
    return out


def partition_for(node_ids, assignments: dict[str, int]) -> Partition:
    missing = [g for g in node_ids if g not in assignments]
    if missing:
        raise ParseError(f"{len(missing)} graph nodes have no community, e.g. {missing[0]}")
    return Partition.from_labels([assignments[g] for g in node_ids])


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


GEOID_KEYS = ("GEOID", "geoid", "GEOID10", "GEOID20", "GEOID_TRACT")


def inject_communities_geojson(src, dst, assignments: dict[str, int]) -> int:
    """Copy a tract GeoJSON, adding a ``community`` property to each feature.

    Features whose geoid is unknown get ``null``. Returns the number matched.
    """
    with open(src, encoding="utf-8") as fh:
        doc = json.load(fh)
    matched = 0
    for feat in doc.get("features", []):
        props = feat.setdefault("properties", {}) or {}
        feat["properties"] = props
        geoid = next((str(props[k]) for k in GEOID_KEYS if k in props), None)
        c = assignments.get(geoid) if geoid is not None else None
        props["community"] = c
        matched += c is not None
    with open(dst, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")
    return matched
