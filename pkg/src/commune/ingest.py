"""Readers and writers for origin-destination flows, income tables and run configuration."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import IO, Iterable, NamedTuple

from .errors import CommuneError, ParseError
from .graph import sorted_node_ids

logger = logging.getLogger(__name__)

TRACT_GEOID_LENGTH = 11
METHODS = ("gnn", "vnn", "le", "rw", "svd")

# ACS null codes for suppressed / unavailable estimates
CENSUS_SENTINELS = frozenset(
    {-666666666, -999999999, -888888888, -555555555, -333333333, -222222222}
)


class ODRecord(NamedTuple):
    origin_geoid: str
    dest_geoid: str
    flow: float


@dataclass
class IncomeTable:
    """Median household income per tract; ``missing`` lists tracts with no usable value."""

    values: dict[str, float] = field(default_factory=dict)
    missing: set[str] = field(default_factory=set)

    def get(self, geoid):
        return self.values.get(geoid)

    def __len__(self):
        return len(self.values) + len(self.missing)

    def __contains__(self, geoid):
        return geoid in self.values


@dataclass
class CityConfig:
    city_name: str = "city"
    k: int = 3
    embed_dim: int = 16
    epochs: int = 500
    learning_rate: float = 0.01
    seed: int = 0
    method: str = "gnn"
    restarts: int = 10
    bins: int = 20
    od_path: str | None = None
    income_path: str | None = None
    geojson_path: str | None = None
    origin_col: str = "h_geocode"
    dest_col: str = "w_geocode"
    flow_col: str = "S000"
    geoid_length: int = TRACT_GEOID_LENGTH
    compare_optimizer: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if int(self.k) < 2:
            raise CommuneError(f"k must be >= 2, got {self.k}")
        if int(self.embed_dim) < 2:
            raise CommuneError(f"embed_dim must be >= 2, got {self.embed_dim}")
        if int(self.epochs) < 1:
            raise CommuneError(f"epochs must be >= 1, got {self.epochs}")
        if not float(self.learning_rate) > 0:
            raise CommuneError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.method not in METHODS:
            raise CommuneError(f"method must be one of {METHODS}, got {self.method!r}")
        if int(self.restarts) < 1:
            raise CommuneError("restarts must be >= 1")
        if int(self.bins) < 2:
            raise CommuneError("bins must be >= 2")
        if not -(2**63) <= int(self.seed) < 2**64:
            raise CommuneError("seed must fit in 64 bits")

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "CityConfig":
        known = {f.name for f in fields(cls)}
        merged = dict(data)
        # accept the short spelling used on the command line
        if "d" in merged and "embed_dim" not in merged:
            merged["embed_dim"] = merged.pop("d")
        merged.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(merged) - known
        if unknown:
            raise CommuneError(f"unknown config keys: {sorted(unknown)}")
        return cls(**merged)

    @classmethod
    def load(cls, path, **overrides) -> "CityConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON config: {exc.msg}", exc.lineno) from exc
        if not isinstance(data, dict):
            raise CommuneError("config file must hold a JSON object")
        cfg = cls.from_dict(data, **overrides)
        base = Path(path).parent
        for attr in ("od_path", "income_path", "geojson_path"):
            value = getattr(cfg, attr)
            if value and not Path(value).is_absolute():
                setattr(cfg, attr, str(base / value))
        return cfg

    def to_dict(self):
        return asdict(self)


def _open_text(stream):
    if isinstance(stream, (str, Path)):
        return open(stream, newline="", encoding="utf-8"), True
    return stream, False


def parse_od_csv(
    stream: IO[str] | str | Path,
    geoid_length: int = TRACT_GEOID_LENGTH,
    origin_col: str = "h_geocode",
    dest_col: str = "w_geocode",
    flow_col: str = "S000",
) -> list[ODRecord]:
    """Read an O-D file, truncate geocodes to ``geoid_length`` and sum duplicate pairs.

    Block-level LODES geocodes (15 digits) collapse onto their tract prefix.
    Records come back sorted by ``(origin, dest)``.
    """
    fh, close = _open_text(stream)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty O-D file, no header row", 1)
        header = [h.strip() for h in header]
        try:
            io_, id_, if_ = header.index(origin_col), header.index(dest_col), header.index(flow_col)
        except ValueError:
            missing = [c for c in (origin_col, dest_col, flow_col) if c not in header]
            raise ParseError(f"missing column(s) {missing}; header is {header}", 1) from None

        agg: dict[tuple[str, str], float] = {}
        width = max(io_, id_, if_)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= width:
                raise ParseError(f"expected at least {width + 1} fields, got {len(row)}", line)
            o, d, raw = row[io_].strip(), row[id_].strip(), row[if_].strip()
            for g in (o, d):
                if len(g) < geoid_length:
                    raise ParseError(f"geoid {g!r} shorter than {geoid_length} characters", line)
            try:
                flow = float(raw)
            except ValueError:
                raise ParseError(f"non-numeric flow {raw!r}", line) from None
            if not math.isfinite(flow) or flow < 0:
                raise ParseError(f"flow must be a non-negative number, got {raw!r}", line)
            key = (o[:geoid_length], d[:geoid_length])
            agg[key] = agg.get(key, 0.0) + flow
    finally:
        if close:
            fh.close()
    return [ODRecord(o, d, f) for (o, d), f in sorted(agg.items())]


def write_od_csv(records: Iterable, stream, origin_col="h_geocode", dest_col="w_geocode", flow_col="S000"):
    fh, close = _open_text_w(stream)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([origin_col, dest_col, flow_col])
        for o, d, f in records:
            w.writerow([o, d, repr(float(f))])
    finally:
        if close:
            fh.close()


def _open_text_w(stream):
    if isinstance(stream, (str, Path)):
        return open(stream, "w", newline="", encoding="utf-8"), True
    return stream, False


def parse_income_csv(stream, geoid_col="geoid", income_col="median_household_income") -> IncomeTable:
    """Read tract incomes; empty cells, non-positive values and census null codes become missing."""
    fh, close = _open_text(stream)
    table = IncomeTable()
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            logger.warning("income file is empty; returning an empty table")
            return table
        header = [h.strip() for h in header]
        try:
            ig, ii = header.index(geoid_col), header.index(income_col)
        except ValueError:
            raise ParseError(f"income file needs columns {geoid_col!r} and {income_col!r}", 1) from None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            geoid, raw = row[ig].strip(), row[ii].strip()
            if not geoid:
                raise ParseError("empty geoid", line)
            if raw == "" or raw.upper() in {"NA", "N/A", "NAN", "NULL", "-"}:
                table.missing.add(geoid)
                continue
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(f"non-numeric income {raw!r}", line) from None
            if not math.isfinite(value) or value <= 0 or value in CENSUS_SENTINELS:
                table.missing.add(geoid)
                table.values.pop(geoid, None)
                continue
            table.values[geoid] = value
            table.missing.discard(geoid)
    finally:
        if close:
            fh.close()
    if not len(table):
        logger.warning("income file has no data rows")
    return table


def write_income_csv(table: IncomeTable, stream):
    fh, close = _open_text_w(stream)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["geoid", "median_household_income"])
        for g in sorted(set(table.values) | table.missing):
            v = table.values.get(g)
            w.writerow([g, "" if v is None else repr(v)])
    finally:
        if close:
            fh.close()


def build_tract_index(records) -> dict[str, int]:
    """Map each geoid that appears in ``records`` to its position in sorted order."""
    records = list(records)
    if not records:
        raise CommuneError("cannot index an empty record list")
    return {g: i for i, g in enumerate(sorted_node_ids((r[0], r[1]) for r in records))}
