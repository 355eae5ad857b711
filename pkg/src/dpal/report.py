"""Report persistence, schema validation and provenance.

Reports are written as canonical JSON (sorted keys, no timings, so a fixed
seed gives byte-identical files) plus a flat CSV with one row per trial.
"""

import csv
from dataclasses import dataclass, field
import hashlib
from importlib import resources
import io
import json
import math
from pathlib import Path
import platform
from typing import Any, Optional

import jsonschema
import numpy as np

from .exceptions import SchemaError

REPORT_SCHEMA = "dpal/report/v1"


def jsonable(obj):
    """Convert numpy values, tuples and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def canonical_json(obj):
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(config):
    blob = json.dumps(jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def module_versions():
    import sklearn
    from . import __version__
    return {"dpal": __version__, "numpy": np.__version__, "scikit-learn": sklearn.__version__,
            "python": platform.python_version()}


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    seed: Optional[int]
    summary: dict
    assertions: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    @property
    def passed(self):
        return all(self.assertions.values())

    def to_json(self):
        return {"schema": REPORT_SCHEMA, "experiment": self.experiment, "seed": self.seed,
                "config": self.config, "config_hash": config_hash(self.config),
                "versions": module_versions(), "passed": self.passed,
                "assertions": {k: bool(v) for k, v in self.assertions.items()},
                "summary": self.summary}


def records_csv(records):
    """Flat CSV with the union of record keys as header (first-seen order)."""
    keys: list = []
    for r in records:
        for k in r:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: jsonable(v) for k, v in r.items()})
    return buf.getvalue()


def write_report(report: ExperimentReport, output_dir, stem=None):
    """Write ``<stem>.json`` and ``<stem>.csv``; returns both paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or report.experiment
    doc = jsonable(report.to_json())
    validate(doc, "report")
    jpath, cpath = out / f"{stem}.json", out / f"{stem}.csv"
    jpath.write_text(canonical_json(doc))
    cpath.write_text(records_csv(report.records))
    return jpath, cpath


def load_schema(name):
    text = resources.files("dpal").joinpath("schemas", f"{name}.v1.json").read_text()
    return json.loads(text)


def validate(obj, schema_name):
    """Raise :class:`SchemaError` listing every violation of ``schema_name``."""
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    problems = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
                for e in sorted(validator.iter_errors(obj), key=lambda e: list(map(str, e.path)))]
    if problems:
        raise SchemaError(f"{schema_name} does not match schema v1", problems)
    return obj


def parse_json_bytes(data: bytes, source="<input>"):
    """Parse JSON, reporting the byte offset of the first syntax error."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise SchemaError(f"{source}: not UTF-8", [f"byte {e.start}: invalid UTF-8"],
                          byte_offset=e.start)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        offset = len(text[:e.pos].encode("utf-8"))
        raise SchemaError(f"{source}: invalid JSON at byte {offset}",
                          [f"byte {offset}: {e.msg}"], byte_offset=offset)


def load_json(path, schema_name=None) -> Any:
    path = Path(path)
    obj = parse_json_bytes(path.read_bytes(), str(path))
    if schema_name is not None:
        try:
            validate(obj, schema_name)
        except SchemaError as e:
            raise SchemaError(f"{path}: {e}", e.problems)
    return obj


def marginal_answers_csv(patterns, counts):
    """``pattern,count`` lines, one per conjunction."""
    return "".join(f"{p},{jsonable(c)}\n" for p, c in zip(patterns, counts))
