"""Plot manifest loading and schema validation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = {
    "ecdf": ("report",),
    "taylor": ("report",),
    "laplacian": ("matrix_csv", "header_json"),
    "swarm": ("swarm_csv",),
}


class SchemaMismatch(Exception):
    """Raised with the dotted path of the offending manifest/artifact field."""


@dataclass
class PlotManifest:
    kind: str
    inputs: dict[str, Path]
    output_png: Path
    output_svg: Path
    style: dict = field(default_factory=dict)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaMismatch(f"{where}.{key}: missing")
    return obj[key]


def load_manifest(path) -> PlotManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"manifest: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise SchemaMismatch("manifest: expected a JSON object")
    kind = _require(raw, "kind", "manifest")
    if kind not in KINDS:
        raise SchemaMismatch(f"manifest.kind: unknown figure kind {kind!r}")
    inputs_raw = _require(raw, "inputs", "manifest")
    base = path.parent
    inputs = {}
    for key in KINDS[kind]:
        rel = _require(inputs_raw, key, "manifest.inputs")
        resolved = base / rel
        if not resolved.exists():
            raise SchemaMismatch(f"manifest.inputs.{key}: {resolved} does not exist")
        inputs[key] = resolved
    output = _require(raw, "output", "manifest")
    return PlotManifest(
        kind=kind,
        inputs=inputs,
        output_png=base / _require(output, "png", "manifest.output"),
        output_svg=base / _require(output, "svg", "manifest.output"),
        style=raw.get("style", {}) or {},
    )


def load_report(path) -> dict:
    with open(path) as fh:
        report = json.load(fh)
    for key in ("ecdf", "taylor", "baseline_taylor"):
        if key not in report:
            raise SchemaMismatch(f"report.{key}: missing")
    ecdf = report["ecdf"]
    for key in ("values", "fractions"):
        if key not in ecdf:
            raise SchemaMismatch(f"report.ecdf.{key}: missing")
    if len(ecdf["values"]) != len(ecdf["fractions"]):
        raise SchemaMismatch("report.ecdf: values and fractions differ in length")
    for which in ("taylor", "baseline_taylor"):
        for key in ("normalized_std", "correlation", "centered_rmse"):
            if key not in report[which]:
                raise SchemaMismatch(f"report.{which}.{key}: missing")
    return report


def load_laplacian(matrix_csv, header_json):
    import numpy as np

    with open(header_json) as fh:
        header = json.load(fh)
    for key in ("n_nodes", "lambda_max", "scheme"):
        if key not in header:
            raise SchemaMismatch(f"header.{key}: missing")
    matrix = np.loadtxt(matrix_csv, delimiter=",", ndmin=2)
    n = int(header["n_nodes"])
    if matrix.shape != (n, n):
        raise SchemaMismatch(
            f"matrix_csv: shape {matrix.shape} does not match header.n_nodes {n}")
    return matrix, header


def load_swarm(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"config", "repeat", "scheme", "n_layers", "val_loss"}
        missing = needed - set(reader.fieldnames or ())
        if missing:
            raise SchemaMismatch(f"swarm_csv: missing column(s) {sorted(missing)}")
        for i, row in enumerate(reader):
            try:
                rows.append({"config": int(row["config"]),
                             "repeat": int(row["repeat"]),
                             "scheme": row["scheme"],
                             "n_layers": int(row["n_layers"]),
                             "val_loss": float(row["val_loss"])})
            except ValueError as exc:
                raise SchemaMismatch(f"swarm_csv: row {i + 1}: {exc}") from exc
    if not rows:
        raise SchemaMismatch("swarm_csv: no data rows")
    return rows
