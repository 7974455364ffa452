"""Field serialization: a JSON header with the flat weight list, or compact .npz."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from src.lattice.field import ConductanceField
from src.lattice.models import LatticeBox, LawKind

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _header(field: ConductanceField) -> dict:
    return {
        "format": FORMAT_VERSION,
        "d": field.box.d,
        "side": field.box.side,
        "boundary": field.box.boundary.value,
        "c_m": field.c_m,
        "law": field.law.value,
        "seed": field.seed,
        "edge_order": "axis-major: weights[a * N + x] = mu(x, x + e_a)",
    }


def _from_header(header: dict, weights: np.ndarray) -> ConductanceField:
    if header.get("format") != FORMAT_VERSION:
        raise ValueError(f"Unsupported field format: {header.get('format')}")
    box = LatticeBox(d=header["d"], side=header["side"], boundary=header["boundary"])
    return ConductanceField(
        box=box,
        weights=np.asarray(weights, dtype=float).reshape(box.d, box.n_vertices),
        c_m=float(header["c_m"]),
        law=LawKind(header["law"]),
        seed=header.get("seed"),
    )


def save_field(field: ConductanceField, path: Path | str) -> Path:
    """Write a field as JSON (``.json``) or npz (anything else)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".json":
        payload = {**_header(field), "weights": [float(w) for w in field.weights.ravel()]}
        path.write_text(json.dumps(payload))
    else:
        np.savez_compressed(path, header=json.dumps(_header(field)), weights=field.weights)
        if path.suffix != ".npz":
            path = path.with_name(path.name + ".npz")
    logger.info("Saved field to %s", path)
    return path


def load_field(path: Path | str) -> ConductanceField:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Field file not found: {path}")
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        return _from_header(payload, np.asarray(payload["weights"]))
    with np.load(path) as data:
        return _from_header(json.loads(str(data["header"])), data["weights"])
