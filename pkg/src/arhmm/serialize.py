"""Model persistence as a single JSON document.

Floats are printed with 17 significant digits so saving, loading, and
saving again reproduces the file byte for byte.  The document layout is

    {"S": ..., "pi": [...], "trans": [[...]], "emissions": [...],
     "layout": {...}, "standardization": {...} | null}

with kind-tagged emission payloads ("cartesian", "quaternion", or
"composite" wrapping one payload per layout block).
"""

from __future__ import annotations

import json

import numpy as np

from .composite import ObservationLayout, emission_from_payload
from .core import DataError, ModelParams
from .data import Standardization, format_float


def _write_json(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _write_json(value, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, value in enumerate(obj):
            if i:
                out.append(",")
            _write_json(value, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj) -> str:
    """Deterministic compact JSON with 17-significant-digit floats."""
    out: list[str] = []
    _write_json(obj, out)
    return "".join(out)


def model_to_doc(model: ModelParams) -> dict:
    std = model.standardization
    return {
        "S": int(model.n_modes),
        "pi": model.init.tolist(),
        "trans": model.trans.tolist(),
        "emissions": [dyn.to_payload() for dyn in model.emissions],
        "layout": model.layout.to_payload(),
        "standardization": None if std is None else std.to_payload(),
    }


def model_from_doc(doc: dict) -> ModelParams:
    try:
        layout = ObservationLayout.from_payload(doc["layout"])
        emissions = tuple(emission_from_payload(p, layout)
                          for p in doc["emissions"])
        std = doc.get("standardization")
        standardization = None if std is None else Standardization.from_payload(std)
        model = ModelParams(init=np.asarray(doc["pi"], dtype=float),
                            trans=np.asarray(doc["trans"], dtype=float),
                            emissions=emissions, layout=layout,
                            standardization=standardization)
    except (KeyError, TypeError, ValueError) as err:
        raise DataError(f"malformed model document: {err}") from err
    if model.n_modes != int(doc["S"]):
        raise DataError("mode count field disagrees with the parameter shapes")
    return model


def save_model(model: ModelParams, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_canonical(model_to_doc(model)))
        fh.write("\n")


def load_model(path) -> ModelParams:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise DataError(f"{path}: not valid JSON: {err}") from err
    return model_from_doc(doc)
