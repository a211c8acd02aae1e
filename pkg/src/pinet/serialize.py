"""Versioned JSON documents for networks, calibration results and models.

Finite floats are written with ``repr`` (exact round trip); ``inf``, ``-inf``
and ``nan`` are written as the strings ``"inf"``, ``"-inf"`` and ``"nan"`` so
the output stays strict JSON.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .calibrate import ConformalCalibration, FixedWidthCalibration, PavSelection
from .errors import FormatError
from .net import HEAD_TAG, GaussianNetwork, Layer, PiNetwork

FORMAT_VERSION = 1

_SPECIAL = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def ext(x):
    """Encode an extended real for JSON."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def unext(v):
    if isinstance(v, str):
        try:
            return _SPECIAL[v]
        except KeyError:
            raise FormatError(f"bad extended real {v!r}") from None
    return float(v)


def dumps(doc):
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_json(doc, path):
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path, kind=None):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    check_version(doc, kind, source=path)
    return doc


def check_version(doc, kind=None, source="document"):
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        found = doc.get("format_version") if isinstance(doc, dict) else None
        raise FormatError(
            f"{source}: unsupported format_version {found!r} (expected {FORMAT_VERSION})"
        )
    if kind is not None and doc.get("kind") != kind:
        raise FormatError(f"{source}: expected a {kind!r} document, got {doc.get('kind')!r}")


def network_to_dict(net):
    if isinstance(net, PiNetwork):
        kind = "pi-network"
    elif isinstance(net, GaussianNetwork):
        kind = "gaussian-network"
    else:
        raise FormatError(f"cannot serialize {type(net).__name__}")
    meta = dict(net.meta)
    history = meta.pop("history", [])
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "head": net.head,
        "input_dim": net.d,
        "layers": [
            {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in net.layers
        ],
        "training": {**meta, "history": [ext(v) for v in history]},
    }


def network_from_dict(doc):
    check_version(doc)
    kind = doc.get("kind")
    cls = {"pi-network": PiNetwork, "gaussian-network": GaussianNetwork}.get(kind)
    if cls is None:
        raise FormatError(f"unknown network kind {kind!r}")
    if kind == "pi-network" and doc.get("head") != HEAD_TAG:
        raise FormatError(f"unknown head {doc.get('head')!r}")
    layers = [
        Layer(np.array(L["weight"], dtype=float), np.array(L["bias"], dtype=float), L["activation"])
        for L in doc["layers"]
    ]
    if layers[0].weight.shape[1] != doc["input_dim"]:
        raise FormatError("input_dim does not match the first layer")
    meta = dict(doc.get("training", {}))
    meta["history"] = [unext(v) for v in meta.get("history", [])]
    return cls(layers, meta=meta)


def save_network(net, path):
    write_json(network_to_dict(net), path)


def load_network(path):
    return network_from_dict(read_json(path))


def calibration_to_dict(cal):
    if cal is None:
        return None
    if isinstance(cal, ConformalCalibration):
        return {"method": "conf-nn", "c_hat": ext(cal.c_hat), "alpha": cal.alpha,
                "n2": cal.n2, "k": cal.k}
    if isinstance(cal, FixedWidthCalibration):
        return {"method": "conf-fw", "half_width": ext(cal.half_width), "alpha": cal.alpha,
                "n2": cal.n2, "k": cal.k}
    if isinstance(cal, PavSelection):
        return {
            "method": "pav",
            "tau_hat": cal.tau_hat,
            "alpha": cal.alpha,
            "n2": cal.n2,
            "grid": list(cal.grid),
            "coverage": [[t, cal.coverage[t]] for t in cal.grid if t in cal.coverage],
            "guarantee": cal.guarantee,
            "required_n2": cal.required_n2,
        }
    raise FormatError(f"cannot serialize calibration {type(cal).__name__}")


def calibration_from_dict(doc):
    if doc is None:
        return None
    method = doc.get("method")
    if method == "conf-nn":
        return ConformalCalibration(unext(doc["c_hat"]), doc["alpha"], doc["n2"], doc["k"])
    if method == "conf-fw":
        return FixedWidthCalibration(unext(doc["half_width"]), doc["alpha"], doc["n2"], doc["k"])
    if method == "pav":
        return PavSelection(
            doc["tau_hat"], doc["alpha"], doc["n2"], tuple(doc["grid"]),
            {t: c for t, c in doc["coverage"]}, doc.get("guarantee"), doc.get("required_n2"),
        )
    raise FormatError(f"unknown calibration method {method!r}")
