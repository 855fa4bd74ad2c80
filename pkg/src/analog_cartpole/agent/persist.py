"""Brain files: versioned JSON text that round-trips every float exactly.

Layout (top-level keys, in order)::

    format          "analog-cartpole-brain"
    version         integer, currently 1
    hyperparams     {name: value} for every Hyperparams field
    episodes_trained
    features        {seed, per_width, widths[k], weights[m][4], offsets[m]}
    regressors      [{alpha, alpha_decay, normalized, fit_intercept,
                      t, intercept, weights[m]}, ...]   one per action
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .features import STATE_DIM, FeatureMap
from .qlearning import ACTIONS, FORMAT_VERSION, Brain, Hyperparams
from .regressor import OnlineRegressor

FORMAT_NAME = "analog-cartpole-brain"


class BrainFormatError(ValueError):
    """A brain file is corrupt, truncated or of an unsupported version."""


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a).ravel()]


def brain_to_dict(brain: Brain) -> dict:
    fm = brain.features
    return {
        "format": FORMAT_NAME,
        "version": brain.format_version,
        "hyperparams": {name: getattr(brain.hyper, name)
                        for name in Hyperparams.field_names()},
        "episodes_trained": brain.episodes_trained,
        "features": {
            "seed": fm.seed,
            "per_width": fm.per_width,
            "widths": _floats(fm.widths),
            "weights": [_floats(row) for row in fm.weights],
            "offsets": _floats(fm.offsets),
        },
        "regressors": [
            {"alpha": r.alpha, "alpha_decay": r.alpha_decay, "normalized": r.normalized,
             "fit_intercept": r.fit_intercept, "t": r.t, "intercept": r.intercept,
             "weights": _floats(r.weights)}
            for r in brain.regressors
        ],
    }


def brain_from_dict(doc: dict) -> Brain:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise BrainFormatError("not a brain file")
    if doc.get("version") != FORMAT_VERSION:
        raise BrainFormatError(f"unsupported brain version {doc.get('version')!r}"
                               f" (expected {FORMAT_VERSION})")
    try:
        hyper = Hyperparams(**doc["hyperparams"])
        f = doc["features"]
        weights = np.array(f["weights"], dtype=float)
        offsets = np.array(f["offsets"], dtype=float)
        widths = np.array(f["widths"], dtype=float)
        per_width = int(f["per_width"])
        if weights.shape != (len(offsets), STATE_DIM) or \
                len(offsets) != per_width * len(widths):
            raise BrainFormatError("feature map arrays have inconsistent shapes")
        fmap = FeatureMap(widths, weights, offsets, per_width, f["seed"])
        regs = []
        for r in doc["regressors"]:
            reg = OnlineRegressor(fmap.dim, float(r["alpha"]), float(r["alpha_decay"]),
                                  bool(r["normalized"]), bool(r["fit_intercept"]),
                                  np.array(r["weights"], dtype=float),
                                  float(r["intercept"]), int(r["t"]))
            regs.append(reg)
        if len(regs) != len(ACTIONS):
            raise BrainFormatError(f"expected {len(ACTIONS)} regressors, got {len(regs)}")
        for arr in (weights, offsets, widths, *(r.weights for r in regs)):
            if not np.all(np.isfinite(arr)):
                raise BrainFormatError("non-finite numbers in brain file")
        if not all(math.isfinite(r.intercept) for r in regs):
            raise BrainFormatError("non-finite intercept in brain file")
        return Brain(fmap, regs, hyper, int(doc["episodes_trained"]), doc["version"])
    except BrainFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BrainFormatError(f"malformed brain file: {exc}") from exc


def save_brain(brain: Brain, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="ascii") as fh:
        json.dump(brain_to_dict(brain), fh)
        fh.write("\n")
    os.replace(tmp, path)


def load_brain(path) -> Brain:
    try:
        with open(path, encoding="ascii") as fh:
            doc = json.load(fh)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BrainFormatError(f"{path}: unreadable brain file: {exc}") from exc
    return brain_from_dict(doc)
