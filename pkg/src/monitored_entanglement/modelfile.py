"""Reading and writing model files.

A model file is TOML. Matrices are flat row-major lists of ``[re, im]``
pairs and complex scalars are two-element lists. Two layouts exist:

``kind = "monitored"``::

    H = [[0, 0], ...]            # 16 pairs
    L = [[...], [...]]           # one matrix literal per channel
    d = 2                        # channels 1..d are diffusive
    lambdas = []                 # reference rates of the counting channels
    S = [[...]]                  # optional, (4n)^2 pairs
    labels = ["W1", "W2"]
    [[v]]                        # optional breakpoints; a single table = constant
    t = 0.0
    value = [[0, 0], [0, 0]]
    [[u]]
    t = 0.0
    value = [[1, 0], [0, 0], [0, 0], [1, 0]]

``kind = "channels"``::

    H = [...]
    diffusive = [[...]]
    [[channels]]
    kraus = [[...], [...]]
    rate = 0.25
    label = "beta0"

Floats are written with full precision, so a saved model reloads to an
identical one.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ChannelModel, JumpChannel, ModelError, Model, MonitoredModel, PiecewiseConstant
from .qcore import matrix_from_literal, matrix_to_literal, vector_from_literal, vector_to_literal


def _table_to_list(table: PiecewiseConstant, matrix: bool) -> list[dict]:
    enc = matrix_to_literal if matrix else vector_to_literal
    return [dict(t=float(t), value=enc(v)) for t, v in zip(table.times, table.values)]


def _table_from_list(entries, matrix: bool, n: int):
    if entries is None:
        return None
    if isinstance(entries, dict):
        entries = [entries]
    dec = (lambda x: matrix_from_literal(x, n)) if matrix else vector_from_literal
    return [(float(e.get("t", 0.0)), dec(e["value"])) for e in entries]


def model_to_dict(model: Model) -> dict:
    if isinstance(model, MonitoredModel):
        out = dict(
            kind="monitored",
            name=model.name,
            H=matrix_to_literal(model.H),
            L=[matrix_to_literal(x) for x in model.L],
            d=model.d,
            lambdas=list(model.lambdas),
            labels=list(model.labels),
        )
        if not np.array_equal(model.S, np.eye(model.S.shape[0])):
            out["S"] = matrix_to_literal(model.S)
        out["v"] = _table_to_list(model.v, matrix=False)
        out["u"] = _table_to_list(model.u, matrix=True)
        return out
    if isinstance(model, ChannelModel):
        return dict(
            kind="channels",
            name=model.name,
            H=matrix_to_literal(model.H),
            diffusive=[matrix_to_literal(x) for x in model.diffusive],
            channels=[
                dict(kraus=[matrix_to_literal(k) for k in ch.kraus], rate=ch.rate, label=ch.label)
                for ch in model.channels
            ],
        )
    raise TypeError(f"not a model: {type(model).__name__}")


def model_from_dict(data: dict) -> Model:
    kind = data.get("kind", "monitored")
    try:
        if kind == "monitored":
            L = [matrix_from_literal(x, 4) for x in data["L"]]
            n = len(L)
            S = data.get("S")
            return MonitoredModel(
                H=matrix_from_literal(data["H"], 4),
                L=tuple(L),
                d=int(data["d"]),
                lambdas=tuple(float(x) for x in data.get("lambdas", ())),
                S=None if S is None else matrix_from_literal(S, 4 * n),
                v=_table_from_list(data.get("v"), matrix=False, n=n),
                u=_table_from_list(data.get("u"), matrix=True, n=n),
                labels=tuple(data.get("labels", ())),
                name=data.get("name", ""),
            )
        if kind == "channels":
            channels = tuple(
                JumpChannel(tuple(matrix_from_literal(k, 4) for k in ch["kraus"]), float(ch["rate"]),
                            ch.get("label", ""))
                for ch in data.get("channels", ())
            )
            return ChannelModel(
                H=matrix_from_literal(data["H"], 4),
                diffusive=tuple(matrix_from_literal(x, 4) for x in data.get("diffusive", ())),
                channels=channels,
                name=data.get("name", ""),
            )
    except KeyError as exc:
        raise ModelError(f"model file is missing the field {exc.args[0]!r}") from None
    raise ModelError(f"unknown model kind {kind!r}; expected 'monitored' or 'channels'")


def save_model(model: Model, path) -> None:
    Path(path).write_bytes(tomli_w.dumps(model_to_dict(model)).encode())


def load_model(path) -> Model:
    try:
        data = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ModelError(f"{path}: {exc}") from None
    return model_from_dict(data)
