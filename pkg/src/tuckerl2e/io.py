"""Plain-text tensor, model and run-metadata files.

Tensor file::

    N
    I_1 I_2 ... I_N
    <value>            # prod(I_n) lines, first index fastest
    ...

The token ``nan`` (any case) marks a missing entry. Values are written with
the shortest representation that round-trips exactly.

Model file (``.model``)::

    tuckerl2e-model 1
    order N
    dims I_1 ... I_N
    rank r_1 ... r_N
    eta <eta>
    scale <s>
    core
    <prod(r_n) values, first index fastest>
    factor 1 I_1 r_1
    <I_1 * r_1 values, column by column>
    ...
"""
from __future__ import annotations

import math

import numpy as np

from .l2e import L2EModel, MaskedTensor
from .tensor import TuckerTensor, from_vec, vec


class FormatError(ValueError):
    """Malformed input file; ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = f"{path}:" if path else ""
        where += f"{lineno}: " if lineno is not None else (" " if path else "")
        super().__init__(f"{where}{message}")


def format_value(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def _parse_float(tok, lineno, path):
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"cannot parse {tok!r} as a number", lineno, path) from None


def read_tensor(path) -> MaskedTensor:
    with open(path) as fh:
        lines = fh.read().splitlines()
    return parse_tensor(lines, path=str(path))


def parse_tensor(lines, path=None) -> MaskedTensor:
    lines = list(lines)
    if len(lines) < 2:
        raise FormatError("expected an order line and a dimensions line", len(lines) + 1, path)
    try:
        N = int(lines[0].strip())
    except ValueError:
        raise FormatError(f"order must be an integer, got {lines[0].strip()!r}", 1, path) from None
    if N < 1:
        raise FormatError("order must be at least 1", 1, path)
    toks = lines[1].split()
    if len(toks) != N:
        raise FormatError(f"expected {N} dimensions, got {len(toks)}", 2, path)
    try:
        dims = tuple(int(t) for t in toks)
    except ValueError:
        raise FormatError("dimensions must be integers", 2, path) from None
    if any(d < 1 for d in dims):
        raise FormatError("dimensions must be positive", 2, path)
    P = int(np.prod(dims))
    body = lines[2:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != P:
        raise FormatError(f"expected {P} values, found {len(body)}", 3 + min(len(body), P), path)
    data = np.empty(P)
    for i, raw in enumerate(body):
        tok = raw.strip()
        if tok.lower() == "nan":
            data[i] = np.nan
            continue
        data[i] = _parse_float(tok, i + 3, path)
        if not math.isfinite(data[i]):
            raise FormatError(f"non-finite value {tok!r}", i + 3, path)
    if np.all(np.isnan(data)):
        raise FormatError("all values are missing", None, path)
    return MaskedTensor.from_nan(from_vec(data, dims))


def tensor_lines(X, mask=None):
    X = np.asarray(X, dtype=float)
    if mask is not None:
        X = np.where(mask, X, np.nan)
    yield str(X.ndim)
    yield " ".join(str(d) for d in X.shape)
    for v in vec(X):
        yield format_value(v)


def write_tensor(path, X, mask=None) -> None:
    """Write ``X``; entries where ``mask`` is false (or ``X`` is nan) become ``nan``."""
    if isinstance(X, MaskedTensor):
        X, mask = X.values, X.mask
    with open(path, "w") as fh:
        for line in tensor_lines(X, mask):
            fh.write(line + "\n")


def write_model(path, model: L2EModel) -> None:
    T = model.factors
    out = ["tuckerl2e-model 1", f"order {T.core.ndim}",
           "dims " + " ".join(map(str, T.shape)),
           "rank " + " ".join(map(str, T.rank)),
           f"eta {format_value(model.eta)}", f"scale {format_value(model.scale)}", "core"]
    out += [format_value(v) for v in vec(T.core)]
    for n, A in enumerate(T.factors):
        out.append(f"factor {n + 1} {A.shape[0]} {A.shape[1]}")
        out += [format_value(v) for v in vec(A)]
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def read_model(path) -> L2EModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0

    def take(prefix):
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix):
            raise FormatError(f"expected {prefix!r}", pos + 1, path)
        rest = lines[pos][len(prefix):].split()
        pos += 1
        return rest

    def values(count):
        nonlocal pos
        if pos + count > len(lines):
            raise FormatError("file ends early", len(lines) + 1, path)
        vals = [_parse_float(t.strip(), pos + i + 1, path)
                for i, t in enumerate(lines[pos:pos + count])]
        pos += count
        return np.array(vals)

    take("tuckerl2e-model")
    N = int(take("order")[0])
    dims = tuple(int(t) for t in take("dims"))
    rank = tuple(int(t) for t in take("rank"))
    eta = float(take("eta")[0])
    scale = float(take("scale")[0])
    take("core")
    core = from_vec(values(int(np.prod(rank))), rank)
    factors = []
    for n in range(N):
        _, I, r = take("factor")
        factors.append(values(int(I) * int(r)).reshape((int(I), int(r)), order="F"))
    if tuple(A.shape[0] for A in factors) != dims:
        raise FormatError("factor shapes disagree with dims", None, path)
    return L2EModel(TuckerTensor(core, factors), eta, scale)


def write_meta(path, fields: dict) -> None:
    with open(path, "w") as fh:
        for k, v in fields.items():
            fh.write(f"{k} {format_value(v) if isinstance(v, float) else v}\n")


def read_meta(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                k, _, v = line.rstrip("\n").partition(" ")
                out[k] = v
    return out
