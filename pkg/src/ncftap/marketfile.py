"""JSON market files.

Layout (``format_version`` 1)::

    {
      "format_version": 1,
      "algebra": {"block_dims": [2, 1], "trace_weights": [...]},
      "times": [0.0, 1.0],
      "filtration": [{"generators": []}, {"full": true}],
      "process": [element, element]
    }

An element is a list of blocks, a block a list of rows, and every entry a
``[re, im]`` pair.  Floats are written with ``repr`` (shortest round trip),
so emit -> parse -> emit is byte-stable.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .algebra import (
    DEFAULT_TOL,
    AlgebraElement,
    Filtration,
    MultiMatrixAlgebra,
    Subalgebra,
    full_subalgebra,
    make_subalgebra,
    validate_filtration,
)
from .errors import NCFTAPError
from .integration import AdaptedProcess, SimpleBiprocess, TradingStrategy, validate_adapted

FORMAT_VERSION = 1

__all__ = [
    "FORMAT_VERSION",
    "MarketFileError",
    "element_to_json",
    "element_from_json",
    "market_to_dict",
    "market_from_dict",
    "dumps_market",
    "loads_market",
    "load_market",
    "save_market",
    "strategy_to_json",
    "biprocess_to_json",
    "integrand_from_json",
]


class MarketFileError(NCFTAPError):
    """Malformed or invalid market document; the message names the section."""


def element_to_json(x: AlgebraElement) -> list:
    return [[[[float(z.real), float(z.imag)] for z in row] for row in b] for b in x.blocks]


def element_from_json(obj: Any, alg: MultiMatrixAlgebra, where: str) -> AlgebraElement:
    if not isinstance(obj, list) or len(obj) != len(alg.block_dims):
        raise MarketFileError(f"{where}: expected a list of {len(alg.block_dims)} blocks")
    blocks = []
    for k, (b, n) in enumerate(zip(obj, alg.block_dims)):
        try:
            arr = np.asarray(b, dtype=float)
        except (TypeError, ValueError) as exc:
            raise MarketFileError(f"{where}.block[{k}]: entries must be [re, im] numbers ({exc})") from None
        if arr.shape != (n, n, 2):
            raise MarketFileError(f"{where}.block[{k}]: expected shape ({n}, {n}, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise MarketFileError(f"{where}.block[{k}]: non-finite entry")
        blocks.append(arr[..., 0] + 1j * arr[..., 1])
    return AlgebraElement(blocks)


def _level_to_json(sub: Subalgebra) -> dict:
    if sub.dim == sub.algebra.size:
        return {"full": True}
    return {"generators": [element_to_json(g) for g in sub.generators]}


def market_to_dict(X: AdaptedProcess) -> dict:
    f = X.filtration
    alg = f.algebra
    return {
        "format_version": FORMAT_VERSION,
        "algebra": {"block_dims": list(alg.block_dims), "trace_weights": list(alg.trace_weights)},
        "times": list(f.times),
        "filtration": [_level_to_json(lev) for lev in f.levels],
        "process": [element_to_json(v) for v in X.values],
    }


def _section(doc: dict, key: str, kind: type) -> Any:
    if key not in doc:
        raise MarketFileError(f"missing section '{key}'")
    val = doc[key]
    if not isinstance(val, kind):
        raise MarketFileError(f"section '{key}' must be a {kind.__name__}")
    return val


def market_from_dict(doc: Any, *, validate: bool = True, tol: float = DEFAULT_TOL) -> AdaptedProcess:
    """Build the market; with ``validate`` the first failing residual is raised."""
    if not isinstance(doc, dict):
        raise MarketFileError("market document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise MarketFileError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    spec = _section(doc, "algebra", dict)
    try:
        alg = MultiMatrixAlgebra(tuple(spec["block_dims"]), spec.get("trace_weights"))
    except (KeyError, TypeError, ValueError) as exc:
        raise MarketFileError(f"section 'algebra': {exc}") from None
    times = _section(doc, "times", list)
    levels_doc = _section(doc, "filtration", list)
    values_doc = _section(doc, "process", list)
    if not (len(times) == len(levels_doc) == len(values_doc)):
        raise MarketFileError(f"need one filtration level and one process value per time: "
                              f"{len(times)} times, {len(levels_doc)} levels, {len(values_doc)} values")
    levels = []
    for k, lev in enumerate(levels_doc):
        where = f"filtration[{k}]"
        if not isinstance(lev, dict):
            raise MarketFileError(f"{where}: expected an object")
        if lev.get("full"):
            levels.append(full_subalgebra(alg))
            continue
        gens = lev.get("generators")
        if not isinstance(gens, list):
            raise MarketFileError(f"{where}: expected 'generators' list or 'full': true")
        levels.append(make_subalgebra(alg, [element_from_json(g, alg, f"{where}.generators[{i}]")
                                            for i, g in enumerate(gens)]))
    values = [element_from_json(v, alg, f"process[{k}]") for k, v in enumerate(values_doc)]
    try:
        f = Filtration(alg, times, levels)
    except (TypeError, ValueError) as exc:
        raise MarketFileError(f"section 'times': {exc}") from None
    X = AdaptedProcess(f, values)
    if validate:
        for rep in (validate_filtration(f, tol), validate_adapted(X, tol)):
            if not rep.passed:
                c = rep.failures[0]
                raise MarketFileError(f"{rep.title}: {c.name} residual {c.residual:.3e} exceeds {c.tol:.1e}")
    return X


def dumps_market(X: AdaptedProcess) -> str:
    return json.dumps(market_to_dict(X), indent=1) + "\n"


def loads_market(text: str, **kwargs) -> AdaptedProcess:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MarketFileError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return market_from_dict(doc, **kwargs)


def load_market(path: str | Path, **kwargs) -> AdaptedProcess:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MarketFileError(f"cannot read {path}: {exc.strerror}") from None
    return loads_market(text, **kwargs)


def save_market(X: AdaptedProcess, path: str | Path) -> None:
    Path(path).write_text(dumps_market(X))


# ---------------------------------------------------------------------------
# integrands


def strategy_to_json(S: TradingStrategy) -> dict:
    return {"kind": "strategy",
            "steps": [[{"alpha": alpha, "a": element_to_json(a)} for alpha, a in step]
                      for step in S.steps]}


def biprocess_to_json(H: SimpleBiprocess) -> dict:
    return {"kind": "biprocess",
            "steps": [[{"A": element_to_json(a), "B": element_to_json(b)} for a, b in step]
                      for step in H.steps]}


def integrand_from_json(doc: Any, f: Filtration) -> TradingStrategy | SimpleBiprocess:
    """Parse ``{"kind": "strategy" | "biprocess", "steps": [...]}``."""
    if not isinstance(doc, dict) or doc.get("kind") not in ("strategy", "biprocess"):
        raise MarketFileError("integrand must be an object with kind 'strategy' or 'biprocess'")
    steps = doc.get("steps")
    if not isinstance(steps, list):
        raise MarketFileError("integrand: missing 'steps' list")
    alg = f.algebra
    out = []
    try:
        for k, step in enumerate(steps):
            where = f"steps[{k}]"
            if doc["kind"] == "strategy":
                out.append([(float(t["alpha"]), element_from_json(t["a"], alg, f"{where}.a")) for t in step])
            else:
                out.append([(element_from_json(t["A"], alg, f"{where}.A"),
                             element_from_json(t["B"], alg, f"{where}.B")) for t in step])
    except (KeyError, TypeError) as exc:
        raise MarketFileError(f"integrand: malformed term ({exc})") from None
    try:
        return TradingStrategy(f, out) if doc["kind"] == "strategy" else SimpleBiprocess(f, out)
    except (TypeError, ValueError) as exc:
        raise MarketFileError(f"integrand: {exc}") from None
