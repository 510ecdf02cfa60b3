"""JSON instance files.

Format (0-based indices)::

    {"labels": [...], "rates": [[i, j, r], ...], "boundary": [...], "measure": [...]}

``measure`` is optional; when present it is validated, not trusted.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .dtn import BoundaryProblem, make_problem
from .errors import InstanceFormatError
from .markov import ReversibleGenerator, build_generator


@dataclass(frozen=True)
class Instance:
    name: str
    problem: BoundaryProblem
    meta: dict = field(default_factory=dict)

    @property
    def generator(self) -> ReversibleGenerator:
        return self.problem.generator


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    gen = inst.generator
    d = {
        "labels": list(gen.labels),
        "rates": [[i, j, r] for i, j, r in gen.rates],
        "boundary": list(inst.problem.boundary),
        "measure": [float(x) for x in gen.mu],
    }
    if inst.name:
        d["name"] = inst.name
    if inst.meta:
        d["meta"] = inst.meta
    return d


def instance_from_dict(d: dict, name: str = "", *, allow_full: bool = False,
                       tol: Tolerances = DEFAULT_TOL) -> Instance:
    if not isinstance(d, dict):
        raise InstanceFormatError("instance must be a JSON object")
    for key in ("labels", "rates", "boundary"):
        if key not in d:
            raise InstanceFormatError(f"missing key {key!r}")
    labels = d["labels"]
    if not isinstance(labels, list):
        raise InstanceFormatError("'labels' must be a list")
    rates = d["rates"]
    if not isinstance(rates, list) or not all(isinstance(t, list) and len(t) == 3 for t in rates):
        raise InstanceFormatError("'rates' must be a list of [i, j, rate] triples")
    gen = build_generator(rates, labels, mu_hint=d.get("measure"), tol=tol)
    problem = make_problem(gen, d["boundary"], allow_full=allow_full)
    return Instance(d.get("name", name), problem, d.get("meta", {}))


_FLAT_ARRAY = re.compile(r"\[\s*([^\[\]{}\s\"][^\[\]{}\"]*?)\s*\]")  # no strings inside


def dumps(obj: Any, **kw) -> str:
    """JSON with shortest round-trip floats; ``inf`` is written as ``Infinity``.

    With ``indent``, arrays of scalars stay on one line.
    """
    text = json.dumps(_plain(obj), **kw)
    if kw.get("indent") is None:
        return text
    return _FLAT_ARRAY.sub(lambda m: "[" + re.sub(r",\s+", ", ", m.group(1)) + "]", text)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def load_instance(path: str | Path, *, allow_full: bool = False,
                  tol: Tolerances = DEFAULT_TOL) -> Instance:
    path = Path(path)
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(d, name=path.stem, allow_full=allow_full, tol=tol)


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps(instance_to_dict(inst), indent=1) + "\n")


def load_dir(path: str | Path, **kw) -> list[Instance]:
    path = Path(path)
    if path.is_file():
        return [load_instance(path, **kw)]
    return [load_instance(p, **kw) for p in sorted(path.glob("*.json"))]
