"""Problem files, number formatting and run manifests."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .cadlag import StepFunction
from .exprs import ExprError, as_tx, as_txyz, as_x, compile_expr
from .problem import SwitchingCost, SwitchingProblem


class ProblemFileError(ValueError):
    """The file cannot be read or does not follow the problem-file schema."""


def fmt(v) -> str:
    """17 significant digits, enough to round-trip a double."""
    return "%.17g" % float(v)


_NUM = {"type": "number"}
_EXPR = {}  # checked by the expression compiler

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["q", "T", "x0", "gamma", "h", "costs"],
    "properties": {
        "name": {"type": "string"},
        "q": {"type": "integer"},
        "T": _NUM,
        "r": {"type": "integer"},
        "x0": {"oneOf": [_NUM, {"type": "array", "items": _NUM}]},
        "gamma": _NUM,
        "psi": {"type": "array"},
        "drivers": {
            "type": "object", "additionalProperties": False, "required": ["f", "lipschitz"],
            "properties": {"f": {"type": "array"}, "lipschitz": _NUM, "monotone": {"type": "boolean"}},
        },
        "h": {"type": "array"},
        "costs": {
            "type": "object",
            "additionalProperties": False,
            "patternProperties": {
                r"^[0-9]+->[0-9]+$": {
                    "type": "object", "additionalProperties": False, "required": ["v0"],
                    "properties": {
                        "v0": _NUM,
                        "steps": {"type": "array", "items": {
                            "type": "object", "additionalProperties": False, "required": ["t", "v"],
                            "properties": {"t": _NUM, "v": _NUM}}},
                        "xfactor": _EXPR,
                    },
                }
            },
        },
        "diffusion": {
            "type": "object", "additionalProperties": False,
            "properties": {"b": _EXPR, "sigma": _EXPR, "lipschitz": _NUM},
        },
        "grids": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "max_dt": {"type": "number", "exclusiveMinimum": 0},
                "depth_cap": {"type": "integer", "minimum": 1},
                "n_paths": {"type": "integer", "minimum": 1},
                "pde": {
                    "type": "object", "additionalProperties": False,
                    "required": ["x_lo", "x_hi", "h", "max_dt"],
                    "properties": {"x_lo": _NUM, "x_hi": _NUM, "h": {"type": "number", "exclusiveMinimum": 0},
                                   "max_dt": {"type": "number", "exclusiveMinimum": 0}},
                },
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}

_PAIR = re.compile(r"^([0-9]+)->([0-9]+)$")


def _vector_field(obj, r: int, q: int, where: str):
    """b or sigma: one expression when r = 1, {"components": [...]} otherwise."""
    if r == 1:
        return as_tx(compile_expr(obj, {"t", "x"}, r, q))
    if not isinstance(obj, dict) or set(obj) != {"components"} or len(obj["components"]) != r:
        raise ProblemFileError(f"{where} needs {{'components': [...]}} with {r} entries when r > 1")
    comps = [as_tx(compile_expr(c, {"t", "x"}, r, q)) for c in obj["components"]]

    def f(t, x):
        return np.stack([c(t, x) for c in comps], axis=1)
    f.reads = frozenset().union(*(c.reads for c in comps))
    return f


def problem_from_dict(doc: dict) -> SwitchingProblem:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ProblemFileError(f"schema error at {loc}: {exc.message}") from None
    q, r, T = int(doc["q"]), int(doc.get("r", 1)), float(doc["T"])
    if not T > 0:
        # horizon errors are structural, reported by validation; keep a usable placeholder
        from .problem import StructureError
        raise StructureError(f"T must be positive, got {T}")
    try:
        h = tuple(as_x(compile_expr(e, {"x"}, r, q)) for e in doc["h"])
        psi = tuple(as_tx(compile_expr(e, {"t", "x"}, r, q)) for e in doc["psi"]) if "psi" in doc else None
        drivers, C, mono = None, 0.0, False
        if "drivers" in doc:
            d = doc["drivers"]
            drivers = tuple(as_txyz(compile_expr(e, {"t", "x", "y", "z"}, r, q)) for e in d["f"])
            C, mono = float(d["lipschitz"]), bool(d.get("monotone", False))
        costs = {}
        for key, c in doc["costs"].items():
            i, k = (int(v) - 1 for v in _PAIR.match(key).groups())
            prof = StepFunction.from_json(c, T)
            xf = as_x(compile_expr(c["xfactor"], {"x"}, r, q)) if "xfactor" in c else None
            costs[(i, k)] = SwitchingCost(prof, xf)
        diff = doc.get("diffusion", {})
        b = _vector_field(diff["b"], r, q, "diffusion.b") if "b" in diff else None
        sigma = _vector_field(diff["sigma"], r, q, "diffusion.sigma") if "sigma" in diff else None
    except ExprError as exc:
        raise ProblemFileError(f"expression error: {exc}") from None
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ProblemFileError):
            raise
        raise ProblemFileError(str(exc)) from None
    x0 = doc["x0"]
    x0 = float(x0) if not isinstance(x0, list) else tuple(float(v) for v in x0)
    return SwitchingProblem(
        q=q, T=T, h=h, costs=costs, gamma=float(doc["gamma"]), x0=x0, psi=psi, drivers=drivers,
        lipschitz=C, monotone=mono, b=b, sigma=sigma,
        diffusion_lipschitz=float(diff["lipschitz"]) if "lipschitz" in diff else None,
        r=r, name=doc.get("name", ""),
        meta={"grids": doc.get("grids", {}), "seed": doc.get("seed", 0)},
    )


def read_problem(path) -> tuple[SwitchingProblem, bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProblemFileError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ProblemFileError("problem file must hold a JSON object")
    return problem_from_dict(doc), raw


def git_blob_hash(raw: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(raw) + raw).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class RunManifest:
    command: str
    config: dict
    problem_hash: str
    seed: int
    version: str = __version__
    outputs: list = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.config).encode()).hexdigest()

    def add_output(self, path) -> None:
        p = Path(path)
        self.outputs.append({"file": p.name, "sha256": sha256_file(p)})

    def to_json(self) -> dict:
        return {"command": self.command, "config": self.config, "config_hash": self.config_hash,
                "problem_hash": self.problem_hash, "seed": self.seed, "version": self.version,
                "outputs": sorted(self.outputs, key=lambda o: o["file"])}

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
