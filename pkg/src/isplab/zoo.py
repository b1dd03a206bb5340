"""Test operators with designated start vectors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DomainError
from .operator_core import operator_from_json

__all__ = ["KINDS", "ZooSpec", "build", "default_zoo"]

KINDS = (
    "shift",
    "weighted_shift",
    "jordan",
    "diagonal",
    "random_ginibre",
    "random_hessenberg",
    "from_file",
)
VECTORS = ("e1", "ones", "custom")

_KIND_PARAMS = {
    "shift": set(),
    "weighted_shift": {"weights"},
    "jordan": {"lam"},
    "diagonal": {"entries"},
    "random_ginibre": {"seed"},
    "random_hessenberg": {"seed"},
    "from_file": {"path"},
}


@dataclass(frozen=True)
class ZooSpec:
    kind: str
    N: int
    cyclic_vector: str = "e1"
    params: dict = field(default_factory=dict)
    vector: tuple | None = None
    name: str | None = None

    @property
    def operator_id(self) -> str:
        if self.name:
            return self.name
        tag = self.kind
        if "seed" in self.params:
            tag += f"-s{self.params['seed']}"
        elif "lam" in self.params:
            tag += f"-{self.params['lam']}"
        return f"{tag}-N{self.N}"

    @classmethod
    def from_dict(cls, d: dict) -> "ZooSpec":
        if not isinstance(d, dict):
            raise ConfigError(f"zoo entry must be an object, got {d!r}")
        d = dict(d)
        allowed = {"kind", "N", "cyclic_vector", "vector", "name"}
        kind = d.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"unknown zoo kind {kind!r}; expected one of {KINDS}")
        unknown = set(d) - allowed - _KIND_PARAMS[kind]
        if unknown:
            raise ConfigError(f"unknown keys for zoo kind {kind!r}: {sorted(unknown)}")
        params = {p: d[p] for p in _KIND_PARAMS[kind] if p in d}
        vector = d.get("vector")
        if vector is not None:
            vector = tuple(complex(x) if not isinstance(x, list) else complex(*x) for x in vector)
        N = d.get("N")
        if kind == "from_file" and N is None:
            N = operator_from_json(Path(params["path"]).read_text()).shape[0]
        spec = cls(kind, N, d.get("cyclic_vector", "e1"), params, vector, d.get("name"))
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "N": self.N, "cyclic_vector": self.cyclic_vector, **self.params}
        if self.vector is not None:
            out["vector"] = [[z.real, z.imag] for z in self.vector]
        if self.name:
            out["name"] = self.name
        return out

    def validate(self) -> "ZooSpec":
        if not isinstance(self.N, int) or self.N < 2:
            raise ConfigError(f"zoo N must be an integer >= 2, got {self.N!r}")
        if self.cyclic_vector not in VECTORS:
            raise ConfigError(f"cyclic_vector must be one of {VECTORS}")
        if self.cyclic_vector == "custom":
            if self.vector is None or len(self.vector) != self.N:
                raise ConfigError("custom cyclic vector must have N entries")
            if abs(np.linalg.norm(np.array(self.vector)) - 1.0) > 1e-12:
                raise DomainError("custom cyclic vector must have unit norm")
        missing = {"weights": "weighted_shift", "entries": "diagonal", "path": "from_file"}
        for key, kind in missing.items():
            if self.kind == kind and key not in self.params:
                raise ConfigError(f"zoo kind {kind!r} needs {key!r}")
        return self


def _random_ginibre(N: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2 * N)


def _random_hessenberg(N: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    T = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2 * N)
    T = np.triu(T)
    T[np.arange(1, N), np.arange(N - 1)] = rng.uniform(0.5, 1.5, N - 1) / np.sqrt(N)
    return T


def build(z: ZooSpec) -> tuple[np.ndarray, np.ndarray]:
    """Materialize ``(T, v)`` for a zoo entry; random kinds depend only on their seed."""
    z.validate()
    N = z.N
    p = z.params
    if z.kind == "shift":
        T = np.diag(np.ones(N - 1), -1)
    elif z.kind == "weighted_shift":
        w = np.asarray(p["weights"], dtype=complex)
        if w.shape != (N - 1,):
            raise ConfigError(f"weighted_shift needs N-1={N - 1} weights")
        T = np.diag(w, -1)
    elif z.kind == "jordan":
        T = complex(p.get("lam", 0.0)) * np.eye(N) + np.diag(np.ones(N - 1), -1)
    elif z.kind == "diagonal":
        entries = np.asarray(p["entries"], dtype=complex)
        if entries.shape != (N,):
            raise ConfigError(f"diagonal needs {N} entries")
        T = np.diag(entries)
    elif z.kind == "random_ginibre":
        T = _random_ginibre(N, int(p.get("seed", 0)))
    elif z.kind == "random_hessenberg":
        T = _random_hessenberg(N, int(p.get("seed", 0)))
    else:
        try:
            T = operator_from_json(Path(p["path"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read operator file {p['path']!r}: {exc}") from exc
        if T.shape[0] != N:
            raise ConfigError(f"operator file has dim {T.shape[0]}, config says {N}")
    T = np.asarray(T, dtype=complex)

    if z.cyclic_vector == "e1":
        v = np.zeros(N, dtype=complex)
        v[0] = 1.0
    elif z.cyclic_vector == "ones":
        v = np.ones(N, dtype=complex) / np.sqrt(N)
    else:
        v = np.array(z.vector, dtype=complex)
    return T, v


def default_zoo(N: int, seed: int = 0) -> list[ZooSpec]:
    """One representative of every built-in kind, each with a cyclic start vector."""
    return [
        ZooSpec("shift", N),
        ZooSpec("weighted_shift", N, params={"weights": [1.0 / (n + 1) for n in range(1, N)]}),
        ZooSpec("jordan", N, params={"lam": 0.5}),
        ZooSpec("diagonal", N, "ones", params={"entries": [float(n) for n in range(1, N + 1)]}),
        ZooSpec("random_ginibre", N, params={"seed": seed}),
        ZooSpec("random_hessenberg", N, params={"seed": seed}),
    ]
