"""Truncated Fock-space matrices for a single bosonic mode.

Truncation is a hard cutoff: the creation operator annihilates |D-1>, so
every deviation from an untruncated identity sits in the last row/column.
Identities are therefore compared on a leading K x K block.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError

__all__ = [
    "FockMatrix", "annihilation", "creation", "number", "position",
    "momentum", "identity", "commutator", "block_residual", "as_array",
    "dump_matrix", "load_matrix",
]


@dataclass(frozen=True, eq=False)
class FockMatrix:
    """Dense complex D x D operator in the basis |0>, ..., |D-1>."""

    entries: np.ndarray
    label: str = ""
    dim: int = field(init=False)

    def __post_init__(self):
        arr = np.array(self.entries, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise DimensionError(f"FockMatrix needs a square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"FockMatrix {self.label!r} has non-finite entries")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "dim", arr.shape[0])

    def __repr__(self):
        return f"FockMatrix(label={self.label!r}, dim={self.dim})"

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def dag(self) -> FockMatrix:
        return FockMatrix(self.entries.conj().T, _dag_label(self.label))

    def block(self, k: int) -> np.ndarray:
        return self.entries[:k, :k]

    def relabel(self, label: str) -> FockMatrix:
        return FockMatrix(self.entries, label)

    def _other(self, other):
        arr = as_array(other)
        if arr.shape != self.entries.shape:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {arr.shape[0]}")
        return arr

    def __matmul__(self, other):
        return FockMatrix(self.entries @ self._other(other))

    def __rmatmul__(self, other):
        return FockMatrix(self._other(other) @ self.entries)

    def __add__(self, other):
        return FockMatrix(self.entries + self._other(other))

    def __sub__(self, other):
        return FockMatrix(self.entries - self._other(other))

    def __mul__(self, scalar):
        return FockMatrix(self.entries * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return FockMatrix(-self.entries, self.label and "-" + self.label)


def _dag_label(label):
    if not label:
        return ""
    return label[:-1] if label.endswith("†") else label + "†"


def as_array(x) -> np.ndarray:
    if isinstance(x, FockMatrix):
        return x.entries
    return np.asarray(x)


def _check_dim(D):
    if int(D) != D or D < 2:
        raise DimensionError(f"truncation dimension must be an integer >= 2, got {D!r}")
    return int(D)


def annihilation(D: int) -> FockMatrix:
    """Lowering operator: a|m> = sqrt(m)|m-1>."""
    D = _check_dim(D)
    return FockMatrix(np.diag(np.sqrt(np.arange(1, D, dtype=float)), 1), "a")


def creation(D: int) -> FockMatrix:
    return FockMatrix(annihilation(D).entries.T, "a†")


def number(D: int) -> FockMatrix:
    D = _check_dim(D)
    return FockMatrix(np.diag(np.arange(D, dtype=float)), "N")


def position(D: int) -> FockMatrix:
    a = annihilation(D).entries
    return FockMatrix((a + a.T) / np.sqrt(2.0), "Q")


def momentum(D: int) -> FockMatrix:
    a = annihilation(D).entries
    return FockMatrix(1j * (a.T - a) / np.sqrt(2.0), "P")


def identity(D: int) -> FockMatrix:
    D = _check_dim(D)
    return FockMatrix(np.eye(D), "I")


def commutator(X, Y) -> FockMatrix:
    """Standard commutator XY - YX."""
    x, y = as_array(X), as_array(Y)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return FockMatrix(x @ y - y @ x)


def block_residual(X, Y, K: int | None = None, norm: str = "max") -> float:
    """Norm of X - Y on the leading K x K block (``norm`` is "max" or "spectral")."""
    x, y = as_array(X), as_array(Y)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    D = diff.shape[0]
    K = D if K is None else int(K)
    if not 1 <= K <= D:
        raise DimensionError(f"block size K={K} must satisfy 1 <= K <= D={D}")
    blk = diff[:K, :K]
    if norm == "max":
        return float(np.max(np.abs(blk)))
    if norm == "spectral":
        return float(np.linalg.norm(blk, 2))
    raise ValueError(f"unknown norm {norm!r}")


def to_dict(M: FockMatrix) -> dict:
    return {
        "dim": M.dim,
        "label": M.label,
        "re": M.entries.real.tolist(),
        "im": M.entries.imag.tolist(),
    }


def from_dict(doc: dict) -> FockMatrix:
    arr = np.asarray(doc["re"], dtype=float) + 1j * np.asarray(doc["im"], dtype=float)
    if arr.shape != (doc["dim"], doc["dim"]):
        raise DimensionError(f"declared dim {doc['dim']} does not match data shape {arr.shape}")
    return FockMatrix(arr, doc.get("label", ""))


def dump_matrix(M: FockMatrix, path) -> Path:
    # json writes floats via repr, which round-trips binary64 exactly
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_dict(M), sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_matrix(path) -> FockMatrix:
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
