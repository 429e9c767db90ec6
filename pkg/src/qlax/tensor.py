"""Leg-labelled dense operators on (aux C^d)^{⊗a} ⊗ (site C^d)^{⊗N}.

Composite indices are row-major over the leg list, so the first leg is the
slowest-varying one.  Shapes built by :func:`chain_shape` put auxiliary legs
first, which makes a trace over an auxiliary leg a contiguous block trace.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import NumericError, ShapeError, SingularityError

AUX = "aux"
SITE = "site"

COND_LIMIT = 1e12


@dataclass(frozen=True)
class Leg:
    label: str
    dim: int
    kind: str = SITE

    def __post_init__(self):
        if self.dim < 1:
            raise ShapeError(f"leg {self.label!r} has non-positive dimension {self.dim}")
        if self.kind not in (AUX, SITE):
            raise ShapeError(f"leg kind must be 'aux' or 'site', got {self.kind!r}")


@dataclass(frozen=True)
class LegShape:
    legs: tuple[Leg, ...]

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(self.legs))
        labels = [leg.label for leg in self.legs]
        if len(set(labels)) != len(labels):
            raise ShapeError(f"duplicate leg labels in {labels}")

    @classmethod
    def of(cls, *legs: Leg) -> "LegShape":
        return cls(tuple(legs))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(leg.label for leg in self.legs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(leg.dim for leg in self.legs)

    @property
    def total(self) -> int:
        return prod(self.dims)

    def __len__(self) -> int:
        return len(self.legs)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ShapeError(f"no leg {label!r} in shape {self.labels}") from None

    def leg(self, label: str) -> Leg:
        return self.legs[self.index(label)]

    def without(self, *labels: str) -> "LegShape":
        for label in labels:
            self.index(label)
        return LegShape(tuple(leg for leg in self.legs if leg.label not in labels))

    def select(self, kind: str) -> "LegShape":
        return LegShape(tuple(leg for leg in self.legs if leg.kind == kind))

    def __add__(self, other: "LegShape") -> "LegShape":
        return LegShape(self.legs + other.legs)


def chain_shape(aux: Sequence[str], n_sites: int, d: int = 2) -> LegShape:
    """Auxiliary legs in the given order, then site legs ``s1..sN``."""
    legs = [Leg(a, d, AUX) for a in aux]
    legs += [Leg(f"s{n}", d, SITE) for n in range(1, n_sites + 1)]
    return LegShape(tuple(legs))


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex square matrix tagged with a :class:`LegShape`.

    The data array is copied on construction and marked read-only.
    Arithmetic between operators requires identical shapes; use
    :func:`embed` to pad with identities first.
    """

    shape: LegShape
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128, copy=True)
        n = self.shape.total
        if data.ndim != 2 or data.shape != (n, n):
            raise ShapeError(
                f"data of shape {data.shape} does not match legs {self.shape.labels} (dim {n})"
            )
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.shape.total

    @property
    def labels(self) -> tuple[str, ...]:
        return self.shape.labels

    def _check(self, other: "Operator") -> None:
        if not isinstance(other, Operator):
            raise TypeError(f"expected Operator, got {type(other).__name__}")
        if other.shape != self.shape:
            raise ShapeError(f"shape mismatch: {self.labels} vs {other.labels}")

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.shape, self.data @ other.data)

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.shape, self.data + other.data)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.shape, self.data - other.data)

    def __neg__(self) -> "Operator":
        return Operator(self.shape, -self.data)

    def __mul__(self, scalar: complex) -> "Operator":
        if isinstance(scalar, Operator):
            raise TypeError("use @ for operator products")
        return Operator(self.shape, scalar * self.data)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def with_shape(self, shape: LegShape) -> "Operator":
        """Reinterpret the same matrix under a new shape with identical dims."""
        if shape.dims != self.shape.dims:
            raise ShapeError(f"dims {shape.dims} differ from {self.shape.dims}")
        return Operator(shape, self.data)

    def relabel(self, mapping: dict[str, str]) -> "Operator":
        legs = tuple(
            Leg(mapping.get(leg.label, leg.label), leg.dim, leg.kind) for leg in self.shape.legs
        )
        return Operator(LegShape(legs), self.data)


def identity(shape: LegShape) -> Operator:
    return Operator(shape, np.eye(shape.total))


def zeros(shape: LegShape) -> Operator:
    return Operator(shape, np.zeros((shape.total, shape.total)))


def kron(a: Operator, b: Operator) -> Operator:
    """Tensor product; the leg list of ``a`` is followed by that of ``b``."""
    shape = a.shape + b.shape
    return Operator(shape, np.kron(a.data, b.data))


def _permute_data(data: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    n = len(dims)
    t = data.reshape(tuple(dims) * 2)
    axes = list(order) + [n + i for i in order]
    new_dims = [dims[i] for i in order]
    total = prod(new_dims)
    return np.ascontiguousarray(t.transpose(axes)).reshape(total, total)


def permute(op: Operator, labels: Iterable[str]) -> Operator:
    """Reorder the legs of ``op`` to the given label order."""
    labels = tuple(labels)
    if sorted(labels) != sorted(op.labels):
        raise ShapeError(f"{labels} is not a permutation of {op.labels}")
    order = [op.shape.index(label) for label in labels]
    shape = LegShape(tuple(op.shape.legs[i] for i in order))
    return Operator(shape, _permute_data(op.data, op.shape.dims, order))


def embed(op: Operator, target: LegShape) -> Operator:
    """Pad ``op`` with identities on every leg of ``target`` it lacks."""
    for leg in op.shape.legs:
        if leg.label not in target:
            raise ShapeError(f"leg {leg.label!r} missing from target {target.labels}")
        if target.leg(leg.label).dim != leg.dim:
            raise ShapeError(
                f"leg {leg.label!r}: dim {leg.dim} vs {target.leg(leg.label).dim} in target"
            )
    if op.labels == target.labels:
        return Operator(target, op.data)
    rest = [leg for leg in target.legs if leg.label not in op.shape]
    rest_dim = prod(leg.dim for leg in rest)
    padded = np.kron(op.data, np.eye(rest_dim)) if rest else op.data
    current = list(op.labels) + [leg.label for leg in rest]
    dims = [target.leg(label).dim for label in current]
    order = [current.index(label) for label in target.labels]
    return Operator(target, _permute_data(padded, dims, order))


def partial_trace(x: Operator, label: str) -> Operator:
    i = x.shape.index(label)
    dims = x.shape.dims
    n = len(dims)
    t = x.data.reshape(dims * 2)
    out_shape = x.shape.without(label)
    m = out_shape.total
    return Operator(out_shape, np.trace(t, axis1=i, axis2=n + i).reshape(m, m))


def mat_exp(a: Operator) -> Operator:
    if not np.all(np.isfinite(a.data)):
        raise NumericError("matrix exponential of non-finite operator")
    return Operator(a.shape, scipy.linalg.expm(a.data))


def mat_inv(a: Operator, cond_limit: float = COND_LIMIT) -> Operator:
    if not np.all(np.isfinite(a.data)):
        raise NumericError("inverse of non-finite operator")
    cond = np.linalg.cond(a.data)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularityError(f"condition number {cond:.3e} exceeds {cond_limit:.1e}")
    return Operator(a.shape, np.linalg.inv(a.data))


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def rel_residual(x: Operator | np.ndarray, y: Operator | np.ndarray) -> float:
    """``‖x − y‖_F / max(1, ‖y‖_F)``."""
    xd = x.data if isinstance(x, Operator) else np.asarray(x)
    yd = y.data if isinstance(y, Operator) else np.asarray(y)
    if xd.shape != yd.shape:
        raise ShapeError(f"cannot compare arrays of shape {xd.shape} and {yd.shape}")
    if isinstance(x, Operator) and isinstance(y, Operator) and x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.labels} vs {y.labels}")
    return float(np.linalg.norm(xd - yd) / max(1.0, np.linalg.norm(yd)))


def aux_blocks(x: Operator, label: str) -> np.ndarray:
    """View ``x`` as a d×d array of operator blocks indexed by leg ``label``.

    ``label`` must be the first leg.  Returns an array of shape (d, d, m, m).
    """
    if x.labels[0] != label:
        raise ShapeError(f"leg {label!r} must lead the shape, got {x.labels}")
    d = x.shape.dims[0]
    m = x.dim // d
    return x.data.reshape(d, m, d, m).transpose(0, 2, 1, 3)


def from_aux_blocks(blocks: np.ndarray, shape: LegShape) -> Operator:
    d, _, m, _ = blocks.shape
    return Operator(shape, blocks.transpose(0, 2, 1, 3).reshape(d * m, d * m))


def triangular_residual(x: Operator, label: str, part: str) -> float:
    """Frobenius norm of the strictly ``part`` ('lower'|'upper') aux blocks of ``x``.

    Relative to ``max(1, ‖x‖_F)``.
    """
    blocks = aux_blocks(x, label)
    d = blocks.shape[0]
    if part == "lower":
        mask = np.tril(np.ones((d, d), dtype=bool), -1)
    elif part == "upper":
        mask = np.triu(np.ones((d, d), dtype=bool), 1)
    elif part == "offdiag":
        mask = ~np.eye(d, dtype=bool)
    else:
        raise ValueError(f"unknown part {part!r}")
    off = np.linalg.norm(blocks[mask])
    return float(off / max(1.0, x.norm()))
