"""Named parameter collections and the handful of vector operations on them.

A :class:`ParamSet` is an ordered mapping ``name -> float64 array`` where each
entry carries a group tag (``"encoder"`` or ``"decoder"``) and a flag marking
normalization parameters. Gradients use the same container.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator, Mapping

import numpy as np

from aoscl.errors import NumericError, StructuralMismatchError

ENCODER = "encoder"
DECODER = "decoder"
GROUPS = (ENCODER, DECODER)


class ParamSet(Mapping):
    """Ordered ``name -> ndarray`` map with per-entry group and norm tags."""

    __slots__ = ("_values", "_groups", "_norm")

    def __init__(self, values, groups, norm=None):
        self._values = {k: np.asarray(v, dtype=np.float64) for k, v in values.items()}
        self._groups = dict(groups)
        self._norm = {k: False for k in self._values} if norm is None else dict(norm)
        if set(self._groups) != set(self._values) or set(self._norm) != set(self._values):
            raise StructuralMismatchError("every entry needs exactly one group tag and a norm flag")
        for name, group in self._groups.items():
            if group not in GROUPS:
                raise StructuralMismatchError(f"entry {name!r} has unknown group {group!r}")

    # Mapping protocol
    def __getitem__(self, name):
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        n = sum(v.size for v in self._values.values())
        return f"ParamSet({len(self)} entries, {n} values)"

    def group(self, name: str) -> str:
        return self._groups[name]

    def is_norm(self, name: str) -> bool:
        return self._norm[name]

    @property
    def groups(self) -> dict[str, str]:
        return dict(self._groups)

    @property
    def norm_flags(self) -> dict[str, bool]:
        return dict(self._norm)

    @property
    def size(self) -> int:
        return sum(v.size for v in self._values.values())

    def like(self, values) -> ParamSet:
        """New set with this set's structure and the given values."""
        return ParamSet(values, self._groups, self._norm)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> ParamSet:
        return self.like({k: fn(v) for k, v in self._values.items()})

    def copy(self) -> ParamSet:
        return self.map(np.copy)

    def zeros_like(self) -> ParamSet:
        return self.map(np.zeros_like)

    def compatible(self, other: ParamSet) -> bool:
        if list(self._values) != list(other._values):
            return False
        return all(
            self._values[k].shape == other._values[k].shape
            and self._groups[k] == other._groups[k]
            and self._norm[k] == other._norm[k]
            for k in self._values
        )

    def check_compatible(self, other: ParamSet) -> None:
        if not self.compatible(other):
            raise StructuralMismatchError("parameter sets are not structurally compatible")

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self._values.values()])

    def unflatten(self, vector) -> ParamSet:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != self.size:
            raise StructuralMismatchError(f"expected {self.size} values, got {vector.size}")
        out, i = {}, 0
        for k, v in self._values.items():
            out[k] = vector[i:i + v.size].reshape(v.shape).copy()
            i += v.size
        return self.like(out)

    def equal(self, other: ParamSet) -> bool:
        """Bit-exact equality of structure and values."""
        return self.compatible(other) and all(
            np.array_equal(self._values[k], other._values[k]) for k in self._values
        )


Grad = ParamSet


def axpy_combine(a: float, p: ParamSet, b: float, q: ParamSet) -> ParamSet:
    """Entrywise ``a*p + b*q``.

    The identity cases (a=1, b=0) and (a=0, b=1) return exact copies so the
    result is bit-identical to the surviving operand.
    """
    p.check_compatible(q)
    if a == 1 and b == 0:
        return p.copy()
    if a == 0 and b == 1:
        return q.copy()
    return p.like({k: a * p[k] + b * q[k] for k in p})


def sgd_step(p: ParamSet, g: Grad, alpha: float, mask: Mapping[str, bool] | None = None) -> ParamSet:
    """One SGD update; entries whose mask is False are copied untouched."""
    if not alpha > 0:
        raise ValueError(f"learning rate must be positive, got {alpha}")
    p.check_compatible(g)
    out = {}
    for k in p:
        if mask is not None and not mask[k]:
            out[k] = p[k].copy()
            continue
        gk = g[k]
        if not np.all(np.isfinite(gk)):
            raise NumericError(f"non-finite gradient in entry {k!r}", entry=k)
        out[k] = p[k] - alpha * gk
    return p.like(out)


def dot(g1: Grad, g2: Grad) -> float:
    g1.check_compatible(g2)
    return float(sum(np.vdot(g1[k], g2[k]) for k in g1))


def finite_diff_grad(loss_fn: Callable[[ParamSet], float], p: ParamSet, eps: float = 1e-5) -> Grad:
    """Central-difference gradient, one coordinate at a time (test oracle)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    out = {}
    for k in p:
        gk = np.zeros_like(p[k])
        for idx in np.ndindex(p[k].shape):
            plus, minus = dict(p.items()), dict(p.items())
            plus[k] = p[k].copy()
            minus[k] = p[k].copy()
            plus[k][idx] += eps
            minus[k][idx] -= eps
            gk[idx] = (loss_fn(p.like(plus)) - loss_fn(p.like(minus))) / (2 * eps)
        out[k] = gk
    return p.like(out)


def group_mask(p: ParamSet, group: str, include_norm: bool = True) -> dict[str, bool]:
    """True for entries in ``group`` (optionally excluding norm-flagged ones)."""
    return {k: p.group(k) == group and (include_norm or not p.is_norm(k)) for k in p}


def check_finite(p: ParamSet, what: str = "parameters") -> None:
    for k in p:
        if not np.all(np.isfinite(p[k])):
            raise NumericError(f"non-finite {what} in entry {k!r}", entry=k)
