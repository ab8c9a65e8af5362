"""Symmetric eigenvalue machinery and the truncated operators.

Everything here is vectorised over leading axes: a stack of matrices of
shape ``(..., N, N)`` goes in, a stack of values comes out.  The
eigensolver is a batched cyclic Jacobi iteration; for the matrix sizes
used here (N <= 8) it is exact to rounding and needs no LAPACK.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import (
    IndexOutOfRange,
    NonFinite,
    OutOfScope,
    PlugUnavailable,
)

MAX_SWEEPS = 50
OFF_TOL = 1e-14


class SymMatrix:
    """Real symmetric N x N matrix stored as its upper triangle."""

    __slots__ = ("dim", "_packed")

    def __init__(self, dim: int, packed):
        packed = np.asarray(packed, dtype=float).copy()
        if not 1 <= dim <= 8:
            raise ValueError(f"dimension {dim} outside 1..8")
        if packed.shape != (dim * (dim + 1) // 2,):
            raise ValueError("packed length must be N(N+1)/2")
        if not np.all(np.isfinite(packed)):
            raise NonFinite("matrix has non-finite entries")
        packed.setflags(write=False)
        self.dim = dim
        self._packed = packed

    @classmethod
    def from_array(cls, a) -> "SymMatrix":
        """Build from a square array; only the upper triangle is read."""
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        iu = np.triu_indices(a.shape[0])
        return cls(a.shape[0], a[iu])

    @classmethod
    def diag(cls, values) -> "SymMatrix":
        return cls.from_array(np.diag(np.asarray(values, dtype=float)))

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    def to_array(self) -> np.ndarray:
        n = self.dim
        a = np.zeros((n, n))
        iu = np.triu_indices(n)
        a[iu] = self._packed
        a.T[iu] = self._packed
        return a

    def __array__(self, dtype=None, copy=None):
        a = self.to_array()
        return a if dtype is None else a.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self._packed, other._packed)

    def __hash__(self):
        return hash((self.dim, self._packed.tobytes()))

    def __repr__(self):
        return f"SymMatrix({self.to_array().tolist()!r})"


def _as_stack(x) -> np.ndarray:
    a = np.asarray(x.to_array() if isinstance(x, SymMatrix) else x, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError("expected (..., N, N) symmetric matrices")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has non-finite entries")
    # read the upper triangle only, mirroring SymMatrix semantics
    upper = np.triu(a)
    return upper + np.swapaxes(np.triu(a, 1), -1, -2)


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray  # (..., N) nondecreasing
    vectors: np.ndarray  # (..., N, N) columns are eigenvectors
    sweeps: int = 0


def jacobi_eigh(a, max_sweeps: int = MAX_SWEEPS, tol: float = OFF_TOL):
    """Batched cyclic Jacobi.  Returns unsorted (values, vectors, sweeps)."""
    a = _as_stack(a).copy()
    shape = a.shape
    n = shape[-1]
    a = a.reshape(-1, n, n)
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    scale = np.sqrt(np.sum(a * a, axis=(1, 2)))
    off_mask = ~np.eye(n, dtype=bool)
    sweeps = 0
    active = np.arange(a.shape[0])
    for sweeps in range(1, max_sweeps + 1):
        sub = a[active]
        off = np.sqrt(np.sum(sub[:, off_mask] ** 2, axis=1))
        still = off > tol * scale[active]
        active = active[still]
        if active.size == 0:
            sweeps -= 1
            break
        A = a[active]
        V = v[active]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                nz = apq != 0.0
                if not np.any(nz):
                    continue
                app = A[:, p, p]
                aqq = A[:, q, q]
                theta = np.where(nz, (aqq - app) / np.where(nz, 2.0 * apq, 1.0), 0.0)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(nz, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c_ = c[:, None]
                s_ = s[:, None]
                # A <- J^T A J with J the (p, q) rotation
                cp = A[:, :, p].copy()
                cq = A[:, :, q].copy()
                A[:, :, p] = c_ * cp - s_ * cq
                A[:, :, q] = s_ * cp + c_ * cq
                rp = A[:, p, :].copy()
                rq = A[:, q, :].copy()
                A[:, p, :] = c_ * rp - s_ * rq
                A[:, q, :] = s_ * rp + c_ * rq
                A[:, p, q] = 0.0
                A[:, q, p] = 0.0
                vp = V[:, :, p].copy()
                vq = V[:, :, q].copy()
                V[:, :, p] = c_ * vp - s_ * vq
                V[:, :, q] = s_ * vp + c_ * vq
        a[active] = A
        v[active] = V
    values = np.diagonal(a, axis1=1, axis2=2).copy()
    return values.reshape(shape[:-1]), v.reshape(shape), sweeps


def eigenvalues_sorted(x) -> EigenDecomposition:
    """Eigen-decomposition with values in nondecreasing order.

    Ties keep the order in which the Jacobi sweep left them (stable sort).
    """
    vals, vecs, sweeps = jacobi_eigh(x)
    order = np.argsort(vals, axis=-1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    return EigenDecomposition(vals, vecs, sweeps)


def sorted_eigenvalues(x) -> np.ndarray:
    return eigenvalues_sorted(x).values


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise IndexOutOfRange(f"k={k} outside 1..{n}")


def lambda_k(x, k: int):
    """k-th smallest eigenvalue (1-based)."""
    vals = sorted_eigenvalues(x)
    _check_k(k, vals.shape[-1])
    return vals[..., k - 1]


def pminus_k(x, k: int):
    """Sum of the k smallest eigenvalues."""
    vals = sorted_eigenvalues(x)
    _check_k(k, vals.shape[-1])
    return vals[..., :k].sum(axis=-1)


def pplus_k(x, k: int):
    """Sum of the k largest eigenvalues."""
    vals = sorted_eigenvalues(x)
    _check_k(k, vals.shape[-1])
    return vals[..., -k:].sum(axis=-1)


def pminus_k_frame(x, k: int):
    """Minimum of sum <X v_j, v_j> over orthonormal k-frames, with a minimiser.

    The minimiser is the frame of the k lowest eigenvectors, returned as the
    columns of an (N, k) array.
    """
    dec = eigenvalues_sorted(x)
    _check_k(k, dec.values.shape[-1])
    frame = dec.vectors[..., :k]
    a = _as_stack(x)
    value = np.einsum("...ij,...ik,...kj->...", frame, a, frame)
    return value, frame


# ---------------------------------------------------------------------------
# operator interface

LAMBDA_K = "lambda_k"
PMINUS_K = "pminus_k"
PPLUS_K = "pplus_k"
PLUG = "plug"
KINDS = (LAMBDA_K, PMINUS_K, PPLUS_K, PLUG)

_PLUGS: Dict[str, Callable[[np.ndarray, int], np.ndarray]] = {}


def register_operator(name: str, fn: Callable[[np.ndarray, int], np.ndarray]) -> None:
    """Register a pluggable evaluator ``fn(stack_of_matrices, k) -> values``."""
    _PLUGS[name] = fn


def unregister_operator(name: str) -> None:
    _PLUGS.pop(name, None)


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    k: int
    homogeneity_degree: float = 1.0
    plug: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.k < 1:
            raise IndexOutOfRange("k must be >= 1")
        if self.homogeneity_degree <= 0:
            raise ValueError("homogeneity degree must be positive")
        if self.kind == PLUG and not self.plug:
            raise ValueError("plug operators need a registered name")

    @property
    def label(self) -> str:
        if self.kind == PLUG:
            return f"{self.plug}[k={self.k}]"
        return f"{self.kind}[k={self.k}]"

    def require_degenerate(self, n: int) -> None:
        """Checkers whose guarantees need k < N call this."""
        if self.k >= n:
            raise OutOfScope(f"{self.label} needs k < N={n}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "k": self.k, "homogeneity_degree": self.homogeneity_degree}
        if self.plug:
            d["plug"] = self.plug
        return d


def operator_eval(op: OperatorSpec, x):
    """F(X) for the operator described by ``op``; vectorised over stacks."""
    if op.kind == LAMBDA_K:
        return lambda_k(x, op.k)
    if op.kind == PMINUS_K:
        return pminus_k(x, op.k)
    if op.kind == PPLUS_K:
        return pplus_k(x, op.k)
    fn = _PLUGS.get(op.plug)
    if fn is None:
        raise PlugUnavailable(f"no evaluator registered as {op.plug!r}")
    a = _as_stack(x)
    _check_k(op.k, a.shape[-1])
    return np.asarray(fn(a, op.k), dtype=float)


@dataclass
class AxiomReport:
    degenerate_elliptic: bool
    homogeneous: bool
    f3_origin: bool
    worst: Dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.degenerate_elliptic and self.homogeneous and self.f3_origin


def _shape(size) -> tuple:
    if size is None:
        return ()
    return (size,) if np.isscalar(size) else tuple(size)


def random_symmetric(rng: np.random.Generator, n: int, size=None, scale: float = 1.0):
    g = rng.normal(size=_shape(size) + (n, n)) * scale
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def random_orthogonal(rng: np.random.Generator, n: int, size=None):
    """Haar-distributed orthogonal matrices via QR of Gaussian draws."""
    g = rng.normal(size=_shape(size) + (n, n))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d = np.where(d == 0, 1.0, d)
    return q * d[..., None, :]


def check_operator_axioms(op: OperatorSpec, n: int, rng: np.random.Generator,
                          trials: int = 1000) -> AxiomReport:
    """Property harness for (F2), (F4) and F(0) <= 0 on random matrices."""
    x = random_symmetric(rng, n, trials)
    b = rng.normal(size=(trials, n, n))
    psd = b @ np.swapaxes(b, -1, -2)
    fx = operator_eval(op, x)
    fy = operator_eval(op, x + psd)
    mono = float(np.max(fx - fy))
    worst_h = 0.0
    for t in (0.5, 2.0, 10.0):
        ft = operator_eval(op, t * x)
        expected = t ** op.homogeneity_degree * fx
        err = np.abs(ft - expected) / (t ** op.homogeneity_degree * (1 + np.abs(fx)))
        worst_h = max(worst_h, float(err.max()))
    f0 = float(operator_eval(op, np.zeros((n, n))))
    return AxiomReport(
        degenerate_elliptic=mono <= 1e-12,
        homogeneous=worst_h <= 1e-12,
        f3_origin=f0 <= 0.0,
        worst={"monotonicity": mono, "homogeneity": worst_h, "f_at_zero": f0},
    )
