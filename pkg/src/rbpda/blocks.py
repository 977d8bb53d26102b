"""Block-structured vectors, prox specifications, and the saddle-problem container.

A problem couples a block-partitioned primal variable x with a
block-partitioned dual variable y through a finite-sum function
Phi(x, y) = (1/p) * sum_l Phi_l(x, y), plus separable nonsmooth terms
handled by per-block proximal operators.  Gradients are user-supplied
closures, not autodifferentiated: the method consumes component- and
block-level partial gradients as first-class oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bregman import EUCLIDEAN, BregmanGeometry

__all__ = [
    "BlockLayout",
    "BlockStructure",
    "BlockVector",
    "ProxSpec",
    "SaddleProblem",
    "ValidationReport",
    "block_slice",
    "validate_problem",
]

DOMAIN_SLACK = 1e-12  # absolute slack absorbing prox round-off


@dataclass(frozen=True)
class BlockLayout:
    """Dimensions of one side (primal or dual) of a block partition."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) < 1:
            raise ValueError("need at least one block")
        if any(int(d) < 1 for d in self.dims):
            raise ValueError("block dimensions must be positive")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def n_blocks(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def offset(self, i: int) -> int:
        if not 0 <= i < self.n_blocks:
            raise IndexError(f"block index {i} out of range [0, {self.n_blocks})")
        return sum(self.dims[:i])

    def block_range(self, i: int) -> slice:
        off = self.offset(i)
        return slice(off, off + self.dims[i])


@dataclass(frozen=True)
class BlockStructure:
    """Primal and dual block layouts of a saddle problem."""

    primal: BlockLayout
    dual: BlockLayout

    @classmethod
    def from_dims(cls, primal_dims: Sequence[int], dual_dims: Sequence[int]) -> "BlockStructure":
        return cls(BlockLayout(tuple(primal_dims)), BlockLayout(tuple(dual_dims)))

    @property
    def M(self) -> int:
        return self.primal.n_blocks

    @property
    def N(self) -> int:
        return self.dual.n_blocks

    @property
    def m(self) -> int:
        return self.primal.total_dim

    @property
    def n(self) -> int:
        return self.dual.total_dim


@dataclass
class BlockVector:
    """A dense vector carrying the layout of one side of a problem.

    Block views are contiguous, non-overlapping slices of ``data``; writes
    through a view mutate the parent vector.
    """

    layout: BlockLayout
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 1 or self.data.size != self.layout.total_dim:
            raise ValueError(
                f"data length {self.data.size} does not match layout "
                f"total dimension {self.layout.total_dim}"
            )

    @classmethod
    def zeros(cls, layout: BlockLayout) -> "BlockVector":
        return cls(layout, np.zeros(layout.total_dim))

    def block(self, i: int) -> np.ndarray:
        return self.data[self.layout.block_range(i)]

    def copy(self) -> "BlockVector":
        return BlockVector(self.layout, self.data.copy())

    def block_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(self.block(i)) for i in range(self.layout.n_blocks)])


def block_slice(v: BlockVector, index: int) -> np.ndarray:
    """Writable view of block ``index`` of ``v``; out of range is an IndexError."""
    return v.block(index)


@dataclass(frozen=True)
class ProxSpec:
    """Specification of one block's nonsmooth term f_i or h_j.

    ``kind`` is one of ``zero``, ``box``, ``simplex``, ``nonneg``,
    ``scaled_l1``.  The prox of each kind has a closed form (see
    :func:`rbpda.bregman.prox_step`).
    """

    kind: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    weight: float = 0.0
    geometry: BregmanGeometry = EUCLIDEAN

    def __post_init__(self):
        if self.kind not in ("zero", "box", "simplex", "nonneg", "scaled_l1"):
            raise ValueError(f"unknown prox kind: {self.kind!r}")
        if self.kind == "box":
            lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
            hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
            if lo.shape != hi.shape:
                raise ValueError("box bounds must have matching shapes")
            if np.any(lo > hi):
                raise ValueError("box lower bound exceeds upper bound")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        if self.kind == "simplex":
            if self.geometry.kind not in ("euclidean", "negative_entropy"):
                raise ValueError("simplex blocks support Euclidean or entropy geometry")
        elif self.geometry.is_entropy:
            raise ValueError("negative-entropy geometry is only defined on simplex blocks")
        if self.kind == "scaled_l1" and self.weight < 0:
            raise ValueError("scaled_l1 weight must be nonnegative")

    # -- factories -------------------------------------------------------
    @staticmethod
    def zero() -> "ProxSpec":
        return ProxSpec("zero")

    @staticmethod
    def box(lower, upper) -> "ProxSpec":
        return ProxSpec("box", lower=lower, upper=upper)

    @staticmethod
    def simplex(geometry: BregmanGeometry = EUCLIDEAN) -> "ProxSpec":
        return ProxSpec("simplex", geometry=geometry)

    @staticmethod
    def nonneg() -> "ProxSpec":
        return ProxSpec("nonneg")

    @staticmethod
    def scaled_l1(weight: float) -> "ProxSpec":
        return ProxSpec("scaled_l1", weight=float(weight))

    # -- domain helpers --------------------------------------------------
    def contains(self, x, slack: float = DOMAIN_SLACK) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind in ("zero", "scaled_l1"):
            return bool(np.all(np.isfinite(x)))
        if self.kind == "box":
            return bool(np.all(x >= self.lower - slack) and np.all(x <= self.upper + slack))
        if self.kind == "nonneg":
            return bool(np.all(x >= -slack))
        if self.kind == "simplex":
            return bool(np.all(x >= -slack) and abs(x.sum() - 1.0) <= max(slack, 1e-12 * x.size))
        return False

    def value(self, x) -> float:
        """Function value on the domain: indicators contribute 0, scaled_l1 its norm."""
        x = np.asarray(x, dtype=float)
        if self.kind == "scaled_l1":
            return self.weight * float(np.abs(x).sum())
        return 0.0 if self.contains(x, slack=1e-9) else np.inf

    def feasible_point(self, dim: int) -> np.ndarray:
        """An interior-ish point of the domain, used to seed probes and starts."""
        if self.kind == "box":
            return 0.5 * (self.lower + self.upper) * np.ones(dim) if self.lower.size == dim else np.full(
                dim, 0.5 * float(self.lower.ravel()[0] + self.upper.ravel()[0])
            )
        if self.kind == "simplex":
            return np.full(dim, 1.0 / dim)
        return np.zeros(dim)


@dataclass
class SaddleProblem:
    """Finite-sum convex-concave saddle problem with block structure.

    Required oracles
    ----------------
    component_grad_x(l, i, x, y)
        Partial gradient of Phi_l with respect to primal block i.
    component_grad_y(l, j, x, y)
        Partial gradient of Phi_l with respect to dual block j.

    Optional fast paths (``grad_x``, ``grad_y``, ``batch_grad_x``) default to
    enumeration of the components; built-in problems override them with
    vectorized closures.  Function values (``phi_value``, ``phi_component``)
    are needed only by metrics and may stay ``None``, in which case metrics
    degrade gracefully.
    """

    structure: BlockStructure
    p: int
    primal_prox: list
    dual_prox: list
    component_grad_x: Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]
    component_grad_y: Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]
    lipschitz: "object" = None  # BlockLipschitz; typed loosely to avoid an import cycle
    grad_x: Optional[Callable] = None
    grad_y: Optional[Callable] = None
    batch_grad_x: Optional[Callable] = None
    full_grad_x: Optional[Callable] = None
    full_grad_y: Optional[Callable] = None
    phi_value: Optional[Callable] = None
    phi_component: Optional[Callable] = None
    start_x: Optional[np.ndarray] = None
    start_y: Optional[np.ndarray] = None
    name: str = "problem"
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if len(self.primal_prox) != self.structure.M:
            raise ValueError("need one primal prox spec per primal block")
        if len(self.dual_prox) != self.structure.N:
            raise ValueError("need one dual prox spec per dual block")
        if self.grad_x is None:
            self.grad_x = self._grad_x_enumerated
        if self.grad_y is None:
            self.grad_y = self._grad_y_enumerated
        if self.batch_grad_x is None:
            self.batch_grad_x = self._batch_grad_x_looped
        if self.full_grad_x is None:
            self.full_grad_x = lambda x, y: np.concatenate(
                [np.asarray(self.grad_x(i, x, y)) for i in range(self.structure.M)]
            )
        if self.full_grad_y is None:
            self.full_grad_y = lambda x, y: np.concatenate(
                [np.asarray(self.grad_y(j, x, y)) for j in range(self.structure.N)]
            )
        if self.start_x is None:
            self.start_x = np.concatenate(
                [self.primal_prox[i].feasible_point(d) for i, d in enumerate(self.structure.primal.dims)]
            )
        if self.start_y is None:
            self.start_y = np.concatenate(
                [self.dual_prox[j].feasible_point(d) for j, d in enumerate(self.structure.dual.dims)]
            )

    # -- default oracles built on the component closures ------------------
    def _grad_x_enumerated(self, i, x, y):
        acc = self.component_grad_x(0, i, x, y).astype(float, copy=True)
        for l in range(1, self.p):
            acc += self.component_grad_x(l, i, x, y)
        return acc / self.p

    def _grad_y_enumerated(self, j, x, y):
        acc = self.component_grad_y(0, j, x, y).astype(float, copy=True)
        for l in range(1, self.p):
            acc += self.component_grad_y(l, j, x, y)
        return acc / self.p

    def _batch_grad_x_looped(self, indices, i, x, y):
        indices = np.asarray(indices, dtype=int)
        acc = self.component_grad_x(int(indices[0]), i, x, y).astype(float, copy=True)
        for l in indices[1:]:
            acc += self.component_grad_x(int(l), i, x, y)
        return acc / indices.size

    # -- values ------------------------------------------------------------
    def f_value(self, x) -> float:
        lay = self.structure.primal
        return float(
            sum(self.primal_prox[i].value(x[lay.block_range(i)]) for i in range(lay.n_blocks))
            / lay.n_blocks
        )

    def h_value(self, y) -> float:
        lay = self.structure.dual
        return float(
            sum(self.dual_prox[j].value(y[lay.block_range(j)]) for j in range(lay.n_blocks))
            / lay.n_blocks
        )

    def lagrangian(self, x, y) -> Optional[float]:
        """L(x, y) = f(x) + Phi(x, y) - h(y); None when Phi values are unavailable."""
        if self.phi_value is None:
            return None
        return self.f_value(x) + float(self.phi_value(x, y)) - self.h_value(y)

    def in_domain(self, x, y, slack: float = DOMAIN_SLACK) -> bool:
        play, dlay = self.structure.primal, self.structure.dual
        ok_x = all(
            self.primal_prox[i].contains(x[play.block_range(i)], slack) for i in range(play.n_blocks)
        )
        ok_y = all(
            self.dual_prox[j].contains(y[dlay.block_range(j)], slack) for j in range(dlay.n_blocks)
        )
        return ok_x and ok_y


@dataclass
class ValidationReport:
    """Structured list of failed consistency checks; empty means the problem passed."""

    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok


def _probe_points(problem: SaddleProblem, rng: np.random.Generator, count: int):
    """Random domain points, obtained by proxing raw Gaussian draws block by block."""
    from .bregman import prox_step  # local import keeps module load order flexible

    pts = []
    for _ in range(count):
        x = np.empty(problem.structure.m)
        for i, d in enumerate(problem.structure.primal.dims):
            spec = problem.primal_prox[i]
            raw = rng.standard_normal(d)
            x[problem.structure.primal.block_range(i)] = prox_step(
                EUCLIDEAN, spec if not spec.geometry.is_entropy else ProxSpec.simplex(), np.zeros(d), 1.0, raw
            )
        y = np.empty(problem.structure.n)
        for j, d in enumerate(problem.structure.dual.dims):
            spec = problem.dual_prox[j]
            raw = rng.standard_normal(d)
            y[problem.structure.dual.block_range(j)] = prox_step(
                EUCLIDEAN, spec if not spec.geometry.is_entropy else ProxSpec.simplex(), np.zeros(d), 1.0, raw
            )
        pts.append((x, y))
    return pts


def validate_problem(
    problem: SaddleProblem,
    tolerance: float = 1e-8,
    probes: int = 3,
    seed: int = 0,
    max_enumeration: int = 10_000,
) -> ValidationReport:
    """Check the consistency promises of the finite-sum structure.

    Flags dimension mismatches, finite-sum gradient mismatches beyond
    ``tolerance`` at random domain probes (skipped when p exceeds
    ``max_enumeration``), empty prox domains, and Phi-value inconsistencies.
    Returns a report; never raises.
    """
    failures = []
    st = problem.structure
    rng = np.random.default_rng(seed)

    for i, spec in enumerate(problem.primal_prox):
        if spec.kind == "box" and spec.lower.size not in (1, st.primal.dims[i]):
            failures.append(f"primal block {i}: box bound length does not match block dimension")
        if spec.kind == "box" and np.any(spec.lower > spec.upper):
            failures.append(f"primal block {i}: empty box domain")
    for j, spec in enumerate(problem.dual_prox):
        if spec.kind == "box" and spec.lower.size not in (1, st.dual.dims[j]):
            failures.append(f"dual block {j}: box bound length does not match block dimension")
        if spec.kind == "box" and np.any(spec.lower > spec.upper):
            failures.append(f"dual block {j}: empty box domain")

    try:
        points = _probe_points(problem, rng, probes)
    except Exception as exc:  # noqa: BLE001 - report, never abort
        failures.append(f"could not generate probe points: {exc}")
        return ValidationReport(failures)

    for x, y in points:
        for i in range(st.M):
            try:
                g = np.asarray(problem.component_grad_x(0, i, x, y))
            except Exception as exc:  # noqa: BLE001
                failures.append(f"component_grad_x(0, {i}) raised: {exc}")
                continue
            if g.shape != (st.primal.dims[i],):
                failures.append(
                    f"component_grad_x block {i}: shape {g.shape} != ({st.primal.dims[i]},)"
                )
        for j in range(st.N):
            try:
                g = np.asarray(problem.component_grad_y(0, j, x, y))
            except Exception as exc:  # noqa: BLE001
                failures.append(f"component_grad_y(0, {j}) raised: {exc}")
                continue
            if g.shape != (st.dual.dims[j],):
                failures.append(
                    f"component_grad_y block {j}: shape {g.shape} != ({st.dual.dims[j]},)"
                )
        if failures:
            break

    if problem.p <= max_enumeration and not failures:
        for x, y in points:
            for i in range(st.M):
                try:
                    mean = problem._batch_grad_x_looped(np.arange(problem.p), i, x, y)
                    full = np.asarray(problem.grad_x(i, x, y))
                except Exception as exc:  # noqa: BLE001
                    failures.append(f"gradient enumeration failed at block {i}: {exc}")
                    continue
                err = np.linalg.norm(mean - full)
                if err > tolerance * (1.0 + np.linalg.norm(full)):
                    failures.append(
                        f"finite-sum mismatch at primal block {i}: "
                        f"|mean component grad - grad_x| = {err:.3e}"
                    )
            if problem.phi_value is not None and problem.phi_component is not None:
                total = sum(problem.phi_component(l, x, y) for l in range(problem.p)) / problem.p
                full = problem.phi_value(x, y)
                if abs(total - full) > tolerance * (1.0 + abs(full)):
                    failures.append(
                        f"Phi value mismatch: mean of components {total:.6e} vs full {full:.6e}"
                    )

    return ValidationReport(failures)
