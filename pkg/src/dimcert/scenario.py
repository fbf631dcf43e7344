"""Prepare-and-measure games, behaviors and outcome post-processing.

Inputs are flattened as ``x = z * n_meas + y`` everywhere; behaviors are
stored as arrays of shape ``(n_out, n_x)`` so that ``p[b, x] = P(b|x)``.
For the d-level random access code, preparation ``z`` encodes the pair
``(a0, a1) = (z % d, z // d)``.
"""

from __future__ import annotations

import dataclasses
import hashlib

import numpy as np

NORM_TOL = 1e-9


class ScenarioError(ValueError):
    pass


@dataclasses.dataclass(frozen=True, eq=False)
class Scenario:
    """A communication game with payoff ``T = sum_{b,x} c[b,x] P(b|x)``."""

    n_prep: int
    n_meas: int
    n_out: int
    dim: int
    payoff: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=float)
        if payoff.shape != (self.n_out, self.n_prep * self.n_meas):
            raise ScenarioError(f"payoff must have shape {(self.n_out, self.n_x)}, got {payoff.shape}")
        if (payoff < 0).any():
            raise ScenarioError("payoff coefficients must be non-negative")
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)

    @property
    def n_x(self) -> int:
        return self.n_prep * self.n_meas

    @property
    def is_qrac(self) -> bool:
        return self.name == "qrac"

    def x_index(self, z: int, y: int) -> int:
        return z * self.n_meas + y

    def split_x(self, x: int) -> tuple[int, int]:
        return divmod(x, self.n_meas)

    def pair(self, z: int) -> tuple[int, int]:
        """The encoded pair ``(a0, a1)`` of a QRAC preparation."""
        return z % self.n_out, z // self.n_out

    def correct(self, z: int, y: int) -> int:
        """The rewarded answer ``a_y`` for input ``(z, y)``."""
        return self.pair(z)[y]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.name}:{self.n_prep}:{self.n_meas}:{self.n_out}:{self.dim}".encode())
        h.update(np.ascontiguousarray(self.payoff).tobytes())
        return h.hexdigest()[:16]


def make_qrac_scenario(d: int) -> Scenario:
    """The d-level random access code with two measurements.

    Every input ``(z, y)`` rewards exactly one answer ``a_y`` with weight
    ``1 / (2 d^2)``.
    """
    if int(d) != d or d < 2:
        raise ScenarioError(f"invalid dimension {d!r}: need an integer d >= 2")
    d = int(d)
    payoff = np.zeros((d, 2 * d * d))
    for z in range(d * d):
        a = (z % d, z // d)
        for y in range(2):
            payoff[a[y], 2 * z + y] = 1.0 / (2 * d * d)
    return Scenario(n_prep=d * d, n_meas=2, n_out=d, dim=d, payoff=payoff, name="qrac")


def check_behavior(s: Scenario, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (s.n_out, s.n_x):
        raise ScenarioError(f"behavior shape {p.shape} does not match scenario {(s.n_out, s.n_x)}")
    return p


def validate_behavior(p: np.ndarray, tol: float = NORM_TOL) -> None:
    """Raise unless every column of ``p`` is a probability distribution."""
    if (p < -tol).any() or (p > 1 + tol).any():
        raise ScenarioError("behavior entries must lie in [0, 1]")
    err = np.abs(p.sum(axis=0) - 1).max()
    if err > tol:
        raise ScenarioError(f"behavior columns not normalized (max error {err:.2e})")


def uniform_behavior(s: Scenario) -> np.ndarray:
    return np.full((s.n_out, s.n_x), 1.0 / s.n_out)


def eval_T(s: Scenario, p) -> float:
    """Security parameter ``sum_{b,x} c[b,x] P(b|x)``."""
    p = check_behavior(s, p)
    return float(np.sum(s.payoff * p))


def success_probabilities(s: Scenario, p) -> np.ndarray:
    """``P(a_y | x)`` for each flattened QRAC input ``x``."""
    p = check_behavior(s, p)
    if not s.is_qrac:
        raise ScenarioError("success probabilities are defined for QRAC scenarios only")
    idx = [s.correct(*s.split_x(x)) for x in range(s.n_x)]
    return p[idx, np.arange(s.n_x)]


def binarize(s: Scenario, p) -> np.ndarray:
    """Post-process outcomes into ``B' = 0`` iff ``B = a_y``.

    Returns a ``(2, n_x)`` behavior.  When ``n_out > 2`` a behavior that is
    already binary is read as (success, failure) rows and returned unchanged.
    For ``n_out == 2`` the shapes coincide and the input is always taken as
    raw outcomes.
    """
    if not s.is_qrac:
        raise ScenarioError("binarization is defined for QRAC scenarios only")
    p = np.asarray(p, dtype=float)
    if s.n_out > 2 and p.shape == (2, s.n_x):
        return p.copy()
    succ = success_probabilities(s, p)
    return np.vstack([succ, 1.0 - succ])


def binary_scenario(s: Scenario) -> Scenario:
    """Payoff induced on binarized behaviors: outcome 0 carries ``1/(2 d^2)``."""
    payoff = np.zeros((2, s.n_x))
    payoff[0] = s.payoff.max(axis=0)
    return Scenario(n_prep=s.n_prep, n_meas=s.n_meas, n_out=2, dim=s.dim, payoff=payoff, name="qrac-binary")


@dataclasses.dataclass(frozen=True)
class GenerationSet:
    """Ordered inputs ``(z, y)`` whose rounds produce output randomness."""

    inputs: tuple

    def __post_init__(self):
        inputs = tuple((int(z), int(y)) for z, y in self.inputs)
        if not inputs:
            raise ScenarioError("generation set must be non-empty")
        if len(set(inputs)) != len(inputs):
            raise ScenarioError("generation set entries must be distinct")
        object.__setattr__(self, "inputs", inputs)

    def __len__(self):
        return len(self.inputs)

    def __iter__(self):
        return iter(self.inputs)

    def __getitem__(self, i):
        return self.inputs[i]

    @property
    def K(self) -> int:
        return len(self.inputs)

    @property
    def distinct_z(self) -> bool:
        zs = [z for z, _ in self.inputs]
        return len(set(zs)) == len(zs)

    def flat(self, s: Scenario) -> list[int]:
        for z, y in self.inputs:
            if not (0 <= z < s.n_prep and 0 <= y < s.n_meas):
                raise ScenarioError(f"input {(z, y)} outside scenario alphabets")
        return [s.x_index(z, y) for z, y in self.inputs]

    def prefix(self, k: int) -> "GenerationSet":
        return GenerationSet(self.inputs[:k])


def default_generation_set(s: Scenario, K: int) -> GenerationSet:
    """``x_j = (z=j, y=j mod 2)`` for ``j < K``."""
    if int(K) != K or not 1 <= K <= s.n_prep:
        raise ScenarioError(f"K={K} out of range 1..{s.n_prep}")
    return GenerationSet(tuple((j, j % s.n_meas) for j in range(int(K))))
