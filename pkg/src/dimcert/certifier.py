"""Outer relaxation of the dimension-bounded moment set and min-entropy bounds.

A moment matrix is the Gram matrix ``G[u, v] = tr(u^dag v)`` of a list of
operators (identity, states, effects and selected products) taken from one
dimension-``d`` realization.  Sampling many realizations and taking their
affine hull, then intersecting with the PSD cone, gives a convex outer
approximation of the set of all such matrices.  Probabilities
``P(b|z,y) = tr(rho_z M_{b|y})`` are entries of the matrix, so any linear
function of the behavior becomes a linear function of the affine
coefficients and can be maximized with an SDP.

Only the real part of ``G`` is kept.  Complex conjugating every operator of
a realization gives another valid realization with the conjugate moment
matrix, so the real part is the midpoint of two points of the true set, and
every probability is real.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import functools
import hashlib
import io
import itertools
import json
import logging
import math
import os
import struct
import time
from typing import Optional, Sequence

import numpy as np

from . import sdp
from .scenario import GenerationSet, Scenario, ScenarioError, default_generation_set, make_qrac_scenario
from .strategy import haar_unitary, ideal_qrac_strategy

log = logging.getLogger(__name__)

MAGIC = b"DIMCERT-BASIS-v1"
MONOMIAL_LISTS = ("level1", "success", "success+mm", "success+mm2")
POLICIES = ("projective", "rank1", "general")
DEFAULT_LIST = "success+mm"
DEFAULT_POLICY = "projective"
DEFAULT_TOL = 1e-7
BOUNDARY_BAND = 1e-6
FACE_TOL = 1e-9


class CertificationError(RuntimeError):
    """An assignment SDP did not reach optimal status."""


class InfeasibleError(CertificationError):
    """The requested ``t`` lies outside the relaxation."""


# ---------------------------------------------------------------------------
# monomials and sampling


def monomial_list(s: Scenario, kind: str = DEFAULT_LIST) -> list[tuple]:
    """Operator labels in matrix order.

    ``("I",)``, ``("rho", z)``, ``("M", y, b)``, ``("rhoM", z, y, b)`` for
    ``rho_z M_{b|y}``, ``("MM", b, c)`` for ``M_{b|0} M_{c|1}`` and
    ``("MMr", c, b)`` for ``M_{c|1} M_{b|0}``.

    ``success+mm`` keeps one product order only, which makes the relaxation
    slightly asymmetric under swapping the two settings; ``success+mm2``
    adds the reversed products and is symmetric, at a larger matrix size.
    """
    if kind not in MONOMIAL_LISTS:
        raise ValueError(f"unknown monomial list {kind!r}; choose from {MONOMIAL_LISTS}")
    mons = [("I",)]
    mons += [("rho", z) for z in range(s.n_prep)]
    mons += [("M", y, b) for y in range(s.n_meas) for b in range(s.n_out)]
    if kind != "level1":
        if not s.is_qrac:
            raise ScenarioError(f"monomial list {kind!r} needs a QRAC scenario")
        mons += [("rhoM", z, y, s.correct(z, y)) for z in range(s.n_prep) for y in range(s.n_meas)]
    if kind in ("success+mm", "success+mm2"):
        mons += [("MM", b, c) for b in range(s.n_out) for c in range(s.n_out)]
    if kind == "success+mm2":
        mons += [("MMr", c, b) for c in range(s.n_out) for b in range(s.n_out)]
    return mons


def _random_projective(d, n_out, rng, random_rank):
    u = haar_unitary(d, rng)
    eff = np.zeros((n_out, d, d), complex)
    labels = rng.integers(0, n_out, size=d) if random_rank else np.arange(d) % n_out
    for k in range(d):
        eff[labels[k]] += np.outer(u[:, k], u[:, k].conj())
    return eff


def _random_povm(d, n_out, rng):
    a = rng.standard_normal((n_out, d, d)) + 1j * rng.standard_normal((n_out, d, d))
    a = a @ a.conj().transpose(0, 2, 1)
    w, v = np.linalg.eigh(a.sum(axis=0))
    inv = (v / np.sqrt(w)) @ v.conj().T
    return inv @ a @ inv


def _random_state(d, rng, mixed):
    u = haar_unitary(d, rng)
    if not mixed:
        return np.outer(u[:, 0], u[:, 0].conj())
    r = int(rng.integers(1, d + 1))
    w = rng.dirichlet(np.ones(r))
    return (u[:, :r] * w) @ u[:, :r].conj().T


def sample_operators(s: Scenario, rng: np.random.Generator, policy: str = DEFAULT_POLICY):
    """Draw states ``(n_prep, d, d)`` and effects ``(n_meas, n_out, d, d)``.

    ``projective``: Haar pure states, projective measurements whose rank
    profile is random (each eigenvector of a Haar basis gets a uniformly
    random outcome).  ``rank1``: pure states and rank-one projective
    measurements.  ``general``: adds mixed states and random POVMs.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown sampling policy {policy!r}; choose from {POLICIES}")
    d = s.dim
    mixed = policy == "general"
    states = np.array([_random_state(d, rng, mixed and rng.random() < 0.5) for _ in range(s.n_prep)])
    meas = []
    for _ in range(s.n_meas):
        if policy == "general" and rng.random() < 0.5:
            meas.append(_random_povm(d, s.n_out, rng))
        else:
            meas.append(_random_projective(d, s.n_out, rng, policy != "rank1"))
    return states, np.array(meas)


def moment_matrix(monomials, states, meas) -> np.ndarray:
    """Real part of the Gram matrix ``tr(u^dag v)`` of the listed operators."""
    d = states.shape[1]
    ops = []
    for mon in monomials:
        kind = mon[0]
        if kind == "I":
            ops.append(np.eye(d))
        elif kind == "rho":
            ops.append(states[mon[1]])
        elif kind == "M":
            ops.append(meas[mon[1], mon[2]])
        elif kind == "rhoM":
            ops.append(states[mon[1]] @ meas[mon[2], mon[3]])
        elif kind == "MM":
            ops.append(meas[0, mon[1]] @ meas[1, mon[2]])
        elif kind == "MMr":
            ops.append(meas[1, mon[1]] @ meas[0, mon[2]])
        else:
            raise ValueError(f"bad monomial {mon!r}")
    v = np.array(ops).reshape(len(ops), -1)
    return (v.conj() @ v.T).real


def sample_realization(s: Scenario, rng: np.random.Generator, policy: str = DEFAULT_POLICY,
                       monomials: Optional[list] = None) -> np.ndarray:
    """Moment matrix of one random realization."""
    mons = monomial_list(s) if monomials is None else monomials
    return moment_matrix(mons, *sample_operators(s, rng, policy))


# ---------------------------------------------------------------------------
# basis


def _svec_index(n):
    iu = np.triu_indices(n)
    w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return iu, w


def _svec(g, iu, w):
    return g[..., iu[0], iu[1]] * w


def _smat(v, n, iu, w):
    out = np.zeros(v.shape[:-1] + (n, n))
    out[..., iu[0], iu[1]] = v / w
    out[..., iu[1], iu[0]] = v / w
    return out


@dataclasses.dataclass(frozen=True, eq=False)
class MomentBasis:
    """Affine parameterization ``G(lam) = center + sum_i lam_i directions[i]``.

    Directions are orthonormal under the trace inner product.  ``face`` is an
    orthonormal basis of the range of ``center``; the kernel holds linear
    relations such as ``sum_b M_{b|y} = I`` that every realization satisfies,
    so feasible matrices are compressed onto it.
    """

    monomials: tuple
    center: np.ndarray
    directions: np.ndarray
    meta: dict

    @property
    def n(self) -> int:
        return len(self.monomials)

    @property
    def m(self) -> int:
        return self.directions.shape[0]

    @functools.cached_property
    def index(self) -> dict:
        return {mon: i for i, mon in enumerate(self.monomials)}

    def prob_entry(self, z: int, y: int, b: int) -> tuple[int, int]:
        """Matrix position holding ``P(b|z,y)``."""
        return self.index[("rho", z)], self.index[("M", y, b)]

    def matrix(self, lam) -> np.ndarray:
        return self.center + np.tensordot(np.asarray(lam, float), self.directions, axes=1)

    @functools.cached_property
    def face(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.center)
        return v[:, w > FACE_TOL * w.max()]

    @functools.cached_property
    def _reduced(self):
        v = self.face
        f0 = v.T @ self.center @ v
        f = np.matmul(np.matmul(v.T, self.directions), v)
        return (f0 + f0.T) / 2, (f + f.transpose(0, 2, 1)) / 2

    def linear(self, entries: Sequence[tuple], const: float = 0.0) -> tuple[float, np.ndarray]:
        """Affine functional ``const + sum w * G[i, j]`` as ``(offset, coefficients)``."""
        off = const
        coef = np.zeros(self.m)
        for i, j, w in entries:
            off += w * self.center[i, j]
            coef += w * self.directions[:, i, j]
        return off, coef

    def behavior(self, lam, s: Scenario) -> np.ndarray:
        g = self.matrix(lam)
        p = np.zeros((s.n_out, s.n_x))
        for z in range(s.n_prep):
            for y in range(s.n_meas):
                for b in range(s.n_out):
                    p[b, s.x_index(z, y)] = g[self.prob_entry(z, y, b)]
        return p

    def T_functional(self, s: Scenario) -> tuple[float, np.ndarray]:
        entries = []
        for z in range(s.n_prep):
            for y in range(s.n_meas):
                for b in range(s.n_out):
                    c = s.payoff[b, s.x_index(z, y)]
                    if c:
                        entries.append(self.prob_entry(z, y, b) + (c,))
        return self.linear(entries)

    @functools.cached_property
    def positivity(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows ``g0 + G lam >= 0`` stating ``P(b|z,y) >= 0``."""
        rows = [self.prob_entry(z, y, b) for z in range(self.meta["n_prep"])
                for y in range(self.meta["n_meas"]) for b in range(self.meta["n_out"])]
        g0 = np.array([self.center[i, j] for i, j in rows])
        g = np.array([self.directions[:, i, j] for i, j in rows])
        return g0, g

    def max_T(self, s: Scenario, tol: float = sdp.DEFAULT_TOL) -> float:
        """Upper bound on ``T`` over the relaxation (cached per basis)."""
        cache = self.__dict__.setdefault("_tmax", {})
        if tol not in cache:
            off, coef = self.T_functional(s)
            f0, f = self._reduced
            sol = sdp.solve(sdp.ConicProblem(f0, f, coef, offset=off, inequalities=self.positivity), tol=tol)
            cache[tol] = sol.dual_value
        return cache[tol]

    def check_scenario(self, s: Scenario) -> None:
        if self.meta.get("scenario") != s.fingerprint():
            raise ScenarioError("basis was built for a different scenario")

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def to_bytes(self) -> bytes:
        """Serialize.

        Layout: the 16-byte magic, a little-endian uint64 header length, a
        UTF-8 JSON header (monomials, n, m, meta), then float64 data in
        row-major order: the ``n x n`` center as interleaved (re, im) pairs,
        followed by each direction as its packed upper triangle (row-major,
        ``n(n+1)/2`` entries) as (re, im) pairs.
        """
        n, m = self.n, self.m
        header = json.dumps({"monomials": [list(x) for x in self.monomials], "n": n, "m": m,
                             "meta": self.meta}, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<Q", len(header)))
        buf.write(header)
        buf.write(_pairs(self.center.ravel()).tobytes())
        iu = np.triu_indices(n)
        buf.write(_pairs(self.directions[:, iu[0], iu[1]].ravel()).tobytes())
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "MomentBasis":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    @classmethod
    def from_bytes(cls, data: bytes) -> "MomentBasis":
        if not data.startswith(MAGIC):
            raise ValueError("not a DIMCERT-BASIS-v1 file")
        pos = len(MAGIC)
        (hlen,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        head = json.loads(data[pos:pos + hlen].decode())
        pos += hlen
        n, m = head["n"], head["m"]
        body = np.frombuffer(data, dtype="<f8", offset=pos)
        k = n * (n + 1) // 2
        if body.size != 2 * (n * n + m * k):
            raise ValueError("basis file is truncated or corrupt")
        center = body[: 2 * n * n : 2].reshape(n, n).copy()
        tri = body[2 * n * n :: 2].reshape(m, k)
        iu = np.triu_indices(n)
        dirs = np.zeros((m, n, n))
        dirs[:, iu[0], iu[1]] = tri
        dirs[:, iu[1], iu[0]] = tri
        mons = tuple(tuple(x) for x in head["monomials"])
        return cls(mons, center, dirs, head["meta"])


def _pairs(x):
    out = np.zeros(2 * x.size, dtype="<f8")
    out[0::2] = x
    return out


def build_moment_basis(s: Scenario, seed: int = 0, policy: str = DEFAULT_POLICY,
                       monomials: str = DEFAULT_LIST, stall: int = 64, svd_tol: float = 1e-7,
                       max_samples: int = 100_000) -> MomentBasis:
    """Sample realizations until ``stall`` consecutive ones add no new direction.

    Each new sample minus the first is orthogonalized (twice, for stability)
    against the current directions; the remainder counts as new when its
    norm exceeds ``svd_tol`` times the norm of the difference itself.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))
    mons = monomial_list(s, monomials)
    n = len(mons)
    iu, w = _svec_index(n)
    g_first = sample_realization(s, rng, policy, mons)
    total = g_first.copy()
    q = np.zeros((0, iu[0].size))
    run, count = 0, 1
    sat_log = [[1, 0]]
    t0 = time.time()
    while run < stall and count < max_samples:
        g = sample_realization(s, rng, policy, mons)
        total += g
        count += 1
        diff = _svec(g - g_first, iu, w)
        r = diff - q.T @ (q @ diff)
        r = r - q.T @ (q @ r)
        nr = np.linalg.norm(r)
        if nr > svd_tol * max(1.0, np.linalg.norm(diff)):
            q = np.vstack([q, r / nr])
            run = 0
            sat_log.append([count, q.shape[0]])
        else:
            run += 1
    center = total / count
    dirs = _smat(q, n, iu, w)
    meta = {
        "scenario": s.fingerprint(), "dim": s.dim, "n_prep": s.n_prep, "n_meas": s.n_meas,
        "n_out": s.n_out, "seed": int(seed), "policy": policy, "monomials": monomials,
        "samples": count, "affine_dim": int(q.shape[0]), "stall": stall, "svd_tol": svd_tol,
        "saturation": sat_log,
    }
    log.info("basis: n=%d m=%d samples=%d (%.1fs)", n, q.shape[0], count, time.time() - t0)
    return MomentBasis(tuple(mons), center, dirs, meta)


# ---------------------------------------------------------------------------
# assignments


def assignments(s: Scenario, K: int, mode: str):
    """All assignments in lexicographic order."""
    if mode == "binarized":
        return list(itertools.product((0, 1), repeat=K))
    if mode == "full":
        return list(itertools.product(range(s.n_out), repeat=K))
    raise ValueError(f"unknown mode {mode!r}")


def _objective_entries(s: Scenario, basis: MomentBasis, xprime: GenerationSet, a, mode):
    if len(a) != len(xprime):
        raise ValueError("assignment length differs from |X'|")
    entries, const = [], 0.0
    for (z, y), val in zip(xprime, a):
        if mode == "full":
            entries.append(basis.prob_entry(z, y, int(val)) + (1.0,))
        elif mode == "binarized":
            ij = basis.prob_entry(z, y, s.correct(z, y))
            if val == 0:
                entries.append(ij + (1.0,))
            else:
                const += 1.0
                entries.append(ij + (-1.0,))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return entries, const


def assignment_objective(s: Scenario, basis: MomentBasis, xprime: GenerationSet, a, mode: str = "binarized"):
    """Affine function of ``lam``: ``(offset, coefficients)``.

    Full mode sums ``P(b_x|x)``; binarized mode sums ``P(a_y|x)`` where the
    assignment is 0 and ``1 - P(a_y|x)`` where it is 1.
    """
    xprime.flat(s)
    entries, const = _objective_entries(s, basis, xprime, a, mode)
    return basis.linear(entries, const)


@dataclasses.dataclass
class AssignmentResult:
    assignment: tuple
    bound: float
    primal: float
    status: str
    iterations: int
    residuals: dict


def bound_assignment(s: Scenario, basis: MomentBasis, t: float, xprime: GenerationSet, a,
                     mode: str = "binarized", tol: float = DEFAULT_TOL, geq: bool = False) -> AssignmentResult:
    """Upper bound on the assignment objective over the relaxation at ``T = t``.

    Within ``BOUNDARY_BAND`` of the relaxation's largest ``T`` the slice
    ``T = t`` has no interior, so the constraint is relaxed to
    ``T >= t_max - BOUNDARY_BAND``, which contains the slice.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    off, coef = assignment_objective(s, basis, xprime, a, mode)
    t_off, t_coef = basis.T_functional(s)
    f0, f = basis._reduced
    g0, g = basis.positivity
    tmax = basis.max_T(s)
    a = tuple(int(v) for v in a)
    if t > tmax + 1e-6:
        return AssignmentResult(a, -math.inf, -math.inf, "infeasible", 0, {"t_max": tmax})
    if geq or t >= tmax - BOUNDARY_BAND:
        level = min(t, tmax - BOUNDARY_BAND)
        ineq = (np.append(g0, t_off - level), np.vstack([g, t_coef]))
        prob = sdp.ConicProblem(f0, f, coef, offset=off, inequalities=ineq)
    else:
        prob = sdp.ConicProblem(f0, f, coef, offset=off, equalities=([t_coef], [t - t_off]),
                                inequalities=(g0, g))
    sol = sdp.solve(prob, tol=tol)
    bound = sol.dual_value + tol if sol.status != "infeasible" else -math.inf
    return AssignmentResult(a, bound, sol.primal_value, sol.status, sol.iterations, sol.residuals)


# ---------------------------------------------------------------------------
# entropy


def min_entropy(p_guess: float) -> float:
    """``-log2(p_guess)`` in bits."""
    if not (p_guess > 0.0) or p_guess > 1.0 + 1e-12:
        raise ValueError(f"guessing probability {p_guess!r} outside (0, 1]")
    return max(0.0, -math.log2(min(p_guess, 1.0)))


def floor6(h: float) -> float:
    return math.floor(h * 1e6 + 1e-9) / 1e6


def critical_T(K: int, d: int = 4) -> float:
    """``T`` of the ideal strategy after the eigenvector attack on ``K`` inputs."""
    n = d * d
    if int(K) != K or not 1 <= K <= n:
        raise ValueError(f"K={K} out of range 1..{n}")
    if d == 4:
        return (16 - K) / 16 * 3 / 4 + K / 16 * 5 / 8
    s = make_qrac_scenario(d)
    q = ideal_qrac_strategy(d)
    per = float(np.mean([np.trace(q.states[0] @ q.measurements[y, s.correct(0, y)]).real for y in range(2)]))
    return (n - K) / n * per + K / n * (1 + 1 / d) / 2


@dataclasses.dataclass
class EntropyBound:
    t: float
    K: int
    xprime: tuple
    mode: str
    optima: list
    p_star: float
    H_bits: float
    margin: float
    basis_meta: dict
    status: str = "ok"
    argmax: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {
            "t": self.t, "K": self.K, "xprime": [list(x) for x in self.xprime], "mode": self.mode,
            "p_star": self.p_star, "H_bits": self.H_bits, "margin": self.margin, "status": self.status,
            "argmax": list(self.argmax) if self.argmax is not None else None,
            "assignments": [
                {"assignment": list(r.assignment), "bound": r.bound, "primal": r.primal, "status": r.status}
                for r in self.optima
            ],
            "basis_meta": {k: v for k, v in self.basis_meta.items() if k != "saturation"},
        }


def _default_threads():
    return os.cpu_count() or 1


def certify(s: Scenario, basis: MomentBasis, t: float, K: Optional[int] = None,
            xprime: Optional[GenerationSet] = None, mode: str = "binarized", tol: float = DEFAULT_TOL,
            threads: Optional[int] = None, geq: bool = False, strict: bool = True) -> EntropyBound:
    """Lower-bound the average min-entropy over ``X'`` at security parameter ``t``.

    Every assignment is bounded separately and ``p_star`` is the largest
    bound divided by ``K``.  With ``strict`` a :class:`CertificationError`
    is raised unless every assignment solved to optimal status.
    """
    basis.check_scenario(s)
    if xprime is None:
        if K is None:
            raise ValueError("give K or xprime")
        xprime = default_generation_set(s, K)
    elif K is not None and K != len(xprime):
        raise ValueError("K differs from |X'|")
    K = len(xprime)
    xprime.flat(s)
    todo = assignments(s, K, mode)
    threads = threads or _default_threads()
    run = functools.partial(bound_assignment, s, basis, t, xprime, mode=mode, tol=tol, geq=geq)
    if t > basis.max_T(s) + 1e-6:
        raise InfeasibleError(f"t={t} exceeds the relaxation maximum {basis.max_T(s):.9f}")
    if threads > 1 and len(todo) > 1:
        with concurrent.futures.ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, todo))
    else:
        results = [run(a) for a in todo]
    bad = [r for r in results if r.status != "optimal"]
    status = "ok" if not bad else "unverified"
    if bad and strict:
        raise CertificationError(
            f"{len(bad)} of {len(results)} assignment SDPs did not reach optimal status "
            f"(first: {bad[0].assignment} -> {bad[0].status})"
        )
    best = max(results, key=lambda r: r.bound)
    p_star = min(1.0, max(best.bound / K, 1.0 / (2 if mode == "binarized" else s.n_out)))
    return EntropyBound(t, K, tuple(xprime), mode, results, p_star, floor6(min_entropy(p_star)),
                        tol, dict(basis.meta), status, best.assignment)


def entropy_curve(s: Scenario, basis: MomentBasis, K: int, mode: str, t_grid, **kw) -> list:
    """``certify`` at each grid point; infeasible points give ``None``."""
    out = []
    for t in t_grid:
        try:
            out.append(certify(s, basis, float(t), K=K, mode=mode, **kw))
        except InfeasibleError:
            out.append(None)
    return out


def basis_digest(basis: MomentBasis) -> str:
    return hashlib.sha256(basis.to_bytes()).hexdigest()[:16]
