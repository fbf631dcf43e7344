"""Small conic optimization layer for linear matrix inequalities.

Problems have the form::

    maximize    c . lam + offset
    subject to  base + sum_i lam_i * directions[i]  is PSD
                a_k . lam == r_k                   (equalities)
                g0 + G @ lam >= 0                  (elementwise, optional)

The embedded solver is a primal-dual interior-point method (Nesterov-Todd
scaling, Mehrotra predictor-corrector) working on real symmetric matrices.
Hermitian problems are mapped to real ones with :func:`realify` first.

The value reported as ``dual_value`` is the objective of the *primal
standard form* ``min <C, X>``, i.e. an upper bound for the maximization.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.linalg.blas import dsyrk

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
DEFAULT_TOL = 1e-8


class ProblemError(ValueError):
    """Raised for malformed conic problems."""


@dataclasses.dataclass(frozen=True)
class ConicProblem:
    """Affinely parameterized LMI with optional equalities and linear inequalities.

    ``directions`` has shape ``(m, n, n)``.  ``equalities`` is a pair
    ``(A, r)`` with ``A`` of shape ``(k, m)``; ``inequalities`` is a pair
    ``(g0, G)`` meaning ``g0 + G @ lam >= 0``.
    """

    base: np.ndarray
    directions: np.ndarray
    objective: np.ndarray
    offset: float = 0.0
    equalities: Optional[tuple] = None
    inequalities: Optional[tuple] = None

    def __post_init__(self):
        base = np.asarray(self.base)
        dirs = np.asarray(self.directions)
        if dirs.ndim == 2 and dirs.size == 0:
            dirs = dirs.reshape(0, *base.shape)
        n = base.shape[0]
        if base.shape != (n, n) or dirs.ndim != 3 or dirs.shape[1:] != (n, n):
            raise ProblemError("base and directions must be square matrices of one size")
        m = dirs.shape[0]
        obj = np.asarray(self.objective, dtype=float).reshape(-1)
        if obj.shape != (m,):
            raise ProblemError(f"objective has length {obj.size}, expected {m}")
        _check_hermitian(base, "base")
        for i in range(m):
            _check_hermitian(dirs[i], f"direction {i}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "objective", obj)
        if self.equalities is not None:
            a, r = self.equalities
            a = np.atleast_2d(np.asarray(a, dtype=float))
            r = np.atleast_1d(np.asarray(r, dtype=float))
            if a.shape[1] != m or a.shape[0] != r.shape[0]:
                raise ProblemError("equality rows must have length m")
            object.__setattr__(self, "equalities", (a, r))
        if self.inequalities is not None:
            g0, g = self.inequalities
            g0 = np.atleast_1d(np.asarray(g0, dtype=float))
            g = np.atleast_2d(np.asarray(g, dtype=float)).reshape(g0.size, m)
            object.__setattr__(self, "inequalities", (g0, g))

    @property
    def size(self) -> int:
        return self.base.shape[0]

    @property
    def variable_dim(self) -> int:
        return self.directions.shape[0]

    @property
    def is_complex(self) -> bool:
        return bool(np.iscomplexobj(self.base) and np.abs(self.base.imag).max(initial=0) > 0) or bool(
            np.iscomplexobj(self.directions) and np.abs(self.directions.imag).max(initial=0) > 0
        )

    def matrix(self, lam) -> np.ndarray:
        """Evaluate ``base + sum lam_i directions[i]``."""
        return self.base + np.tensordot(np.asarray(lam, dtype=float), self.directions, axes=1)


@dataclasses.dataclass
class ConicSolution:
    status: str
    primal_value: float
    dual_value: float
    lam: Optional[np.ndarray]
    residuals: dict
    iterations: int = 0

    @property
    def gap(self) -> float:
        return self.dual_value - self.primal_value


def _check_hermitian(a, what):
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise ProblemError(f"{what} is not Hermitian")


def realify_matrix(h: np.ndarray) -> np.ndarray:
    """Map an n x n Hermitian matrix to the 2n x 2n real symmetric embedding."""
    h = np.asarray(h)
    if h.ndim == 3:
        return np.stack([realify_matrix(x) for x in h]) if len(h) else np.zeros((0, 2 * h.shape[1], 2 * h.shape[1]))
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def realify(p: ConicProblem) -> ConicProblem:
    """Return the equivalent problem over real symmetric matrices of twice the size.

    ``H`` is PSD iff ``[[Re H, -Im H], [Im H, Re H]]`` is PSD; the spectrum of
    the image is the spectrum of ``H`` with doubled multiplicity.
    """
    n = p.size
    dirs = p.directions
    out = np.empty((dirs.shape[0], 2 * n, 2 * n))
    for i in range(dirs.shape[0]):
        out[i] = realify_matrix(dirs[i])
    return ConicProblem(
        base=realify_matrix(p.base),
        directions=out,
        objective=p.objective,
        offset=p.offset,
        equalities=p.equalities,
        inequalities=p.inequalities,
    )


# ---------------------------------------------------------------------------
# equality elimination


def _eliminate(p: ConicProblem, tol: float):
    """Substitute ``lam = lam0 + Z @ mu`` so that all equalities hold.

    Returns ``(base, directions, objective, offset, ineq, lam0, Z)`` or ``None``
    if the equalities are inconsistent.
    """
    m = p.variable_dim
    if p.equalities is None or m == 0:
        if p.equalities is not None:
            a, r = p.equalities
            if np.abs(r).max(initial=0.0) > tol:
                return None
        return p.base, p.directions, p.objective, p.offset, p.inequalities, np.zeros(m), None
    a, r = p.equalities
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    rank = int((s > 1e-12 * max(1.0, s.max(initial=0.0))).sum())
    lam0 = vt[:rank].T @ ((u[:, :rank].T @ r) / s[:rank])
    if np.linalg.norm(a @ lam0 - r) > max(tol, 1e-9) * max(1.0, np.linalg.norm(r)):
        return None
    z = vt[rank:].T
    base = p.base + np.tensordot(lam0, p.directions, axes=1)
    dirs = np.tensordot(z.T, p.directions, axes=1)
    obj = z.T @ p.objective
    offset = p.offset + float(p.objective @ lam0)
    ineq = None
    if p.inequalities is not None:
        g0, g = p.inequalities
        ineq = (g0 + g @ lam0, g @ z)
    return base, dirs, obj, offset, ineq, lam0, z


# ---------------------------------------------------------------------------
# interior point core


def _svec_rows(a: np.ndarray, idx=None) -> np.ndarray:
    n = a.shape[-1]
    flat, w = _svec_index(n) if idx is None else idx
    return np.take(a.reshape(a.shape[0], n * n), flat, axis=1) * w


def _svec_index(n):
    iu = np.triu_indices(n)
    return iu[0] * n + iu[1], np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))


def _max_step(lam: np.ndarray, d: np.ndarray) -> float:
    """Largest a with diag(lam) + a * d PSD (lam > 0)."""
    s = 1.0 / np.sqrt(lam)
    ev = np.linalg.eigvalsh(s[:, None] * d * s[None, :])[0]
    return np.inf if ev >= 0 else -1.0 / ev


def _max_step_lp(x, dx):
    neg = dx < 0
    return np.inf if not neg.any() else float(np.min(-x[neg] / dx[neg]))


def _ipm(C, F, b, g0, G, tol, maxit, gamma_max=0.99):
    """Solve  max b.y  s.t.  C + sum y_i F_i PSD,  g0 + G y >= 0.

    Internally the standard pair  min <C,X> + g0.x  s.t.  -<F_i,X> - G^T x = b_i.
    """
    m, n, _ = F.shape
    ell = 0 if g0 is None else g0.size
    Ff = F.reshape(m, -1)
    if ell:
        gT = G.T  # (m, ell)

    def aop(X, x):
        out = -(Ff @ X.ravel())
        if ell:
            out -= gT @ x
        return out

    def aadj(y):
        S = -(y @ Ff).reshape(n, n)
        s = -(G @ y) if ell else None
        return S, s

    nF = np.sqrt((Ff**2).sum(1) + ((G**2).sum(0) if ell else 0.0))
    nC = np.sqrt(np.linalg.norm(C) ** 2 + (g0 @ g0 if ell else 0.0))
    nb = np.linalg.norm(b)
    xi = max(10.0, np.sqrt(n), n * float(np.max((1 + np.abs(b)) / (1 + nF), initial=1.0)))
    eta = max(10.0, np.sqrt(n), float(nF.max(initial=0.0)), nC)
    X = xi * np.eye(n)
    S = eta * np.eye(n)
    x = xi * np.ones(ell)
    s = eta * np.ones(ell)
    y = np.zeros(m)
    nu = n + ell
    sv_idx = _svec_index(n)
    best = None
    history = []
    near = []  # iterates with small gap and dual residual, candidates for polishing
    for it in range(maxit + 1):
        Sa, sa = aadj(y)
        Rp = b - aop(X, x)
        Rd = C - S - Sa
        rd = (g0 - s - sa) if ell else None
        pobj = float(np.vdot(C, X) + (g0 @ x if ell else 0.0))
        dobj = float(b @ y)
        mu = (float(np.vdot(X, S)) + (x @ s if ell else 0.0)) / nu
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pinf = np.linalg.norm(Rp) / (1 + nb)
        dres = np.linalg.norm(Rd) ** 2 + (rd @ rd if ell else 0.0)
        dinf = np.sqrt(dres) / (1 + nC)
        err = max(gap, pinf, dinf)
        history.append(err)
        if best is None or err < best["err"]:
            best = dict(err=err, y=y.copy(), X=X.copy(), x=x.copy(), pobj=pobj, dobj=dobj,
                        gap=gap, pinf=pinf, dinf=dinf, it=it)
        if err < tol:
            break
        if max(gap, dinf) < tol and pinf < 1e-3:
            near.append(dict(err=err, y=y.copy(), X=X.copy(), x=x.copy(), pobj=pobj, dobj=dobj,
                             gap=gap, pinf=pinf, dinf=dinf, it=it))
            near = sorted(near, key=lambda c: c["pinf"])[:3]
        # infeasible LMI: X grows along a direction with A(X) ~ 0 and <C,X> < 0
        xn = np.linalg.norm(X) + (np.linalg.norm(x) if ell else 0.0)
        if xn > 1e8 * xi:
            ax = aop(X, x) / xn
            if pobj / xn < -1e-7 and np.linalg.norm(ax) < 1e-6 * max(1.0, nb):
                best["infeasible"] = True
                break
        if it == maxit:
            break
        if it >= 10 and min(history[-8:]) >= best["err"] and history.index(best["err"]) < it - 8:
            break
        try:
            Ls = np.linalg.cholesky(S)
            Lx = np.linalg.cholesky(X)
        except np.linalg.LinAlgError:
            break
        _, sv, vh = np.linalg.svd(Ls.T @ Lx)
        Gm = (Lx @ vh.T) * (1.0 / np.sqrt(sv))
        lam = sv
        W = Gm @ Gm.T
        F1 = (F.reshape(m * n, n) @ Gm).reshape(m, n, n)
        Ft = (F1.transpose(0, 2, 1).reshape(m * n, n) @ Gm).reshape(m, n, n)
        Fv = _svec_rows(Ft, sv_idx)
        M = dsyrk(1.0, Fv)
        M = np.triu(M) + np.triu(M, 1).T
        if ell:
            M += (gT * (x / s)) @ G
        reg = 0.0
        diag_scale = max(1.0, float(np.abs(np.diag(M)).max(initial=1.0)))
        while True:
            try:
                Mc = sla.cho_factor(M + reg * np.eye(m), check_finite=False) if m else None
                break
            except np.linalg.LinAlgError:
                reg = 1e-13 * diag_scale if reg == 0 else reg * 100
                if reg > 1e-3 * diag_scale:
                    Mc = None
                    break
        if m and Mc is None:
            break
        WRdW = W @ Rd @ W

        def lin_x(v):
            # primal direction induced by dy = v, through the same chain as below
            Sv, sv_ = aadj(v)
            Dv = Gm.T @ Sv @ Gm
            return Dv, Gm @ Dv @ Gm.T, ((x / s) * sv_ if ell else None)

        def pcg(r, target):
            # the factor of the formed Schur matrix loses accuracy as mu -> 0;
            # use it as a preconditioner for CG on the operator itself
            v = sla.cho_solve(Mc, r, check_finite=False)
            r = r - aop(*lin_x(v)[1:])
            best_v, best_r = v, np.linalg.norm(r)
            z = sla.cho_solve(Mc, r, check_finite=False)
            pdir, rz = z, r @ z
            for _ in range(50):
                if best_r <= target or rz <= 0:
                    break
                q = aop(*lin_x(pdir)[1:])
                pq = pdir @ q
                if pq <= 0:
                    break
                alpha = rz / pq
                v = v + alpha * pdir
                r = r - alpha * q
                rn = np.linalg.norm(r)
                if rn < best_r:
                    best_v, best_r = v, rn
                z = sla.cho_solve(Mc, r, check_finite=False)
                rz, rz_old = r @ z, rz
                pdir = z + (rz / rz_old) * pdir
            return best_v

        def direction(Rc, rc):
            Hc = Rc / ((lam[:, None] + lam[None, :]) / 2.0)
            rhs = Rp - aop(Gm @ Hc @ Gm.T, rc / s if ell else None) + aop(WRdW, (x / s) * rd if ell else None)
            target = min(1e-2 * np.linalg.norm(Rp), 1e-3 * tol * (1 + nb))
            dy = pcg(rhs, target) if m else np.zeros(0)
            dSa, dsa = aadj(dy)
            dS = Rd - dSa
            DS = Gm.T @ dS @ Gm
            DX = Hc - DS
            dX = Gm @ DX @ Gm.T
            if ell:
                ds = rd - dsa
                dx = rc / s - (x / s) * ds
            else:
                ds = dx = None
            # rounding in the reconstruction leaves A(dX) off Rp; correct the
            # primal direction alone (dy and dS stay as they are)
            for _ in range(3 if m else 0):
                res = Rp - aop(dX, dx)
                if np.linalg.norm(res) <= target:
                    break
                Dv, cX, cx = lin_x(pcg(res, 1e-2 * target))
                DX = DX + Dv
                dX = dX + cX
                if ell:
                    dx = dx + cx
            return dX, dy, dS, DX, DS, dx, ds

        def steps(DX, DS, dx, ds):
            ap = _max_step(lam, DX)
            ad = _max_step(lam, DS)
            if ell:
                ap = min(ap, _max_step_lp(x, dx))
                ad = min(ad, _max_step_lp(s, ds))
            return ap, ad

        L2 = np.diag(lam**2)
        dX, dy, dS, DX, DS, dx, ds = direction(-L2, -x * s if ell else None)
        ap, ad = steps(DX, DS, dx, ds)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (float(np.vdot(X + ap * dX, S + ad * dS)) +
                  (float((x + ap * dx) @ (s + ad * ds)) if ell else 0.0)) / nu
        sigma = min(1.0, (mu_aff / mu) ** 3)
        corr = (DX @ DS + DS @ DX) / 2.0
        rc = (sigma * mu - x * s - dx * ds) if ell else None
        dX, dy, dS, DX, DS, dx, ds = direction(sigma * mu * np.eye(n) - L2 - corr, rc)
        ap, ad = steps(DX, DS, dx, ds)
        gamma = 0.9 + (gamma_max - 0.9) * min(1.0, ap, ad)
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        for _ in range(30):
            Xn = X + ap * dX
            Sn = S + ad * dS
            Xn = (Xn + Xn.T) / 2
            Sn = (Sn + Sn.T) / 2
            try:
                np.linalg.cholesky(Xn)
                np.linalg.cholesky(Sn)
                break
            except np.linalg.LinAlgError:
                ap *= 0.8
                ad *= 0.8
        X, S = Xn, Sn
        y = y + ad * dy
        if ell:
            x = np.maximum(x + ap * dx, 1e-300)
            s = np.maximum(s + ad * ds, 1e-300)
    if best["err"] >= tol and not best.get("infeasible"):
        for cand in near:
            pol = _polish(C, F, b, g0, G, cand)
            if pol is not None and pol["err"] < best["err"]:
                best = pol
                if pol["err"] < tol:
                    break
    return best


def _polish(C, F, b, g0, G, it):
    """Project an iterate onto the equality constraints of the min problem.

    The correction is the least-squares solution in the metric of the
    iterate itself, ``dX = R E R^T`` with ``X = R R^T`` and ``dx = x * e``, so
    the corrected pair stays in the cone exactly when ``I + E`` is PSD and
    ``1 + e > 0``.  Returns the updated iterate, or None if the correction
    leaves the cone.
    """
    m, n, _ = F.shape
    ell = 0 if g0 is None else g0.size
    X, x, y = it["X"], it["x"], it["y"]
    Ff = F.reshape(m, -1)

    def aop(X, x):
        out = -(Ff @ X.ravel())
        return out - G.T @ x if ell else out

    r = b - aop(X, x)
    w, V = np.linalg.eigh(X)
    R = V * np.sqrt(np.maximum(w, 0.0))
    iu = np.triu_indices(n)
    FR = np.einsum("iab,ap,bq->ipq", F, R, R, optimize=True)
    cols = -FR[:, iu[0], iu[1]] * np.where(iu[0] == iu[1], 1.0, 2.0)
    if ell:
        cols = np.hstack([cols, -(G.T * x)])
    try:
        sol = sla.lstsq(cols, r, cond=1e-13, lapack_driver="gelsd", check_finite=False)[0]
    except (np.linalg.LinAlgError, ValueError):
        return None
    k = iu[0].size
    E = np.zeros((n, n))
    E[iu] = sol[:k]
    E = E + np.triu(E, 1).T
    e = sol[k:]
    if np.linalg.eigvalsh(np.eye(n) + E)[0] <= 0 or (ell and np.min(1.0 + e) <= 0):
        return None
    Xn = X + R @ E @ R.T
    Xn = (Xn + Xn.T) / 2
    xn = x * (1.0 + e) if ell else x
    nb = np.linalg.norm(b)
    pinf = np.linalg.norm(b - aop(Xn, xn)) / (1 + nb)
    pobj = float(np.vdot(C, Xn) + (g0 @ xn if ell else 0.0))
    gap = abs(pobj - it["dobj"]) / (1 + abs(pobj) + abs(it["dobj"]))
    return dict(it, X=Xn, x=xn, pobj=pobj, gap=gap, pinf=pinf, err=max(gap, pinf, it["dinf"]), polished=True)


def solve(p: ConicProblem, tol: float = DEFAULT_TOL, maxit: int = 100) -> ConicSolution:
    """Solve ``p`` and return primal (achieved) and dual (upper bound) values.

    ``status`` is ``optimal`` when relative gap and both residuals are below
    ``tol``; ``infeasible`` when the equalities are inconsistent or the LMI
    admits an infeasibility certificate; ``inaccurate`` otherwise, with the
    best iterate found.
    """
    if p.is_complex:
        p = realify(p)
    elif np.iscomplexobj(p.base) or np.iscomplexobj(p.directions):
        p = dataclasses.replace(p, base=p.base.real, directions=p.directions.real)
    elim = _eliminate(p, tol)
    if elim is None:
        return ConicSolution("infeasible", -np.inf, -np.inf, None, {"equality": True})
    base, dirs, obj, offset, ineq, lam0, z = elim
    base = np.asarray(base, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    g0, g = (ineq if ineq is not None else (None, None))
    if g0 is not None and g0.size == 0:
        g0 = g = None

    if dirs.shape[0] == 0:
        ok = np.linalg.eigvalsh(base)[0] >= -tol * max(1.0, np.abs(base).max(initial=0.0))
        if g0 is not None:
            ok = ok and bool(np.all(g0 >= -tol))
        if not ok:
            return ConicSolution("infeasible", -np.inf, -np.inf, None, {"fixed_point": True})
        lam = lam0.copy()
        return ConicSolution("optimal", offset, offset, lam, {"gap": 0.0, "pinf": 0.0, "dinf": 0.0})

    best = _ipm(base, dirs, obj, g0, g, tol, maxit)
    if best["err"] >= tol and not best.get("infeasible"):
        # near-degenerate problems: shorter steps keep the iterates centred
        retry = _ipm(base, dirs, obj, g0, g, tol, maxit, gamma_max=0.9)
        if retry["err"] < best["err"] and not retry.get("infeasible"):
            best = retry
    mu = best["y"]
    lam = lam0 + (z @ mu if z is not None else mu)
    res = {"gap": best["gap"], "pinf": best["pinf"], "dinf": best["dinf"]}
    if best.get("infeasible"):
        return ConicSolution("infeasible", -np.inf, -np.inf, None, res, best["it"])
    status = "optimal" if best["err"] < tol else "inaccurate"
    primal = float(obj @ mu) + offset
    dual = best["pobj"] + offset
    dual = max(dual, primal)
    log.debug("sdp %s it=%d primal=%.10g dual=%.10g", status, best["it"], primal, dual)
    return ConicSolution(status, primal, dual, lam, res, best["it"])


# ---------------------------------------------------------------------------
# SDPA sparse export


def to_sdpa(p: ConicProblem) -> str:
    """Export as an SDPA sparse (``.dat-s``) string.

    SDPA minimizes ``c . x`` subject to ``sum_i x_i F_i - F_0`` PSD.  We set
    ``F_0 = -base``, ``F_i = directions[i]`` and ``c = -objective``, so the
    SDPA optimum is minus ours (without ``offset``, which goes in a comment).
    Equalities become two opposite inequalities in a diagonal LP block, as
    do the linear inequalities.
    """
    if p.is_complex:
        p = realify(p)
    base = np.asarray(p.base, dtype=float)
    dirs = np.asarray(p.directions, dtype=float)
    m, n = dirs.shape[0], base.shape[0]
    lp0, lprows = [], []
    if p.equalities is not None:
        a, r = p.equalities
        for k in range(a.shape[0]):
            lp0 += [-r[k], r[k]]
            lprows += [a[k], -a[k]]
    if p.inequalities is not None:
        g0, g = p.inequalities
        for k in range(g0.size):
            lp0.append(g0[k])
            lprows.append(g[k])
    blocks = [n] + ([-len(lp0)] if lp0 else [])
    lines = [f"* dimcert export, offset {p.offset!r}", str(m), str(len(blocks)),
             " ".join(str(b) for b in blocks),
             " ".join(repr(float(-c)) for c in p.objective)]

    def emit(mat_idx, mtx, lpvals):
        iu = np.triu_indices(n)
        for i, j in zip(*iu):
            v = mtx[i, j]
            if v != 0.0:
                lines.append(f"{mat_idx} 1 {i + 1} {j + 1} {v!r}")
        for k, v in enumerate(lpvals):
            if v != 0.0:
                lines.append(f"{mat_idx} 2 {k + 1} {k + 1} {float(v)!r}")

    emit(0, -base, [-v for v in lp0])
    for i in range(m):
        emit(i + 1, dirs[i], [row[i] for row in lprows])
    return "\n".join(lines) + "\n"
