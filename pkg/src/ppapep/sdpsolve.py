"""Self-contained dense SDP solver for small Gram-form instances.

Maximizes <C, G> over PSD G, free F, and slacks s >= 0 subject to
<A_k, G> + b_k . F + s_k = c_k (the instance's constraints flipped to '<='
form).  The algorithm is an infeasible-start primal-dual interior-point
method with Nesterov-Todd scaling and a predictor-corrector step; for
matrix orders <= 64 each iteration is a handful of dense factorizations,
and convergence to KKT residuals ~1e-9 takes a few dozen iterations.  The
iterate with the best KKT merit is retained, so terminal ill-conditioning
of the Schur complement cannot spoil an already-converged run.

Every eigendecomposition (scaling point, step lengths, rank profiles) runs
through the in-repo eigensolver in `eiglib`, the package's numba hot path.
All operations are deterministic: same instance, tolerance, and iteration
cap reproduce the identical iterate sequence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import eiglib
from .pep import ConstraintId, SdpInstance

__all__ = [
    "SdpSolverError",
    "MaxIterationsExceeded",
    "NumericalBreakdown",
    "SdpSolution",
    "solve",
    "rank_profile",
]

_TRACE = False
_STALL_LIMIT = 30


class SdpSolverError(RuntimeError):
    """Base solver failure; carries the best residuals seen."""

    def __init__(self, message, primal_residual=None, dual_residual=None, gap=None, iterations=None):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.gap = gap
        self.iterations = iterations


class MaxIterationsExceeded(SdpSolverError):
    """Iteration cap hit before the KKT residuals reached the tolerance."""


class NumericalBreakdown(SdpSolverError):
    """A factorization failed or the iterates diverged."""


@dataclass(frozen=True)
class SdpSolution:
    """Converged primal-dual pair for a maximization instance."""

    value: float  # primal objective <C, G>
    dual_value: float
    gram: np.ndarray
    fvec: np.ndarray
    duals: dict[ConstraintId, float]
    primal_residual: float
    dual_residual: float
    gap: float
    complementarity: float
    iterations: int

    @property
    def gram_eigenvalues(self) -> np.ndarray:
        return eiglib.eigvalsh(self.gram)

    def to_json(self) -> str:
        doc = {
            "value": self.value,
            "dual_value": self.dual_value,
            "residuals": {
                "primal": self.primal_residual,
                "dual": self.dual_residual,
                "gap": self.gap,
                "complementarity": self.complementarity,
            },
            "iterations": self.iterations,
            "gram_eigenvalues": self.gram_eigenvalues.tolist(),
            "duals": {str(tag): v for tag, v in self.duals.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _chol_with_ridge(K):
    ridge = 0.0
    base = max(np.trace(K) / K.shape[0], 1.0)
    for attempt in range(4):
        try:
            return np.linalg.cholesky(K + ridge * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            ridge = base * 1e-14 if attempt == 0 else ridge * 100.0
    raise np.linalg.LinAlgError("Cholesky failed despite ridge escalation")


def _max_step_psd(X, dX):
    # largest t with X + t dX still PSD, via min eig of L^-1 dX L^-T
    L = np.linalg.cholesky(X)
    Y = np.linalg.solve(L, dX)
    S = np.linalg.solve(L, Y.T)
    S = 0.5 * (S + S.T)
    peak = float(np.max(np.abs(S))) if S.size else 0.0
    if not np.isfinite(peak) or peak > 1e40:
        raise np.linalg.LinAlgError("scaled step matrix overflowed")
    w = eiglib.eigvalsh(S)
    lmin = w[0]
    return np.inf if lmin >= 0.0 else -1.0 / lmin


def _max_step_pos(v, dv):
    mask = dv < 0.0
    if not np.any(mask):
        return np.inf
    return float(np.min(-v[mask] / dv[mask]))


def _confirm_psd_step(X, dX, alpha):
    # eigvalsh rounding can overestimate the safe step; back off until the
    # stepped matrix factors
    while alpha > 1e-13:
        try:
            np.linalg.cholesky(X + alpha * dX)
            return alpha
        except np.linalg.LinAlgError:
            alpha *= 0.8
    raise np.linalg.LinAlgError("no positive-definite step along the computed direction")


def solve(inst: SdpInstance, tol: float = 1e-8, max_iter: int = 200) -> SdpSolution:
    """Solve the instance to KKT residuals (primal, dual, gap) <= tol.

    Raises MaxIterationsExceeded or NumericalBreakdown with the best
    residuals attached when the path following cannot reach the tolerance.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    quads, lins, rhs = inst.normalized()
    m, n, _ = quads.shape
    nf = inst.fvec_dim
    C = inst.objective_quad.matrix
    obj_lin = np.asarray(inst.objective_lin, dtype=float)

    # equilibrate: unit-norm constraint rows and objective; duals and the
    # objective value are mapped back in make_solution
    row_scale = np.maximum(
        np.sqrt(np.sum(quads**2, axis=(1, 2)) + np.sum(lins**2, axis=1)), 1e-12
    )
    quads = quads / row_scale[:, None, None]
    lins = lins / row_scale[:, None]
    rhs = rhs / row_scale
    obj_scale = max(1.0, float(np.linalg.norm(C)), float(np.linalg.norm(obj_lin)))
    C = C / obj_scale
    obj_lin = obj_lin / obj_scale

    qflat = quads.reshape(m, n * n)
    eye = np.eye(n)

    cnorm = float(np.linalg.norm(rhs))
    Cnorm = float(np.linalg.norm(C))
    onorm = float(np.linalg.norm(obj_lin))
    xi_p = max(1.0, float(np.max(np.abs(rhs))) if m else 1.0)
    xi_d = max(1.0, Cnorm)

    G = xi_p * eye.copy()
    s = xi_p * np.ones(m)
    F = np.zeros(nf)
    Z = xi_d * eye.copy()
    y = xi_d * np.ones(m)

    gamma = 0.99
    best = None
    best_merit = np.inf
    stall = 0

    def make_solution(G_, F_, s_, y_, Z_, pinf_, dinf_, gap_, comp_, it_):
        y_orig = obj_scale * y_ / row_scale
        duals = {c.tag: float(y_orig[k]) for k, c in enumerate(inst.constraints)}
        return SdpSolution(
            value=obj_scale * float(np.sum(C * G_)),
            dual_value=obj_scale * float(rhs @ y_),
            gram=0.5 * (G_ + G_.T),
            fvec=F_.copy(),
            duals=duals,
            primal_residual=pinf_,
            dual_residual=dinf_,
            gap=gap_,
            complementarity=comp_,
            iterations=it_,
        )

    def finish_or_raise(kind, message, pinf_, dinf_, gap_, it_):
        if best is not None and best_merit <= tol:
            return make_solution(*best)
        raise kind(
            message, primal_residual=pinf_, dual_residual=dinf_, gap=gap_, iterations=it_
        )

    for it in range(max_iter + 1):
        AG = qflat @ G.ravel()
        rp = rhs - AG - lins @ F - s
        ZA = np.tensordot(y, quads, axes=1)
        RD = C + Z - ZA
        rf = obj_lin - lins.T @ y
        pobj = float(np.sum(C * G))
        dobj = float(rhs @ y)
        denom = 1.0 + abs(pobj) + abs(dobj)
        pinf = float(np.linalg.norm(rp)) / (1.0 + cnorm)
        dinf = max(
            float(np.linalg.norm(RD)) / (1.0 + Cnorm),
            float(np.linalg.norm(rf)) / (1.0 + onorm),
        )
        comp = (float(np.sum(G * Z)) + float(s @ y)) / denom
        relgap = abs(pobj - dobj) / denom
        merit = max(pinf, dinf, relgap)
        if merit <= tol:
            return make_solution(G, F, s, y, Z, pinf, dinf, relgap, comp, it)
        if merit < 0.999 * best_merit:
            best_merit = merit
            best = (G.copy(), F.copy(), s.copy(), y.copy(), Z.copy(), pinf, dinf, relgap, comp, it)
            stall = 0
        else:
            stall += 1
        if stall >= _STALL_LIMIT:
            return finish_or_raise(
                MaxIterationsExceeded,
                f"stalled after {it} iterations "
                f"(best primal {best_merit:.2e}; current primal {pinf:.2e}, "
                f"dual {dinf:.2e}, gap {relgap:.2e})",
                pinf,
                dinf,
                relgap,
                it,
            )
        if it == max_iter:
            return finish_or_raise(
                MaxIterationsExceeded,
                f"no convergence in {max_iter} iterations "
                f"(primal {pinf:.2e}, dual {dinf:.2e}, gap {relgap:.2e})",
                pinf,
                dinf,
                relgap,
                it,
            )
        if not np.isfinite(pobj) or float(np.linalg.norm(G)) > 1e14:
            return finish_or_raise(
                NumericalBreakdown,
                "iterates diverged; the instance may be unbounded",
                pinf,
                dinf,
                relgap,
                it,
            )

        mu = (float(np.sum(G * Z)) + float(s @ y)) / (n + m)
        try:
            # Nesterov-Todd scaling point W with W Z W = G
            Lg = np.linalg.cholesky(G)
            lam, U = eiglib.eigh(Lg.T @ Z @ Lg)
            lam = np.maximum(lam, 1e-300)
            Rw = (Lg @ U) * lam**-0.25
            W = Rw @ Rw.T
            V = np.matmul(np.matmul(W, quads), W)
            M = qflat @ V.reshape(m, n * n).T
            dvec = s / y
            K = 0.5 * (M + M.T) + np.diag(dvec)
            Lk = _chol_with_ridge(K)
            KiB = (
                np.linalg.solve(Lk.T, np.linalg.solve(Lk, lins)) if nf else np.zeros((m, 0))
            )
            S2 = lins.T @ KiB if nf else np.zeros((0, 0))
            Zinv = np.linalg.solve(Z, eye)
            Zinv = 0.5 * (Zinv + Zinv.T)
            WRDW = W @ RD @ W

            def block_solve(h, rf_):
                # [K -B; B^T 0] [dy; dF] = [h; rf_] by elimination through K
                Kih = np.linalg.solve(Lk.T, np.linalg.solve(Lk, h))
                if nf:
                    dF = np.linalg.solve(S2, rf_ - lins.T @ Kih)
                    dy = Kih + KiB @ dF
                else:
                    dF = np.zeros(0)
                    dy = Kih
                return dy, dF

            def direction(sigma_mu, comp_corr):
                rhs_mat = sigma_mu * Zinv - G + WRDW
                u = qflat @ rhs_mat.ravel()
                h = u + sigma_mu / y - s - comp_corr / y - rp
                dy, dF = block_solve(h, rf)
                # one refinement pass recovers digits lost to terminal
                # Schur ill-conditioning (and undoes any Cholesky ridge)
                res_h = h - (K @ dy - lins @ dF)
                res_f = rf - lins.T @ dy
                edy, edF = block_solve(res_h, res_f)
                dy = dy + edy
                dF = dF + edF
                dZ = np.tensordot(dy, quads, axes=1) - RD
                dG = sigma_mu * Zinv - G - W @ dZ @ W
                dG = 0.5 * (dG + dG.T)
                ds = sigma_mu / y - s - comp_corr / y - dvec * dy
                return dG, dF, ds, dy, dZ

            dGa, dFa, dsa, dya, dZa = direction(0.0, np.zeros(m))
            if not (np.isfinite(dGa).all() and np.isfinite(dsa).all() and np.isfinite(dya).all()):
                raise np.linalg.LinAlgError("search direction is not finite")
            ap = min(1.0, gamma * min(_max_step_psd(G, dGa), _max_step_pos(s, dsa)))
            ad = min(1.0, gamma * min(_max_step_psd(Z, dZa), _max_step_pos(y, dya)))
            gap_aff = float(np.sum((G + ap * dGa) * (Z + ad * dZa))) + float(
                (s + ap * dsa) @ (y + ad * dya)
            )
            sigma = min(max((gap_aff / ((n + m) * mu)) ** 3, 1e-8), 0.99)
            dG, dF, ds, dy, dZ = direction(sigma * mu, dsa * dya)
            if not (np.isfinite(dG).all() and np.isfinite(ds).all() and np.isfinite(dy).all()):
                raise np.linalg.LinAlgError("search direction is not finite")
            ap = min(1.0, gamma * min(_max_step_psd(G, dG), _max_step_pos(s, ds)))
            ad = min(1.0, gamma * min(_max_step_psd(Z, dZ), _max_step_pos(y, dy)))
            ap = _confirm_psd_step(G, dG, ap)
            ad = _confirm_psd_step(Z, dZ, ad)
        except np.linalg.LinAlgError as exc:
            return finish_or_raise(
                NumericalBreakdown,
                f"factorization failed: {exc}",
                pinf,
                dinf,
                relgap,
                it,
            )

        if _TRACE:
            print(
                f"it={it} mu={mu:.3e} sigma={sigma:.3e} ap={ap:.3e} ad={ad:.3e} "
                f"pinf={pinf:.3e} dinf={dinf:.3e} gap={relgap:.3e}"
            )
        G = 0.5 * ((G + ap * dG) + (G + ap * dG).T)
        s = s + ap * ds
        F = F + ap * dF
        Z = 0.5 * ((Z + ad * dZ) + (Z + ad * dZ).T)
        y = y + ad * dy

    raise AssertionError("unreachable")


def rank_profile(sol, rel_tol: float) -> int:
    """Number of Gram eigenvalues above rel_tol times the largest one."""
    g = sol.gram if isinstance(sol, SdpSolution) else np.asarray(sol, dtype=float)
    w = eiglib.eigvalsh(g)
    if w.size == 0:
        return 0
    lmax = max(float(w[-1]), 0.0)
    return int(np.sum(w > rel_tol * lmax))
