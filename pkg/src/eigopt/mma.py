"""Method of Moving Asymptotes for

    min f0(x)  s.t.  f_i(x) <= 0,  xmin <= x <= xmax

using the standard relaxed form with artificial variables y and z.  Each
outer step builds a convex separable approximation around the current point
and solves it with a primal-dual interior point method.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EigoptError

ASYINIT = 0.5
ASYINCR = 1.2
ASYDECR = 0.7
ALBEFA = 0.1
RAA0 = 1e-5
EPSIMIN = 1e-9
# asymptote distance limits, as fractions of the variable range
ASYMIN = 1e-3
ASYMAX = 10.0


class SubproblemError(EigoptError, RuntimeError):
    """Interior point iteration failed; carries the last residual norms."""


@dataclass
class MMAState:
    """History the asymptote update needs, kept between calls."""

    n: int
    m: int
    move: float = 0.05
    a0: float = 1.0
    a: np.ndarray | None = None
    c: np.ndarray | None = None
    d: np.ndarray | None = None
    iteration: int = 0
    xold1: np.ndarray | None = None
    xold2: np.ndarray | None = None
    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    kkt_residual: float = field(default=np.nan)

    def __post_init__(self):
        if self.a is None:
            self.a = np.zeros(self.m)
        if self.c is None:
            self.c = np.full(self.m, 1000.0)
        if self.d is None:
            self.d = np.ones(self.m)


def _subsolve(m, n, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d, epsimin=EPSIMIN):
    een = np.ones(n)
    eem = np.ones(m)
    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y = eem.copy()
    z = 1.0
    lam = eem.copy()
    xsi = np.maximum(1.0 / (x - alfa), een)
    eta = np.maximum(1.0 / (beta - x), een)
    mu = np.maximum(eem, 0.5 * c)
    zet = 1.0
    s = eem.copy()

    def residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux1 = upp - x
        xl1 = x - low
        plam = p0 + P.T @ lam
        qlam = q0 + Q.T @ lam
        gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
        dpsidx = plam / ux1**2 - qlam / xl1**2
        res = np.concatenate([
            dpsidx - xsi + eta,
            c + d * y - mu - lam,
            [a0 - zet - a @ lam],
            gvec - a * z - y + s - b,
            xsi * (x - alfa) - epsi,
            eta * (beta - x) - epsi,
            mu * y - epsi,
            [zet * z - epsi],
            lam * s - epsi,
        ])
        return np.linalg.norm(res), np.max(np.abs(res))

    while epsi > epsimin:
        resnorm, resmax = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        inner = 0
        while resmax > 0.9 * epsi and inner < 200:
            inner += 1
            ux1 = upp - x
            xl1 = x - low
            ux2, xl2 = ux1**2, xl1**2
            ux3, xl3 = ux1 * ux2, xl1 * xl2
            uxinv1, xlinv1 = 1.0 / ux1, 1.0 / xl1
            uxinv2, xlinv2 = 1.0 / ux2, 1.0 / xl2
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ uxinv1 + Q @ xlinv1
            GG = P * uxinv2 - Q * xlinv2
            dpsidx = plam / ux2 - qlam / xl2
            delx = dpsidx - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2 * (plam / ux3 + qlam / xl3) + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglamyi = s / lam + 1.0 / diagy
            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                bb = np.concatenate([blam, [delz]])
                Alam = np.diag(diaglamyi) + (GG / diagx) @ GG.T
                AA = np.block([[Alam, a[:, None]], [a[None, :], np.array([[-zet / z]])]])
                sol = np.linalg.solve(AA, bb)
                dlam = sol[:m]
                dz = sol[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                diaglamyiinv = 1.0 / diaglamyi
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + (GG.T * diaglamyiinv) @ GG
                azz = zet / z + a @ (a / diaglamyi)
                axz = -GG.T @ (a / diaglamyi)
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - a @ (dellamyi / diaglamyi)
                AA = np.block([[Axx, axz[:, None]], [axz[None, :], np.array([[azz]])]])
                sol = np.linalg.solve(AA, -np.concatenate([bx, [bz]]))
                dx = sol[:n]
                dz = sol[n]
                dlam = (GG @ dx) / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stepxx = -1.01 * dxx / xx
            stmxx = stepxx.max()
            stepalfa = -1.01 * dx / (x - alfa)
            stepbeta = 1.01 * dx / (beta - x)
            stminv = max(stmxx, stepalfa.max(), stepbeta.max(), 1.0)
            steg = 1.0 / stminv

            old = (x, y, z, lam, xsi, eta, mu, zet, s)
            newres = 2 * resnorm
            tries = 0
            while newres > resnorm and tries < 50:
                tries += 1
                x = old[0] + steg * dx
                y = old[1] + steg * dy
                z = old[2] + steg * dz
                lam = old[3] + steg * dlam
                xsi = old[4] + steg * dxsi
                eta = old[5] + steg * deta
                mu = old[6] + steg * dmu
                zet = old[7] + steg * dzet
                s = old[8] + steg * ds
                newres, newmax = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
                steg /= 2
            resnorm, resmax = newres, newmax
        if not np.isfinite(resnorm):
            raise SubproblemError(f"interior point diverged at epsi={epsi:g}")
        epsi *= 0.1
    return x, y, z, lam, resnorm


def mma_step(state: MMAState, x, f0, df0, fval, dfdx, xmin, xmax) -> np.ndarray:
    """One MMA update; returns the next point and advances ``state``.

    Asymptotes start at x -/+ 0.5 (xmax - xmin) and from the third step on
    shrink by 0.7 where the iterates oscillate and widen by 1.2 where they
    move monotonically.  The step box is the global box intersected with
    x -/+ move (xmax - xmin).
    """
    x = np.asarray(x, dtype=float)
    n, m = state.n, state.m
    df0 = np.asarray(df0, dtype=float)
    fval = np.atleast_1d(np.asarray(fval, dtype=float))
    dfdx = np.atleast_2d(np.asarray(dfdx, dtype=float))
    if x.shape != (n,) or df0.shape != (n,) or fval.shape != (m,) or dfdx.shape != (m, n):
        raise ValueError("inconsistent MMA dimensions")
    xmin = np.broadcast_to(np.asarray(xmin, dtype=float), (n,))
    xmax = np.broadcast_to(np.asarray(xmax, dtype=float), (n,))
    if not (np.all(np.isfinite(xmin)) and np.all(np.isfinite(xmax))):
        raise ValueError("MMA needs finite bounds")

    state.iteration += 1
    k = state.iteration
    span = xmax - xmin
    if state.xold1 is None:
        state.xold1 = x.copy()
        state.xold2 = x.copy()
    if k <= 2:
        low = x - ASYINIT * span
        upp = x + ASYINIT * span
    else:
        zzz = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones(n)
        factor[zzz > 0] = ASYINCR
        factor[zzz < 0] = ASYDECR
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - ASYMAX * span, x - ASYMIN * span)
        upp = np.clip(upp, x + ASYMIN * span, x + ASYMAX * span)

    alfa = np.maximum.reduce([low + ALBEFA * (x - low), x - state.move * span, xmin])
    beta = np.minimum.reduce([upp - ALBEFA * (upp - x), x + state.move * span, xmax])

    xmami = np.maximum(span, 1e-5)
    ux1 = upp - x
    xl1 = x - low
    ux2, xl2 = ux1**2, xl1**2
    p0 = np.maximum(df0, 0.0)
    q0 = np.maximum(-df0, 0.0)
    pq0 = 0.001 * (p0 + q0) + RAA0 / xmami
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2
    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + RAA0 / xmami
    P = (P + PQ) * ux2
    Q = (Q + PQ) * xl2
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - fval

    xnew, _, _, _, res = _subsolve(m, n, low, upp, alfa, beta, p0, q0, P, Q,
                                   state.a0, state.a, b, state.c, state.d)
    state.kkt_residual = float(res)
    state.xold2 = state.xold1
    state.xold1 = x.copy()
    state.low = low
    state.upp = upp
    return np.clip(xnew, alfa, beta)
