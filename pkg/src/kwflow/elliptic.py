"""Linearized machinery: half-space Green's function, Hardy checks, and the
preconditioned CG solve of the gauged screened-Laplace equation.

The operator is minus the composed covariant Laplacian plus the commutator
potential,

    Op(v) = -(D_t D_t + D_1 D_1 + D_2 D_2) v + sum_a [a_a, [v, a_a]],

built by composing the same centered first-derivative stencils (with zero
extension at the faces) that the flow update uses.  With the volume-weighted
inner product each covariant D is exactly antisymmetric, so Op is symmetric
positive semidefinite to rounding and plain CG applies; the composition (as
opposed to a compact second-difference) is what makes the flow's error-field
contraction an exact identity on interior nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import algebra as al
from . import fields as fl


# ---------------------------------------------------------------------------
# Green's function of the flat half-space Laplacian (Dirichlet at t = 0)
# ---------------------------------------------------------------------------

def green(q_pt, p_pt):
    """Two-term image formula; zero at t = 0, positive inside, symmetric."""
    tq, zq = q_pt
    tp, zp = p_pt
    tq = np.asarray(tq, dtype=float)
    tp = np.asarray(tp, dtype=float)
    dz = np.abs(np.asarray(zp) - np.asarray(zq))
    d_direct = np.sqrt((tp - tq) ** 2 + dz**2)
    d_image = np.sqrt((tp + tq) ** 2 + dz**2)
    if np.any(d_direct == 0):
        raise ValueError("Green's function pole: p == q")
    return (1.0 / (4 * np.pi)) * (1.0 / d_direct - 1.0 / d_image)


def green_gradient(q_pt, p_pt):
    """Gradient in p = (t, z1, z2); used for the |grad G| <= c/d^2 check."""
    tq, zq = q_pt
    tp, zp = p_pt
    dz = np.asarray(zp) - np.asarray(zq)
    d1 = np.sqrt((tp - tq) ** 2 + np.abs(dz) ** 2)
    d2 = np.sqrt((tp + tq) ** 2 + np.abs(dz) ** 2)
    g1 = -np.stack([(tp - tq), np.real(dz), np.imag(dz)], axis=-1) / d1[..., None] ** 3
    g2 = -np.stack([(tp + tq), np.real(dz), np.imag(dz)], axis=-1) / d2[..., None] ** 3
    return (g1 - g2) / (4 * np.pi)


def green_weighted_norm(t_q, n_r=400, n_t=400, span=60.0):
    """Quadrature of int (1+t^2)^-1 G_q^2 over the half-space (z-radial)."""
    tq = float(t_q)
    # log-spaced radial and t grids resolve both the pole and the tails
    r = np.geomspace(1e-4 * max(tq, 1e-3), span * max(tq, 1.0), n_r)
    t = np.geomspace(1e-4 * max(tq, 1e-3), span * max(tq, 1.0), n_t)
    T, R = np.meshgrid(t, r, indexing="ij")
    G = (1.0 / (4 * np.pi)) * (1.0 / np.sqrt((T - tq) ** 2 + R**2)
                               - 1.0 / np.sqrt((T + tq) ** 2 + R**2))
    f = 2 * np.pi * R * G**2 / (1.0 + T**2)
    wt = np.gradient(t)
    wr = np.gradient(r)
    return float(np.sum(f * wt[:, None] * wr[None, :]))


def green_bounds_check(n_samples=200, rng=None):
    """Samples the pointwise Green bounds; returns fitted constants and flags.

    Bounds (with explicit constants derived from the image formula):
      G >= (6/7)/(4 pi d)          for d <= t_q/4,
      G <= 1/(4 pi d)              everywhere,
      G <= t_p t_q / (pi d^3)      everywhere,
      |grad G| <= 1/(2 pi d^2)     everywhere,
    plus the weighted-square envelope min(t_q, (1+|ln t_q|)/t_q).
    """
    rng = np.random.default_rng(0 if rng is None else rng)
    tq = np.exp(rng.uniform(-2.3, 2.3, n_samples))
    tp = np.exp(rng.uniform(-2.3, 2.3, n_samples))
    zq = rng.normal(0, 2, n_samples) + 1j * rng.normal(0, 2, n_samples)
    zp = zq + (rng.normal(0, 2, n_samples) + 1j * rng.normal(0, 2, n_samples))
    d = np.sqrt((tp - tq) ** 2 + np.abs(zp - zq) ** 2)
    G = green((tq, zq), (tp, zp))
    gradG = np.sqrt(np.sum(green_gradient((tq, zq), (tp, zp)) ** 2, axis=-1))
    near = d <= 0.25 * tq
    checks = {
        "lower_near": bool(np.all(G[near] >= (6.0 / 7.0) / (4 * np.pi * d[near]) - 1e-15))
        if near.any() else True,
        "upper_1_over_d": bool(np.all(G <= 1.0 / (4 * np.pi * d) + 1e-15)),
        "upper_titj_d3": bool(np.all(G <= tp * tq / (np.pi * d**3) + 1e-15)),
        "grad_bound": bool(np.all(gradG <= 1.0 / (2 * np.pi * d**2) + 1e-15)),
        "positive": bool(np.all(G > 0)),
    }
    consts = {
        "c_lower": float(np.min(4 * np.pi * d[near] * G[near])) if near.any() else np.nan,
        "c_upper": float(np.max(4 * np.pi * d * G)),
        "c_far": float(np.max(G * d**3 / (tp * tq))),
        "c_grad": float(np.max(gradG * d**2)),
    }
    env = {}
    for tqv in (0.1, 1.0, 10.0):
        val = green_weighted_norm(tqv)
        env[str(tqv)] = dict(integral=val,
                             envelope=min(tqv, (1 + abs(np.log(tqv))) / tqv),
                             ratio=val / min(tqv, (1 + abs(np.log(tqv))) / tqv))
    checks["weighted_envelope"] = bool(max(e["ratio"] for e in env.values()) < 1.0)
    return dict(checks=checks, constants=consts, weighted=env,
                passed=all(checks.values()))


# ---------------------------------------------------------------------------
# Hardy inequalities
# ---------------------------------------------------------------------------

HARDY_BALL_C0 = 64.0  # pinned explicit constant for the ball variant


def hardy_check(f, variant, **kw):
    """Evaluate both sides of one Hardy inequality; returns (lhs, rhs).

    variant "half-space": int f^2/t^2 <= 4 int |grad f|^2 on (0,inf) x R^2
        (f callable of (t, z1, z2), decaying, vanishing at t = 0).
    variant "ball": int_B f^2/|x-q|^2 <= c0 int_B (|grad f|^2 + f^2/rho^2)
        (f callable of (x, y, z); ball of radius kw['rho'] at the origin).
    variant "line": int f^2/t^4 <= (4/9) int |f'|^2/t^2 on (0,inf)
        (f callable of t, compactly supported away from 0).
    """
    if variant == "half-space":
        tmax = kw.get("tmax", 14.0)
        L = kw.get("L", 7.0)
        n = kw.get("n", 160)
        t = np.linspace(1e-9, tmax, n)
        x = np.linspace(-L, L, n)
        T, X, Y = np.meshgrid(t, x, x, indexing="ij")
        F = f(T, X, Y)
        ht, hx = t[1] - t[0], x[1] - x[0]
        gt, gx, gy = np.gradient(F, ht, hx, hx)
        lhs = np.sum(F**2 / np.maximum(T, 1e-9) ** 2) * ht * hx * hx
        rhs = 4.0 * np.sum(gt**2 + gx**2 + gy**2) * ht * hx * hx
        return float(lhs), float(rhs)
    if variant == "ball":
        rho = kw.get("rho", 1.0)
        n = kw.get("n", 96)
        x = np.linspace(-rho, rho, n)
        X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
        R = np.sqrt(X**2 + Y**2 + Z**2)
        inside = R < rho
        F = f(X, Y, Z)
        h = x[1] - x[0]
        gx, gy, gz = np.gradient(F, h, h, h)
        lhs = np.sum((F**2 / np.maximum(R, 0.5 * h) ** 2)[inside]) * h**3
        rhs = HARDY_BALL_C0 * (np.sum((gx**2 + gy**2 + gz**2)[inside])
                               + np.sum(F[inside] ** 2) / rho**2) * h**3
        return float(lhs), float(rhs)
    if variant == "line":
        tmax = kw.get("tmax", 30.0)
        n = kw.get("n", 20000)
        t = np.linspace(1e-6, tmax, n)
        F = f(t)
        dF = np.gradient(F, t)
        h = t[1] - t[0]
        lhs = np.sum(F**2 / t**4) * h
        rhs = (4.0 / 9.0) * np.sum(dF**2 / t**2) * h
        return float(lhs), float(rhs)
    raise ValueError(f"unsupported variant {variant!r}")


# ---------------------------------------------------------------------------
# the discrete operator and its CG solve
# ---------------------------------------------------------------------------

@dataclass
class EllipticProblem:
    """Coefficients (from a GaugeField), right-hand side and Dirichlet faces."""

    fld: fl.GaugeField
    rhs: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("non-finite right-hand side")
        self.rhs = self._mask_faces(np.asarray(self.rhs, dtype=float))

    def _mask_faces(self, arr):
        out = arr.copy()
        out[0] = out[-1] = 0.0
        out[:, 0] = out[:, -1] = 0.0
        out[:, :, 0] = out[:, :, -1] = 0.0
        return out


def _cov_zero(fld, arr, direction):
    return fl.partial(fld.grid, arr, direction, flavor="zero") + al.bracket(
        {"t": fld.At, "z1": fld.A1, "z2": fld.A2}[direction], arr)


def apply_operator(problem, v):
    """Op(v) on the full node set (faces are zeroed; v is face-zero by contract)."""
    fld = problem.fld
    out = np.zeros_like(v)
    for direction in ("t", "z1", "z2"):
        out -= _cov_zero(fld, _cov_zero(fld, v, direction), direction)
    for a_arr in (fld.a1, fld.a2, fld.a3):
        a_arr = np.real(a_arr)
        out += al.bracket(a_arr, al.bracket(v, a_arr))
    return problem._mask_faces(np.real(out))


def _jacobi_diag(problem):
    """Diagonal of Op per node and component (stencil center + potential)."""
    fld = problem.fld
    g = fld.grid
    t = g.t_mesh
    # -D_t D_t diagonal: (1/t_i) [1/t_{i+1} + 1/t_{i-1}] / (4 h_tau^2), clamped
    tm = np.empty_like(g.t)
    tp = np.empty_like(g.t)
    tm[1:] = g.t[:-1]
    tm[0] = g.t[0]
    tp[:-1] = g.t[1:]
    tp[-1] = g.t[-1]
    diag_t = (1.0 / g.t) * (1.0 / tm + 1.0 / tp) / (4 * g.h_tau**2)
    diag = diag_t[:, None, None] + 2.0 * (1.0 / (2 * g.h_z**2)) + np.zeros(g.shape)
    diag = np.repeat(diag[..., None], 3, axis=-1)
    for a_arr in (fld.a1, fld.a2, fld.a3):
        a_arr = np.real(a_arr)
        n2 = np.sum(a_arr**2, axis=-1, keepdims=True)
        diag += 4.0 * (n2 - a_arr**2)
    return np.maximum(diag, 1e-12)


@dataclass
class SolveStats:
    iterations: int
    residuals: list
    energy: float
    converged: bool


def solve_u(problem, tol=1e-8, max_iter=None, x0=None):
    """Preconditioned CG for Op(u) = rhs in the volume-weighted inner product.

    Terminates at relative residual < tol; raises with the residual history
    attached if max_iter is exceeded.
    """
    g = problem.fld.grid
    if max_iter is None:
        max_iter = 40 * max(g.n_t, g.n_z) ** 1

    w = g.volume_weights()[..., None]

    def dot(a, b):
        return float(np.sum(w * a * b))

    dinv = 1.0 / _jacobi_diag(problem)
    b = problem.rhs
    x = np.zeros_like(b) if x0 is None else problem._mask_faces(np.asarray(x0, float))
    r = b - apply_operator(problem, x)
    z = problem._mask_faces(dinv * r)
    p = z.copy()
    rz = dot(r, z)
    bnorm = np.sqrt(dot(b, b))
    if bnorm == 0:
        return x, SolveStats(0, [0.0], 0.0, True)
    residuals = [float(np.sqrt(dot(r, r)) / bnorm)]
    it = 0
    while residuals[-1] > tol and it < max_iter:
        Ap = apply_operator(problem, p)
        alpha = rz / dot(p, Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        z = problem._mask_faces(dinv * r)
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        residuals.append(float(np.sqrt(dot(r, r)) / bnorm))
    energy = 0.5 * dot(x, apply_operator(problem, x)) - dot(x, b)
    stats = SolveStats(it, residuals, energy, residuals[-1] <= tol)
    if not stats.converged:
        raise RuntimeError(
            f"CG did not reach tol={tol} in {max_iter} iterations "
            f"(last residual {residuals[-1]:.3e})")
    return x, stats


def b_norm(u, problem, sample_q=None):
    """Max over sampled base points of the Green-weighted energy functional.

    For each q: int (1+G_q)(|D_A u|^2 + sum |[a,u]|^2) + (int G_q |Op u|)^2.
    A fixed stencil of q's stands in for the inaccessible supremum.
    """
    fld = problem.fld
    g = fld.grid
    if sample_q is None:
        fracs = [0.25, 0.5, 0.75]
        sample_q = [(g.t[int(ft * (g.n_t - 1))],
                     g.z1[int(fz * (g.n_z - 1))] + 1j * g.z2[g.n_z // 2])
                    for ft in fracs for fz in fracs]
    w = g.volume_weights()
    dens = np.zeros(g.shape)
    for direction in ("t", "z1", "z2"):
        dens += fl.alg_norm(_cov_zero(fld, u, direction)) ** 2
    for a_arr in (fld.a1, fld.a2, fld.a3):
        dens += fl.alg_norm(al.bracket(np.real(a_arr), u)) ** 2
    opu = fl.alg_norm(apply_operator(problem, u))
    best = 0.0
    for tq, zq in sample_q:
        G = green((tq, zq), (g.t_mesh, g.z_mesh))
        val = float(np.sum(w * (1.0 + G) * dens) + np.sum(w * G * opu) ** 2)
        best = max(best, val)
    return best
