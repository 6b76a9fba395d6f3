"""Closed-form evaluation of the integer-indexed model fields on (0,inf) x R^2.

The index-m model is built from hyperbolic ratios of Theta = arcsinh(t/|z|).
All ratios are evaluated through Chebyshev recurrences in c = cosh(Theta)
= sqrt(t^2+|z|^2)/|z|, which keeps them finite-limit exact both at the z -> 0
axis (c -> inf handled by limits) and at Theta -> 0 (c = 1, where e.g.
sinh((n)Theta)/sinh(Theta) -> n with no 0/0).

Everything broadcasts over numpy arrays of t and z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import AlgElement, alg

AXIS_RTOL = 1e-12  # below |z| = AXIS_RTOL * t the exact axis limits are used


def theta(t, z):
    """Theta = arcsinh(t/|z|); rejects z = 0 (callers use ratio limits there)."""
    t = np.asarray(t, dtype=float)
    r = np.abs(np.asarray(z))
    if np.any(r == 0.0):
        raise ValueError("theta is undefined at z = 0; use the ratio helpers")
    if np.any(t <= 0.0):
        raise ValueError("t must be positive")
    return np.arcsinh(t / r)


def cheb_tables(c, nmax):
    """U_0..U_nmax, T_0..T_nmax and U' at argument c (arrays ok).

    sinh((n+1)T) = sinh(T) U_n(cosh T) and cosh(nT) = T_n(cosh T).
    """
    c = np.asarray(c, dtype=float)
    U = [np.ones_like(c), 2.0 * c]
    T = [np.ones_like(c), c.copy()]
    for _ in range(nmax - 1):
        U.append(2.0 * c * U[-1] - U[-2])
        T.append(2.0 * c * T[-1] - T[-2])
    dU = [np.zeros_like(c), 2.0 * np.ones_like(c)]
    for n in range(1, nmax):
        dU.append(2.0 * U[n] + 2.0 * c * dU[n] - dU[n - 1])
    return U[: nmax + 1], T[: nmax + 1], dU[: nmax + 1]


def sinh_ratio(n, c):
    """sinh(n*Theta)/sinh(Theta) = U_{n-1}(cosh Theta); equals n at Theta = 0."""
    U, _, _ = cheb_tables(np.asarray(c, dtype=float), max(n - 1, 1))
    return U[n - 1]


def cosh_ratio(n, c):
    """cosh(n*Theta)/cosh(Theta) = T_n(cosh Theta)/cosh(Theta); equals 1 at Theta = 0."""
    c = np.asarray(c, dtype=float)
    _, T, _ = cheb_tables(c, max(n, 1))
    return T[n] / c


@dataclass
class ModelPoint:
    """All index-m closed-form fields at one point (or array of points)."""

    m: int
    t: np.ndarray
    z: np.ndarray
    alpha: np.ndarray          # scalar profile, a3 = alpha * s3
    alpha_t: np.ndarray        # d(alpha)/dt
    a3: np.ndarray             # coefficients (..., 3)
    phi: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    At: np.ndarray
    BA3: np.ndarray
    EA1: np.ndarray
    EA2: np.ndarray


def _model_scalars(m, t, z):
    """Scalar profiles of the index-m fields; returns a dict of arrays."""
    n = m + 1
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=complex)
    t, z = np.broadcast_arrays(t, z)
    r = np.abs(z)
    x = np.hypot(t, r)
    axis = r <= AXIS_RTOL * t
    rs = np.where(axis, 1.0, r)  # safe radius for ratios; axis values overwritten
    c = x / rs

    U, T, dU = cheb_tables(c, n + 1)
    Um, Tn = U[m], T[n]
    R = n / Um                                   # (m+1) sinh/sinh((m+1)Theta)
    alpha = -(0.5 / t) * R * Tn / c
    # d(alpha)/dt: dc/dt = t/(x r)
    dcdt = t / (x * rs)
    dTn = n * U[n - 1]                           # T_n' = n U_{n-1}
    dalpha_dc = -(0.5 / t) * n * (dTn * c * Um - Tn * (Um + c * dU[m])) / (c * Um) ** 2
    alpha_t = (0.5 / t**2) * R * Tn / c + dalpha_dc * dcdt

    phase = np.where(axis, 1.0, z / rs) ** m
    phi_coef = -(0.5 / t) * R * phase

    tanh = t / x
    cothn = Tn / ((t / rs) * Um)                 # cosh(n Th)/sinh(n Th)
    fA = 0.5 * n * (1.0 - tanh * cothn)
    G = 1.0 - n * x / (rs * Um * Tn)             # 1 - (m+1) sh ch/(sh_n ch_n)
    bB = (0.5 * n / x**2) * (tanh * cothn) * G
    kE = -(0.5 * n / x**2) * cothn * G

    if np.any(axis):
        # exact r -> 0 limits at fixed t (leading Chebyshev coefficients)
        alpha = np.where(axis, -(0.5 * n) / t, alpha)
        alpha_t = np.where(axis, (0.5 * n) / t**2, alpha_t)
        phi_coef = np.where(axis, -(0.5 / t) * (1.0 if m == 0 else 0.0), phi_coef)
        fA = np.where(axis, 0.0, fA)
        bB = np.where(axis, 0.0 if m == 0 else (0.5 * n) / t**2, bB)
        kE = np.where(axis, 0.0, kE)
    return dict(t=t, z=z, r=r, rs=rs, x=x, alpha=alpha, alpha_t=alpha_t,
                phi_coef=phi_coef, fA=fA, bB=bB, kE=kE)


def model_fields(m, t, z):
    """The full index-m model data at (t, z); z may be 0 (axis limits)."""
    if m < 0 or int(m) != m:
        raise ValueError("m must be a non-negative integer")
    s = _model_scalars(m, t, z)
    shape = s["alpha"].shape + (3,)
    zero = np.zeros(shape, dtype=complex)

    def along_s3(coef):
        out = np.zeros(shape, dtype=complex)
        out[..., 2] = coef
        return out

    a3 = along_s3(s["alpha"])
    phi = np.zeros(shape, dtype=complex)
    phi[..., 0] = s["phi_coef"]
    phi[..., 1] = -1j * s["phi_coef"]
    z1, z2 = np.real(s["z"]), np.imag(s["z"])
    r2 = np.where(s["r"] == 0, 1.0, s["r"] ** 2)
    A1 = along_s3(-s["fA"] * z2 / r2)
    A2 = along_s3(s["fA"] * z1 / r2)
    BA3 = along_s3(s["bB"])
    EA1 = along_s3(s["kE"] * (-z2) / s["x"])
    EA2 = along_s3(s["kE"] * z1 / s["x"])
    return ModelPoint(m=m, t=s["t"], z=s["z"], alpha=s["alpha"], alpha_t=s["alpha_t"],
                      a3=a3, phi=phi, A1=A1, A2=A2, At=zero, BA3=BA3, EA1=EA1, EA2=EA2)


def model_w_alpha(m, t, z):
    """w = ln|phi|/2 and alpha = dw/dt, both in closed form."""
    s = _model_scalars(m, t, z)
    mag = np.abs(s["phi_coef"]) * np.sqrt(2.0)
    with np.errstate(divide="ignore"):
        w = 0.5 * np.log(mag)
    return w, s["alpha"]


def zeta(k, t, z):
    """zeta = (k+1) sinh^{k+1}(Theta) z^k / (2 sinh((k+1)Theta) t^{k+1}).

    Returned in the overflow-free form (k+1) z^k / (2 t r^k U_k(c)); satisfies
    phi_k = -zeta*(s1 - i*s2) and |zeta| <= 1/(sqrt(2) t).
    """
    if k < 0 or int(k) != k:
        raise ValueError("k must be a non-negative integer")
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=complex)
    t, z = np.broadcast_arrays(t, z)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    r = np.abs(z)
    axis = r <= AXIS_RTOL * t
    rs = np.where(axis, 1.0, r)
    c = np.hypot(t, r) / rs
    val = (0.5 / t) * (k + 1) / sinh_ratio(k + 1, c) * (z / rs) ** k
    if k == 0:
        return np.where(axis, 0.5 / t, val)
    return np.where(axis, 0.0, val)


def model_flux(m, t=1.0, tol=1e-10, max_doublings=12):
    """Magnetic flux through a constant-t slice; equals 2*pi*m.

    This is the curvature integral of the +1 eigenbundle of [i/2*s3, .] (the
    line bundle carrying phi), whose 2-form is 2<s3 B_A3>; that normalization
    is the integer-quantized one (the plain <s3 B_A3> integral is pi*m).
    Radial integral mapped to Theta in (0, inf); Gauss-Legendre panels,
    doubling the panel count until the value settles.
    """
    n = m + 1
    theta_max = max(40.0, 700.0 / max(n, 1) * 0.5)

    def integrand(th):
        sh, ch = np.sinh(th), np.cosh(th)
        shn, chn = np.sinh(n * th), np.cosh(n * th)
        G = 1.0 - n * sh * ch / (shn * chn)
        return 2.0 * np.pi * n * (1.0 / ch**2) * (chn / shn) * G

    nodes, weights = np.polynomial.legendre.leggauss(64)
    prev = None
    panels = 2
    for _ in range(max_doublings):
        edges = np.linspace(0.0, theta_max, panels + 1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            th = mid + half * nodes
            total += half * np.sum(weights * integrand(th))
        if prev is not None and abs(total - prev) < tol:
            return total
        prev = total
        panels *= 2
    raise RuntimeError(f"flux quadrature did not settle; last estimate {prev}")


def model_equation_residual(m, t, z, h):
    """Max norm of the three reduced-equation residuals via centered differences.

    Checks d_t(phi) - 2 alpha phi, E1 - (d2 alpha) s3 (and E2 + d1 alpha),
    and B - (d_t alpha - |phi|^2) s3; O(h^2) for the closed forms.
    """
    if not (np.all(np.asarray(t) > h)):
        raise ValueError("need t > h for the centered t-stencil")

    def fd(f, dim):
        if dim == "t":
            return (f(m, t + h, z) - f(m, t - h, z)) / (2 * h)
        if dim == "z1":
            return (f(m, t, z + h) - f(m, t, z - h)) / (2 * h)
        return (f(m, t, z + 1j * h) - f(m, t, z - 1j * h)) / (2 * h)

    p = model_fields(m, t, z)
    res = []
    # d_t phi - 2 alpha phi  (A_t = 0 for the models)
    dphi = fd(lambda m_, t_, z_: model_fields(m_, t_, z_).phi, "t")
    res.append(np.abs(dphi - 2.0 * p.alpha[..., None] * p.phi).max())
    # (d1 + i d2) phi + brackets with A
    from .algebra import bracket
    d1phi = fd(lambda m_, t_, z_: model_fields(m_, t_, z_).phi, "z1")
    d2phi = fd(lambda m_, t_, z_: model_fields(m_, t_, z_).phi, "z2")
    cov = d1phi + bracket(p.A1, p.phi) + 1j * (d2phi + bracket(p.A2, p.phi))
    res.append(np.abs(cov).max())
    # E components against alpha gradients
    da1 = fd(lambda m_, t_, z_: model_fields(m_, t_, z_).alpha, "z1")
    da2 = fd(lambda m_, t_, z_: model_fields(m_, t_, z_).alpha, "z2")
    res.append(np.abs(p.EA1[..., 2] - da2).max())
    res.append(np.abs(p.EA2[..., 2] + da1).max())
    # B = (d_t alpha - |phi|^2) s3
    dat = fd(lambda m_, t_, z_: model_fields(m_, t_, z_).alpha, "t")
    phin2 = np.sum(np.abs(p.phi) ** 2, axis=-1)
    res.append(np.abs(p.BA3[..., 2] - (dat - phin2)).max())
    return float(max(res))


def model_point_scalar(m, t, z):
    """Convenience scalar accessor returning AlgElement values."""
    p = model_fields(m, t, z)
    return {name: AlgElement.from_coeffs(getattr(p, name))
            for name in ("a3", "phi", "A1", "A2", "BA3", "EA1", "EA2")}
