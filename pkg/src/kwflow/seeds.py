"""Construction of the deformation-flow initial data from (a_1..a_p, delta).

The data set interpolates the index-(m+2p) model at small t and the index-m
model at large t through a frame rotation driven by the meromorphic ratio
gamma = P(z)/zeta.  Everything needed on a grid node (the connection, a3, phi,
the +1-eigenbundle sections beta and bhat, and the flat-frame connection
coefficient) is evaluated in closed form -- no finite differences enter the
assembled fields, so discrete residuals measure pure stencil truncation.

Conventions: gamma_* = chi(|z|/t - 1) * gamma vanishes for |z| >= 2t; the
t-cutoff varpi(t) = chi(2t/delta - 1); the section cutoff acquires the
z-dependent form chi(2t/(delta (1+|z|^2)^{1/4}) - 1) exactly when m = 0 and
the z^{-m-1} pole coefficient is nonzero (otherwise the squared error field
would not be integrable against (1+t^2)).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import algebra as al
from .models import cheb_tables

SQRT2 = np.sqrt(2.0)
DELTA_MAX = 0.1
AXIS_GUARD = 1e-9


# ---------------------------------------------------------------------------
# cutoff function and parameters
# ---------------------------------------------------------------------------

def _bump(y):
    out = np.zeros_like(y, dtype=float)
    pos = y > 1e-6
    out[pos] = np.exp(-1.0 / y[pos])
    return out


def _bump_prime(y):
    out = np.zeros_like(y, dtype=float)
    pos = y > 1e-6
    out[pos] = np.exp(-1.0 / y[pos]) / y[pos] ** 2
    return out


def cutoff_chi(x):
    """Smooth non-increasing cutoff: exactly 1 on x <= 1/4, exactly 0 on x >= 3/4."""
    x = np.asarray(x, dtype=float)
    u = _bump(0.75 - x)
    v = _bump(x - 0.25)
    return u / (u + v)


def cutoff_chi_prime(x):
    """Closed-form derivative of cutoff_chi (zero on both plateaus)."""
    x = np.asarray(x, dtype=float)
    u = _bump(0.75 - x)
    v = _bump(x - 0.25)
    du = -_bump_prime(0.75 - x)
    dv = _bump_prime(x - 0.25)
    mid = (x > 0.25) & (x < 0.75)
    out = np.zeros_like(x)
    s = u + v
    out[mid] = (du[mid] * v[mid] - u[mid] * dv[mid]) / s[mid] ** 2
    return out


@dataclass
class LaurentData:
    """Subleading pole coefficients (mu_1..mu_{p-1}) of 1/P about z = 0."""

    mu: np.ndarray
    remainder_bound: float


def wp_poly(a, z, m=0):
    """P(z) = sum_j a_j z^{k-j} with k = m + 2p, evaluated by Horner."""
    a = np.asarray(a, dtype=complex)
    p = len(a)
    k = m + 2 * p
    z = np.asarray(z, dtype=complex)
    # z^{k-p} * (a_p + a_{p-1} z + ... + a_1 z^{p-1})
    acc = np.zeros_like(z)
    for coef in a:          # a_1 first => highest power of the bracket
        acc = acc * z + coef
    return z ** (k - p) * acc


def _inverse_series(a, nterms):
    """Coefficients b_j of a_p / (a_p + a_{p-1} z + ...) = sum b_j z^j, b_0 = 1."""
    a = np.asarray(a, dtype=complex)
    p = len(a)
    ap = a[-1]
    if ap == 0:
        raise ValueError("last coefficient a_p must be nonzero (leading pole coefficient)")
    c = np.zeros(nterms, dtype=complex)   # P~(z)/a_p coefficients
    for j in range(min(p, nterms)):
        c[j] = a[p - 1 - j] / ap
    b = np.zeros(nterms, dtype=complex)
    b[0] = 1.0
    for j in range(1, nterms):
        b[j] = -np.sum(c[1:j + 1] * b[j - 1::-1][: j])
    return b


def laurent_mu(a, m=0):
    """Power-series inversion of P about z = 0; returns (mu_1, ..., mu_{p-1}).

    mu_j multiplies z^{-m-j} in the pole part of 1/P; the remainder is bounded
    by ~C/|z|^m near zero (C estimated by sampling a small circle).
    """
    a = np.asarray(a, dtype=complex)
    p = len(a)
    if a[-1] == 0:
        raise ValueError("last coefficient a_p must be nonzero (leading pole coefficient)")
    b = _inverse_series(a, max(p, 1))
    mu = b[1:p][::-1].copy()          # mu_1 = b_{p-1}, ..., mu_{p-1} = b_1
    # remainder estimate on a small circle
    th = np.linspace(0.0, 2 * np.pi, 17)[:-1]
    zs = 1e-2 * np.exp(1j * th)
    pole = np.zeros_like(zs)
    for j in range(p):
        pole += (b[j] / a[-1]) * zs ** (-(m + p) + j)
    rem = 1.0 / wp_poly(a, zs, m) - pole
    bound = float(np.max(np.abs(rem) * np.abs(zs) ** m))
    return LaurentData(mu=mu, remainder_bound=bound)


@dataclass
class SeedParams:
    """Parameters (m; a_1..a_p; delta) of one initial data set."""

    m: int
    a: np.ndarray
    delta: float
    p: int = field(init=False)
    k: int = field(init=False)
    mu: np.ndarray = field(init=False)
    special: bool = field(init=False)
    pole: np.ndarray = field(init=False)   # q-pole coefficients of z^{-(m+p)+j}

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=complex)
        self.p = len(self.a)
        if self.p < 1:
            raise ValueError("need at least one coefficient")
        if self.a[-1] == 0:
            raise ValueError("last coefficient a_p must be nonzero (leading pole coefficient)")
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError("m must be a non-negative integer")
        if not (0 < self.delta):
            raise ValueError("delta must be positive")
        if self.delta > DELTA_MAX:
            warnings.warn(f"delta={self.delta} above {DELTA_MAX}; smallness bounds may fail")
        self.k = self.m + 2 * self.p
        self.mu = laurent_mu(self.a, self.m).mu
        b = _inverse_series(self.a, self.p)
        # q = -hhat*phi + bounded, hhat = (1/(4 a_p)) sum_j b_j z^{-(m+p)+j}
        self.pole = b / (4.0 * self.a[-1])
        # the z^{-m-1} coefficient of the pole sum is b_{p-1}/(4 a_p), never 0 for p=1
        self.special = (self.m == 0) and (abs(b[self.p - 1]) > 0)


def hhat(params, z):
    """The meromorphic pole sum (1/(4 a_p)) (z^{-m-p} + ... + mu_1 z^{-m-1})."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z)
    for j, cj in enumerate(params.pole):
        out = out + cj * z ** (-(params.m + params.p) + j)
    return out


# ---------------------------------------------------------------------------
# pointwise ingredients (vectorized over t, z)
# ---------------------------------------------------------------------------

def gamma_star(params, t, z):
    """(gamma, gamma_*) at (t, z); gamma_* = chi(|z|/t - 1) gamma, zero for |z| >= 2t."""
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) < AXIS_GUARD):
        raise ValueError("gamma has a pole at z = 0")
    r = np.abs(z)
    c = np.hypot(t, r) / r
    U, _, _ = cheb_tables(c, params.k + 1)
    zeta = (0.5 / t) * (params.k + 1) / U[params.k] * (z / r) ** params.k
    gam = wp_poly(params.a, z, params.m) / zeta
    chis = cutoff_chi(r / t - 1.0)
    return gam, chis * gam


def sigma_frame(gstar):
    """Unit section sigma and its +1-eigenbundle companion ihat from gamma_*."""
    g = np.asarray(gstar, dtype=complex)
    G = 1.0 + np.abs(g) ** 2
    shape = g.shape + (3,)
    sigma = np.zeros(shape, dtype=complex)
    sigma[..., 0] = 2.0 * np.real(g) / G
    sigma[..., 1] = -2.0 * np.imag(g) / G
    sigma[..., 2] = (1.0 - np.abs(g) ** 2) / G
    ihat = np.zeros(shape, dtype=complex)
    ihat[..., 0] = (1.0 - g**2) / G
    ihat[..., 1] = -1j * (1.0 + g**2) / G
    ihat[..., 2] = -2.0 * g / G
    return sigma, ihat


def omega_dagger(params, t, z):
    """The t-cutoff used on the bounded part of q (z-dependent in the special case)."""
    t = np.asarray(t, dtype=float)
    if not params.special:
        return cutoff_chi(2.0 * t / params.delta - 1.0)
    r = np.abs(np.asarray(z))
    scale = params.delta * (1.0 + r**2) ** 0.25
    return cutoff_chi(2.0 * t / scale - 1.0)


def _ingredients(params, t, z):
    """All scalars, frames and their closed-form first derivatives at (t, z).

    Derivative triples are ordered (d_t, d_1, d_2).  Requires z != 0.
    """
    m, p, k = params.m, params.p, params.k
    delta = params.delta
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=complex)
    t, z = np.broadcast_arrays(t, z)
    r = np.abs(z)
    if np.any(r < AXIS_GUARD):
        raise ValueError("seed ingredients need z != 0 (grid must avoid the axis)")
    z1, z2 = np.real(z), np.imag(z)
    x = np.hypot(t, r)
    c = x / r
    dc = (t / (x * r), -z1 * t**2 / (x * r**3), -z2 * t**2 / (x * r**3))

    U, T, dU = cheb_tables(c, k + 1)
    lnR_k = np.log(k + 1.0) - np.log(U[k])
    lnR_m = np.log(m + 1.0) - np.log(U[m])
    dlnR_k = tuple(-(dU[k] / U[k]) * d for d in dc)
    dlnR_m = tuple(-(dU[m] / U[m]) * d for d in dc)
    alpha_k = -(0.5 / t) * (k + 1.0) / U[k] * T[k + 1] / c
    alpha_m = -(0.5 / t) * (m + 1.0) / U[m] * T[m + 1] / c

    zeta = (0.5 / t) * (k + 1) / U[k] * (z / r) ** k
    dlnzeta = (dlnR_k[0] - 1.0 / t,
               dlnR_k[1] + k * (1.0 / z - z1 / r**2),
               dlnR_k[2] + k * (1j / z - z2 / r**2))

    wp = wp_poly(params.a, z, m)
    dwp_dz = np.zeros_like(z)
    for j, aj in enumerate(params.a, start=1):   # d/dz of a_j z^{k-j}
        if k - j > 0:
            dwp_dz += aj * (k - j) * z ** (k - j - 1)
    gam = wp / zeta
    dgam = (-gam * dlnzeta[0],
            (dwp_dz - gam * zeta * dlnzeta[1]) / zeta,
            (1j * dwp_dz - gam * zeta * dlnzeta[2]) / zeta)

    chi_arg = r / t - 1.0
    chis = cutoff_chi(chi_arg)
    dchi = cutoff_chi_prime(chi_arg)
    dchis = (dchi * (-r / t**2), dchi * (z1 / (r * t)), dchi * (z2 / (r * t)))
    gs = chis * gam
    dgs = tuple(dchis[i] * gam + chis * dgam[i] for i in range(3))

    G = 1.0 + np.abs(gs) ** 2
    dlnG = tuple(2.0 * np.real(np.conj(gs) * dgs[i]) / G for i in range(3))

    varpi = cutoff_chi(2.0 * t / delta - 1.0)
    dvarpi_t = cutoff_chi_prime(2.0 * t / delta - 1.0) * (2.0 / delta)

    lnG = np.log(G)
    w = 0.5 * varpi * (lnG + lnR_k) + 0.5 * (1.0 - varpi) * lnR_m - 0.5 * np.log(SQRT2 * t)
    alpha = (0.5 * dvarpi_t * (lnG + lnR_k - lnR_m)
             + 0.5 * varpi * (dlnG[0] + dlnR_k[0])
             + 0.5 * (1.0 - varpi) * dlnR_m[0] - 0.5 / t)
    dw1 = 0.5 * varpi * (dlnG[1] + dlnR_k[1]) + 0.5 * (1.0 - varpi) * dlnR_m[1]
    dw2 = 0.5 * varpi * (dlnG[2] + dlnR_k[2]) + 0.5 * (1.0 - varpi) * dlnR_m[2]

    # |phi| = F * sqrt(2)|zeta| G; F == 1 below the t-cutoff
    lnF = (varpi - 1.0) * (lnG + lnR_k) + (1.0 - varpi) * lnR_m
    F = np.exp(lnF)
    dlnF = (dvarpi_t * (lnG + lnR_k - lnR_m) + (varpi - 1.0) * (dlnG[0] + dlnR_k[0])
            + (1.0 - varpi) * dlnR_m[0],
            (varpi - 1.0) * (dlnG[1] + dlnR_k[1]) + (1.0 - varpi) * dlnR_m[1],
            (varpi - 1.0) * (dlnG[2] + dlnR_k[2]) + (1.0 - varpi) * dlnR_m[2])

    # section cutoff for the bounded part of q
    if not params.special:
        vd = varpi
        dvd = (dvarpi_t, np.zeros_like(t), np.zeros_like(t))
    else:
        scale = delta * (1.0 + r**2) ** 0.25
        arg = 2.0 * t / scale - 1.0
        vd = cutoff_chi(arg)
        dvd_chi = cutoff_chi_prime(arg)
        dvd = (dvd_chi * (2.0 / scale),
               dvd_chi * (-t * z1 / (delta * (1.0 + r**2) ** 1.25)),
               dvd_chi * (-t * z2 / (delta * (1.0 + r**2) ** 1.25)))

    # Qcal = q/phi for the rotation-region section q = (1/4) conj(gamma_*) ihat
    denom = 4.0 * F * zeta * G
    Qcal = -np.conj(gs) / denom
    dQcal = tuple(-(np.conj(dgs[i]) - np.conj(gs) * (dlnF[i] + dlnzeta[i] + dlnG[i])) / denom
                  for i in range(3))

    hh = hhat(params, z)
    hh_eff = -hh
    Qfun = hh_eff + vd * (Qcal - hh_eff)

    sigma, ihat = sigma_frame(gs)
    shape = t.shape + (3,)
    phi = np.zeros(shape, dtype=complex)
    term_plus = chis**2 * wp * gam          # (chi_* P)^2 / zeta, regular at the axis
    phi[..., 0] = F * (-zeta + term_plus)
    phi[..., 1] = 1j * F * (zeta + term_plus)
    phi[..., 2] = 2.0 * F * chis * wp

    dQ_t = dvd[0] * (Qcal - hh_eff) + vd * dQcal[0]
    dQ_perp = (dvd[1] + 1j * dvd[2]) * (Qcal - hh_eff) + vd * (dQcal[1] + 1j * dQcal[2])
    beta = dQ_t[..., None] * phi
    bhat = -1j * dQ_perp[..., None] * phi

    # flat-frame connection coefficient (annihilates sigma and phi/|phi|)
    tfr = []
    for i in range(3):
        comp = np.zeros(shape, dtype=complex)
        comp[..., 0] = np.imag(dgs[i]) / G
        comp[..., 1] = np.real(dgs[i]) / G
        comp[..., 2] = -np.imag(np.conj(gs) * dgs[i]) / G
        comp = comp + 0.5 * np.imag(dlnzeta[i])[..., None] * sigma
        tfr.append(np.real(comp))

    beta_st = al.star(beta)
    bhat_st = al.star(bhat)
    At = np.real(tfr[0] - 1j * (beta - beta_st))
    A1 = np.real(tfr[1] + dw2[..., None] * sigma + (bhat + bhat_st))
    A2 = np.real(tfr[2] - dw1[..., None] * sigma - 1j * (bhat - bhat_st))
    a3 = np.real(alpha[..., None] * sigma + beta + beta_st)

    return dict(t=t, z=z, r=r, x=x, w=w, alpha=alpha, dw1=dw1, dw2=dw2,
                zeta=zeta, gamma=gam, gamma_star=gs, chi_star=chis, varpi=varpi,
                varpi_dagger=vd, F=F, sigma=np.real(sigma), ihat=ihat, phi=phi,
                Qfun=Qfun, q=Qfun[..., None] * phi, beta=beta, bhat=bhat,
                theta_flat=tfr, At=At, A1=A1, A2=A2, a3=a3,
                alpha_model_k=alpha_k, alpha_model_m=alpha_m)


def seed_w(params, t, z):
    """The interpolated log-magnitude profile w (|phi| = e^{2w})."""
    return _ingredients(params, t, z)["w"]


def q_section(params, t, z):
    """The eigenbundle section q whose covariant derivatives give beta, bhat."""
    return _ingredients(params, t, z)["q"]


def beta_bhat(params, t, z):
    """(beta, bhat) in closed form; z = 0 returns the smooth limit (0, 0) off the
    transition band (both sections vanish identically on the axis there)."""
    t_arr = np.asarray(t, dtype=float)
    z_arr = np.asarray(z, dtype=complex)
    t_arr, z_arr = np.broadcast_arrays(t_arr, z_arr)
    axis = np.abs(z_arr) < AXIS_GUARD
    z_safe = np.where(axis, 1e-6 * np.maximum(t_arr, 1.0), z_arr)
    ing = _ingredients(params, t_arr, z_safe)
    beta, bhat = ing["beta"], ing["bhat"]
    if np.any(axis):
        beta = np.where(axis[..., None], 0.0, beta)
        bhat = np.where(axis[..., None], 0.0, bhat)
    return beta, bhat


def seed_point(params, t, z):
    """Full closed-form data at (t, z) (see _ingredients for the keys)."""
    return _ingredients(params, t, z)


def assemble_seed(params, grid):
    """Evaluate the initial data set on every node of a HalfSpaceGrid."""
    from .fields import GaugeField

    if np.any(np.abs(grid.z1) < AXIS_GUARD) or np.any(np.abs(grid.z2) < AXIS_GUARD):
        raise ValueError("grid contains z = 0 nodes; use an even node count")
    t3, zc = grid.t_mesh, grid.z_mesh
    ing = _ingredients(params, t3, zc)
    return GaugeField(grid=grid, At=ing["At"], A1=ing["A1"], A2=ing["A2"],
                      a3=ing["a3"], phi=ing["phi"], params=params)


def x_zero_region_mask(params, grid):
    """Nodes where the error field vanishes identically in the continuum."""
    t3, zc = grid.t_mesh, grid.z_mesh
    r = np.abs(zc)
    zero = (r >= 4.0 * t3) & (t3 <= 0.5 * params.delta)
    if params.special:
        band_lo = 0.5 * params.delta * (1.0 + r**2) ** 0.25
        band_hi = params.delta * (1.0 + r**2) ** 0.25
        zero |= (t3 >= 4.0 * params.delta) & ~((t3 >= band_lo) & (t3 <= band_hi))
    else:
        zero |= t3 >= params.delta
    return zero


def seed_X_bounds(params, fld, reference_noise=None, radii=(1.0, 2.0, 4.0)):
    """Region structure and integral bounds of the assembled error field.

    Checks: |X| at discretization-noise level on the zero regions, finiteness
    of the (1+t^2)-weighted integral, and the |z| > R tail fit.  The noise
    reference defaults to the same discrete operator applied to the exact
    index-k model (whose continuum X vanishes).
    """
    from . import fields as fl
    from .models import model_fields

    grid = fld.grid
    rep = fl.kw_residuals(fld)
    Xn = fl.alg_norm(rep.X)
    interior = grid.interior_mask()
    zero = x_zero_region_mask(params, grid) & interior

    if reference_noise is None:
        mp = model_fields(params.k, grid.t_mesh, grid.z_mesh)
        ref = fl.GaugeField(grid=grid, At=np.real(mp.At), A1=np.real(mp.A1),
                            A2=np.real(mp.A2), a3=np.real(mp.a3), phi=mp.phi)
        ref_rep = fl.kw_residuals(ref)
        reference_noise = float(np.max(fl.alg_norm(ref_rep.X)[zero])) if zero.any() else 0.0

    max_zero_region = float(np.max(Xn[zero])) if zero.any() else 0.0
    weighted = fl.weighted_integral(grid, Xn**2, weight="1+t^2", mask=interior)
    tails = []
    for R in radii:
        mask = interior & (np.abs(grid.z_mesh) > R)
        tails.append(fl.weighted_integral(grid, Xn**2, mask=mask))
    tails = np.asarray(tails)
    slope = np.nan
    if np.all(tails > 0):
        slope = float(np.polyfit(np.log(np.asarray(radii)), np.log(tails), 1)[0])
    return dict(max_X=float(np.max(Xn[interior])), max_X_zero_region=max_zero_region,
                noise_reference=float(reference_noise),
                zero_region_ok=bool(max_zero_region <= 3.0 * reference_noise + 1e-12),
                weighted_integral=float(weighted),
                tail_radii=list(radii), tail_integrals=tails.tolist(),
                tail_slope=slope,
                tail_upper_bound_const=float(np.max(tails * np.asarray(radii))))
