"""The dissipative gauge-deformation flow and its diagnostics.

Each step solves the screened elliptic equation Op(u) = X for the current
field, advances (phi, a3, A) by the infinitesimal complex gauge action and
accumulates g <- exp(i ds u) g.  Because the elliptic operator composes the
same stencils the update uses, the discrete error field obeys
X_{n+1} = (1 - ds) X_n + O(ds^2) exactly on interior nodes, so the fitted
decay rate of ln||X|| approaches -1 as ds -> 0 regardless of resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import algebra as al
from . import elliptic as el
from . import fields as fl


@dataclass
class FlowState:
    s: float
    fld: fl.GaugeField
    g: np.ndarray                       # node-wise 2x2 accumulated deformation
    X0_norm: float
    history: list = field(default_factory=list)

    def det_drift(self):
        return float(np.max(np.abs(al.det2(self.g) - 1.0)))


def initial_state(fld):
    rep = fl.kw_residuals(fld)
    g = np.broadcast_to(al.IDENT2, fld.grid.shape + (2, 2)).copy()
    st = FlowState(s=0.0, fld=fld.copy(), g=g, X0_norm=rep.norms["X_l2"])
    st.history.append(_history_row(0.0, rep, 0.0, 0.0))
    return st


def _history_row(s, rep, sup_u, sup_tdu):
    return dict(s=s, X_l2=rep.norms["X_l2"], R1=rep.norms["R1_l2"],
                R2=rep.norms["R2_l2"], R3=rep.norms["R3_l2"],
                sup_u=sup_u, sup_t_grad_u=sup_tdu,
                X_weighted=rep.norms["X_weighted"])


def flow_step(state, ds, tol=1e-8, max_iter=None, warm_start=None):
    """One explicit step: solve Op(u) = X, advance fields, accumulate g."""
    if ds <= 0:
        raise ValueError("ds must be positive")
    fld = state.fld
    g = fld.grid
    X = fl.error_field(fld)
    problem = el.EllipticProblem(fld=fld, rhs=X)
    u, stats = el.solve_u(problem, tol=tol, max_iter=max_iter, x0=warm_start)

    Dtu = el._cov_zero(fld, u, "t")
    D1u = el._cov_zero(fld, u, "z1")
    D2u = el._cov_zero(fld, u, "z2")

    new = fld.copy()
    new.phi = fld.phi + ds * 1j * al.bracket(u, fld.phi)
    new.a3 = fld.a3 + ds * Dtu
    new.At = fld.At - ds * al.bracket(fld.a3, u)
    new.A1 = fld.A1 + ds * D2u
    new.A2 = fld.A2 - ds * D1u
    for name in ("At", "A1", "A2", "a3"):
        arr = getattr(new, name)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(
                f"non-finite {name} after step at s={state.s}; "
                f"sup|u|={float(np.max(fl.alg_norm(u))):.3e}")
        setattr(new, name, np.real(arr))

    g_new = al.renormalize_det(
        np.einsum("...ij,...jk->...ik", al.exp_iu(u, ds), state.g))

    rep = fl.kw_residuals(new)
    sup_u = float(np.max(fl.alg_norm(u)))
    interior = g.interior_mask()
    tdu = g.t_mesh * np.sqrt(fl.alg_norm(Dtu) ** 2 + fl.alg_norm(D1u) ** 2
                             + fl.alg_norm(D2u) ** 2)
    out = FlowState(s=state.s + ds, fld=new, g=g_new, X0_norm=state.X0_norm,
                    history=state.history + [
                        _history_row(state.s + ds, rep, sup_u,
                                     float(np.max(tdu[interior])))])
    out.last_u = u
    out.solver_stats = stats
    return out


@dataclass
class FlowReport:
    decay_exponent: float
    decay_r2: float
    sup_u_exponent: float
    sup_u_r2: float
    residual_growth: dict
    final_norms: dict
    face_g_deviation: float
    history: list


def run_flow(seed_field, s_max=3.0, ds=0.05, tol=1e-8, max_iter=None,
             on_step=None):
    """Step the flow to s_max and fit the decay law of ||X||.

    Raises if the fitted decay exponent drops below 0.5 (grid too coarse or
    ds too large for the configuration).
    """
    state = initial_state(seed_field)
    warm = None
    nsteps = int(round(s_max / ds))
    for _ in range(nsteps):
        state = flow_step(state, ds, tol=tol, max_iter=max_iter, warm_start=warm)
        warm = state.last_u
        if on_step is not None:
            on_step(state)
    report = flow_report(state)
    if report.decay_exponent < 0.5:
        raise RuntimeError(
            f"flow failure: fitted decay exponent {report.decay_exponent:.3f} < 0.5")
    return state, report


def _log_fit(s, vals):
    s = np.asarray(s, dtype=float)
    y = np.log(np.asarray(vals, dtype=float))
    if len(s) < 2 or np.any(~np.isfinite(y)):
        return np.nan, np.nan
    coef = np.polyfit(s, y, 1)
    pred = np.polyval(coef, s)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def flow_report(state):
    hist = state.history
    s = [row["s"] for row in hist]
    slope, r2 = _log_fit(s, [row["X_l2"] for row in hist])
    su = [row["sup_u"] for row in hist[1:]]
    slope_u, r2_u = _log_fit(s[1:], su) if len(su) >= 2 else (np.nan, np.nan)
    growth = {}
    for key in ("R1", "R2", "R3"):
        first = hist[0][key]
        growth[key] = max(row[key] for row in hist) / first if first > 0 else np.inf
    g = state.g
    gridshape = state.fld.grid.shape
    dev = np.abs(g - al.IDENT2).max(axis=(-1, -2))
    face = np.zeros(gridshape, dtype=bool)
    face[0] = face[-1] = True
    face_dev = float(np.max(dev[face]))
    return FlowReport(decay_exponent=-slope, decay_r2=r2,
                      sup_u_exponent=-slope_u if np.isfinite(slope_u) else np.nan,
                      sup_u_r2=r2_u, residual_growth=growth,
                      final_norms=dict(hist[-1]), face_g_deviation=face_dev,
                      history=hist)


def decay_diagnostics(history):
    """Fit the recorded sup|u| and ||X|| trajectories to A e^{-s} envelopes."""
    if len(history) < 5:
        raise ValueError("need at least 5 history rows")
    s = [row["s"] for row in history]
    slope_x, r2_x = _log_fit(s, [row["X_l2"] for row in history])
    s_u = [row["s"] for row in history[1:]]
    slope_u, r2_u = _log_fit(s_u, [row["sup_u"] for row in history[1:]])
    kappa = [row["sup_t_grad_u"] * np.exp(row["s"]) for row in history[1:]]
    return dict(X_exponent=-slope_x, X_r2=r2_x,
                sup_u_exponent=-slope_u, sup_u_r2=r2_u,
                sup_u_decreasing=bool(np.all(np.diff([row["sup_u"]
                                                      for row in history[1:]]) <= 1e-12)),
                t_grad_u_envelope=kappa,
                t_grad_u_envelope_spread=float(max(kappa) / min(kappa))
                if min(kappa) > 0 else np.inf)


def curvature_tail(fld, radii=(1.0, 2.0, 4.0)):
    """|z| > R integrals of |B|^2 + |E1|^2 + |E2|^2 and their log-log slope."""
    g = fld.grid
    EA1, EA2, BA3 = fl.curvature(fld)
    dens = (fl.alg_norm(EA1) ** 2 + fl.alg_norm(EA2) ** 2 + fl.alg_norm(BA3) ** 2)
    interior = g.interior_mask()
    vals = []
    for R in radii:
        if R >= g.half_width:
            raise ValueError("radius outside the z-truncation")
        mask = interior & (np.abs(g.z_mesh) > R)
        vals.append(fl.weighted_integral(g, dens, mask=mask))
    lr = np.log(np.asarray(radii, dtype=float))
    slope = (float(np.polyfit(lr, np.log(vals), 1)[0])
             if np.all(np.asarray(vals) > 0) else np.nan)
    return dict(radii=list(radii), integrals=list(map(float, vals)), slope=slope,
                M=float(np.max(np.asarray(vals) * np.asarray(radii))))


def donaldson_tau(g_field, grid, threshold=1e-6):
    """tau = trace(g g^dagger) - 2 >= 0; reports the worst interior Laplacian.

    tau vanishes iff g is unitary; for deformations between solutions its
    flat Laplacian is non-negative, so min(Lap tau) over nodes with tau above
    threshold measures how close the state is to that regime.
    """
    gh = np.einsum("...ij,...kj->...ik", g_field, np.conj(g_field))
    tau = np.real(gh[..., 0, 0] + gh[..., 1, 1]) - 2.0
    lap = np.zeros_like(tau)
    for direction in ("t", "z1", "z2"):
        lap += fl.partial(grid, fl.partial(grid, tau, direction), direction)
    interior = grid.interior_mask(margin=2)
    sel = interior & (tau > threshold)
    min_lap = float(np.min(lap[sel])) if sel.any() else np.inf
    return tau, dict(tau_min=float(np.min(tau)), tau_max=float(np.max(tau)),
                     active_nodes=int(np.sum(sel)), min_interior_laplacian=min_lap)


@dataclass
class ModuliSignature:
    coefficients: np.ndarray     # pole coefficients, leading first
    fit_error: float
    t_slice: float
    radii: list


def moduli_signature(state, seed_params, t_slice=None, n_angles=16,
                     radii_cells=(2, 3, 4, 6), cond_limit=1e8):
    """Pole data of the transported section lambda = g lambda0 g^-1 near z = 0.

    Samples circles on one t-slice, projects lambda onto the phi direction,
    and least-squares fits s(z) = (1/4) <phi* lambda>/|phi|^2 to pole powers
    z^{-(m+p)} ... z^{-m-1} plus a regular part.  For the raw data set the
    leading coefficient is 1/(4 a_p).  The slice must sit where the bounded
    part of q is switched off (t about 2*delta), else the pole is invisible.
    """
    from . import seeds as sd

    grid = state.fld.grid
    m, p = seed_params.m, seed_params.p
    if t_slice is None:
        t_slice = 2.0 * seed_params.delta
    it = int(np.argmin(np.abs(grid.t - t_slice)))
    t_val = grid.t[it]
    rs = [c * grid.h_z for c in radii_cells]
    ang = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    zs = np.concatenate([r * np.exp(1j * ang) for r in rs])
    ts = np.full_like(np.real(zs), t_val)

    ing = sd.seed_point(seed_params, ts, zs)
    lam0 = ing["sigma"].astype(complex) - 4.0 * ing["q"]
    phi0 = ing["phi"]

    # interpolate g at the sample points (bilinear on the slice)
    gmat = state.g[it]
    x1 = (np.real(zs) + grid.half_width) / grid.h_z
    x2 = (np.imag(zs) + grid.half_width) / grid.h_z
    i1 = np.clip(x1.astype(int), 0, grid.n_z - 2)
    i2 = np.clip(x2.astype(int), 0, grid.n_z - 2)
    f1 = x1 - i1
    f2 = x2 - i2
    gs = ((1 - f1) * (1 - f2))[:, None, None] * gmat[i1, i2] \
        + (f1 * (1 - f2))[:, None, None] * gmat[i1 + 1, i2] \
        + ((1 - f1) * f2)[:, None, None] * gmat[i1, i2 + 1] \
        + (f1 * f2)[:, None, None] * gmat[i1 + 1, i2 + 1]
    gs = al.renormalize_det(gs)
    lam = al.adjoint(gs, lam0)
    phi = al.adjoint(gs, phi0)

    coll = al.inner(al.star(phi), lam) / fl.alg_norm(phi) ** 2
    svals = 0.25 * coll

    powers = list(range(-(m + p), -m)) + [0, 1]
    A = np.stack([zs**pw for pw in powers], axis=-1)
    scale = np.max(np.abs(A), axis=0)
    sol, res, rank, sv = np.linalg.lstsq(A / scale, svals, rcond=None)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if cond > cond_limit:
        raise RuntimeError(f"ill-conditioned pole fit (cond={cond:.2e})")
    coeffs = (sol / scale)[:p]
    pred = A @ (sol / scale)
    fit_err = float(np.max(np.abs(pred - svals)))
    return ModuliSignature(coefficients=coeffs, fit_error=fit_err,
                           t_slice=float(t_val), radii=rs)
