"""Grid fields on the truncated half-space and their discrete calculus.

The grid is log-spaced in t (uniform in tau = ln t) and uniform in the two
z directions.  Two derivative flavors coexist on purpose:

* ``deriv_field``: centered interior, one-sided second order at faces --
  used for curvature/residual reporting of gauge fields.
* ``deriv_zero``: centered everywhere with zero extension beyond the faces --
  used for quantities that vanish on the boundary (the flow section u and
  its covariant derivatives).  The elliptic operator composes these, which
  makes it exactly antisymmetric-squared in the volume-weighted inner
  product and makes the flow's contraction identity exact on interior nodes.

Boundary rows are excluded from reported norms (interior margin of 1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import algebra as al

AXES = {"t": 0, "z1": 1, "z2": 2}


@dataclass
class HalfSpaceGrid:
    """Truncated (0,inf) x R^2 box: log-spaced t levels, uniform z lattice."""

    t_min: float = 0.02
    t_max: float = 8.0
    n_t: int = 33
    half_width: float = 6.0
    n_z: int = 64

    def __post_init__(self):
        if self.t_min <= 0 or self.t_max <= self.t_min:
            raise ValueError("need 0 < t_min < t_max")
        if self.n_t < 3 or self.n_z < 3:
            raise ValueError("need at least 3 nodes per direction")
        self.tau = np.linspace(np.log(self.t_min), np.log(self.t_max), self.n_t)
        self.h_tau = self.tau[1] - self.tau[0]
        self.t = np.exp(self.tau)
        self.z1 = np.linspace(-self.half_width, self.half_width, self.n_z)
        self.z2 = self.z1.copy()
        self.h_z = self.z1[1] - self.z1[0]
        # cell widths from geometric mid-edges; weights sum to the box measure
        edges = np.empty(self.n_t + 1)
        edges[1:-1] = np.sqrt(self.t[1:] * self.t[:-1])
        edges[0], edges[-1] = self.t[0], self.t[-1]
        self.w_t = np.diff(edges)
        self.w_z = np.full(self.n_z, self.h_z)
        self.w_z[0] = self.w_z[-1] = 0.5 * self.h_z

    @property
    def shape(self):
        return (self.n_t, self.n_z, self.n_z)

    @property
    def t_mesh(self):
        return self.t[:, None, None] + np.zeros(self.shape)

    @property
    def z_mesh(self):
        return (self.z1[None, :, None] + 1j * self.z2[None, None, :]) + np.zeros(self.shape)

    def volume_weights(self):
        return self.w_t[:, None, None] * self.w_z[None, :, None] * self.w_z[None, None, :]

    def interior_mask(self, margin=1):
        m = np.zeros(self.shape, dtype=bool)
        m[margin:-margin, margin:-margin, margin:-margin] = True
        return m

    def refined(self):
        """Same box with doubled node counts (for convergence-ratio tests)."""
        return HalfSpaceGrid(self.t_min, self.t_max, 2 * self.n_t - 1,
                             self.half_width, 2 * self.n_z - 1)


def _diff_field(arr, axis, h):
    """Centered interior, one-sided second order at the two faces."""
    out = np.empty_like(arr)
    sl = [slice(None)] * arr.ndim

    def take(i):
        sl2 = list(sl)
        sl2[axis] = i
        return arr[tuple(sl2)]

    def put(i, val):
        sl2 = list(sl)
        sl2[axis] = i
        out[tuple(sl2)] = val

    put(slice(1, -1), (take(slice(2, None)) - take(slice(None, -2))) / (2 * h))
    put(0, (-3 * take(0) + 4 * take(1) - take(2)) / (2 * h))
    put(-1, (3 * take(-1) - 4 * take(-2) + take(-3)) / (2 * h))
    return out


def _diff_zero(arr, axis, h):
    """Centered everywhere with zero extension beyond both faces."""
    out = np.zeros_like(arr)
    sl = [slice(None)] * arr.ndim

    def take(i):
        sl2 = list(sl)
        sl2[axis] = i
        return arr[tuple(sl2)]

    def put(i, val):
        sl2 = list(sl)
        sl2[axis] = i
        out[tuple(sl2)] = val

    put(slice(1, -1), (take(slice(2, None)) - take(slice(None, -2))) / (2 * h))
    put(0, take(1) / (2 * h))
    put(-1, -take(-2) / (2 * h))
    return out


def partial(grid, arr, direction, flavor="field"):
    """Flat partial derivative of a node array (trailing axes untouched)."""
    diff = _diff_field if flavor == "field" else _diff_zero
    ax = AXES[direction]
    if direction == "t":
        if grid.n_t < 3:
            raise ValueError("need at least 3 t-levels")
        d = diff(arr, 0, grid.h_tau)
        shape = [1] * arr.ndim
        shape[0] = grid.n_t
        return d / grid.t.reshape(shape)
    if grid.n_z < 3:
        raise ValueError("need at least 3 z-nodes")
    return diff(arr, ax, grid.h_z)


@dataclass
class GaugeField:
    """One configuration (A, a): connection coefficients and the Higgs triple.

    At/A1/A2/a3 are real su(2) coefficient arrays (shape + (3,)); phi is the
    complex eigenbundle combination a1 - i a2 (the primary store; a1, a2 are
    derived views).
    """

    grid: HalfSpaceGrid
    At: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    a3: np.ndarray
    phi: np.ndarray
    params: Optional[object] = None

    @property
    def a1(self):
        return np.real(self.phi)

    @property
    def a2(self):
        return -np.imag(self.phi)

    def check_reality(self, tol=1e-10):
        for name in ("At", "A1", "A2", "a3"):
            arr = getattr(self, name)
            if np.iscomplexobj(arr) and np.max(np.abs(np.imag(arr))) > tol:
                raise ValueError(f"{name} has a non-real su(2) part")
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("non-finite field values")

    def copy(self):
        return GaugeField(grid=self.grid, At=self.At.copy(), A1=self.A1.copy(),
                          A2=self.A2.copy(), a3=self.a3.copy(), phi=self.phi.copy(),
                          params=self.params)


def alg_norm(arr):
    """Pointwise |x| = sqrt(sum_a |c_a|^2) over the trailing coefficient axis."""
    return np.sqrt(np.sum(np.abs(arr) ** 2, axis=-1))


def cov_deriv(fld, target, direction, flavor="field"):
    """Covariant derivative d + [A_dir, .] of a node-wise algebra array."""
    A = {"t": fld.At, "z1": fld.A1, "z2": fld.A2}[direction]
    return partial(fld.grid, target, direction, flavor) + al.bracket(A, target)


def curvature(fld):
    """(E_A1, E_A2, B_A3) from the stored connection coefficients."""
    g = fld.grid
    EA1 = (partial(g, fld.A1, "t") - partial(g, fld.At, "z1")
           + al.bracket(fld.At, fld.A1))
    EA2 = (partial(g, fld.A2, "t") - partial(g, fld.At, "z2")
           + al.bracket(fld.At, fld.A2))
    BA3 = (partial(g, fld.A2, "z1") - partial(g, fld.A1, "z2")
           + al.bracket(fld.A1, fld.A2))
    return EA1, EA2, BA3


def error_field(fld, flavor="field"):
    """X = D_t a3 - B_A3 - (i/2)[phi, phi*]; vanishes exactly on solutions."""
    g = fld.grid
    Dta3 = partial(g, fld.a3, "t", flavor) + al.bracket(fld.At, fld.a3)
    BA3 = (partial(g, fld.A2, "z1", flavor) - partial(g, fld.A1, "z2", flavor)
           + al.bracket(fld.A1, fld.A2))
    comm = 0.5j * al.bracket(fld.phi, al.star(fld.phi))
    return np.real(Dta3 - BA3 - comm)


@dataclass
class ResidualReport:
    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    X: np.ndarray
    norms: dict


def kw_residuals(fld, mask=None):
    """All four reduced-equation residual fields plus interior norms.

    R1 pairs E_A1 - D_2 a3 with E_A2 + D_1 a3; R2 = (D_1 + i D_2) phi;
    R3 = D_t phi - i[a3, phi]; X is the fourth-equation error field.
    """
    g = fld.grid
    EA1, EA2, BA3 = curvature(fld)
    R1a = EA1 - cov_deriv(fld, fld.a3, "z2")
    R1b = EA2 + cov_deriv(fld, fld.a3, "z1")
    R1 = np.concatenate([R1a, R1b], axis=-1)
    R2 = cov_deriv(fld, fld.phi, "z1") + 1j * cov_deriv(fld, fld.phi, "z2")
    R3 = cov_deriv(fld, fld.phi, "t") - 1j * al.bracket(fld.a3, fld.phi)
    X = error_field(fld)
    interior = g.interior_mask() if mask is None else mask
    w = g.volume_weights()
    norms = {}
    for name, arr in (("R1", R1), ("R2", R2), ("R3", R3), ("X", X)):
        n = alg_norm(arr)
        norms[name + "_l2"] = float(np.sqrt(np.sum(w[interior] * n[interior] ** 2)))
        norms[name + "_max"] = float(np.max(n[interior]))
    Xn = alg_norm(X)
    norms["X_weighted"] = float(np.sum(w[interior] * (1 + g.t_mesh[interior] ** 2)
                                       * Xn[interior] ** 2))
    return ResidualReport(R1=R1, R2=R2, R3=R3, X=X, norms=norms)


def weighted_integral(grid, values, weight="1", mask=None):
    """Cell-weighted integral of a node-wise scalar over the truncated box."""
    w = grid.volume_weights()
    if weight == "1+t^2":
        w = w * (1.0 + grid.t_mesh**2)
    elif weight == "1/t^2":
        w = w / grid.t_mesh**2
    elif weight != "1":
        raise ValueError(f"unknown weight {weight!r}")
    if mask is not None:
        return float(np.sum(w[mask] * np.asarray(values)[mask]))
    return float(np.sum(w * values))


def frame_connection(grid, sigma, eta):
    """Least-squares flat-frame coefficients annihilating sigma and eta.

    Solves [T_i, sigma] = -d_i sigma and [T_i, eta] = -d_i eta per node for the
    real su(2) coefficients T_i; the residual is O(h^2) for smooth frames.
    """
    out = []
    for direction in ("t", "z1", "z2"):
        ds = partial(grid, sigma, direction)
        de = partial(grid, eta, direction)
        # bracket with unknown X: [X, v] = -2 X x v -> linear in X
        # build normal equations over the two constraints (real + complex)
        rows = []
        rhs = []
        for v, dv in ((sigma, ds), (eta, de)):
            # [X, v]_c = -2 eps_{abc} X_a v_b ; as matrix M(v) X with
            # M(v)[c, a] = -2 eps_{abc} v_b
            e = np.zeros(v.shape[:-1] + (3, 3), dtype=v.dtype)
            e[..., 0, 1] = -2 * v[..., 2]
            e[..., 0, 2] = 2 * v[..., 1]
            e[..., 1, 0] = 2 * v[..., 2]
            e[..., 1, 2] = -2 * v[..., 0]
            e[..., 2, 0] = -2 * v[..., 1]
            e[..., 2, 1] = 2 * v[..., 0]
            rows.append(e)
            rhs.append(-dv)
        # stack real/imag parts: A X = b in least squares, X real
        mats = np.concatenate([np.real(rows[0]), np.imag(rows[0]),
                               np.real(rows[1]), np.imag(rows[1])], axis=-2)
        vecs = np.concatenate([np.real(rhs[0]), np.imag(rhs[0]),
                               np.real(rhs[1]), np.imag(rhs[1])], axis=-1)
        AtA = np.einsum("...ka,...kb->...ab", mats, mats)
        Atb = np.einsum("...ka,...k->...a", mats, vecs)
        out.append(np.linalg.solve(AtA + 1e-30 * np.eye(3), Atb[..., None])[..., 0])
    return out


def wq_reconstruct(grid, w, q, sigma, eta):
    """Rebuild (A, phi, a3) from (w, q) and the frame (sigma, eta = phi/|phi|).

    alpha = d_t w (discrete, log-aware); the frame-annihilating flat connection
    is solved per node; beta/bhat come from discrete covariant derivatives of
    q.  Independent of the closed-form assembly path, so it serves as its
    oracle wherever the frame is resolved (mask the axis winding region).
    """
    if not np.all(np.isfinite(w)):
        raise ValueError("w must be finite on all nodes")
    alpha = partial(grid, w, "t")
    dw1 = partial(grid, w, "z1")
    dw2 = partial(grid, w, "z2")
    tfr = frame_connection(grid, sigma, eta)

    phi = np.exp(2.0 * w)[..., None] * eta

    # hatted covariant derivative: flat-frame part + (dw2 dz1 - dw1 dz2) sigma
    def hat_cov(target, direction):
        d = partial(grid, target, direction) + al.bracket(tfr[AXES[direction]], target)
        if direction == "z1":
            d = d + al.bracket(dw2[..., None] * sigma, target)
        elif direction == "z2":
            d = d - al.bracket(dw1[..., None] * sigma, target)
        return d

    beta = hat_cov(q, "t") - 2.0 * alpha[..., None] * q
    bhat = -1j * (hat_cov(q, "z1") + 1j * hat_cov(q, "z2"))
    beta_st = al.star(beta)
    bhat_st = al.star(bhat)
    At = np.real(tfr[0] - 1j * (beta - beta_st))
    A1 = np.real(tfr[1] + dw2[..., None] * sigma + (bhat + bhat_st))
    A2 = np.real(tfr[2] - dw1[..., None] * sigma - 1j * (bhat - bhat_st))
    a3 = np.real(alpha[..., None] * sigma + beta + beta_st)
    return GaugeField(grid=grid, At=At, A1=A1, A2=A2, a3=a3, phi=phi)


def sl2c_gauge_apply(g, base, flavor="field"):
    """Transform (A, phi, a3) by a node-wise Sl(2,C) section g.

    Implements the complex gauge action that preserves the first three
    equations:  delta(A_t) - i delta(a3) = -(D_t g) g^-1 + i [a3, g] g^-1,
    delta(A_1) + i delta(A_2) = -((D_1 + i D_2) g) g^-1, phi -> g phi g^-1.
    """
    grid = base.grid
    det = al.det2(g)
    if np.any(np.abs(det - 1.0) > 1e-8):
        raise ValueError("gauge section must have det 1")

    Atm = al.to_matrix(base.At)
    A1m = al.to_matrix(base.A1)
    A2m = al.to_matrix(base.A2)
    a3m = al.to_matrix(base.a3)
    ginv = al.inv2(g)

    def dpart(arr, direction):
        return partial(grid, arr, direction, flavor)

    def cov(mdir, Am):
        d = dpart(g, mdir)
        return d + Am @ g - g @ Am

    Mt = -(cov("t", Atm) @ ginv) + 1j * ((a3m @ g - g @ a3m) @ ginv)
    Mz = -((cov("z1", A1m) + 1j * cov("z2", A2m)) @ ginv)

    def ah(M):  # anti-Hermitian part
        return 0.5 * (M - np.conj(np.swapaxes(M, -1, -2)))

    def h(M):   # Hermitian part
        return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))

    dAt = al.from_matrix(ah(Mt), tol=1e-6)
    da3 = al.from_matrix(1j * h(Mt), tol=1e-6)
    dA1 = al.from_matrix(ah(Mz), tol=1e-6)
    dA2 = al.from_matrix(-1j * h(Mz), tol=1e-6)

    phi_m = al.to_matrix(base.phi)
    phi_new = al.from_matrix(g @ phi_m @ ginv, tol=1e-6)
    return GaugeField(grid=grid, At=np.real(base.At + dAt), A1=np.real(base.A1 + dA1),
                      A2=np.real(base.A2 + dA2), a3=np.real(base.a3 + da3),
                      phi=phi_new, params=base.params)


SNAPSHOT_COLUMNS = ["i_t", "i_z1", "i_z2"] + [
    f"{name}_{comp}_{part}"
    for name in ("At", "A1", "A2", "a1", "a2", "a3")
    for comp in ("c1", "c2", "c3")
    for part in ("re", "im")
]


def write_snapshot(fld, path):
    """Per-node CSV dump: indices plus 36 real columns (6 elements x 3 x re/im)."""
    g = fld.grid
    arrays = [fld.At, fld.A1, fld.A2, fld.a1, fld.a2, fld.a3]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(SNAPSHOT_COLUMNS)
        for it in range(g.n_t):
            for i1 in range(g.n_z):
                for i2 in range(g.n_z):
                    row = [it, i1, i2]
                    for arr in arrays:
                        for comp in range(3):
                            v = complex(arr[it, i1, i2, comp])
                            row.extend([f"{v.real:.17g}", f"{v.imag:.17g}"])
                    wr.writerow(row)


def read_snapshot(grid, path):
    """Read a snapshot written by write_snapshot back into a GaugeField."""
    data = np.zeros(grid.shape + (6, 3), dtype=complex)
    with open(path) as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != SNAPSHOT_COLUMNS:
            raise ValueError("unexpected snapshot column layout")
        for row in rd:
            it, i1, i2 = int(row[0]), int(row[1]), int(row[2])
            vals = np.array(row[3:], dtype=float).reshape(6, 3, 2)
            data[it, i1, i2] = vals[..., 0] + 1j * vals[..., 1]
    At, A1, A2, a1, a2, a3 = (data[..., j, :] for j in range(6))
    return GaugeField(grid=grid, At=np.real(At), A1=np.real(A1), A2=np.real(A2),
                      a3=np.real(a3), phi=a1 - 1j * a2)
