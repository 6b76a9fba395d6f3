"""su(2) / sl(2,C) kernel: basis conventions, brackets, projections, small-matrix ops.

The basis (s1, s2, s3) is anti-Hermitian and traceless with

    s_a^2 = -1,   s1*s2 = -s3,  s2*s3 = -s1,  s3*s1 = -s2,

so brackets close as [s_a, s_b] = -2 eps_{abc} s_c (note the sign; this is not
the usual physics convention).  Concretely s_a = i * (Pauli_a).  The inner
product <xy> = -trace(xy)/2 makes the basis orthonormal; star is -1 times the
Hermitian conjugate, i.e. complex conjugation of basis coefficients.

Algebra values are stored as length-3 coefficient vectors (c1, c2, c3); grid
fields stack them along the last axis, so every function here broadcasts over
leading axes.  Everything is a pure function; nothing holds state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# s_a = i * Pauli_a, fixed so that s1*s2 = -s3 exactly.
SIGMA1 = np.array([[0.0, 1.0j], [1.0j, 0.0]])
SIGMA2 = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
SIGMA3 = np.array([[1.0j, 0.0], [0.0, -1.0j]])
SIGMA = np.stack([SIGMA1, SIGMA2, SIGMA3])
IDENT2 = np.eye(2, dtype=complex)

DET_TOL = 1e-12
TRACE_TOL = 1e-12


def alg(c1=0.0, c2=0.0, c3=0.0):
    """Coefficient vector for c1*s1 + c2*s2 + c3*s3."""
    return np.array([c1, c2, c3], dtype=complex)


def bracket(x, y):
    """[x, y] = xy - yx = -2 (x cross y) on coefficients; bilinear, antisymmetric."""
    x = np.asarray(x)
    y = np.asarray(y)
    return -2.0 * np.cross(x, y)


def inner(x, y):
    """Bilinear pairing <xy> = -trace(xy)/2; the basis is orthonormal for it."""
    x = np.asarray(x)
    y = np.asarray(y)
    return np.sum(x * y, axis=-1)


def star(x):
    """eta -> -eta^dagger; conjugates coefficients, fixes su(2) elements."""
    return np.conj(np.asarray(x))


def norm(x):
    """Hermitian norm |x| = sqrt(<x* x>) = sqrt(sum |c_a|^2)."""
    x = np.asarray(x)
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=-1))


def is_su2(x, tol=1e-10):
    """True where all coefficients are real (element lies in su(2))."""
    return np.all(np.abs(np.imag(np.asarray(x))) <= tol, axis=-1)


def to_matrix(x):
    """Expand coefficients into the 2x2 matrix sum c_a * s_a."""
    x = np.asarray(x, dtype=complex)
    return np.einsum("...a,aij->...ij", x, SIGMA)


def from_matrix(m, tol=TRACE_TOL):
    """Extract basis coefficients c_a = <s_a m>; rejects a nonzero identity part."""
    m = np.asarray(m, dtype=complex)
    tr = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
    if np.any(np.abs(tr) > tol * (1.0 + np.max(np.abs(m)))):
        raise ValueError("matrix has a non-traceless part; not an algebra element")
    c = -0.5 * np.einsum("aij,...ji->...a", SIGMA, m)
    return c


def eig_project(sigma, x, tol=1e-10):
    """Split x into (+1, 0, -1) eigenparts of [i/2*sigma, .] for unit sigma.

    Returns (plus, diag, minus) with x = plus + diag*sigma + minus.
    """
    sigma = np.asarray(sigma)
    x = np.asarray(x)
    n2 = inner(sigma, sigma)
    if np.any(np.abs(n2 - 1.0) > tol):
        raise ValueError("sigma must be a unit section, <sigma^2> = 1")
    ad1 = 0.5j * bracket(sigma, x)
    ad2 = 0.5j * bracket(sigma, ad1)
    plus = 0.5 * (ad2 + ad1)
    minus = 0.5 * (ad2 - ad1)
    diag = inner(sigma, x)
    return plus, diag, minus


def adjoint(g, x):
    """Conjugate the algebra element x by the 2x2 group element g: g x g^-1."""
    gm = g.m if isinstance(g, GroupElement) else np.asarray(g, dtype=complex)
    det = gm[..., 0, 0] * gm[..., 1, 1] - gm[..., 0, 1] * gm[..., 1, 0]
    if np.any(np.abs(det) < 1e-14):
        raise ValueError("singular group element")
    xm = to_matrix(x)
    ginv = inv2(gm)
    return from_matrix(gm @ xm @ ginv if gm.ndim == 2 else
                       np.einsum("...ij,...jk,...kl->...il", gm, xm, ginv))


def inv2(m):
    """Inverse of (stacked) 2x2 matrices via the adjugate."""
    m = np.asarray(m, dtype=complex)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / det[..., None, None]


def det2(m):
    m = np.asarray(m)
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def exp_traceless(m):
    """exp of (stacked) traceless 2x2 matrices, exact via M^2 = mu^2 * I.

    cosh/sinhc are evaluated through their entire series near mu = 0, so the
    zero matrix maps exactly to the identity and det(exp) = 1 to rounding.
    """
    m = np.asarray(m, dtype=complex)
    mu2 = -det2(m)
    mu = np.sqrt(mu2.astype(complex))
    c = np.cosh(mu)
    small = np.abs(mu) < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(small, 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0, np.sinh(mu) / np.where(small, 1.0, mu))
    return c[..., None, None] * IDENT2 + s[..., None, None] * m


def exp_iu(u, ds):
    """Group element exp(i*ds*u) for an algebra element u; det = 1 exactly.

    For su(2)-valued u (real coefficients) this moves in the Hermitian
    directions of Sl(2,C), which is what the deformation flow needs.
    """
    return exp_traceless(1.0j * ds * to_matrix(u))


@dataclass
class AlgElement:
    """sl(2,C) element as the coefficient triple over (s1, s2, s3)."""

    c1: complex = 0.0
    c2: complex = 0.0
    c3: complex = 0.0

    @classmethod
    def from_coeffs(cls, c):
        c = np.asarray(c)
        return cls(complex(c[0]), complex(c[1]), complex(c[2]))

    @property
    def coeffs(self):
        return np.array([self.c1, self.c2, self.c3], dtype=complex)

    @property
    def matrix(self):
        return to_matrix(self.coeffs)

    def norm(self):
        return float(norm(self.coeffs))

    def is_su2(self, tol=1e-10):
        return bool(is_su2(self.coeffs, tol))


@dataclass
class GroupElement:
    """Sl(2,C) element as a 2x2 complex matrix with det = 1."""

    m: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=complex)
        d = det2(self.m)
        if abs(d) < 1e-14:
            raise ValueError("singular matrix is not a group element")
        if abs(d - 1.0) > DET_TOL:
            self.m = self.m / np.sqrt(d)

    @property
    def det(self):
        return complex(det2(self.m))

    def is_unitary(self, tol=DET_TOL):
        return bool(np.max(np.abs(self.m @ self.m.conj().T - IDENT2)) <= tol)

    def inverse(self):
        return GroupElement(inv2(self.m))

    def __matmul__(self, other):
        return GroupElement(self.m @ other.m)


def renormalize_det(g):
    """Rescale (stacked) matrices so det = 1; used after accumulated products."""
    d = det2(g)
    return g / np.sqrt(d)[..., None, None]


def group_from_w_q(w, sigma, q):
    """The Sl(2,C) element cosh(w) + i sinh(w) sigma + 2i e^{-w} q (as matrices).

    Satisfies g sigma g^-1 = sigma - 4q and g (phi/|phi|) g^-1 = e^{2w}(phi/|phi|)
    when q lies in the +1 eigenbundle of sigma; used as an exact cross-check of
    the group/algebra conventions.
    """
    w = np.asarray(w, dtype=float)
    sm = to_matrix(sigma)
    qm = to_matrix(q)
    return (np.cosh(w)[..., None, None] * IDENT2
            + 1.0j * np.sinh(w)[..., None, None] * sm
            + 2.0j * np.exp(-w)[..., None, None] * qm)
