"""Isotropic constitutive model for the strain-gradient plate.

The bending energy density is

    (P + Ph) D2u : D2u  +  Q D3u : D3u

with P the classical Kirchhoff plate tensor, Ph the fourth-order
strain-gradient correction and Q the sixth-order gradient stiffness.  For
an isotropic material both quadratic forms reduce to two scalars each:

    (P + Ph) A = cA * A + cB * tr(A) * I           (A symmetric 2x2)
    Q B = q * B + c * sym(I (x) v),  v_k = B_11k + B_22k   (B symmetric 3rd order)

so on the component vectors a = (A11, A12, A22) and
b = (B111, B112, B122, B222) the energies are small quadratic forms whose
Gram matrices this module builds explicitly.  Eigenvalues are always
reported in the weighted coordinates (sqrt(1,2,1) resp. sqrt(1,3,3,1))
where they coincide with the full-index tensor Rayleigh quotients.

Units: mu, lam are bulk moduli (force/area), t and the internal lengths
l0, l1, l2 are lengths, so B, a0, a1, a2 carry force*length and b0, b1
carry force*length^3.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

# default ellipticity margins for the Lame pair
ALPHA0_DEFAULT = 1e-8
GAMMA0_DEFAULT = 1e-8

# component weights turning component vectors into full-index contractions
SYM2_WEIGHTS = np.array([1.0, 2.0, 1.0])
SYM3_WEIGHTS = np.array([1.0, 3.0, 3.0, 1.0])


def sym2_inner(a, b):
    """Full contraction A:B of symmetric 2x2 tensors in component form."""
    return np.sum(SYM2_WEIGHTS * np.asarray(a) * np.asarray(b), axis=-1)


def sym3_inner(a, b):
    """Full contraction of fully symmetric third-order tensors."""
    return np.sum(SYM3_WEIGHTS * np.asarray(a) * np.asarray(b), axis=-1)


class MaterialError(ValueError):
    """Raised when moduli or scales violate the admissibility constraints."""


@dataclass(frozen=True)
class IsotropicModuli:
    """Lame pair with strong-ellipticity validation.

    Admissibility: mu >= alpha0 and 2*mu + 3*lam >= gamma0, which keeps the
    derived plate moduli positive (Poisson ratio in (-1, 1/2)).
    """

    mu: float
    lam: float
    alpha0: float = ALPHA0_DEFAULT
    gamma0: float = GAMMA0_DEFAULT

    def __post_init__(self):
        if not np.isfinite(self.mu) or not np.isfinite(self.lam):
            raise MaterialError("moduli must be finite")
        if self.mu < self.alpha0:
            raise MaterialError(f"shear modulus mu={self.mu} below ellipticity bound {self.alpha0}")
        if 2.0 * self.mu + 3.0 * self.lam < self.gamma0:
            raise MaterialError(
                f"2*mu+3*lam={2 * self.mu + 3 * self.lam} below ellipticity bound {self.gamma0}")

    @property
    def young(self) -> float:
        return self.mu * (2.0 * self.mu + 3.0 * self.lam) / (self.mu + self.lam)

    @property
    def poisson(self) -> float:
        return self.lam / (2.0 * (self.mu + self.lam))

    def scaled(self, contrast: float) -> "IsotropicModuli":
        """Moduli of an inclusion with a scalar stiffness contrast.

        Every bending coefficient is linear in (mu, lam), so scaling the
        pair scales both quadratic forms by the same factor.
        """
        if contrast <= 0:
            raise MaterialError("contrast must be positive")
        return IsotropicModuli(contrast * self.mu, contrast * self.lam,
                               self.alpha0, self.gamma0)


@dataclass(frozen=True)
class LengthScales:
    """Plate thickness and internal material lengths.

    l0, l1, l2 weight the dilatational, deviatoric-stretch and rotation
    gradients; the governing small length is l = min(l0, l1, l2).
    """

    t: float
    l0: float
    l1: float
    l2: float

    def __post_init__(self):
        for name in ("t", "l0", "l1", "l2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise MaterialError(f"{name} must be positive and finite, got {v}")

    @property
    def l_min(self) -> float:
        return min(self.l0, self.l1, self.l2)


def _iso2_matrix(ca: float, cb: float) -> np.ndarray:
    """Component Gram matrix of A -> ca*A + cb*tr(A)*I on (A11, A12, A22)."""
    e = np.array([1.0, 0.0, 1.0])
    return ca * np.diag(SYM2_WEIGHTS) + cb * np.outer(e, e)


def _iso3_matrix(q: float, c: float) -> np.ndarray:
    """Component Gram matrix of the sixth-order form on (B111, B112, B122, B222)."""
    v1 = np.array([1.0, 0.0, 1.0, 0.0])
    v2 = np.array([0.0, 1.0, 0.0, 1.0])
    return q * np.diag(SYM3_WEIGHTS) + 3.0 * c * (np.outer(v1, v1) + np.outer(v2, v2))


def _weighted(mat: np.ndarray, weights: np.ndarray) -> np.ndarray:
    s = 1.0 / np.sqrt(weights)
    return mat * np.outer(s, s)


def iso2_apply(ca: float, cb: float, a: np.ndarray) -> np.ndarray:
    """Tensor action components of ca*A + cb*tr(A)*I; a is (..., 3)."""
    a = np.asarray(a, dtype=float)
    tr = a[..., 0] + a[..., 2]
    out = ca * a
    out[..., 0] += cb * tr
    out[..., 2] += cb * tr
    return out


def iso3_apply(q: float, c: float, b: np.ndarray) -> np.ndarray:
    """Tensor action components of the isotropic sixth-order stiffness.

    (QB)_ijk = q B_ijk + c (delta_ij v_k + delta_ik v_j + delta_jk v_i)
    with v_k = B_11k + B_22k; b is (..., 4) ordered (111, 112, 122, 222).
    """
    b = np.asarray(b, dtype=float)
    v1 = b[..., 0] + b[..., 2]
    v2 = b[..., 1] + b[..., 3]
    out = q * b
    out[..., 0] += 3.0 * c * v1
    out[..., 1] += c * v2
    out[..., 2] += c * v1
    out[..., 3] += 3.0 * c * v2
    return out


@dataclass(frozen=True)
class BendingOperators:
    """Derived bending coefficients and quadratic-form matrices.

    Attributes carry the classical plate rigidity B, the fourth-order
    gradient coefficients a0, a1, a2, the sixth-order coefficients b0, b1
    and the (redundant under isotropy) split Q8, Q9 of the top sixth-order
    constant, constrained by 2*(Q8 + 2*Q9) = 5*b1.

    The matrices P_mat, Ph_mat, Q_mat are the component Gram matrices: for
    a = components(D2u), a @ (P_mat + Ph_mat) @ a equals the full tensor
    contraction (P+Ph) D2u : D2u, and likewise for Q_mat with D3u.
    """

    moduli: IsotropicModuli
    scales: LengthScales
    B: float
    a0: float
    a1: float
    a2: float
    b0: float
    b1: float
    q8: float
    q9: float
    P_mat: np.ndarray = field(repr=False)
    Ph_mat: np.ndarray = field(repr=False)
    Q_mat: np.ndarray = field(repr=False)

    # --- scalar reductions -------------------------------------------------

    @property
    def ca(self) -> float:
        """Identity-direction coefficient of P + Ph."""
        return self.B * (1.0 - self.moduli.poisson) + 2.0 * self.a2 + 5.0 * self.a1

    @property
    def cb(self) -> float:
        """Trace-direction coefficient of P + Ph."""
        return self.B * self.moduli.poisson + self.a0 - self.a1 - self.a2

    @property
    def q(self) -> float:
        """Identity-direction coefficient of Q (equals 2*Q8 + 4*Q9 = 5*b1)."""
        return 5.0 * self.b1

    @property
    def c(self) -> float:
        """Trace-direction coefficient of Q."""
        return (self.b0 - 3.0 * self.b1) / 3.0

    @property
    def php_mat(self) -> np.ndarray:
        return self.P_mat + self.Ph_mat

    def php_weighted(self) -> np.ndarray:
        """P+Ph in weighted coordinates; eigenvalues = tensor Rayleigh quotients."""
        return _weighted(self.php_mat, SYM2_WEIGHTS)

    def q_weighted(self) -> np.ndarray:
        return _weighted(self.Q_mat, SYM3_WEIGHTS)

    def apply_php(self, a: np.ndarray) -> np.ndarray:
        """Components of (P+Ph) A for Hessian components a (..., 3)."""
        return iso2_apply(self.ca, self.cb, a)

    def apply_q(self, b: np.ndarray) -> np.ndarray:
        """Components of Q B for third-derivative components b (..., 4)."""
        return iso3_apply(self.q, self.c, b)


def build_bending_operators(moduli: IsotropicModuli, scales: LengthScales,
                            q8: float | None = None, q9: float | None = None,
                            ) -> BendingOperators:
    """Assemble the bending coefficients from moduli and length scales.

    B  = t^3 E / (12 (1 - nu^2))
    a0 = 2 mu t l0^2,  a1 = (2/15) mu t l1^2,  a2 = mu t l2^2
    b0 = 2 mu (t^3/12) l0^2,  b1 = (2/5) mu (t^3/12) l1^2

    Args:
        q8, q9: optional split of the leading sixth-order constant; must
            satisfy 2*(q8 + 2*q9) = 5*b1 (isotropy).  Default is the even
            split q8 = q9 = (5/6)*b1.
    """
    e, nu = moduli.young, moduli.poisson
    t = scales.t
    b_rig = t ** 3 * e / (12.0 * (1.0 - nu ** 2))
    a0 = 2.0 * moduli.mu * t * scales.l0 ** 2
    a1 = (2.0 / 15.0) * moduli.mu * t * scales.l1 ** 2
    a2 = moduli.mu * t * scales.l2 ** 2
    i3 = t ** 3 / 12.0
    b0 = 2.0 * moduli.mu * i3 * scales.l0 ** 2
    b1 = (2.0 / 5.0) * moduli.mu * i3 * scales.l1 ** 2

    if q8 is None and q9 is None:
        q8 = q9 = (5.0 / 6.0) * b1
    elif q8 is None or q9 is None:
        raise MaterialError("provide both q8 and q9 or neither")
    target = 5.0 * b1
    if abs(2.0 * (q8 + 2.0 * q9) - target) > 1e-10 * max(abs(target), 1e-300):
        raise MaterialError(
            f"q8, q9 violate the isotropy constraint 2*(q8+2*q9)=5*b1: "
            f"got {2.0 * (q8 + 2.0 * q9)} vs {target}")

    ca_p = b_rig * (1.0 - nu)
    cb_p = b_rig * nu
    ca_h = 2.0 * a2 + 5.0 * a1
    cb_h = a0 - a1 - a2
    q_coef = 5.0 * b1
    c_coef = (b0 - 3.0 * b1) / 3.0

    return BendingOperators(
        moduli=moduli, scales=scales, B=b_rig,
        a0=a0, a1=a1, a2=a2, b0=b0, b1=b1, q8=q8, q9=q9,
        P_mat=_iso2_matrix(ca_p, cb_p),
        Ph_mat=_iso2_matrix(ca_h, cb_h),
        Q_mat=_iso3_matrix(q_coef, c_coef),
    )


def strong_form_constants(ops: BendingOperators) -> tuple[float, float]:
    """Constants (c4, c6) of the strong form c4 lap^2 u - c6 lap^3 u = f.

    c4 = B + a0 + 4*a1 + a2 and c6 = b0 + 2*b1; equivalently ca + cb and
    q + 3*c of the reduced forms.
    """
    return ops.ca + ops.cb, ops.q + 3.0 * ops.c


class JumpKind(enum.Enum):
    STIFFER = "StifferEverywhere"
    SOFTER = "SofterEverywhere"
    INDEFINITE = "Indefinite"


@dataclass(frozen=True)
class JumpClassification:
    """Sign classification of the inclusion stiffness jump.

    g_p and g_q hold the generalized eigenvalues of (jump, background) for
    the fourth- and sixth-order forms in weighted coordinates.  The jump
    bounds (eta, delta) follow the two-sided convention: stiffer means
    eta*background <= jump <= (delta-1)*background with eta = min g > 0,
    delta = 1 + max g; softer means the reflected bounds with all g in
    (-1, 0).  Starred quantities combine both tensors.

    xi0, xi1 are the extreme background eigenvalues of (P+Ph)/t^3 and
    xi0_bar, xi1_bar those of Q/t^5 (modulus units).
    """

    kind: JumpKind
    g_p: np.ndarray
    g_q: np.ndarray
    eta: float
    delta: float
    eta_bar: float
    delta_bar: float
    xi0: float
    xi1: float
    xi0_bar: float
    xi1_bar: float

    @property
    def eta_star(self) -> float:
        return min(self.eta, self.eta_bar)

    @property
    def delta_star(self) -> float:
        return max(self.delta, self.delta_bar)

    @property
    def delta_lower_star(self) -> float:
        return min(self.delta, self.delta_bar)

    @property
    def xi0_star(self) -> float:
        return min(self.xi0, self.xi0_bar)

    @property
    def xi1_star(self) -> float:
        return max(self.xi1, self.xi1_bar)


def _generalized_eigs(h: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    vals, vecs = scipy.linalg.eigh(h, b)
    # residual guard on every pair; b is SPD by ellipticity.  The guard
    # flags solver breakdown, not rounding: LAPACK leaves residuals near
    # 1e-12 relative on fully clustered spectra, hence the slack.
    scale = np.linalg.norm(h) + np.abs(vals).max(initial=0.0) * np.linalg.norm(b)
    for lam_i, v in zip(vals, vecs.T):
        res = np.linalg.norm(h @ v - lam_i * (b @ v))
        if res > tol * max(scale, 1e-300):
            raise MaterialError(f"generalized eigenpair residual {res} exceeds tolerance")
    return vals


def classify_jump(background: BendingOperators, inclusion: BendingOperators,
                  tol: float = 1e-9) -> JumpClassification:
    """Classify the inclusion jump as stiffer/softer everywhere or indefinite.

    Solves the generalized symmetric eigenproblems (inc - bg) v = g * bg v
    for both quadratic forms in weighted coordinates and reads off the
    uniform two-sided bounds.  Indefinite jumps (mixed signs, or signs
    disagreeing between the two tensors) are flagged; the work-gap
    estimators refuse them.
    """
    bp, ip = background.php_weighted(), inclusion.php_weighted()
    bq, iq = background.q_weighted(), inclusion.q_weighted()
    g_p = _generalized_eigs(ip - bp, bp, tol)
    g_q = _generalized_eigs(iq - bq, bq, tol)

    t3 = background.scales.t ** 3
    t5 = background.scales.t ** 5
    eig_p = np.linalg.eigvalsh(bp)
    eig_q = np.linalg.eigvalsh(bq)
    xi = dict(xi0=eig_p.min() / t3, xi1=eig_p.max() / t3,
              xi0_bar=eig_q.min() / t5, xi1_bar=eig_q.max() / t5)

    allg = np.concatenate([g_p, g_q])
    if np.all(allg > 0.0):
        kind = JumpKind.STIFFER
        eta, delta = float(g_p.min()), float(1.0 + g_p.max())
        eta_bar, delta_bar = float(g_q.min()), float(1.0 + g_q.max())
    elif np.all((allg > -1.0) & (allg < 0.0)):
        kind = JumpKind.SOFTER
        eta, delta = float(-g_p.max()), float(1.0 + g_p.min())
        eta_bar, delta_bar = float(-g_q.max()), float(1.0 + g_q.min())
    else:
        kind = JumpKind.INDEFINITE
        eta = delta = eta_bar = delta_bar = float("nan")

    return JumpClassification(kind=kind, g_p=g_p, g_q=g_q,
                              eta=eta, delta=delta,
                              eta_bar=eta_bar, delta_bar=delta_bar, **xi)
