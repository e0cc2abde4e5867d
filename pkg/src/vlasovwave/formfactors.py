"""Radial coupling profiles and their transforms.

A :class:`FormFactor` is a smooth, nonnegative, radial, compactly supported
profile (the standard ``exp(-1/(1-u^2))`` bump).  This module also builds
the self-convolution ``Sigma = sigma_1 * sigma_1``, the mollified Coulomb
profiles used for the Vlasov-Poisson limit in three dimensions, and the
kernel-gap norms that measure how fast ``Sigma`` approaches the Newtonian
kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.special import jv, spence

from ._quad import ball_volume, gauss_legendre, radial_conv3d, sphere_area
from .errors import InvalidParameter, OutOfRangeExponent, UnsupportedDimension

DEFAULT_TABLE_POINTS = 4096


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def _bump_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    w = 1.0 - ui**2
    out[inside] = np.exp(-1.0 / w) * (-2.0 * ui / w**2)
    return out


def _bump_moment(dim: int) -> float:
    """int_0^1 u^(dim-1) exp(-1/(1-u^2)) du."""
    val, _ = integrate.quad(lambda u: u ** (dim - 1) * np.exp(-1.0 / (1.0 - u * u)),
                            0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class FormFactor:
    """Radial bump ``A exp(-1/(1-(r/R)^2))`` on R^dim with prescribed integral."""

    dim: int
    support_radius: float
    mass: float
    n_table: int = field(default=DEFAULT_TABLE_POINTS, compare=False)

    @cached_property
    def amplitude(self) -> float:
        if self.mass == 0.0:
            return 0.0
        norm = sphere_area(self.dim) * self.support_radius**self.dim * _bump_moment(self.dim)
        return self.mass / norm

    def __call__(self, r):
        return self.amplitude * _bump(np.abs(np.asarray(r, dtype=float)) / self.support_radius)

    def derivative(self, r):
        """d/dr of the profile (odd extension for negative r)."""
        r = np.asarray(r, dtype=float)
        return self.amplitude / self.support_radius * _bump_prime(r / self.support_radius)

    @cached_property
    def table(self):
        r = np.linspace(0.0, self.support_radius, self.n_table)
        return r, self(r)

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0.0

    def radial_integral(self, weight_power: int = 0, nodes: int = 400) -> float:
        """|S^{dim-1}| int_0^R r^{dim-1+weight_power} sigma(r) dr."""
        r, w = gauss_legendre(0.0, self.support_radius, nodes)
        return sphere_area(self.dim) * np.sum(w * r ** (self.dim - 1 + weight_power) * self(r))

    def lp_norm(self, p: float = 2.0, nodes: int = 400) -> float:
        r, w = gauss_legendre(0.0, self.support_radius, nodes)
        return (sphere_area(self.dim) * np.sum(w * r ** (self.dim - 1) * self(r) ** p)) ** (1.0 / p)

    def sobolev_norm(self, k: int) -> float:
        """W^{k,2} norm taken as sum_{j<=k} ||D^j sigma||_{L^2}, via Plancherel."""
        kk, w = self._spectral_nodes()
        dens = np.abs(radial_fourier(self, kk)) ** 2 * kk ** (self.dim - 1)
        pref = sphere_area(self.dim) / (2.0 * np.pi) ** self.dim
        return float(sum(np.sqrt(pref * np.sum(w * dens * kk ** (2 * j))) for j in range(k + 1)))

    def _spectral_nodes(self):
        kmax = 400.0 / self.support_radius
        return gauss_legendre(0.0, kmax, 4000)

    def to_text(self, samples: int = 17) -> str:
        r = np.linspace(0.0, self.support_radius, samples)
        lines = [f"formfactor shape=bump dim={self.dim} radius={self.support_radius!r} mass={self.mass!r}"]
        lines += [f"  {ri:.17g} {vi:.17g}" for ri, vi in zip(r, self(r))]
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "FormFactor":
        head = text.strip().splitlines()[0].split()
        if head[0] != "formfactor":
            raise InvalidParameter(f"not a form-factor block: {head[0]!r}")
        kv = dict(item.split("=", 1) for item in head[1:])
        if kv.get("shape", "bump") != "bump":
            raise InvalidParameter(f"unknown shape {kv['shape']!r}")
        return make_bump(int(kv["dim"]), float(kv["radius"]), float(kv["mass"]))


def make_bump(dim: int, support_radius: float, mass: float) -> FormFactor:
    if dim < 1:
        raise InvalidParameter(f"dimension must be positive, got {dim}")
    if not support_radius > 0.0:
        raise InvalidParameter(f"support radius must be positive, got {support_radius}")
    if mass < 0.0:
        raise InvalidParameter(f"mass must be nonnegative, got {mass}")
    return FormFactor(int(dim), float(support_radius), float(mass))


def radial_fourier(ff: FormFactor, k):
    """Fourier transform ``int e^{-i xi.y} sigma(y) dy`` at ``|xi| = k``.

    Real because the profile is radial.  Uses the Hankel form
    ``(2 pi)^{n/2} k^{1-n/2} int r^{n/2} J_{n/2-1}(kr) sigma(r) dr`` with
    trigonometric specialisations for n = 1 and n = 3.
    """
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise InvalidParameter("wavenumber must be nonnegative")
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    R = ff.support_radius
    if ff.is_zero:
        out = np.zeros_like(k)
        return out[0] if scalar else out
    nodes = int(400 + 4.0 * R * float(k.max(initial=0.0)))
    r, w = gauss_legendre(0.0, R, nodes)
    prof = ff(r) * w
    n = ff.dim
    out = np.empty_like(k)
    step = max(1, 2_000_000 // nodes)
    for lo in range(0, k.size, step):
        out[lo:lo + step] = _hankel_block(k[lo:lo + step], r, prof, n)
    return out[0] if scalar else out


def _hankel_block(k, r, prof, n):
    if n == 1:
        return 2.0 * np.cos(np.outer(k, r)) @ prof
    zero = k == 0.0
    out = np.empty_like(k)
    kz = k[~zero]
    if n == 3:
        out[zero] = 4.0 * np.pi * np.sum(prof * r * r)
        out[~zero] = 4.0 * np.pi / kz * (np.sin(np.outer(kz, r)) @ (prof * r))
    else:
        nu = n / 2.0 - 1.0
        out[zero] = sphere_area(n) * np.sum(prof * r ** (n - 1))
        kernel = jv(nu, np.outer(kz, r)) * r ** (n / 2.0)
        out[~zero] = (2.0 * np.pi) ** (n / 2.0) * kz ** (-nu) * (kernel @ prof)
    return out


@dataclass(frozen=True)
class ConvolvedProfile:
    """Tabulated radial self-convolution with derivative tables."""

    dim: int
    r: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    d1: np.ndarray = field(repr=False)
    d2: np.ndarray = field(repr=False)

    @property
    def support_radius(self) -> float:
        return float(self.r[-1])

    @cached_property
    def _spline(self):
        return CubicSpline(self.r, self.values, bc_type=((1, 0.0), (1, 0.0)))

    @cached_property
    def _dspline(self):
        return CubicSpline(self.r, self.d1, bc_type=((2, 0.0), (1, 0.0)))

    def __call__(self, x):
        """Sigma at signed positions or radii (radial, so |x| is used)."""
        rr = np.abs(np.asarray(x, dtype=float))
        out = self._spline(np.minimum(rr, self.support_radius))
        return np.where(rr >= self.support_radius, 0.0, out)

    def radial_derivative(self, x):
        rr = np.abs(np.asarray(x, dtype=float))
        out = self._dspline(np.minimum(rr, self.support_radius))
        return np.where(rr >= self.support_radius, 0.0, out)

    def gradient_1d(self, x):
        """dSigma/dx for d = 1 (odd in x)."""
        x = np.asarray(x, dtype=float)
        return np.sign(x) * self.radial_derivative(x)

    def scaled(self, factor: float) -> "ConvolvedProfile":
        return ConvolvedProfile(self.dim, self.r, factor * self.values, factor * self.d1, factor * self.d2)


def self_convolve(sigma1: FormFactor, n_points: int = DEFAULT_TABLE_POINTS) -> ConvolvedProfile:
    """Tabulate ``Sigma = sigma1 * sigma1`` on [0, 2R].

    d = 1 is a direct convolution integral per node; d = 3 uses the radial
    reduction.  Derivative tables come from centred differences.
    """
    R = sigma1.support_radius
    r = np.linspace(0.0, 2.0 * R, n_points)
    if sigma1.is_zero:
        z = np.zeros_like(r)
        return ConvolvedProfile(sigma1.dim, r, z, z.copy(), z.copy())
    if sigma1.dim == 1:
        xi, wi = np.polynomial.legendre.leggauss(256)
        lo = r - R
        half = 0.5 * (R - lo)
        y = lo[:, None] + half[:, None] * (xi[None, :] + 1.0)
        vals = half * ((sigma1(y) * sigma1(r[:, None] - y)) @ wi)
    elif sigma1.dim == 3:
        vals = radial_conv3d(sigma1, sigma1, r, R, R, nodes=192)
    else:
        raise UnsupportedDimension(f"self_convolve supports d = 1 and d = 3, got {sigma1.dim}")
    vals[-1] = 0.0
    h = r[1] - r[0]
    d1 = np.gradient(vals, h, edge_order=2)
    d1[0] = 0.0
    d2 = np.gradient(d1, h, edge_order=2)
    return ConvolvedProfile(sigma1.dim, r, vals, d1, d2)


# ----------------------------------------------------------------------------
# Mollified Coulomb family (d = 3)


def smooth_cutoff(r):
    """C^inf radial cut-off: 1 on [0, 1], 0 on [2, inf), monotone between."""
    r = np.asarray(r, dtype=float)
    a = np.where(2.0 - r > 0, np.exp(-1.0 / np.maximum(2.0 - r, 1e-300)), 0.0)
    b = np.where(r - 1.0 > 0, np.exp(-1.0 / np.maximum(r - 1.0, 1e-300)), 0.0)
    return a / (a + b)


def smooth_cutoff_prime(r, h: float = 1e-5):
    r = np.asarray(r, dtype=float)
    return (smooth_cutoff(r + h) - smooth_cutoff(r - h)) / (2.0 * h)


def _legendre_chi_sum(x):
    """F(x) = int_0^x log|(1+u)/(1-u)| du/u, with F(inf) = pi^2/2."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lo = x <= 1.0
    xl = x[lo]
    out[lo] = spence(1.0 - xl) - spence(1.0 + xl)
    xh = 1.0 / x[~lo]
    out[~lo] = 0.5 * np.pi**2 - (spence(1.0 - xh) - spence(1.0 + xh))
    return out


def coulomb_normalisation(dim: int) -> float:
    """C_d = (|S^{d-1}| int dx / (|x|^{d-1} |e1 - x|^{d-1}))^{-1/2} by quadrature.

    The angular integral is done first; the remaining radial integrand has
    an integrable singularity at |x| = 1, handled by mapping [1, inf) onto
    (0, 1] with r -> 1/r.
    """
    if dim < 3:
        raise UnsupportedDimension(f"Coulomb normalisation needs d >= 3, got {dim}")
    if dim == 3:
        def radial(r):
            # 2 pi int_{-1}^{1} du / (1 + r^2 - 2 r u), times r^2 / r^2
            return 2.0 * np.pi * np.log((1.0 + r) / abs(1.0 - r)) / r
    else:
        area = sphere_area(dim - 1)
        p = (dim - 1) / 2.0

        def radial(r):
            f = lambda th: np.sin(th) ** (dim - 2) / (1.0 + r * r - 2.0 * r * np.cos(th)) ** p
            ang, _ = integrate.quad(f, 0.0, np.pi, epsabs=0.0, epsrel=1e-12, limit=200)
            return area * ang * r ** (dim - 1) / r ** (dim - 1)

    inner, _ = integrate.quad(radial, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=400)
    # r -> 1/r on [1, inf): dr = du/u^2, integrand scales with u^{d-3} * (1/u)^{...}
    outer, _ = integrate.quad(lambda u: radial(1.0 / u) / u**2, 0.0, 1.0,
                              epsabs=0.0, epsrel=1e-13, limit=400)
    total = inner + outer
    return float((sphere_area(dim) * total) ** -0.5)


@dataclass(frozen=True)
class MollifiedCoulombFamily:
    """sigma_{1,eps} = C_d delta_eps * (theta_eps / |.|^{d-1}) for d = 3."""

    epsilon: float
    dim: int = 3
    delta_radius: float = 1.25
    n_table: int = field(default=384, compare=False)

    @cached_property
    def c_d(self) -> float:
        return coulomb_normalisation(self.dim)

    @cached_property
    def delta(self) -> FormFactor:
        return make_bump(self.dim, self.delta_radius, 1.0)

    @property
    def cutoff_radius(self) -> float:
        """theta_eps == 1 on |x| <= this radius."""
        return 1.0 / np.sqrt(self.epsilon)

    def theta_eps(self, r):
        return smooth_cutoff(np.sqrt(self.epsilon) * np.asarray(r, dtype=float))

    def delta_eps(self, r):
        s = np.sqrt(self.epsilon)
        return self.delta(np.asarray(r, dtype=float) / s) / s**self.dim

    @property
    def support_radius(self) -> float:
        return 2.0 * self.cutoff_radius + self.delta_radius * np.sqrt(self.epsilon)

    @cached_property
    def _log_primitive(self):
        return _CutoffLogPrimitive(self.epsilon)

    def sigma(self, r):
        """sigma_{1,eps}(|x| = r) computed by radial quadrature."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        H = self._log_primitive
        rd = self.delta_radius * np.sqrt(self.epsilon)
        out = np.empty_like(r)
        for i, ri in enumerate(r):
            if ri >= self.support_radius:
                out[i] = 0.0
                continue
            if ri == 0.0:
                f = lambda s: 4.0 * np.pi * s * self.delta_eps(s) * self.theta_eps(s)
                val, _ = integrate.quad(f, 0.0, rd, epsabs=0.0, epsrel=1e-11, limit=200)
            else:
                def f(s):
                    J = np.log((ri + s) / abs(ri - s)) + H(ri + s) - H(abs(ri - s))
                    return s * self.delta_eps(s) * J
                pts = [ri] if ri < rd else None
                val, _ = integrate.quad(f, 0.0, rd, points=pts, epsabs=0.0, epsrel=1e-11, limit=400)
                val *= 2.0 * np.pi / ri
            out[i] = self.c_d * val
        return out

    @cached_property
    def table(self):
        r = np.linspace(0.0, self.support_radius, self.n_table)
        vals = self.sigma(r)
        vals[-1] = 0.0
        return r, vals


def mollified_coulomb(eps: float, dim: int = 3) -> MollifiedCoulombFamily:
    if not 0.0 < eps <= 1.0:
        raise InvalidParameter(f"eps must lie in (0, 1], got {eps}")
    if dim < 3:
        raise UnsupportedDimension(f"mollified Coulomb family requires d >= 3, got {dim}")
    if dim != 3:
        raise UnsupportedDimension("only d = 3 is implemented")
    return MollifiedCoulombFamily(float(eps), dim)


class _CutoffLogPrimitive:
    """H(u) = int_0^u (theta(sqrt(eps) t) - 1) dt / t, tabulated on [a, 2a]."""

    def __init__(self, eps: float, points: int = 4097):
        self.a = 1.0 / np.sqrt(eps)
        u = np.linspace(self.a, 2.0 * self.a, points)
        integrand = (smooth_cutoff(np.sqrt(eps) * u) - 1.0) / u
        cum = integrate.cumulative_simpson(integrand, x=u, initial=0.0)
        self._spline = CubicSpline(u, cum)
        self.h_end = float(cum[-1])

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        mid = (u > self.a) & (u < 2.0 * self.a)
        out[mid] = self._spline(u[mid])
        hi = u >= 2.0 * self.a
        out[hi] = self.h_end - np.log(u[hi] / (2.0 * self.a))
        return out


def _newton_residual(r, eps: float, cutoff: bool, gl_nodes: int = 400):
    """W(r) = C^2 (theta/|.|^2 * theta/|.|^2)(r) - 1/(4 pi r) on radii r > 0.

    Splitting ``theta = 1 + (theta - 1)`` isolates the Newtonian part
    ``pi^2/2`` exactly; the remainder only involves the annulus where the
    cut-off varies and the exterior, where it has a closed form.
    """
    c2 = coulomb_normalisation(3) ** 2
    r = np.atleast_1d(np.asarray(r, dtype=float))
    # int_0^inf log|(r+s)/(r-s)| ds/s = F(inf), approached through F(x) as x -> inf
    newton = float(_legendre_chi_sum(np.array([1e12]))[0])
    if not cutoff:
        return 2.0 * np.pi * c2 / r * newton - 1.0 / (4.0 * np.pi * r)
    a = 1.0 / np.sqrt(eps)
    H = _CutoffLogPrimitive(eps)
    theta = lambda s: smooth_cutoff(np.sqrt(eps) * s)
    s_gl, w_gl = gauss_legendre(0.0, 2.0 * a, gl_nodes)
    th_gl = theta(s_gl)
    out = np.empty_like(r)
    for i, ri in enumerate(r):
        f1 = lambda s: (theta(s) - 1.0) / s * np.log((ri + s) / abs(ri - s))
        pts = [ri] if a < ri < 2.0 * a else None
        i1, _ = integrate.quad(f1, a, 2.0 * a, points=pts, epsabs=1e-14, epsrel=1e-12, limit=400)
        i1 -= _legendre_chi_sum(np.array([ri / (2.0 * a)]))[0]
        i2 = np.sum(w_gl * th_gl / s_gl * (H(ri + s_gl) - H(np.abs(ri - s_gl))))
        out[i] = 2.0 * np.pi * c2 / ri * (newton + i1 + i2) - 1.0 / (4.0 * np.pi * ri)
    return out


def kernel_gap_profile(eps: float, n_r: int = 601, cutoff: bool = True):
    """Radial grid and |O_eps(r)| on (0, 4/sqrt(eps)]."""
    a = 1.0 / np.sqrt(eps)
    r = np.linspace(0.0, 4.0 * a, n_r)[1:]
    W = _newton_residual(r, eps, cutoff)
    # differentiate through a spline of r*W, which is regular at the origin
    spl = CubicSpline(np.concatenate([[0.0], r]), np.concatenate([[0.0], r * W]))
    dW = (spl(r, 1) - W) / r
    return r, np.abs(dW)


def kernel_gap_norm(eps: float, q_exp: float, dim: int = 3, n_r: int = 601, cutoff: bool = True) -> float:
    """L^q norm of grad(C theta_eps/|.|^2 * C theta_eps/|.|^2) + x/(4 pi |x|^3).

    Integrated on |x| <= 4/sqrt(eps); beyond that the convolution vanishes
    and the exterior contribution of the Newtonian term is added in closed
    form.
    """
    if dim != 3:
        raise UnsupportedDimension("kernel_gap_norm is implemented for d = 3")
    if not q_exp > 1.5:
        raise OutOfRangeExponent(f"exponent must exceed d/(d-1) = 3/2, got {q_exp}")
    if not 0.0 < eps <= 1.0:
        raise InvalidParameter(f"eps must lie in (0, 1], got {eps}")
    r, g = kernel_gap_profile(eps, n_r, cutoff)
    integrand = 4.0 * np.pi * r**2 * g**q_exp
    body = integrate.simpson(np.concatenate([[0.0], integrand]), x=np.concatenate([[0.0], r]))
    R = r[-1]
    if cutoff:
        tail = (4.0 * np.pi) ** (1.0 - q_exp) * R ** (3.0 - 2.0 * q_exp) / (2.0 * q_exp - 3.0)
    else:
        # residual is c/r^2 everywhere; continue it analytically
        c = g[-1] * R**2
        tail = 4.0 * np.pi * c**q_exp * R ** (3.0 - 2.0 * q_exp) / (2.0 * q_exp - 3.0)
    return float((body + tail) ** (1.0 / q_exp))


def inner_factor_norm(eps: float, p: float = 2.0, n_r: int = 4001) -> float:
    """L^p norm of grad(theta_eps)/|x|^2 - 2 (theta_eps - 1) x/|x|^4 in R^3."""
    if not p > 1.0:
        raise OutOfRangeExponent("p must exceed 1")
    a = 1.0 / np.sqrt(eps)
    s = np.sqrt(eps)
    r = np.linspace(a, 2.0 * a, n_r)
    h = s * smooth_cutoff_prime(s * r) / r**2 - 2.0 * (smooth_cutoff(s * r) - 1.0) / r**3
    body = integrate.simpson(4.0 * np.pi * r**2 * np.abs(h) ** p, x=r)
    tail = 4.0 * np.pi * 2.0**p * (2.0 * a) ** (3.0 - 3.0 * p) / (3.0 * p - 3.0)
    return float((body + tail) ** (1.0 / p))


# ----------------------------------------------------------------------------
# Hardy-Littlewood-Sobolev sanity check (d = 3, lambda = 1, p = r = 6/5)

HLS_SHARP_CONSTANT = float(np.pi**0.5 / 1.329340388179137 * (0.886226925452758 / 2.0) ** (-2.0 / 3.0))


def coulomb_energy_radial(g, r):
    """int int g(x) g(y) / |x - y| dx dy for radial g sampled on r (3D)."""
    g = np.asarray(g, dtype=float)
    inner = integrate.cumulative_trapezoid(r**2 * g, r, initial=0.0)
    outer_full = np.trapezoid(r * g, r)
    outer = outer_full - integrate.cumulative_trapezoid(r * g, r, initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        pot = 4.0 * np.pi * np.where(r > 0, inner / np.where(r > 0, r, 1.0), 0.0) + 4.0 * np.pi * outer
    return float(np.trapezoid(4.0 * np.pi * r**2 * g * pot, r))


def radial_lp(g, r, p: float) -> float:
    return float(np.trapezoid(4.0 * np.pi * r**2 * np.abs(g) ** p, r) ** (1.0 / p))


def hls_ratio(g, r) -> float:
    """Coulomb energy over ||g||_{6/5}^2; bounded by the HLS constant."""
    return coulomb_energy_radial(g, r) / radial_lp(g, r, 6.0 / 5.0) ** 2


__all__ = [
    "FormFactor",
    "ConvolvedProfile",
    "MollifiedCoulombFamily",
    "make_bump",
    "radial_fourier",
    "self_convolve",
    "mollified_coulomb",
    "coulomb_normalisation",
    "kernel_gap_norm",
    "kernel_gap_profile",
    "inner_factor_norm",
    "hls_ratio",
    "HLS_SHARP_CONSTANT",
    "ball_volume",
]
