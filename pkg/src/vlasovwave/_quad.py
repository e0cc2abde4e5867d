"""Quadrature helpers shared by the form-factor and kernel code.

Everything here works on radial profiles: sphere areas, Gauss-Legendre
nodes, Filon-Simpson rules for ``int g(r) sin(t r) dr`` and the radial
reduction of three-dimensional convolutions.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import gamma, roots_legendre

_FILON_CHUNK = 2_000_000


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n (|S^0| = 2)."""
    return 2.0 * np.pi ** (n / 2.0) / gamma(n / 2.0)


def ball_volume(n: int) -> float:
    return np.pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)


@lru_cache(maxsize=64)
def _leggauss(n: int):
    return roots_legendre(n)


def gauss_legendre(a: float, b: float, n: int):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def _filon_coefficients(theta):
    theta = np.asarray(theta, dtype=float)
    alpha = np.empty_like(theta)
    beta = np.empty_like(theta)
    gam = np.empty_like(theta)
    small = np.abs(theta) < 0.15
    th = theta[small]
    t2 = th * th
    alpha[small] = th * t2 * (2.0 / 45.0 - t2 * (2.0 / 315.0 - t2 * 2.0 / 4725.0))
    beta[small] = 2.0 / 3.0 + t2 * (2.0 / 15.0 - t2 * (4.0 / 105.0 - t2 * 2.0 / 567.0))
    gam[small] = 4.0 / 3.0 - t2 * (2.0 / 15.0 - t2 * (1.0 / 210.0 - t2 / 11340.0))
    th = theta[~small]
    s, c = np.sin(th), np.cos(th)
    th3 = th**3
    alpha[~small] = (th * th + th * s * c - 2.0 * s * s) / th3
    beta[~small] = 2.0 * (th * (1.0 + c * c) - 2.0 * s * c) / th3
    gam[~small] = 4.0 * (s - th * c) / th3
    return alpha, beta, gam


def filon(g, r0: float, h: float, t, kind: str = "sin"):
    """Filon-Simpson rule for ``int_{r0}^{r0+2Nh} g(r) sin(t r) dr``.

    ``g`` is sampled on a uniform grid with an odd number of points.  The
    amplitude is interpolated piecewise-quadratically and the oscillatory
    factor is integrated exactly, so accuracy does not degrade with ``t``.
    ``kind='cos'`` gives the cosine moment.
    """
    g = np.asarray(g, dtype=float)
    if g.size % 2 == 0:
        raise ValueError("filon needs an odd number of samples")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r = r0 + h * np.arange(g.size)
    alpha, beta, gam = _filon_coefficients(t * h)
    out = np.empty(t.shape, dtype=float)
    even = g.copy()
    even[1::2] = 0.0
    even[0] *= 0.5
    even[-1] *= 0.5
    odd = g.copy()
    odd[0::2] = 0.0
    chunk = max(1, _FILON_CHUNK // g.size)
    flat_t = t.ravel()
    flat_out = out.ravel()
    a_f, b_f, c_f = alpha.ravel(), beta.ravel(), gam.ravel()
    for start in range(0, flat_t.size, chunk):
        tt = flat_t[start:start + chunk]
        phase = np.outer(tt, r)
        if kind == "sin":
            osc = np.sin(phase)
            edge = g[0] * np.cos(tt * r[0]) - g[-1] * np.cos(tt * r[-1])
        elif kind == "cos":
            osc = np.cos(phase)
            edge = g[-1] * np.sin(tt * r[-1]) - g[0] * np.sin(tt * r[0])
        else:
            raise ValueError(f"unknown kind {kind!r}")
        s_even = osc @ even
        s_odd = osc @ odd
        sl = slice(start, start + tt.size)
        flat_out[sl] = h * (a_f[sl] * edge + b_f[sl] * s_even + c_f[sl] * s_odd)
    return out


def simpson_uniform(g, h: float) -> float:
    """Composite Simpson on an odd-length uniform sample."""
    g = np.asarray(g, dtype=float)
    if g.size % 2 == 0:
        raise ValueError("simpson_uniform needs an odd number of samples")
    return h / 3.0 * (g[0] + g[-1] + 4.0 * g[1:-1:2].sum() + 2.0 * g[2:-1:2].sum())


def radial_conv3d(f, g, r, f_radius: float, g_radius: float, nodes: int = 256):
    """Convolution of two radial functions of R^3, evaluated at radii ``r``.

    Uses ``(f*g)(r) = 2 pi / r int_0^Rf s f(s) [G(r+s) - G(|r-s|)] ds``
    with ``G(u) = int_0^u t g(t) dt``.  ``f`` and ``g`` are vectorised
    callables vanishing beyond their radii.  The inner primitive is
    integrated with Gauss-Legendre on each [|r-s|, r+s] window, which keeps
    the r -> 0 limit well conditioned.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    s, ws = gauss_legendre(0.0, f_radius, nodes)
    sf = s * f(s)
    xi, wi = _leggauss(64)
    out = np.zeros_like(r)
    for i, ri in enumerate(r):
        lo = np.abs(ri - s)
        hi = np.minimum(ri + s, g_radius)
        span = np.clip(hi - lo, 0.0, None)
        tt = lo[:, None] + 0.5 * span[:, None] * (xi[None, :] + 1.0)
        inner = 0.5 * span * ((tt * g(tt)) @ wi)
        if ri == 0.0:
            # [G(s) - G(s)] / r -> 2 s g(s)
            out[i] = 4.0 * np.pi * np.sum(ws * sf * s * g(s))
        else:
            out[i] = 2.0 * np.pi / ri * np.sum(ws * sf * inner)
    return out
