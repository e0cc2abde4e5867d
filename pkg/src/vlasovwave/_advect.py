"""Periodic cubic-spline shifts along one axis of a 2D array.

The shift operator of a periodic uniform cubic spline is circulant, so it
is applied in Fourier space.  Its symbol equals 1 at zero frequency, hence
the discrete sum (mass) is preserved exactly.
"""
from __future__ import annotations

import numpy as np


def _bspline3(u):
    u = np.abs(u)
    out = np.where(u < 1.0, (4.0 - 6.0 * u**2 + 3.0 * u**3) / 6.0, 0.0)
    return np.where((u >= 1.0) & (u < 2.0), (2.0 - u) ** 3 / 6.0, out)


def shift_symbols(n: int, shifts):
    """Fourier multipliers for s(x_i - shift*dx), one column per shift (in cells)."""
    shifts = np.asarray(shifts, dtype=float)
    k = np.arange(n // 2 + 1)
    phase = np.exp(-2j * np.pi * k / n)
    m = np.floor(shifts)
    theta = shifts - m
    sym = np.zeros((k.size, shifts.size), dtype=complex)
    for l in (-1, 0, 1, 2):
        sym += _bspline3(l - theta)[None, :] * phase[:, None] ** l
    sym *= np.exp(-2j * np.pi * np.outer(k, m) / n)
    interp = (4.0 + 2.0 * np.cos(2.0 * np.pi * k / n)) / 6.0
    return sym / interp[:, None]


def shift_along_axis0(f, shifts):
    """Column j of f shifted by shifts[j] cells: out[i, j] = spline_j(i - shifts[j])."""
    n = f.shape[0]
    return np.fft.irfft(np.fft.rfft(f, axis=0) * shift_symbols(n, shifts), n=n, axis=0)


def shift_along_axis1(f, shifts):
    """Row i of f shifted by shifts[i] cells along axis 1."""
    return shift_along_axis0(f.T, shifts).T
