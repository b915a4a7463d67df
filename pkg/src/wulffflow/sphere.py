"""Discretizations of the unit circle and the unit 2-sphere.

Fields are stored node-wise as flat arrays: scalars have shape ``(M,)``,
tangent vectors ``(M, n)`` and tangent matrices ``(M, n, n)``, always in the
orthonormal frame returned by :attr:`SphereGrid.frame`.

The circle uses a uniform periodic grid with Fourier differentiation.  The
2-sphere uses a cell-centred latitude-longitude grid; no node sits on a pole,
and colatitude derivatives are taken spectrally on the doubled (periodic)
colatitude range, exploiting ``f(2*pi - theta, phi) = f(theta, phi + pi)``.
Quadrature in colatitude uses Fejer's first rule, which matches the
cell-centred nodes exactly.

Orientation convention: on S^1 the tangent frame is ``(-sin t, cos t)``
(counter-clockwise); on S^2 the frame is ``(e_theta, e_phi)`` with
``e_theta x e_phi`` equal to the outward normal.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

__all__ = ["SphereGrid", "make_grid", "DEFAULT_SIZE"]

DEFAULT_SIZE = {1: 512, 2: (96, 192)}


def _fejer1_weights(n):
    theta = (np.arange(n) + 0.5) * np.pi / n
    k = np.arange(1, n // 2 + 1)
    s = np.cos(2.0 * np.outer(theta, k)) / (4.0 * k**2 - 1.0)
    return 2.0 / n * (1.0 - 2.0 * s.sum(axis=1))


class SphereGrid:
    """Nodes, quadrature weights and differentiation on S^n (n = 1 or 2).

    Use :meth:`circle` or :meth:`sphere` (or :func:`make_grid`) rather than
    calling the constructor directly.
    """

    def __init__(self, n, shape):
        if n not in (1, 2):
            raise ValueError(f"only n = 1 or n = 2 is supported, got {n}")
        self.n = n
        self.shape = tuple(int(s) for s in shape)
        if n == 1:
            (N,) = self.shape
            if N < 8 or N % 2:
                raise ValueError("circle grid size must be even and >= 8")
            self.theta = 2.0 * np.pi * np.arange(N) / N
            c, s = np.cos(self.theta), np.sin(self.theta)
            self.dirs = np.stack([c, s], axis=1)
            self.frame = np.stack([-s, c], axis=1)[:, None, :]
            self.weights = np.full(N, 2.0 * np.pi / N)
            self._k = np.fft.rfftfreq(N, 1.0 / N)
        else:
            nt, nph = self.shape
            if nt < 4 or nph < 8 or nph % 2:
                raise ValueError("sphere grid needs n_theta >= 4 and even n_phi >= 8")
            th = (np.arange(nt) + 0.5) * np.pi / nt
            ph = 2.0 * np.pi * np.arange(nph) / nph
            T, P = np.meshgrid(th, ph, indexing="ij")
            self.theta = T.ravel()
            self.phi = P.ravel()
            st, ct = np.sin(self.theta), np.cos(self.theta)
            sp, cp = np.sin(self.phi), np.cos(self.phi)
            self.dirs = np.stack([st * cp, st * sp, ct], axis=1)
            e_t = np.stack([ct * cp, ct * sp, -st], axis=1)
            e_p = np.stack([-sp, cp, np.zeros_like(sp)], axis=1)
            self.frame = np.stack([e_t, e_p], axis=1)
            w = np.outer(_fejer1_weights(nt), np.full(nph, 2.0 * np.pi / nph))
            self.weights = w.ravel()
            self._kt = np.fft.fftfreq(2 * nt, 1.0 / (2 * nt))
            self._kp = np.fft.fftfreq(nph, 1.0 / nph)

    # construction -----------------------------------------------------------
    @classmethod
    def circle(cls, size=512):
        return cls(1, (size,))

    @classmethod
    def sphere(cls, n_theta=96, n_phi=192):
        return cls(2, (n_theta, n_phi))

    @property
    def size(self):
        return self.dirs.shape[0]

    @property
    def area(self):
        """Exact measure of S^n."""
        return 2.0 * np.pi if self.n == 1 else 4.0 * np.pi

    @property
    def grid_size(self):
        """Size descriptor used in JSON documents."""
        return self.shape[0] if self.n == 1 else list(self.shape)

    def __eq__(self, other):
        return isinstance(other, SphereGrid) and self.n == other.n and self.shape == other.shape

    def __hash__(self):
        return hash((self.n, self.shape))

    def __repr__(self):
        return f"SphereGrid(n={self.n}, shape={self.shape})"

    # quadrature -------------------------------------------------------------
    def integrate(self, f):
        """Quadrature of a node field over S^n (leading axis is the node axis)."""
        f = np.asarray(f, dtype=float)
        return np.tensordot(self.weights, f, axes=(0, 0))

    # differentiation --------------------------------------------------------
    def coord_derivs(self, f):
        """First and second partial derivatives with respect to the sphere angles.

        Returns ``(d1, d2)`` with shapes ``(M, n)`` and ``(M, n, n)``; the
        coordinates are ``theta`` (n=1) or ``(theta, phi)`` (n=2).
        """
        f = np.asarray(f, dtype=float)
        if self.n == 1:
            N = self.shape[0]
            F = np.fft.rfft(f)
            ik = 1j * self._k
            ik1 = ik.copy()
            ik1[-1] = 0.0  # Nyquist mode has no odd derivative on a real grid
            d1 = np.fft.irfft(ik1 * F, n=N)
            d2 = np.fft.irfft(-(self._k**2) * F, n=N)
            return d1[:, None], d2[:, None, None]
        nt, nph = self.shape
        g = f.reshape(nt, nph)
        ext = np.concatenate([g, np.roll(g[::-1], nph // 2, axis=1)], axis=0)
        F = np.fft.fft2(ext)
        back = np.real(np.fft.ifft2(self._deriv_mults() * F, axes=(-2, -1)))[:, :nt]
        ft, fp, ftt, fpp, ftp = back.reshape(5, -1)
        d1 = np.stack([ft, fp], axis=1)
        d2 = np.empty((f.size, 2, 2))
        d2[:, 0, 0] = ftt
        d2[:, 0, 1] = d2[:, 1, 0] = ftp
        d2[:, 1, 1] = fpp
        return d1, d2

    def _deriv_mults(self):
        # spectral multipliers for d_t, d_p, d_tt, d_pp, d_tp on the doubled grid
        mults = getattr(self, "_mults", None)
        if mults is None:
            nt, nph = self.shape
            kt = self._kt[:, None]
            kp = self._kp[None, :]
            odd_t = np.where(np.abs(self._kt) == nt, 0.0, self._kt)[:, None]
            odd_p = np.where(np.abs(self._kp) == nph // 2, 0.0, self._kp)[None, :]
            ones = np.ones((kt.size, kp.size))
            mults = np.stack(
                [1j * odd_t * ones, 1j * odd_p * ones, -(kt**2) * ones, -(kp**2) * ones, -(odd_t * odd_p) * ones]
            )
            object.__setattr__(self, "_mults", mults)
        return mults

    def coord_scale(self):
        """Euclidean length of each coordinate vector ``d x / d u_a``, shape ``(M, n)``."""
        if self.n == 1:
            return np.ones((self.size, 1))
        return np.stack([np.ones(self.size), np.sin(self.theta)], axis=1)

    def grad(self, f):
        """Covariant gradient in the orthonormal frame, shape ``(M, n)``."""
        d1, _ = self.coord_derivs(f)
        return d1 / self.coord_scale()

    def hess(self, f):
        """Covariant Hessian in the orthonormal frame, shape ``(M, n, n)``."""
        d1, d2 = self.coord_derivs(f)
        if self.n == 1:
            return d2
        st, ct = np.sin(self.theta), np.cos(self.theta)
        cot = ct / st
        H = np.empty_like(d2)
        H[:, 0, 0] = d2[:, 0, 0]
        H[:, 0, 1] = H[:, 1, 0] = (d2[:, 0, 1] - cot * d1[:, 1]) / st
        H[:, 1, 1] = d2[:, 1, 1] / st**2 + cot * d1[:, 0]
        return H

    def tangent_to_ambient(self, v):
        """Map frame components ``(M, n)`` to ambient vectors ``(M, n+1)``."""
        return np.einsum("mi,mij->mj", v, self.frame)

    # helpers ----------------------------------------------------------------
    @cached_property
    def laplacian_bound(self):
        """Upper estimate of the largest eigenvalue of the discrete ``-Laplacian``."""
        if self.n == 1:
            return (self.shape[0] / 2.0) ** 2
        nt, nph = self.shape
        smin = np.sin(0.5 * np.pi / nt)
        return float(nt**2 + (nph / 2.0) ** 2 / smin**2)

    def linear_field(self, p):
        """Samples of ``<p, z>`` (support function of the point ``p``)."""
        return self.dirs @ np.asarray(p, dtype=float)

    def steiner_point(self, h):
        """Steiner point ``(n+1)/|S^n| * int h(z) z dsigma`` of a support field."""
        return (self.n + 1) / self.area * self.integrate(np.asarray(h)[:, None] * self.dirs)


def make_grid(n, size=None):
    """Build a grid from a JSON-style size descriptor."""
    if size is None:
        size = DEFAULT_SIZE[n]
    if n == 1:
        if isinstance(size, (list, tuple)):
            (size,) = size
        return SphereGrid.circle(int(size))
    if n == 2:
        if isinstance(size, int):
            size = (size, 2 * size)
        return SphereGrid.sphere(int(size[0]), int(size[1]))
    raise ValueError(f"only n = 1 or n = 2 is supported, got {n}")
