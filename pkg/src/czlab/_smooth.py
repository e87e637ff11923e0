"""C-infinity transition profiles shared by the bump taper and the cutoffs."""

import numpy as np
from scipy.special import expit

# beyond this distance from {0, 1} every derivative of the step is below 1e-400
_EDGE = 1e-3


def smoothstep(t, order=2):
    """Standard exp(-1/t) smoothstep and its first two derivatives.

    S(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}), equal to 0 for t <= 0 and
    1 for t >= 1. Returns ``(S, S', S'')`` truncated to ``order + 1`` entries.
    """
    t = np.asarray(t, dtype=float)
    s = np.where(t >= 1.0, 1.0, 0.0)
    d1 = np.zeros_like(t)
    d2 = np.zeros_like(t)
    inside = (t > 0.0) & (t < 1.0)
    if np.any(inside):
        ti = t[inside]
        tc = np.clip(ti, _EDGE, 1.0 - _EDGE)
        g = 1.0 / tc - 1.0 / (1.0 - tc)
        sig = expit(-g)
        w = sig * expit(g)
        gp = -1.0 / tc**2 - 1.0 / (1.0 - tc) ** 2
        gpp = 2.0 / tc**3 - 2.0 / (1.0 - tc) ** 3
        s[inside] = expit(-(1.0 / ti - 1.0 / (1.0 - ti)))
        edge = (ti < _EDGE) | (ti > 1.0 - _EDGE)
        d1[inside] = np.where(edge, 0.0, -w * gp)
        d2[inside] = np.where(edge, 0.0, (1.0 - 2.0 * sig) * w * gp**2 - w * gpp)
    return (s, d1, d2)[: order + 1]


def radial_derivatives(z, r, f1, f2):
    """Gradient and Hessian of a radial function F(|z|) from F'(r), F''(r).

    ``z`` has shape (N, n); ``r = |z|`` must be positive wherever f1 is
    nonzero. Points with r == 0 get the isotropic limit F''(0) * I.
    """
    n = z.shape[1]
    safe = np.where(r > 0.0, r, 1.0)
    zhat = z / safe[:, None]
    grad = f1[:, None] * zhat
    outer = zhat[:, :, None] * zhat[:, None, :]
    tang = np.where(r > 0.0, f1 / safe, f2)
    eye = np.eye(n)
    hess = f2[:, None, None] * outer + tang[:, None, None] * (eye - outer)
    origin = r == 0.0
    if np.any(origin):
        hess[origin] = f2[origin, None, None] * eye
    return grad, hess
