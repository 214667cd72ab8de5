"""Small synthetic systems with known answers, shared by the unit tests."""
import numpy as np

from harmocont.dynsys import DynSystem


def normal_form(omega=2.0, decay=1.0):
    """Hopf normal form in ``(x, y)`` plus a decoupled stable direction ``z``.

    ``x' = mu x - omega y - x r^2``, ``y' = omega x + mu y - y r^2``,
    ``z' = -decay z``.  Supercritical Hopf at ``mu = 0`` with frequency
    ``omega``; the cycle is ``r = sqrt(mu)``.
    """

    def rhs(u, t, p):
        mu, w = p[0], p[1]
        x, y, z = u[0], u[1], u[2]
        r2 = x * x + y * y
        return np.stack([mu * x - w * y - x * r2, w * x + mu * y - y * r2, -decay * z])

    def jac(u, t, p):
        mu, w = p[0], p[1]
        x, y = u[0], u[1]
        zero = np.zeros_like(x)
        r2 = x * x + y * y
        return np.array([
            [mu - r2 - 2 * x * x, -w - 2 * x * y, zero],
            [w - 2 * x * y, mu - r2 - 2 * y * y, zero],
            [zero, zero, -decay + zero],
        ])

    return DynSystem(3, rhs, [-0.2, omega], ("mu", "omega"), jac_x=jac, name="normal form")


def twin_pairs(omega1=1.0, omega2=3.0):
    """Two uncoupled linear rotations sharing the growth rate ``mu``:
    the two complex pairs are always equally close to the imaginary axis."""

    def rhs(u, t, p):
        mu = p[0]
        return np.stack([
            mu * u[0] - omega1 * u[1], omega1 * u[0] + mu * u[1],
            mu * u[2] - omega2 * u[3], omega2 * u[2] + mu * u[3],
        ])

    return DynSystem(4, rhs, [-0.1], ("mu",), name="twin pairs")


def oscillator():
    """``x' = mu x - y``, ``y' = x + mu y``: circles of period 2 pi at ``mu = 0``."""

    def rhs(x, t, p):
        return np.stack([p[0] * x[0] - x[1], x[0] + p[0] * x[1]])

    def jac(x, t, p):
        z = np.zeros_like(x[0])
        return np.array([[p[0] + z, -1.0 + z], [1.0 + z, p[0] + z]])

    return DynSystem(2, rhs, [0.0], ("mu",), jac_x=jac, name="harmonic oscillator")


def circle(s):
    return np.array([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)])
