"""Flatness maps for the planar coordinated-turn vehicle.

The flat output is the position; heading needs first derivatives and the
roll input needs second derivatives, so curves must have order >= 4 for
smooth states and inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flatplan.bspline import SplineCurve

GRAVITY = 9.81
EPS_VELOCITY = 1e-9

TWO_PI = 2.0 * np.pi


class SingularVelocityError(ValueError):
    """Heading is undefined where the flat-output velocity vanishes."""


@dataclass(frozen=True)
class FlatSample:
    """Flat output with its first two derivatives at one instant."""

    z: np.ndarray
    dz: np.ndarray
    ddz: np.ndarray


@dataclass(frozen=True)
class StateSample:
    x: float
    y: float
    psi: float  # heading, wrapped to [0, 2*pi)


@dataclass(frozen=True)
class InputSample:
    va: float  # airspeed, >= 0
    phi: float  # roll angle in (-pi/2, pi/2)


def theta(sample: FlatSample, eps_v: float = EPS_VELOCITY) -> StateSample:
    """States from the flat sample: position plus heading from the velocity."""
    dz = sample.dz
    speed = float(np.hypot(dz[0], dz[1]))
    if speed < eps_v:
        raise SingularVelocityError(f"flat-output speed {speed:.3e} below {eps_v:.0e}")
    psi = float(np.arctan2(dz[1], dz[0])) % TWO_PI
    return StateSample(x=float(sample.z[0]), y=float(sample.z[1]), psi=psi)


def phi_input(sample: FlatSample, g: float = GRAVITY, eps_v: float = EPS_VELOCITY) -> InputSample:
    """Inputs from the flat sample: airspeed and coordinated-turn roll angle."""
    dz, ddz = sample.dz, sample.ddz
    speed = float(np.hypot(dz[0], dz[1]))
    if speed < eps_v:
        raise SingularVelocityError(f"flat-output speed {speed:.3e} below {eps_v:.0e}")
    cross = float(ddz[1] * dz[0] - dz[1] * ddz[0])
    phi = float(np.arctan(cross / (g * speed)))
    return InputSample(va=speed, phi=phi)


def flat_samples(curve: SplineCurve, times) -> list[FlatSample]:
    """Flat output and first two derivatives of a curve at the given times."""
    if curve.knots.order < 4:
        raise ValueError("curve order must be >= 4 for smooth states and inputs")
    ts = np.asarray(times, dtype=float).ravel()
    z = curve.eval(ts)
    dz = curve.derivative(1).eval(ts)
    ddz = curve.derivative(2).eval(ts)
    return [FlatSample(z=z[i], dz=dz[i], ddz=ddz[i]) for i in range(ts.size)]


def trace(
    curve: SplineCurve,
    times,
    g: float = GRAVITY,
    eps_v: float = EPS_VELOCITY,
) -> list[tuple[StateSample, InputSample]]:
    """State and input samples along a curve.

    Raises SingularVelocityError naming the first offending time if the
    flat-output velocity vanishes anywhere on the sample grid.
    """
    ts = np.asarray(times, dtype=float).ravel()
    out = []
    for t, sample in zip(ts, flat_samples(curve, ts)):
        try:
            out.append((theta(sample, eps_v), phi_input(sample, g, eps_v)))
        except SingularVelocityError as err:
            raise SingularVelocityError(f"{err} at t={t:g}") from None
    return out
