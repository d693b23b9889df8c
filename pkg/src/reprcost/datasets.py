"""Small synthetic training sets for the weight-decay experiments (``X`` is ``d x n``)."""

from __future__ import annotations

import math

import numpy as np

from .rays import RaysConfig, gen_rays

COLINEAR_DIRECTION = (1.0, 2.0)


def colinear(seed=0, n=6, direction=COLINEAR_DIRECTION, span=2.0, offset=None):
    """``n`` points ``t_i u (+ offset)`` on a line with jittered, well separated ``t``.

    Labels are a sinusoid of ``t`` with a seeded phase.  Returns
    ``(X, y, u)``.
    """
    rng = np.random.default_rng(seed)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    step = 2 * span / (n - 1) if n > 1 else 0.0
    t = np.linspace(-span, span, n) + rng.uniform(-0.1, 0.1, n) * step
    y = np.sin(1.5 * t + rng.uniform(0, 2 * math.pi))
    X = np.outer(u, t)
    if offset is not None:
        X = X + np.asarray(offset, dtype=float)[:, None]
    return X, y, u


def two_rays(seed=0, psi=2 * math.pi / 3, n_per_ray=3, radius_range=(0.5, 2.5)):
    """Training set on two rays at separation ``psi`` (default: 120 degrees)."""
    cfg = RaysConfig(psi=psi, n1=n_per_ray, n2=n_per_ray, seed=seed, radius_range=radius_range)
    X, y, _, _ = gen_rays(cfg)
    return X, y
