"""Shared fixtures and bundle builders for the test suite."""

import numpy as np
import pytest

import fiberflux as ff


def straight_fibers(n_fibers=10, length=10.0, n_vertices=50, spread=0.4,
                    channels=None, direction=(1.0, 0.0, 0.0)):
    """Parallel straight fibers along ``direction``, offset in y/z."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    t = np.linspace(0.0, length, n_vertices)
    fibers = []
    for i in range(n_fibers):
        off_y = (i - (n_fibers - 1) / 2.0) * spread
        off_z = 0.1 * ((i % 3) - 1)
        base = np.array([0.0, off_y, off_z])
        pts = base + t[:, None] * direction
        scal = {}
        for name, value in (channels or {}).items():
            scal[name] = np.full(n_vertices, value) if np.isscalar(value) else np.asarray(value)
        fibers.append(ff.FiberStreamline(pts, scal))
    return fibers


@pytest.fixture
def parallel_bundle():
    return ff.FiberBundle(tuple(straight_fibers(channels={"FA": 0.7})), "parallel")


@pytest.fixture
def parallel_plain():
    return ff.FiberBundle(tuple(straight_fibers()), "plain")


def constant_profile(m=50, magnitude=0.7, direction=(1.0, 0.0, 0.0),
                     channel="FA", name="p"):
    dirs = np.tile(np.asarray(direction, dtype=float), (m, 1))
    return ff.TractProfile(
        np.full(m, magnitude), dirs, np.linspace(0.0, 1.0, m), name, channel
    )


def profile_from_values(values, channel="FA", name="p", direction=(1.0, 0.0, 0.0)):
    values = np.asarray(values, dtype=float)
    dirs = np.tile(np.asarray(direction, dtype=float), (len(values), 1))
    return ff.TractProfile(
        values, dirs, np.linspace(0.0, 1.0, len(values)), name, channel
    )
