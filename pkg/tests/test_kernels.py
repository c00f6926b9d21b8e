import os
import subprocess
import sys

import numpy as np
import pytest

from shearthin import kernels
from shearthin.constitutive import BoundedIncreasing, FluidParams


def _inputs(space, rng):
    nc, nq = space.qweights.shape
    ctot = rng.standard_normal((nc, 12))
    cbar = rng.standard_normal((nc, 12))
    amp = rng.uniform(0, 1, (nc, nq))
    return space.strain_basis, space.qweights, ctot, cbar, amp


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")
@pytest.mark.parametrize("p,eps", [(1.5, 0.0), (1.3, 1e-2), (2.0, 0.1)])
def test_compiled_matches_numpy(film_space, rng, p, eps):
    params = FluidParams(p, BoundedIncreasing(1.0, 2.0))
    args = _inputs(film_space, rng)
    ref = kernels.viscous_element_numpy(*args, 1.0, p, eps, params.p_conj, 1e-3, True)
    got = kernels._compiled.viscous_element(*args, 1.0, p, eps, params.p_conj, 1e-3, True)
    for a, b in zip(ref, got):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    r_only, k_none = kernels.viscous_element(*args, 1.0, p, eps, params.p_conj, 1e-3, False)
    assert np.allclose(r_only, ref[0], rtol=1e-12, atol=1e-12)


def test_pure_switch_forces_numpy():
    env = dict(os.environ, SHEARTHIN_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "from shearthin import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_backend_name():
    assert kernels.BACKEND in ("cython", "numpy")
