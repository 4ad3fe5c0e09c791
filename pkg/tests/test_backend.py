import os
import subprocess
import sys

import numpy as np
import pytest

from perflab import _backend
from perflab.baselines import dfo_run, greedy_sgd_run
from perflab.core import ParamBall, squared_loss
from perflab.maps import LocationQuadMap
from perflab.selftest import check_kernel_parity

needs_compiled = pytest.mark.skipif("compiled" not in _backend.available(), reason="extension not built")


@needs_compiled
def test_compiled_and_python_kernels_agree():
    res = check_kernel_parity(seed=4)
    assert res.passed, res.detail


@pytest.mark.parametrize("runner, kw", [(dfo_run, {"delta": 0.3}), (greedy_sgd_run, {})])
def test_fused_loop_matches_generic_path(runner, kw):
    lm = LocationQuadMap.generate(4, 0.5, 0.5, seed=2)
    a = runner(lm, squared_loss(), ParamBall(4), c0=0.1, m=6, iters=200, rng=3, fused=True, **kw)
    b = runner(lm, squared_loss(), ParamBall(4), c0=0.1, m=6, iters=200, rng=3, fused=False, **kw)
    np.testing.assert_allclose(a.thetas, b.thetas, atol=1e-12)
    assert b.backend == "generic" and a.backend == _backend.BACKEND


def test_environment_forces_python_fallback():
    code = "from perflab import _backend; print(_backend.BACKEND)"
    env = {**os.environ, "PERFLAB_BACKEND": "python"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _backend.kernels("fortran")
