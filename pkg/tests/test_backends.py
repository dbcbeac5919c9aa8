import os
import subprocess
import sys

import numpy as np
import pytest

from eigopt import _core
from eigopt._core import _fallback
from eigopt.mesh import build_grid

kernels = pytest.importorskip("eigopt._core._kernels")


@pytest.mark.parametrize("cells,lengths,rmin", [((20, 20), (4, 4), 0.6), ((7, 5), (3.5, 1), 0.55),
                                                ((4, 5, 3), (1, 1, 1), 0.4)])
def test_filter_triplets_agree(cells, lengths, rmin):
    mesh = build_grid(len(cells), cells, lengths)
    spacing = [s / c for s, c in zip(mesh.lengths, mesh.cells)]
    a = _fallback.filter_triplets(mesh.cells, spacing, mesh.volumes, rmin)
    b = kernels.filter_triplets(mesh.cells, spacing, mesh.volumes, rmin)
    key = lambda t: sorted(zip(t[0].tolist(), t[1].tolist(), t[2].tolist()))
    assert key(a) == key(b)


def test_element_energies_agree():
    g = np.random.default_rng(0)
    u = g.standard_normal((3, 10, 8))
    M = g.standard_normal((8, 8))
    M = M + M.T
    np.testing.assert_allclose(kernels.element_energies(u, M), _fallback.element_energies(u, M),
                               rtol=1e-12, atol=1e-12)


def test_backend_selected():
    assert _core.BACKEND == "cython"


def test_pure_python_switch():
    code = "import eigopt; print(eigopt.BACKEND)"
    env = dict(os.environ, EIGOPT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
