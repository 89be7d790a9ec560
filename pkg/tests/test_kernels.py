"""Both kernel paths (plain numpy and numba-jitted) must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from pseudolabel import _accel

def _numba_importable() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


needs_numba = pytest.mark.skipif(not _numba_importable(), reason="numba unavailable")


def jit():
    if _accel.jit_kernels is not None:
        return _accel.jit_kernels
    return _accel.build_jit_kernels()


def random_boxes(rng, n):
    x1 = rng.uniform(0, 80, (n, 2))
    wh = rng.uniform(0.5, 40, (n, 2))
    return np.concatenate([x1, x1 + wh], axis=1)


def test_vectorized_twins_match_loop_kernels_exactly():
    from pseudolabel import _kernels

    rng = np.random.default_rng(3)
    a = random_boxes(rng, 50)
    b = random_boxes(rng, 40)
    np.testing.assert_array_equal(
        _kernels.pairwise_iou_numpy(a, b), _kernels.pairwise_iou(a, b)
    )
    np.testing.assert_array_equal(
        _kernels.pairwise_giou_numpy(a, b), _kernels.pairwise_giou(a, b)
    )
    # degenerate and disjoint boxes included
    weird = np.array([[0.0, 0.0, 0.0, 0.0], [100.0, 100.0, 101.0, 101.0]])
    np.testing.assert_array_equal(
        _kernels.pairwise_giou_numpy(weird, weird), _kernels.pairwise_giou(weird, weird)
    )


@needs_numba
def test_pairwise_iou_paths_agree():
    rng = np.random.default_rng(0)
    a = random_boxes(rng, 40)
    b = random_boxes(rng, 30)
    np.testing.assert_allclose(
        _accel.numpy_kernels.pairwise_iou(a, b), jit().pairwise_iou(a, b), atol=1e-12
    )
    np.testing.assert_allclose(
        _accel.numpy_kernels.pairwise_giou(a, b), jit().pairwise_giou(a, b), atol=1e-12
    )


@needs_numba
def test_roi_align_paths_agree():
    rng = np.random.default_rng(1)
    values = rng.standard_normal((5, 12, 14))
    args = (values, 0.7, 1.1, 9.6, 11.4, 4, 3, 3)
    np.testing.assert_allclose(
        _accel.numpy_kernels.roi_align_box(*args), jit().roi_align_box(*args), atol=1e-12
    )


@needs_numba
def test_hungarian_paths_agree():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(1, 10))
        cost = rng.uniform(0, 5, (n, n))
        np.testing.assert_array_equal(
            _accel.numpy_kernels.solve_square_assignment(cost),
            jit().solve_square_assignment(cost),
        )


@pytest.mark.parametrize("flag,expect", [("0", "False"), ("auto", "True")])
def test_env_flag_selects_path(flag, expect):
    env = dict(os.environ, PSEUDOLABEL_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from pseudolabel._accel import USING_NUMBA; print(USING_NUMBA)"],
        capture_output=True,
        env=env,
    )
    assert out.returncode == 0, out.stderr.decode()
    assert out.stdout.decode().strip() == expect


def test_disabled_path_runs_package_end_to_end(tmp_path):
    env = dict(os.environ, PSEUDOLABEL_NUMBA="0")
    code = (
        "import numpy as np\n"
        "from pseudolabel import iou, hungarian, roi_align, FeatureMap\n"
        "assert iou(np.array([0,0,2,2.]), np.array([1,1,3,3.])) > 0\n"
        "assert hungarian(np.array([[4,1],[1,4.]])) == [(0,1),(1,0)]\n"
        "v = roi_align(FeatureMap(np.ones((1,4,4))), np.array([0,0,3,3.]), 2, 2)\n"
        "assert np.allclose(v, 1.0)\n"
        "print('ok')\n"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, env=env)
    assert out.returncode == 0, out.stderr.decode()
    assert out.stdout.decode().strip() == "ok"
