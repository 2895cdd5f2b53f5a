import os
import random
import subprocess
import sys
from pathlib import Path

import pytest

from scenebgm.metrics import _pykernels, kernels

try:
    from scenebgm.metrics import _ckernels
except ImportError:  # extension not built on this machine
    _ckernels = None

needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def _pairs(seed, count, max_len, vocab):
    rng = random.Random(seed)
    for _ in range(count):
        yield ([rng.randrange(vocab) for _ in range(rng.randint(0, max_len))],
               [rng.randrange(vocab) for _ in range(rng.randint(0, max_len))])


def test_selected_implementation_is_reported():
    assert kernels.IMPLEMENTATION in ("python", "cython")
    if _ckernels is not None and os.environ.get("SCENEBGM_PURE_PYTHON", "") in ("", "0"):
        assert kernels.IMPLEMENTATION == "cython"


def test_env_var_forces_pure_python():
    code = "from scenebgm.metrics import kernels; print(kernels.IMPLEMENTATION)"
    env = {**os.environ, "SCENEBGM_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_c
def test_lcs_equivalence():
    for a, b in _pairs(1, 3000, 30, 5):
        assert _ckernels.lcs_length(a, b) == _pykernels.lcs_length(a, b)


@needs_c
@pytest.mark.parametrize("vocab,max_len,limit", [
    (2, 12, _pykernels.DEFAULT_NODE_LIMIT),
    (3, 16, _pykernels.DEFAULT_NODE_LIMIT),
    (3, 25, 5000),
    (6, 60, 5000),
    (40, 120, 5000),
])
def test_alignment_equivalence(vocab, max_len, limit):
    for a, b in _pairs(vocab * 1000 + max_len, 300, max_len, vocab):
        assert _ckernels.align_chunks(a, b, limit) == _pykernels.align_chunks(a, b, limit), (a, b)


@needs_c
def test_alignment_equivalence_under_tight_node_limit():
    # identical search order means identical results even when the search is cut off
    for a, b in _pairs(9, 300, 40, 3):
        assert _ckernels.align_chunks(a, b, 50) == _pykernels.align_chunks(a, b, 50)


def test_node_limit_keeps_matches_and_bounds_chunks():
    for a, b in _pairs(4, 200, 14, 3):
        m_full, c_full = _pykernels.align_chunks(a, b)
        m_cut, c_cut = _pykernels.align_chunks(a, b, 10)
        assert m_cut == m_full
        assert c_cut >= c_full


def test_long_inputs_fall_back_to_greedy():
    rng = random.Random(0)
    a = [rng.randrange(4) for _ in range(_pykernels.MAX_SEARCH_LENGTH + 50)]
    m, chunks = kernels.align_chunks(a, list(reversed(a)))
    assert m == len(a)
    assert 1 <= chunks <= m


def test_count_chunks():
    assert _pykernels.count_chunks([]) == 0
    assert _pykernels.count_chunks([(0, 2), (1, 3), (2, 0)]) == 2
    assert _pykernels.count_chunks([(3, 3), (0, 0), (1, 1), (2, 2)]) == 1


def test_benchmark_script_runs():
    script = Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    proc = subprocess.run([sys.executable, str(script), "--lengths", "8", "--repeat", "1"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0, proc.stderr
    assert "lcs_length" in proc.stdout and "align_chunks" in proc.stdout
