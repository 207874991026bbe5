import numpy as np
import pytest

from aoscl.seqmodel import ModelConfig, Sample, init_params

SMALL = ModelConfig(d_i=3, d_h=5, n_enc=2, n_dec=1, C=4, c=0.3, max_len=4)


def random_sample(rng, config=SMALL, n_tok=None, n_frames=None):
    n_tok = n_tok or int(rng.integers(1, config.max_len + 1))
    targets = tuple(int(t) for t in rng.integers(0, config.C, size=n_tok))
    n_frames = n_frames or int(rng.integers(2 * n_tok + 1, 2 * n_tok + 4))
    return Sample(rng.normal(size=(n_frames, config.d_i)), targets)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_params():
    return init_params(SMALL, seed=3)


@pytest.fixture
def data_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("AOS_DATA_DIR", str(tmp_path / "cache"))
    return tmp_path / "cache"


# acceptance criteria report one line each at the end of the session
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
