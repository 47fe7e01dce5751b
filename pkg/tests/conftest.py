import numpy as np
import pytest

from robust_oed import structural_model as sm
from robust_oed.inverse import Design, NoiseModel


def random_frf(rng, n_y, n_theta, scale=1.0):
    """Well-conditioned random FRF matrix."""
    while True:
        T = scale * rng.standard_normal((n_y, n_theta))
        s = np.linalg.svd(T, compute_uv=False)
        if s[-1] > 1e-3 * s[0]:
            return sm.FRFMatrix(T)


def interior_design(rng, n_y, budget=None):
    w = rng.uniform(0.2, 0.9, n_y)
    return Design(w, np.ones(n_y), budget if budget is not None else float(w.sum()) + 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def demo():
    """Demo tower: (config, model, frf, noise)."""
    config = sm.load_model_config("demo")
    model = sm.assemble_tiered_model(config)
    frf = sm.compute_frf(model, config.frequency, config.extraction_mode)
    return config, model, frf, NoiseModel(config.noise_sigma)


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion


_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "details": []})
    entry["ok"] &= rep.passed
    entry["details"] += [str(v) for k, v in item.user_properties if k == "detail" and rep.when == "call"]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        detail = "; ".join(e["details"])
        terminalreporter.write_line(
            f"criterion {number} {e['title']}: {'PASS' if e['ok'] else 'FAIL'}" + (f" ({detail})" if detail else "")
        )


@pytest.fixture
def detail(record_property):
    """Attach a short measurement to the acceptance summary line."""
    return lambda text: record_property("detail", text)
