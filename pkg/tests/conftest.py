import pytest
from hypothesis import settings

from rarequeue.dist import ExponentialArrival, ExponentialService, GammaArrival, UniformService
from rarequeue.ldcalc import RateContext
from rarequeue.queue import Band

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def gamma_uniform():
    return GammaArrival(0.5, 0.5), UniformService(0.0, 1.0)


@pytest.fixture(scope="session")
def poisson_uniform():
    return ExponentialArrival(1.0), UniformService(0.0, 1.0)


@pytest.fixture(scope="session")
def poisson_exp():
    # mean 0.5, i.e. rate-2 service
    return ExponentialArrival(1.0), ExponentialService(0.5)


@pytest.fixture(scope="session")
def gu_ctx(gamma_uniform):
    return RateContext(*gamma_uniform)


@pytest.fixture(scope="session")
def gu_band_100(gamma_uniform):
    return Band(*gamma_uniform, 100, "truncated", c_star=1.0, c1=1.1, eta=0.0)


# -- acceptance report ---------------------------------------------------------
# Tests tagged ``@pytest.mark.criterion(name)`` roll up into one PASS/FAIL line per
# criterion at the end of the session; ``record_property("detail", ...)`` adds context.

_criteria: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = [v for k, v in item.user_properties if k == "detail"]
        _criteria.setdefault(mark.args[0], []).append((item.name, rep.passed, details))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, results in _criteria.items():
        ok = all(p for _, p, _ in results)
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
        for test, passed, details in results:
            for d in details:
                tr.write_line(f"        {'ok ' if passed else 'BAD'} {test}: {d}")
            if not details and not passed:
                tr.write_line(f"        BAD {test}")
