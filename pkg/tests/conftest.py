import numpy as np
import pytest

from flatpose import docparse, fixtures

_ACCEPTANCE_RESULTS = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(name): criterion reported in the terminal summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        mark = item.get_closest_marker("acceptance")
        if mark:
            _ACCEPTANCE_RESULTS.append((mark.args[0], rep.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}: {name}")


@pytest.fixture(scope="session")
def fixture_profiles():
    """All 15 corpus profiles, parsed once at default tolerance."""
    doc = docparse.parse_document(fixtures.fixture_document_xml())
    profiles = docparse.profiles_from_document(doc)
    return {p.category_id: p for p in profiles}


@pytest.fixture(scope="session")
def fixture_meshes(fixture_profiles):
    """1 mm extrusions of the corpus, keyed by category."""
    from flatpose import geometry

    return {cat: geometry.extrude(p) for cat, p in fixture_profiles.items()}


@pytest.fixture(scope="session")
def fixture_symmetries(fixture_meshes):
    """Detected symmetry sets for the corpus (coarse 5 degree grid for speed)."""
    from flatpose import geometry

    return {cat: geometry.detect_symmetries(m, angular_step=5.0)
            for cat, m in fixture_meshes.items()}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def small_models(fixture_meshes, fixture_symmetries):
    """Three compact parts, enough for multi-object scenes in tests."""
    return {cat: (fixture_meshes[cat], fixture_symmetries[cat])
            for cat in (6, 10, 14)}


@pytest.fixture(scope="session")
def test_camera():
    from flatpose.raster import default_camera

    return default_camera(width=320, height=240, focal=290.0)


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory, small_models, test_camera):
    """A small generated dataset shared by IO, metric, and CLI tests."""
    from flatpose import scenegen

    root = tmp_path_factory.mktemp("dataset")
    scenegen.write_dataset(root, small_models, n_scenes=2,
                           images_per_scene=3, seed=4242, cam=test_camera)
    return root
