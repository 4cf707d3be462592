"""Tests for release metadata consistency."""

import re
from pathlib import Path

import occupation_estimator


ROOT = Path(__file__).resolve().parents[1]


def test_package_version_matches_pyproject() -> None:
    pyproject = (ROOT / "pyproject.toml").read_text(encoding="utf-8")
    match = re.search(r'^version = "([^"]+)"$', pyproject, re.MULTILINE)

    assert match is not None
    assert occupation_estimator.__version__ == match.group(1)


def test_readme_version_badge_matches_package_version() -> None:
    readme = (ROOT / "README.md").read_text(encoding="utf-8")

    assert f"badge/version-{occupation_estimator.__version__}-" in readme


def test_public_names_are_importable() -> None:
    for name in occupation_estimator.__all__:
        assert hasattr(occupation_estimator, name), name


IMPORT_NAMES = {"POT": "ot", "python-dotenv": "dotenv"}


def test_every_runtime_dependency_is_imported() -> None:
    pyproject = (ROOT / "pyproject.toml").read_text(encoding="utf-8")
    block = re.search(r"^dependencies = \[(.*?)\]", pyproject, re.MULTILINE | re.DOTALL)
    assert block is not None
    names = re.findall(r'"([A-Za-z0-9_.\-]+)', block.group(1))
    sources = "\n".join(
        path.read_text(encoding="utf-8")
        for path in (ROOT / "src" / "occupation_estimator").rglob("*.py")
    )

    for name in names:
        module = IMPORT_NAMES.get(name, name.replace("-", "_"))
        pattern = rf"^\s*(import|from) {re.escape(module)}\b"
        assert re.search(pattern, sources, re.MULTILINE), name
