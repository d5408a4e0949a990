"""Scenario fixtures shipped with the package: sim apps, scripted oracles, reports."""

from dataclasses import dataclass
from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    return Path(str(resources.files(__package__).joinpath(name)))


@dataclass(frozen=True)
class Scenario:
    name: str
    app: Path
    oracle: Path
    report: Path
    crashes: bool = True


def scenario(name: str, crashes: bool = True) -> Scenario:
    return Scenario(
        name,
        fixture_path(f"{name}.json"),
        fixture_path(f"{name}_oracle.json"),
        fixture_path(f"{name}_report.txt"),
        crashes,
    )


SCENARIOS = {
    "single_crash": scenario("single_crash"),
    "fakestandby": scenario("fakestandby"),
    "librenews": scenario("librenews"),
    "no_crash": scenario("no_crash", crashes=False),
}
