import json
from pathlib import Path

import pytest

from botverse.scenario import ScenarioConfig

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = REPO_ROOT / "scenarios"


def load_scenario(name: str) -> ScenarioConfig:
    """Load a shipped scenario with its replay path made cwd-independent."""
    raw = json.loads((SCENARIOS / name).read_text())
    ingestion = raw.get("ingestion")
    if ingestion and ingestion.get("replay_path"):
        ingestion["replay_path"] = str(REPO_ROOT / ingestion["replay_path"])
    return ScenarioConfig.from_dict(raw)


@pytest.fixture(scope="session")
def desk_config() -> ScenarioConfig:
    return load_scenario("desk.json")


@pytest.fixture(scope="session")
def desk_config_dict() -> dict:
    return json.loads((SCENARIOS / "desk.json").read_text())


@pytest.fixture(scope="session")
def replay_path() -> Path:
    return SCENARIOS / "replay_sample.ndjson"


def tiny_config_dict(**overrides) -> dict:
    """Small scenario for fast engine tests; callers override freely."""
    cfg = {
        "name": "tiny",
        "duration_ms": 3_600_000,
        "attention_sample": 5,
        "populations": [
            {
                "archetype": "benign",
                "count": 6,
                "handle_base": "user",
                "temporal": {"base_rate": 48.0, "circadian": [1.0] * 24},
            },
            {
                "archetype": "disinformative",
                "count": 3,
                "handle_base": "troll",
                "temporal": {"base_rate": 48.0, "circadian": [1.0] * 24},
            },
        ],
    }
    cfg.update(overrides)
    return cfg
