"""Access to the prompt templates shipped with the package.

Templates live as plain text files under ``toolgate/templates/`` so
operators can audit and pin them.  A directory override lets a deployment
swap any template without touching the package.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path

TEMPLATE_NAMES = (
    "api_simulation_system",
    "call_writing_system",
    "solvability",
    "answer_check",
    "comparison",
    "legacy_solvability",
    "agent_system",
)


@lru_cache(maxsize=None)
def _packaged(name: str) -> str:
    ref = resources.files(__package__).joinpath("templates", f"{name}.txt")
    return ref.read_text(encoding="utf-8")


def load_prompt(name: str, override_dir: str | Path | None = None) -> str:
    """Return the template text, preferring ``override_dir`` when given."""
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template: {name}")
    if override_dir is not None:
        candidate = Path(override_dir) / f"{name}.txt"
        if candidate.exists():
            return candidate.read_text(encoding="utf-8")
    return _packaged(name)
