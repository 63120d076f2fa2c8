"""Regenerate tests/golden/ from a mock end-to-end run.

Only run this after an intentional change to scoring or the mock fixtures,
and review the diff of the golden files before committing.
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from conftest import GOLDEN, mock_run  # noqa: E402


def main() -> int:
    GOLDEN.mkdir(exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        for form in ("P1", "P2"):
            out = Path(tmp) / form
            mock_run(out, "mixed", form)
            shutil.copyfile(out / "scores.csv", GOLDEN / f"mixed_{form}_scores.csv")
            print(f"wrote {GOLDEN / f'mixed_{form}_scores.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
