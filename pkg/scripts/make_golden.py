"""Regenerate tests/golden/demo_report.json from the bundled demo config.

Only needed after an intentional change to the generator, classifier or reports.
"""

import shutil
import tempfile
from pathlib import Path

from run_demo import run

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden" / "demo_report.json"

if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        run(Path(tmp), threads=1)
        GOLDEN.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(Path(tmp) / "report.json", GOLDEN)
    print(f"wrote {GOLDEN}")
