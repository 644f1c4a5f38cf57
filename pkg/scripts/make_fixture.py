"""Regenerate src/rfot/data/synthetic_happiness.{jsonl,cassette.json}."""

import shutil
import sys
from pathlib import Path

from rfot.simulate import write_fixture

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parents[1] / "src" / "rfot" / "data"
    data, cassette = write_fixture(out)
    shutil.rmtree(out / "_record_run", ignore_errors=True)
    print(f"wrote {data} and {cassette}")
