"""Run every scenario in scenarios/ and tabulate exit codes and report verdicts.

    python3 scripts/run_scenarios.py [--out-dir DIR]
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from intcurve.cli.config import load_config
from intcurve.cli.main import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def run_all(out_root: Path) -> list[tuple[str, str, int, bool]]:
    rows = []
    for path in sorted((ROOT / "scenarios").glob("*.toml")):
        cfg = load_config(path)
        out = out_root / path.stem
        code = cli_main([cfg.kind, "--config", str(path), "--out-dir", str(out)])
        passed = json.loads((out / "report.json").read_text()).get("pass", False)
        rows.append((path.stem, cfg.kind, code, passed))
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", type=Path, default=ROOT / "scenarios" / "out")
    args = parser.parse_args()
    logging.disable(logging.INFO)
    rows = run_all(args.out_dir)
    print(f"{'scenario':<24}{'kind':<10}{'exit':>5}  pass")
    for name, kind, code, passed in rows:
        print(f"{name:<24}{kind:<10}{code:>5}  {passed}")
    consistent = all((code == 0) == passed for _, _, code, passed in rows)
    print(f"exit codes agree with verdicts: {consistent}")
    return 0 if consistent else 1


if __name__ == "__main__":
    sys.exit(main())
