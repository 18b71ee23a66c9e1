"""Write the annotation service's OpenAPI schema to a JSON file.

The frontend's contract tests pin label enums and endpoint shapes against
this file, so regenerate it whenever the service surface changes:

    python3 scripts/export_openapi.py
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from chatloom.service import create_app

DEFAULT_OUT = Path(__file__).resolve().parent.parent / "src" / "chatloom" / "openapi.json"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = parser.parse_args(argv)

    with tempfile.TemporaryDirectory() as scratch:
        schema = create_app(scratch).openapi()
    args.out.write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({len(schema['paths'])} paths)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
