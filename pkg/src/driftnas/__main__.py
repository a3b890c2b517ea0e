"""Allow running via `python -m driftnas`."""

from driftnas.cli import main

raise SystemExit(main())
