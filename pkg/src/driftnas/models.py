"""Shared constants for driftnas."""

from __future__ import annotations

# Bumped whenever a persisted JSON/NDJSON layout changes
SCHEMA_VERSION = "1"

# Evaluation horizons, seconds: 1 s, 1 day, 1 month (30 days)
ONE_SECOND = 1.0
ONE_DAY = 86_400.0
ONE_MONTH = 2_592_000.0
DEFAULT_TIMES = (ONE_SECOND, ONE_DAY, ONE_MONTH)

DEFAULT_TRIALS = 5

# Floor for the 1-day accuracy std in the ACC/σ objective
SIGMA_FLOOR = 1e-4

# Tile sizes the hardware model is calibrated for; others are warned about
STANDARD_TILE_SIZES = frozenset({256, 512})

# Convolution block types: A/C bottleneck, B/D basic (C/D swap ReLU and BN order)
CONV_TYPES = ("A", "B", "C", "D")
BOTTLENECK_TYPES = frozenset({"A", "C"})
BOTTLENECK_RATIO = 4

MAX_MAIN_BLOCKS = 5

# Default task: CIFAR-10 shaped inputs
DEFAULT_INPUT_SHAPE = (3, 32, 32)
DEFAULT_NUM_CLASSES = 10

# Default limit for list outputs in tool responses
DEFAULT_LIMIT = 10

# Short arch_id length for concise display
SHORT_ID_LEN = 8
