from pathlib import Path

DEFAULT_OUTPUT_DIRECTORY = Path("output")
SEED_ENVIRONMENT_VARIABLE = "RWRW_SEED"
DEFAULT_SEED: int = 20240101

# Upper bound on the number of count vectors the exact conditional pmf may enumerate.
DEFAULT_ENUMERATION_BUDGET: int = 2_000_000
DEFAULT_COUNT_CAP: int = 8
DEFAULT_MAX_ATTEMPTS: int = 100_000
DEFAULT_TAIL_TOLERANCE: float = 1e-12
DEFAULT_DOMINATION_TRUNCATION: int = 200

KERNEL_NORMALIZATION_TOLERANCE: float = 1e-12
MASS_CONSERVATION_TOLERANCE: float = 1e-12
Z_95: float = 1.959963984540054

# Replica blocks are the unit of seeding; their count must not depend on the worker count.
DEFAULT_BLOCKS: int = 64
DEFAULT_WORKERS: int = 1

# Rejection of pinned walks against a trace pattern works in batches of this size.
PINNED_WALK_BATCH: int = 512
# Patterns per anchor time are enumerated exhaustively only up to this path budget.
ADVERSARIAL_ENUMERATION_BUDGET: int = 4096
DEFAULT_BLOCK_LOG_CONSTANT: float = 2.0
