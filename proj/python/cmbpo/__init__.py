from ._cmbpo import (
    ConfigError,
    DiscoveryError,
    EnvError,
    EnvSpec,
    Transition,
    apply_shift,
    collect_warmup,
    discover_graph,
    estimate_cif,
    evaluate,
    partial_correlation,
    summarize,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DiscoveryError",
    "EnvError",
    "EnvSpec",
    "Transition",
    "apply_shift",
    "collect_warmup",
    "discover_graph",
    "estimate_cif",
    "evaluate",
    "partial_correlation",
    "summarize",
    "train",
]
