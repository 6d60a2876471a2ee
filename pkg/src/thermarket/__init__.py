"""Market thermostatistics engine.

Exact results for the primitive (ideal) market, Monte Carlo samplers for
the isolated, canonical, isothermal-isobaric, and grand-canonical market
ensembles, numerical partition-function machinery, and experiments that
exercise the conservation laws and fluctuation identities.
"""

from .core import (
    EnergyFunctional,
    EnsembleSpec,
    MarketState,
    ThermoReport,
    VolumeFunctional,
    concat_markets,
    estimate_temperature,
    new_market,
    total_energy,
    total_volume,
)
from .mc import (
    ChainConfig,
    ExchangeRule,
    Trace,
    direct_grand_sample,
    run_chain,
)
from .thermo import (
    CoupledSpec,
    FirstLawRecord,
    SweepSpec,
    first_law_decompose,
    heat_flow_experiment,
    quasistatic_sweep,
    second_law_check,
    summarize_trace,
)

__version__ = "0.1.0"

__all__ = [
    "EnergyFunctional",
    "EnsembleSpec",
    "MarketState",
    "ThermoReport",
    "VolumeFunctional",
    "concat_markets",
    "estimate_temperature",
    "new_market",
    "total_energy",
    "total_volume",
    "ChainConfig",
    "ExchangeRule",
    "Trace",
    "direct_grand_sample",
    "run_chain",
    "CoupledSpec",
    "FirstLawRecord",
    "SweepSpec",
    "first_law_decompose",
    "heat_flow_experiment",
    "quasistatic_sweep",
    "second_law_check",
    "summarize_trace",
    "__version__",
]
