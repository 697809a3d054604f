"""Privacy-preserving release of gas demand profiles for coupled energy markets.

The package obfuscates gas demand with calibrated Laplace noise, repairs the
noisy profile so the induced market outcome stays within a configured band
of public baseline values, and evaluates releases by clearing the
electricity and gas markets under a gas-aware unit commitment.
"""

from .model import (
    DemandProfile,
    ElectricNetwork,
    GasNetwork,
    MarketInstance,
    ValidationReport,
    gfpp_gas_consumption,
    load_instance,
    save_instance,
    stress_scale,
    validate_instance,
)
from .privacy import ObfuscatedProfile, PrivacyParams, compose_privacy_loss, laplace_sample, obfuscate_demand
from .markets import clear_em, clear_gm, build_em, build_gm
from .fidelity import FidelityParams, dual_fidelity, fidelity_oracle, kkt_gm_constraints, primal_fidelity
from .gauc import check_bid_validity, solve_gauc_enumerate, solve_gauc_milp
from .bench import BenchSpec, builtin_instances, generate_instance, get_instance

__version__ = "0.1.0"

__all__ = [
    "BenchSpec",
    "DemandProfile",
    "ElectricNetwork",
    "FidelityParams",
    "GasNetwork",
    "MarketInstance",
    "ObfuscatedProfile",
    "PrivacyParams",
    "ValidationReport",
    "build_em",
    "build_gm",
    "builtin_instances",
    "check_bid_validity",
    "clear_em",
    "clear_gm",
    "compose_privacy_loss",
    "dual_fidelity",
    "fidelity_oracle",
    "generate_instance",
    "get_instance",
    "gfpp_gas_consumption",
    "kkt_gm_constraints",
    "laplace_sample",
    "load_instance",
    "obfuscate_demand",
    "primal_fidelity",
    "save_instance",
    "solve_gauc_enumerate",
    "solve_gauc_milp",
    "stress_scale",
    "validate_instance",
]
