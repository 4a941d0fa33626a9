"""Boxings, energies and the energy-increment search over F_2^n."""
from .audit import (DensityWitness, QuasirandomAudit, UniformityAudit, density_witness,
                    quasirandom_audit, uniformity_audit)
from .boxing import (Boxing, BoxKernel, EnergyPair, box_corner_count, box_density, box_kernel,
                     corners_within_W, counting_check, energies)
from .refine import Caps, RegularityResult, find_regular_boxing, refine_A, refine_B
from .subspace import Subspace
from .walsh import fwht, inverse_walsh, walsh, walsh_coefficients

__all__ = [
    "Boxing", "BoxKernel", "Caps", "DensityWitness", "EnergyPair", "QuasirandomAudit",
    "RegularityResult", "Subspace", "UniformityAudit", "box_corner_count", "box_density",
    "box_kernel", "corners_within_W", "counting_check", "density_witness", "energies",
    "find_regular_boxing", "fwht", "inverse_walsh", "quasirandom_audit", "refine_A",
    "refine_B", "uniformity_audit", "walsh", "walsh_coefficients",
]
