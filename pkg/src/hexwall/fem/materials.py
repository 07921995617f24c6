"""Materials, loads and supports.  Units: mm, N, MPa; kPa / mmHg only at the boundary."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidSpecError

MMHG_TO_KPA = 0.133322
KPA_TO_MPA = 1e-3


@dataclass
class MaterialSpec:
    youngs_modulus: float = 3.0  # MPa
    poisson_ratio: float = 0.49

    def validate(self):
        if self.youngs_modulus <= 0:
            raise InvalidSpecError("youngs_modulus must be > 0")
        if not 0 <= self.poisson_ratio < 0.5:
            raise InvalidSpecError("poisson_ratio must lie in [0, 0.5)")

    def scaled(self, factor):
        return MaterialSpec(self.youngs_modulus * factor, self.poisson_ratio)

    def elasticity_matrix(self):
        """Isotropic 6x6 matrix in Voigt order xx, yy, zz, yz, xz, xy (engineering shear)."""
        self.validate()
        E, nu = self.youngs_modulus, self.poisson_ratio
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        D = np.zeros((6, 6))
        D[:3, :3] = lam
        D[np.arange(3), np.arange(3)] += 2 * mu
        D[np.arange(3, 6), np.arange(3, 6)] = mu
        return D


def map_pressure(systolic, diastolic):
    """Mean arterial pressure in kPa from systolic/diastolic pressures in mmHg."""
    if diastolic <= 0 or systolic < diastolic:
        raise InvalidSpecError(
            f"need systolic >= diastolic > 0 (got {systolic}/{diastolic} mmHg)"
        )
    return (systolic / 3.0 + 2.0 * diastolic / 3.0) * MMHG_TO_KPA


@dataclass
class PressureSpec:
    pressure_kpa: Optional[float] = None
    systolic_mmhg: Optional[float] = None
    diastolic_mmhg: Optional[float] = None

    def validate(self):
        explicit = self.pressure_kpa is not None
        bp = self.systolic_mmhg is not None or self.diastolic_mmhg is not None
        if explicit == bp:
            raise InvalidSpecError("give either pressure_kpa or systolic/diastolic, not both")
        if explicit and self.pressure_kpa <= 0:
            raise InvalidSpecError("pressure must be > 0")
        if bp:
            if self.systolic_mmhg is None or self.diastolic_mmhg is None:
                raise InvalidSpecError("both systolic and diastolic pressures are required")
            map_pressure(self.systolic_mmhg, self.diastolic_mmhg)

    def kpa(self):
        self.validate()
        if self.pressure_kpa is not None:
            return float(self.pressure_kpa)
        return map_pressure(self.systolic_mmhg, self.diastolic_mmhg)

    def mpa(self):
        return self.kpa() * KPA_TO_MPA


@dataclass
class BCSpec:
    fixed_sets: tuple = ("top_ring", "bottom_ring")
    components: tuple = (0, 1, 2)

    def validate(self):
        if not self.fixed_sets:
            raise InvalidSpecError("at least one fixed node set is required")
        if not set(self.components) <= {0, 1, 2} or not self.components:
            raise InvalidSpecError("components must be a nonempty subset of (0, 1, 2)")
