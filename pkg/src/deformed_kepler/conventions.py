"""Frozen sign and coefficient conventions.

The full bracket flow is the reference for every reduced formula.  Each
constant below was fixed once by comparing a printed reduced equation with
derivatives taken along high-accuracy flow trajectories;
:mod:`deformed_kepler.calibration` re-derives all of them from scratch and
the test suite checks that the re-derivation reproduces these values.
"""

from __future__ import annotations

from . import algebra

FLOW_CONVENTION = "dz/dtau = {H, z}"

# Second integral E1 = 2 m eps - c (s+1 - s-1) + kappa m alpha / r,
# with c = E1_C_MULT * m / T.
E1_C_MULT = 2.0
E1_KAPPA = 2.0

# Coefficients of the two printed (unconverged) E1 forms, kept for reporting.
E1_PRINTED_C_MULT = 1.0  # c = m^2 / T  -> multiplier m on m/T
E1_PRINTED_KAPPA = 1.0

# Summed free equations d(s1+s2)/dtau: signs of the printed right-hand sides.
SUM_RATE_SIGNS = (1, 1, 1)

# d(r^2)/dtau: sign relative to the printed bracket expression.
R2_RATE_SIGN = -1

# Coupling terms of d(s1)/dtau: multiplier on the printed coefficients
# (m alpha / (4 r^3 M^2) and m alpha / (2 r^3 M^2)).  The corrupted third
# entry is read as (s+1 s-2 - s+2 s-1).
COUPLING_MULT = 16.0
COUPLING_READING = "sp1*sm2 - sp2*sm1"

# Right-hand side of the first radial relation, relative to print.
ROW1_SIGN = -1

# Printed inverse matrix equals this sign times the true inverse.
MINV_PRINTED_SIGN = -1

# Radial quadratic form written in terms of the printed first relation:
# coefficients of (W1^2, W1*W2, W3^2) equal to l^2 / 2.
RADIAL_FORM = (2.0, 2.0, -0.5)
RADIAL_FORM_PRINTED = (-2.0, 2.0, -0.5)

# Rapidity equation da/dtau / sinh a = A_FREE_SIGN * (-4m/T)
#   - A_COUPLING_MULT * m^2 alpha rho / (2 M^2 T r^3 D)
A_FREE_SIGN = 1
A_COUPLING_MULT = 8.0

# ((t - m T^2/nu)/T)^2 = WORLD_TIME_SIGN * D * exp(-a) / (2 sinh a); print has -1.
WORLD_TIME_SIGN = 1


def conventions_document() -> dict:
    """The frozen constants as a JSON-ready mapping."""
    return {
        "flow": FLOW_CONVENTION,
        "xx_sign": algebra.XX_SIGN,
        "e1": {"c_mult": E1_C_MULT, "kappa": E1_KAPPA},
        "sum_rate_signs": list(SUM_RATE_SIGNS),
        "r2_rate_sign": R2_RATE_SIGN,
        "coupling": {"mult": COUPLING_MULT, "reading": COUPLING_READING},
        "row1_sign": ROW1_SIGN,
        "minv_printed_sign": MINV_PRINTED_SIGN,
        "radial_form": list(RADIAL_FORM),
        "a_eq": {"free_sign": A_FREE_SIGN, "coupling_mult": A_COUPLING_MULT},
        "world_time_sign": WORLD_TIME_SIGN,
    }
