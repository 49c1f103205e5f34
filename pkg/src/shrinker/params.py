"""Parameter ledger for the construction.

All knobs that shape the surface live here.  Derived quantities (tau, wing
length, truncation radii) are exposed as properties so a params object is a
single source of truth for meshing, solving and reporting.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ConstructionParams:
    """Full parameter set for one construction.

    Parameters
    ----------
    m : int
        Rotational symmetry order; sets the scale tau = sqrt(2)/m.
    b : float
        Unbalancing angle (radians).  Must satisfy |b| <= zeta*tau and
        |b| < 1/10 (the tilt map is only defined for small angles).
    a : float
        Wing offset of the saddle template: the top wing starts at height
        z = a.  Configuration value; see notes in the README about the
        interplay with ``epsilon`` at small m.
    delta_s : float
        Wing-length parameter; wings are truncated at s = 5*delta_s/tau.
    gamma : float
        Exponential decay rate in (0,1) used by the weighted norms.
    epsilon : float
        Decay budget used by the wing-offset search (`scherk.determine_a`).
    zeta : float
        Size of the admissible box |b| <= zeta*tau, ||v||_2 <= zeta*tau for
        the fixed-point loop.
    delta_c : float
        Half-width of the shooting bracket around sqrt(2) for the cap
        intercept c.
    delta_theta : float
        Admissible deviation of shooting target angles.
    ds : float
        Grid spacing in the conformal (s, y) chart of the wings.
    ny : int
        Number of y-cells per period (must be a multiple of 4).
    rho_max_factor : float
        Outer-plane truncation radius as a multiple of the solver inner
        radius R_bar.
    w_db : float
        Step used for the central-difference tilt derivative (w-field).
    R_tilde : float or None
        Intersection radius.  None means "fit it"; a fitted construction
        fills it in.
    """

    m: int
    b: float = 0.0
    a: float = 1.0
    delta_s: float = 0.65
    gamma: float = 0.1
    epsilon: float = 1e-3
    zeta: float = 10.0
    delta_c: float = 0.3
    delta_theta: float = 0.15
    ds: float = 0.3
    ny: int = 16
    rho_max_factor: float = 4.0
    w_db: float = 5e-3
    R_tilde: float | None = None

    def __post_init__(self):
        if self.m < 3:
            raise ValueError(f"symmetry order m must be >= 3, got {self.m}")
        if self.ny < 8 or self.ny % 4 != 0:
            raise ValueError(f"ny must be a multiple of 4 and >= 8, got {self.ny}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        if abs(self.b) >= 0.1:
            raise ValueError(f"|b| must be < 1/10, got {self.b}")
        if abs(self.b) > self.zeta * self.tau + 1e-15:
            raise ValueError(
                f"|b|={abs(self.b):g} exceeds zeta*tau={self.zeta * self.tau:g}"
            )
        if self.a <= 0 or self.delta_s <= 0 or self.ds <= 0:
            raise ValueError("a, delta_s and ds must be positive")
        if self.ds > 1.0 / 3.0:
            # piece boundaries are snapped to grid rows; the snapped row must
            # stay inside the flat part of the transition cutoffs
            raise ValueError(f"ds must be <= 1/3, got {self.ds}")
        if self.R_tilde is not None and not 1.3 <= self.R_tilde <= 1.5:
            raise ValueError(f"R_tilde must lie in [1.3, 1.5], got {self.R_tilde}")

    @property
    def tau(self) -> float:
        return SQRT2 / self.m

    @property
    def s_max(self) -> float:
        """Wing truncation coordinate 5*delta_s/tau."""
        return 5.0 * self.delta_s / self.tau

    @property
    def ubar_a(self) -> float:
        """Piece-splitting coordinate 8*|log tau|."""
        return 8.0 * abs(math.log(self.tau))

    @property
    def sigma_cut_hi(self) -> float:
        """Start (in s) of the wing-graph cutoff, 4*delta_s/tau."""
        return 4.0 * self.delta_s / self.tau

    @property
    def sigma_cut_lo(self) -> float:
        """End (in s) of the wing-graph cutoff, 3*delta_s/tau."""
        return 3.0 * self.delta_s / self.tau

    def validate_for_solve(self) -> None:
        """Check the orderings the patching iteration relies on."""
        if self.ubar_a + 2.0 > self.s_max:
            raise ValueError(
                f"need ubar_a + 2 <= 5*delta_s/tau for the patching cutoffs; "
                f"got {self.ubar_a + 2.0:.3f} > {self.s_max:.3f} "
                f"(increase delta_s or m)"
            )
        if self.ubar_a < self.sigma_cut_hi - 0.5:
            # the outer piece must start on the rotationally symmetric part
            # of the wings; warn-level condition, enforced strictly in tests
            pass

    def replace(self, **kw) -> "ConstructionParams":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tau"] = self.tau
        d["s_max"] = self.s_max
        d["ubar_a"] = self.ubar_a
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
