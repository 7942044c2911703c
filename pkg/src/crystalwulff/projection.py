"""Projection of a set onto the family C(K) by cone-volume matching.

Given ``E`` close to ``K`` with ``|E| = |K|`` we look for the offset ``a``
with ``|E cap V_i^a| = |K^a cap V_i^a|`` for every cone.  The residual map is
``phi_i(a) = |K^a cap V_i^a| - |E cap V_i^a|``.

At ``E = K^a`` the Jacobian is exactly diagonal with entries
``area_i(K^a) / |sigma_i|``: moving facet ``i`` adds a slab that meets the other
cones only to second order.  This is ``n`` times the cone volume weight
``v_i^a = area_i(K^a) / (n |sigma_i|)``; the column sums of the Jacobian must
equal ``d|K^a|/da_i = area_i / |sigma_i|``, which pins the factor down.
"""

from dataclasses import dataclass, field

import numpy as np

from .crystal import (
    _check_offset,
    cone_fan,
    cone_volumes,
    offset_faces,
    renormalize_volume,
    sandwich_check,
)
from .errors import NoConvergence, NotClose, ValidationError, VanishingFacet
from .geometry import CellComplex, symmetric_difference_volume

DEFAULT_ETA = 0.1


@dataclass(frozen=True, eq=False)
class ProjectionProblem:
    norm: object
    E: CellComplex
    eta: float = DEFAULT_ETA
    tol: float = None  # defaults to 1e-10 |K|
    max_iter: int = 50
    polish: bool = True  # keep iterating below tol while the residual halves

    def __post_init__(self):
        object.__setattr__(self, "E", CellComplex.of(self.E))
        if self.tol is None:
            object.__setattr__(self, "tol", 1e-10 * self.norm.K.volume)
        if not 0.0 < self.eta < 1.0:
            raise ValidationError("eta must lie in (0, 1)")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValidationError("tol must be positive and max_iter at least 1")

    def check(self):
        """Raise :class:`NotClose` unless the sandwich and volume hypotheses hold."""
        K = self.norm.K
        vol = self.E.volume
        if abs(vol - K.volume) > 1e-9 * K.volume:
            raise NotClose(f"|E| = {vol!r} differs from |K| = {K.volume!r}",
                           volume_E=vol, volume_K=K.volume)
        if not sandwich_check(self.E, K, self.eta):
            raise NotClose(f"E is not sandwiched between (1 -+ {self.eta}) K", eta=self.eta)


@dataclass(frozen=True)
class ProjectionResult:
    a: np.ndarray
    residual: np.ndarray
    iterations: int
    ratio_report: float
    volume_renormalized: bool
    trace: tuple = field(default=())

    def to_dict(self):
        return {
            "a": self.a.tolist(),
            "residual": self.residual.tolist(),
            "iterations": self.iterations,
            "ratio_report": self.ratio_report,
            "volume_renormalized": self.volume_renormalized,
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["a"], dtype=float), np.array(d["residual"], dtype=float),
                   int(d["iterations"]), float(d["ratio_report"]),
                   bool(d["volume_renormalized"]), tuple(d.get("trace", ())))


def _mismatch(norm, E, a):
    of = offset_faces(norm, a, check=False)
    return of.areas * of.d / norm.dim - cone_volumes(E, cone_fan(norm, a)), of


def volume_mismatch(norm, E, a):
    """``phi_i(a) = |K^a cap V_i^a| - |E cap V_i^a|``."""
    a = _check_offset(norm, a)
    return _mismatch(norm, CellComplex.of(E), a)[0]


def cone_weights(norm, a):
    """``v_i^a = area_i(K^a) / (n |sigma_i|)``; at ``a = 0`` this is ``|K cap V_i|``."""
    a = _check_offset(norm, a)
    of = offset_faces(norm, a, check=False)
    return of.areas / (norm.dim * norm.sigma_norms)


def diagonal_jacobian(norm, a):
    """``d phi_i / d a_i = area_i(K^a) / |sigma_i| = n v_i^a``."""
    return norm.dim * cone_weights(norm, a)


def _try(norm, E, a):
    try:
        a = _check_offset(norm, a)
        phi, of = _mismatch(norm, E, a)
    except (VanishingFacet, ValidationError):
        return None
    return phi, of


def project_to_family(p, a0=None, min_step=2.0 ** -30):
    """Damped diagonal Newton for ``phi(a) = 0``.

    Steps ``a <- a - lam * phi / J`` with ``J`` the diagonal Jacobian and
    ``lam`` halved until the residual norm decreases.  A final dilation restores ``|K^a| = |K|`` exactly unless
    that would break the residual tolerance, in which case the unrenormalized
    iterate is returned with ``volume_renormalized = False``.
    """
    p.check()
    norm, E = p.norm, p.E
    a = np.zeros(norm.N) if a0 is None else _check_offset(norm, a0).copy()
    first = _try(norm, E, a)
    if first is None:
        raise VanishingFacet(-1, "starting offset is not admissible")
    phi, of = first
    res = float(np.max(np.abs(phi)))
    trace = [res]
    it = 1
    while res > p.tol or p.polish:
        if it >= p.max_iter:
            if res <= p.tol:
                break
            raise NoConvergence(f"no convergence in {p.max_iter} iterations",
                                residual=res, a=a)
        step = -phi * norm.sigma_norms / of.areas
        lam = 1.0
        cur = float(np.linalg.norm(phi))
        accepted = None
        # below tolerance only full steps are tried
        floor = min_step if res > p.tol else 1.0
        while lam >= floor:
            trial = _try(norm, E, a + lam * step)
            if trial is not None and float(np.linalg.norm(trial[0])) < cur:
                accepted = trial
                break
            lam *= 0.5
        if accepted is None:
            if res <= p.tol:
                break
            if _try(norm, E, a + min_step * step) is None:
                raise VanishingFacet(-1, "iterate left the admissible region")
            raise NoConvergence("line search stalled", residual=res, a=a)
        a = a + lam * step
        phi, of = accepted
        new = float(np.max(np.abs(phi)))
        trace.append(new)
        it += 1
        if res <= p.tol and new > 0.5 * res:
            res = new
            break
        res = new
    renorm = False
    ar = renormalize_volume(norm, a)
    trial = _try(norm, E, ar)
    if trial is not None and float(np.max(np.abs(trial[0]))) <= p.tol:
        a, phi = ar, trial[0]
        renorm = True
    sd = symmetric_difference_volume(E, norm.K)
    na = float(np.linalg.norm(a))
    ratio = na / sd if sd > 0 else 0.0
    return ProjectionResult(a, phi, it, ratio, renorm, tuple(trace))


def uniqueness_probe(p, starts, atol=1e-7):
    """Project from several starts; true iff all solutions agree within ``atol``."""
    sols = [project_to_family(p, a0=s).a for s in starts]
    ref = sols[0]
    return all(float(np.max(np.abs(s - ref))) <= atol for s in sols[1:])
