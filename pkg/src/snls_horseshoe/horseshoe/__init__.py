"""Fixed-point family, slabs and slices, Conley-Moser checks and symbolic dynamics of P."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..global_map import GlobalMapModel, PoincareMap
from ..normal_form import DomainExitError, NormalFormRates
from .conley_moser import (ConleyMoserReport, InconclusiveError, stable_width, unstable_width,
                           verify_conley_moser)
from .family import (FixedPointEntry, FixedPointFamily, GenericityError, RefinementError,
                     asymptotic_point, fixed_point_family, hat_coordinates, hat_distance,
                     refine_family, refine_fixed_point)
from .problem import AffineTestProblem, BoxProblem, NLSBoxProblem, SYMBOLS, branch_of_symbol
from .shooting import ShootingError
from .slabs import SlabError, SlabSpec, build_slabs
from .slices import Slice, SliceError, SliceSet, compute_slices
from .symbolic import (ItineraryError, ItineraryPoint, PeriodicCount, SymbolSequence,
                       conjugacy_residual, count_periodic_orbits, itinerary_to_point, shift_map)

__all__ = [
    "AffineTestProblem", "BoxProblem", "ConleyMoserReport", "FixedPointEntry", "FixedPointFamily",
    "GenericityError", "InconclusiveError", "ItineraryError", "ItineraryPoint", "NLSBoxProblem",
    "PeriodicCount", "RefinementError", "SYMBOLS", "ShootingError", "Slice", "SliceError",
    "SliceSet", "SlabError", "SlabSpec", "SymbolSequence", "asymptotic_point", "auto_select_l",
    "branch_of_symbol", "build_slabs", "compute_slices", "conjugacy_residual",
    "count_periodic_orbits", "fixed_point_family", "hat_coordinates", "hat_distance",
    "itinerary_to_point", "model_problem", "refine_family", "refine_fixed_point",
    "run_horseshoe", "shift_map", "stable_width", "unstable_width", "verify_conley_moser",
]


def model_problem(model: GlobalMapModel, rates: NormalFormRates, eta: float, l: int,
                  family: FixedPointFamily | None = None, refine: bool = True):
    """Box problem of the symmetric return map on S_hat_l, plus the three slabs.

    With ``refine`` the fixed points of labels 2l and 2l+1 are Newton-refined
    and required to lie in S_l.
    """
    P = PoincareMap(model, eta, rates, symmetric=True)
    if family is None:
        family = fixed_point_family(model, rates, l_range=range(0, 2 * l + 4), eta=eta)
    fixed = None
    if refine:
        fixed = [refine_fixed_point(P, asymptotic_point(family, k, model, eta, rates))
                 for k in (2 * l, 2 * l + 1)]
    S, S_sig, S_hat = build_slabs(family, rates, eta, l, fixed)
    return NLSBoxProblem(P, S_hat, S), (S, S_sig, S_hat), fixed


def auto_select_l(model: GlobalMapModel, rates: NormalFormRates, eta: float, l_max: int = 8,
                  grid: int = 64):
    """Smallest l for which compute_slices finds four disjoint slices.

    Returns (l, problem, slices, attempts) where attempts records why each
    smaller l was rejected.
    """
    family = fixed_point_family(model, rates, l_range=range(0, 2 * l_max + 4), eta=eta)
    attempts = {}
    for l in range(max(family.l0, 0), l_max + 1):
        try:
            problem, _, _ = model_problem(model, rates, eta, l, family)
            ss = compute_slices(problem, grid=grid)
        except (SlabError, SliceError, RefinementError, ShootingError, DomainExitError) as exc:
            attempts[l] = f"{type(exc).__name__}: {exc}"
            continue
        return l, problem, ss, attempts
    raise SliceError(f"no l <= {l_max} yields four disjoint slices", {"attempts": attempts})


@dataclass
class HorseshoeRun:
    l: int
    problem: BoxProblem
    slices: SliceSet
    report: ConleyMoserReport
    counts: dict = field(default_factory=dict)
    attempts: dict = field(default_factory=dict)


def run_horseshoe(model: GlobalMapModel, rates: NormalFormRates, eta: float, l: int | None = None,
                  depth: int = 8, period: int = 3, grid: int = 64, levels: int = 3) -> HorseshoeRun:
    attempts = {}
    if l is None:
        l, problem, ss, attempts = auto_select_l(model, rates, eta, grid=grid)
    else:
        problem, _, _ = model_problem(model, rates, eta, l)
        ss = compute_slices(problem, grid=grid)
    report = verify_conley_moser(ss, levels=levels)
    counts = {p: count_periodic_orbits(ss, p, report, depth) for p in range(1, period + 1)}
    return HorseshoeRun(l, problem, ss, report, counts, attempts)
