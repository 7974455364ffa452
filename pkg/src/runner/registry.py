"""Registered experiments.

Each experiment pairs the statement it checks with a params model and a
replica function ``(field, params, seed) -> rows``. Replicas are
independent; the runner derives their seeds and merges rows in replica
order. Summaries group rows by some columns and report Wilson intervals
for boolean columns and means for numeric ones.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.epidemic.cells import (
    SpreadEstimate,
    SpreadPlacement,
    collision_census,
    estimate_cell_event,
    estimate_nu,
    fit_collision_exponent,
    fit_spread_rate,
    spread_probability,
)
from src.epidemic.chernoff import chernoff_poisson
from src.epidemic.dynamics import run_si, run_sis
from src.epidemic.front import front_speed
from src.epidemic.models import CellEventSpec
from src.errors import ConfigurationError
from src.lattice.clusters import sample_field_with_origin
from src.lattice.field import ConductanceField, sample_conductances
from src.lattice.models import LatticeSpec, LawKind
from src.mixing.cloud import evolve_cloud, sample_cloud
from src.mixing.confined import kernel_oscillation_check
from src.mixing.experiment import (
    MarginPolicy,
    MixingParams,
    MixingSetup,
    margin_violations,
    prepare_mixing,
    run_mixing_rep,
)
from src.spectral.bounds import gaussian_bound_fit
from src.spectral.harnack import harnack_constant, oscillation_decay_check
from src.spectral.heat_kernel import (
    chapman_kolmogorov_error,
    dense_kernel_oracle,
    heat_kernel_exact,
)
from src.spectral.poincare import poincare_constant
from src.surface.fields import simulate_iid_field
from src.surface.relaxation import two_sided_surface
from src.surface.surrounds import surrounds_origin
from src.utils.stats import linear_fit, poisson_dispersion_test, wilson_interval
from src.walk.exit_times import fit_exit_tail

logger = logging.getLogger(__name__)

Row = dict[str, Any]

# Dense matrix exponentials are only attempted below this many vertices.
DENSE_ORACLE_LIMIT = 2048


class ExperimentParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def violations(self, lattice: LatticeSpec) -> list[str]:
        return []


@dataclass
class Experiment:
    name: str
    statement: str
    params_model: type[ExperimentParams]
    replica: Callable[[ConductanceField | None, Any, int], list[Row]]
    group_by: list[str] = field(default_factory=list)
    fit: Callable[[list[Row]], Row] | None = None
    # replicas that never touch the lattice get None instead of a sampled field
    needs_field: bool = True


EXPERIMENTS: dict[str, Experiment] = {}


def register(experiment: Experiment) -> Experiment:
    if experiment.name in EXPERIMENTS:
        raise ValueError(f"Experiment {experiment.name!r} registered twice")
    EXPERIMENTS[experiment.name] = experiment
    return experiment


def get_experiment(name: str) -> Experiment:
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise ConfigurationError(
            f"Unknown experiment {name!r}; known: {', '.join(sorted(EXPERIMENTS))}"
        ) from None


@lru_cache(maxsize=4)
def _field_from_json(spec_json: str) -> ConductanceField:
    spec = LatticeSpec.model_validate_json(spec_json)
    if spec.law == LawKind.DILUTE:
        return sample_field_with_origin(spec.box, spec.law_spec, spec.seed)[0]
    return sample_conductances(spec.box, spec.law_spec, spec.seed)


def build_field(spec: LatticeSpec) -> ConductanceField:
    """Field of a lattice spec, cached per process."""
    return _field_from_json(spec.model_dump_json())


def summarize(experiment: Experiment, rows: list[Row]) -> list[Row]:
    """Per group: Wilson intervals of boolean columns, means of numeric ones."""
    groups: dict[tuple, list[Row]] = {}
    for row in rows:
        groups.setdefault(tuple(row.get(k) for k in experiment.group_by), []).append(row)
    out = []
    for key, members in groups.items():
        summary: Row = dict(zip(experiment.group_by, key))
        summary["n"] = len(members)
        for col in members[0]:
            if col in experiment.group_by or col == "replica":
                continue
            values = [m[col] for m in members if m.get(col) is not None]
            if not values:
                continue
            if all(isinstance(v, bool) for v in values):
                p = wilson_interval(sum(values), len(values))
                summary[f"{col}_freq"] = p.value
                summary[f"{col}_low"] = p.low
                summary[f"{col}_high"] = p.high
            elif all(isinstance(v, (int, float)) for v in values):
                finite = [float(v) for v in values if math.isfinite(float(v))]
                if finite:
                    summary[f"{col}_mean"] = float(np.mean(finite))
        out.append(summary)
    if experiment.fit is not None and rows:
        fitted = experiment.fit(rows)
        if fitted:
            out.append({"fit": True, **fitted})
    return out


# --- Lattice and walks ---


class StationarityParams(ExperimentParams):
    lambda0: float = Field(default=2.0, gt=0)
    times: list[float] = Field(default_factory=lambda: [10.0, 50.0])


def _stationarity(fld: ConductanceField, p: StationarityParams, seed: int) -> list[Row]:
    rng = np.random.default_rng(seed)
    cloud = sample_cloud(fld, p.lambda0, seed=rng)
    rows, clock = [], 0.0
    for t in sorted(p.times):
        cloud = evolve_cloud(fld, cloud, t - clock, seed=rng).cloud
        clock = t
        counts = cloud.counts(fld.box.n_vertices)
        p_value = poisson_dispersion_test(counts, p.lambda0 * fld.mu)
        rows.append(
            {"t": t, "n_particles": len(cloud), "p_value": p_value, "passed": p_value > 0.01}
        )
    return rows


register(
    Experiment(
        name="stationarity",
        statement="A Poisson(lambda0 mu) particle cloud is invariant under independent walks.",
        params_model=StationarityParams,
        replica=_stationarity,
        group_by=["t"],
    )
)


class ExitTailParams(ExperimentParams):
    radii: list[int] = Field(default_factory=lambda: [10, 15, 20, 25, 30])
    times: list[float] = Field(default_factory=lambda: [5.0, 10.0, 20.0, 50.0])
    n: int = Field(default=10_000, ge=1)


def _exit_tail(fld: ConductanceField, p: ExitTailParams, seed: int) -> list[Row]:
    result = fit_exit_tail(fld, fld.box.origin, p.radii, p.times, p.n, seed)
    return [
        {
            "r": pt.r,
            "t": pt.t,
            "x": pt.r**2 / pt.t,
            "exits": pt.estimate.successes,
            "n": pt.estimate.trials,
            "frequency": pt.frequency,
        }
        for pt in result.points
    ]


def _fit_exit_tail(rows: list[Row]) -> Row:
    """Pool exits over replicas per (r, t), then fit the log frequencies against r^2/t."""
    pooled: dict[tuple[int, float], list[int]] = {}
    for row in rows:
        acc = pooled.setdefault((row["r"], row["t"]), [0, 0])
        acc[0] += row["exits"]
        acc[1] += row["n"]
    usable = [(r * r / t, e / n) for (r, t), (e, n) in pooled.items() if e > 0]
    if len(usable) < 2:
        return {}
    fit = linear_fit([u[0] for u in usable], np.log([u[1] for u in usable]))
    return {"c3": math.exp(fit.intercept), "c4": -fit.slope, "r_squared": fit.r_squared}


register(
    Experiment(
        name="exit-tail",
        statement="P[tau(x, r) < t] <= c3 exp(-c4 r^2 / t): exit probabilities decay in r^2/t.",
        params_model=ExitTailParams,
        replica=_exit_tail,
        group_by=["r", "t"],
        fit=_fit_exit_tail,
    )
)


# --- Heat kernels ---


class HeatKernelParams(ExperimentParams):
    t: float = Field(default=5.0, gt=0)
    s: float = Field(default=2.0, gt=0)


def _heat_kernel(fld: ConductanceField, p: HeatKernelParams, seed: int) -> list[Row]:
    x = fld.box.origin
    table = heat_kernel_exact(fld, p.t, [x])
    row: Row = {
        "t": p.t,
        "mass_error": float(abs(table.mass()[0] - 1.0)),
        "truncation_error": table.truncation_error,
        "ck_error": chapman_kolmogorov_error(fld, p.s, p.t),
    }
    if fld.box.n_vertices <= DENSE_ORACLE_LIMIT:
        oracle = dense_kernel_oracle(fld, p.t, [x])
        row["oracle_error"] = float(np.max(np.abs(table.p[0] - oracle[0])))
        full = heat_kernel_exact(fld, p.t, np.flatnonzero(fld.mu > 0))
        row["symmetry_error"] = full.symmetry_error()
    return [row]


register(
    Experiment(
        name="heat-kernel",
        statement="Uniformization gives the exact heat kernel: symmetric, conservative, semigroup.",
        params_model=HeatKernelParams,
        replica=_heat_kernel,
    )
)


class GaussianFitParams(ExperimentParams):
    times: list[float] = Field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0, 128.0])
    radii: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 6, 8, 10, 12])


def _gaussian_fit(fld: ConductanceField, p: GaussianFitParams, seed: int) -> list[Row]:
    fit = gaussian_bound_fit(fld, p.times, p.radii)
    return [
        {
            "c1": fit.c1,
            "c2": fit.c2,
            "c3": fit.c3,
            "c4": fit.c4,
            "r_squared": fit.r_squared,
            "upper_violations": fit.upper_violations,
            "lower_violations": fit.lower_violations,
        }
    ]


register(
    Experiment(
        name="gaussian-fit",
        statement="c3 t^{-d/2} e^{-c4 |x-y|^2/t} <= q_t(x, y) <= c1 t^{-d/2} e^{-c2 |x-y|^2/t}.",
        params_model=GaussianFitParams,
        replica=_gaussian_fit,
    )
)


class PhiParams(ExperimentParams):
    R: int = Field(default=8, ge=2)
    r0: int = Field(default=16, ge=2)
    slack: float = Field(default=0.05, ge=0)


def _phi(fld: ConductanceField, p: PhiParams, seed: int) -> list[Row]:
    x = fld.box.origin
    est = harnack_constant(fld, x, p.R)
    osc = oscillation_decay_check(fld, x, p.r0, c_h=est.c_h)
    rows = [
        {"scale": r, "ratio": ratio, "c_h": est.c_h, "theta": est.theta, "bound": osc.bound}
        for r, ratio in zip(osc.scales, osc.ratios)
    ]
    for row in rows:
        row["passed"] = row["ratio"] <= row["bound"] + p.slack
    return rows


register(
    Experiment(
        name="phi",
        statement="Parabolic Harnack: Osc(u, Q+) <= (1 - 1/C_H) Osc(u, Q) for caloric u.",
        params_model=PhiParams,
        replica=_phi,
        group_by=["scale"],
    )
)


class PoincareParams(ExperimentParams):
    radii: list[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    c_w: float = Field(default=2.0, ge=1)


def _poincare(fld: ConductanceField, p: PoincareParams, seed: int) -> list[Row]:
    rows = []
    for r in p.radii:
        res = poincare_constant(fld, fld.box.origin, r, p.c_w)
        rows.append({"r": r, "c_p": res.c_p, "finite": res.finite})
    return rows


register(
    Experiment(
        name="poincare",
        statement="Weak Poincare: Var_B(f) <= C_P r^2 E_{c_w B}(f) on balls B(x, r).",
        params_model=PoincareParams,
        replica=_poincare,
        group_by=["r"],
    )
)


# --- Mixing ---


class MixingExperimentParams(ExperimentParams, MixingParams):
    deltas: list[float] = Field(default_factory=lambda: [64.0, 256.0, 1024.0])

    def params_for(self, delta: float) -> MixingParams:
        fields = self.model_dump(include=set(MixingParams.model_fields))
        fields["Delta"] = delta
        return MixingParams(**fields)

    def violations(self, lattice: LatticeSpec) -> list[str]:
        return [
            f"Delta={delta:g}: {v}"
            for delta in self.deltas
            for v in margin_violations(self.params_for(delta), lattice.d)
        ]


class ConfinedMixingParams(MixingExperimentParams):
    """Confinement side is ``rho`` when set, else rho_factor * sqrt(Delta)."""

    margin: MarginPolicy = MarginPolicy.CONFINED
    rho_factor: float = Field(default=2.0, gt=0)

    def params_for(self, delta: float) -> MixingParams:
        params = super().params_for(delta)
        if params.rho is None:
            params = params.model_copy(update={"rho": self.rho_factor * math.sqrt(delta)})
        return params


# Setups hold dense kernels; keep only the few most recent per process.
_SETUPS: dict[tuple[int, str], MixingSetup] = {}
_MAX_SETUPS = 8


def _setup(fld: ConductanceField, params: MixingParams) -> MixingSetup:
    key = (id(fld), params.model_dump_json())
    if key not in _SETUPS:
        if len(_SETUPS) >= _MAX_SETUPS:
            _SETUPS.pop(next(iter(_SETUPS)))
        _SETUPS[key] = prepare_mixing(fld, params)
    return _SETUPS[key]


def _mixing(fld: ConductanceField, p: MixingExperimentParams, seed: int) -> list[Row]:
    rows = []
    seeds = np.random.SeedSequence(seed).generate_state(len(p.deltas), dtype=np.uint64)
    for delta, sub in zip(p.deltas, seeds):
        rep = run_mixing_rep(_setup(fld, p.params_for(delta)), int(sub))
        rows.append(
            {
                "Delta": delta,
                "success": rep.success,
                "contained": rep.contained,
                "n_particles": rep.n_particles,
                "resamples": rep.resamples,
                "failure_sites": len(rep.failure_sites),
            }
        )
    return rows


register(
    Experiment(
        name="mixing",
        statement="Local mixing: a dense cloud contains a Poisson((1-eps) beta mu) cloud after Delta.",
        params_model=MixingExperimentParams,
        replica=_mixing,
        group_by=["Delta"],
    )
)

register(
    Experiment(
        name="confined-mixing",
        statement="Local mixing holds for walks confined to displacement cubes of side rho.",
        params_model=ConfinedMixingParams,
        replica=_mixing,
        group_by=["Delta"],
    )
)


class KernelOscillationParams(ExperimentParams):
    deltas: list[float] = Field(default_factory=lambda: [64.0, 128.0, 256.0])
    ell: int = Field(default=4, ge=1)
    theta: float = Field(default=0.5, gt=0)
    rho: float | None = Field(default=None, gt=0)
    rho_factor: float = Field(default=2.0, gt=0)


def _kernel_oscillation(fld: ConductanceField, p: KernelOscillationParams, seed: int) -> list[Row]:
    rep = kernel_oscillation_check(
        fld, p.deltas, p.rho, p.ell, p.theta, rho_factor=None if p.rho else p.rho_factor
    )
    return [
        {"Delta": dt, "oscillation": osc, "slope": rep.slope, "predicted_slope": -fld.box.d / 2}
        for dt, osc in zip(rep.deltas, rep.oscillations)
    ]


register(
    Experiment(
        name="kernel-oscillation",
        statement="max |g(x,y) - g(z,y)| / mu_y <= C ell^Theta Delta^{-(d+Theta)/2} over a cube.",
        params_model=KernelOscillationParams,
        replica=_kernel_oscillation,
        group_by=["Delta"],
    )
)


# --- Epidemics ---


class SISpeedParams(ExperimentParams):
    lambda0: float = Field(default=2.0, ge=0)
    horizon: float = Field(default=400.0, gt=0)
    samples: int = Field(default=101, ge=2)
    burn_in: float = Field(default=0.2, ge=0, lt=1)
    slab: float = Field(default=1.0, gt=0)


def _si_speed(fld: ConductanceField, p: SISpeedParams, seed: int) -> list[Row]:
    run = run_si(
        fld, p.lambda0, p.horizon, seed,
        sample_times=np.linspace(0.0, p.horizon, p.samples), slab=p.slab, keep_trace=False,
    )
    fit = front_speed(run.series, p.burn_in)
    return [
        {
            "slope": fit.slope,
            "r_squared": fit.r_squared,
            "positive": fit.positive,
            "linear": fit.positive and fit.r_squared >= 0.9,
            "final_front": run.series.front[-1],
            "infected": run.series.infected_count[-1],
        }
    ]


register(
    Experiment(
        name="si-speed",
        statement="SI epidemic: liminf ||I_t||_1 / t > 0, the front grows linearly.",
        params_model=SISpeedParams,
        replica=_si_speed,
    )
)


class SISSurvivalParams(ExperimentParams):
    lambda0: float = Field(default=2.0, ge=0)
    gammas: list[float] = Field(default_factory=lambda: [0.001, 0.01, 0.1, 1.0])
    horizon: float = Field(default=100.0, gt=0)
    slab: float = Field(default=1.0, gt=0)


def _sis_survival(fld: ConductanceField, p: SISSurvivalParams, seed: int) -> list[Row]:
    rows = []
    for gamma in p.gammas:
        run = run_sis(
            fld, p.lambda0, gamma, p.horizon, seed,
            sample_times=[0.0, p.horizon], slab=p.slab, keep_trace=False,
        )
        rows.append(
            {
                "gamma": gamma,
                "survived": not run.series.extinct,
                "extinction_time": run.series.extinction_time,
            }
        )
    return rows


register(
    Experiment(
        name="sis-survival",
        statement="SIS epidemic: for small recovery rate the infection survives with positive probability.",
        params_model=SISSurvivalParams,
        replica=_sis_survival,
        group_by=["gamma"],
    )
)


def _cell_violations(spec: CellEventSpec, lattice: LatticeSpec) -> list[str]:
    out = spec.violations()
    need = (2 * spec.eta + 1) * spec.ell
    if need > lattice.side:
        out.append(f"super cube side {need} exceeds the lattice side {lattice.side}")
    return out


class CellParams(ExperimentParams, CellEventSpec):
    def violations(self, lattice: LatticeSpec) -> list[str]:
        return _cell_violations(self.cell_spec(), lattice)

    def cell_spec(self) -> CellEventSpec:
        return CellEventSpec(**self.model_dump(include=set(CellEventSpec.model_fields)))


def _cell_row(rep) -> Row:
    return {
        "e_st": rep.e_st,
        "f1": rep.f1,
        "f2": rep.f2,
        "f3": rep.f3,
        "collided": rep.collided,
    }


def _cell_event(fld: ConductanceField, p: CellParams, seed: int) -> list[Row]:
    report = estimate_cell_event(fld, p.cell_spec(), 1, seed)
    return [_cell_row(report.reps[0])]


register(
    Experiment(
        name="cell-event",
        statement="P[E_st] >= 1 - exp(-C lambda0 ell^{1/3}) for a space-time cell.",
        params_model=CellParams,
        replica=_cell_event,
    )
)


class NuParams(CellParams):
    eps: float = Field(default=0.1, ge=0, le=1)


def _nu(fld: ConductanceField, p: NuParams, seed: int) -> list[Row]:
    report = estimate_nu(fld, p.cell_spec(), p.eps, 1, seed)
    return [_cell_row(report.reps[0])]


register(
    Experiment(
        name="nu",
        statement="Cell event probability with (1-eps) lambda0 particles and confined motion.",
        params_model=NuParams,
        replica=_nu,
    )
)


class CollisionParams(CellParams):
    ells: list[int] = Field(default_factory=lambda: [27, 64, 125])

    def violations(self, lattice: LatticeSpec) -> list[str]:
        out = []
        for ell in self.ells:
            spec = self.cell_spec().model_copy(
                update={"ell": ell, "beta_time": self.beta_ratio * ell**2}
            )
            out.extend(f"ell={ell}: {v}" for v in _cell_violations(spec, lattice))
        return out


def _collision(fld: ConductanceField, p: CollisionParams, seed: int) -> list[Row]:
    rows = []
    for ell in p.ells:
        spec = p.cell_spec().model_copy(
            update={"ell": ell, "beta_time": p.beta_ratio * ell**2}
        )
        census = collision_census(fld, spec, np.random.default_rng([seed, ell]))
        rows.append({"ell": ell, "count": census.count, "n_background": census.n_background})
    return rows


def _fit_collision(rows: list[Row]) -> Row:
    ells = sorted({r["ell"] for r in rows})
    means = [float(np.mean([r["count"] for r in rows if r["ell"] == e])) for e in ells]
    if sum(m > 0 for m in means) < 2:
        return {}
    fit = fit_collision_exponent(ells, means)
    return {"exponent": fit.slope, "r_squared": fit.r_squared}


register(
    Experiment(
        name="collision",
        statement="The number of particles meeting the tagged one is Poisson with mean of order lambda0 ell^{1/3}.",
        params_model=CollisionParams,
        replica=_collision,
        group_by=["ell"],
        fit=_fit_collision,
    )
)


class SpreadParams(ExperimentParams):
    Ns: list[int] = Field(default_factory=lambda: [5, 10, 20])
    ell: int = Field(default=8, ge=1)
    eta: int = Field(default=2, ge=1)
    beta_time: float | None = Field(default=None, gt=0)
    z: list[int] = Field(default_factory=lambda: [2, 2])
    placement: SpreadPlacement = SpreadPlacement.UNIFORM
    collision_time: float | None = Field(default=None, gt=0)

    def violations(self, lattice: LatticeSpec) -> list[str]:
        out = []
        if len(self.z) != lattice.d:
            out.append(f"z has {len(self.z)} coordinates, lattice has d={lattice.d}")
        if any(abs(c) > self.eta for c in self.z):
            out.append(f"z={self.z} outside {{-eta..eta}}^d")
        out.extend(self.cell_spec.violations())
        need = (2 * self.eta + 1) * self.ell
        if need > lattice.side:
            out.append(f"super cube side {need} exceeds the lattice side {lattice.side}")
        return out

    @property
    def horizon(self) -> float:
        return 4.0 * self.ell**2 if self.beta_time is None else self.beta_time

    @property
    def cell_spec(self) -> CellEventSpec:
        return CellEventSpec(
            ell=self.ell, eta=self.eta, beta_time=self.horizon, collision_time=self.collision_time
        )


def _spread(fld: ConductanceField, p: SpreadParams, seed: int) -> list[Row]:
    rng = np.random.default_rng(seed)
    rows = []
    for n in p.Ns:
        est = spread_probability(
            fld,
            n,
            p.ell,
            p.eta,
            p.horizon,
            p.z,
            1,
            rng,
            placement=p.placement,
            collision_time=p.collision_time,
        )
        rows.append({"N": n, "reached": est.estimate.successes == 1})
    return rows


def _fit_spread(rows: list[Row]) -> Row:
    estimates = [
        SpreadEstimate(
            N=n,
            z=(),
            estimate=wilson_interval(
                sum(r["reached"] for r in rows if r["N"] == n),
                sum(1 for r in rows if r["N"] == n),
            ),
        )
        for n in sorted({r["N"] for r in rows})
    ]
    fit = fit_spread_rate(estimates)
    if fit.fit is None:
        return {}
    return {"c_p": fit.c_p, "r_squared": fit.fit.r_squared}


register(
    Experiment(
        name="spread",
        statement="Some of N particles reaches a neighbouring cube with probability >= 1 - exp(-N c_p).",
        params_model=SpreadParams,
        replica=_spread,
        group_by=["N"],
        fit=_fit_spread,
    )
)


class ChernoffParams(ExperimentParams):
    lams: list[float] = Field(default_factory=lambda: [1.0, 10.0, 100.0])
    epss: list[float] = Field(default_factory=lambda: [round(0.1 * k, 1) for k in range(1, 10)])


def _chernoff(fld: ConductanceField | None, p: ChernoffParams, seed: int) -> list[Row]:
    rows = []
    for lam in p.lams:
        for eps in p.epss:
            c = chernoff_poisson(lam, eps)
            rows.append(
                {
                    "lam": lam,
                    "eps": eps,
                    "lower_bound": c.lower_bound,
                    "lower_exact": c.lower_exact,
                    "upper_bound": c.upper_bound,
                    "upper_exact": c.upper_exact,
                    "holds": c.holds,
                }
            )
    return rows


register(
    Experiment(
        name="chernoff",
        statement="P[P < (1-eps) lam] < exp(-lam eps^2/2) and P[P > (1+eps) lam] < exp(-lam eps^2/4).",
        params_model=ChernoffParams,
        replica=_chernoff,
        group_by=["lam", "eps"],
        needs_field=False,
    )
)


# --- Surfaces ---


class SurfaceParams(ExperimentParams):
    p_bad: float = Field(default=0.01, ge=0, le=1)
    base_shape: list[int] = Field(default_factory=lambda: [32, 32])
    n_levels: int = Field(default=16, ge=1)
    D: int = Field(default=8, ge=0)


def _surface(fld: ConductanceField | None, p: SurfaceParams, seed: int) -> list[Row]:
    cells = simulate_iid_field(p.p_bad, tuple(p.base_shape), p.n_levels, seed)
    surface = two_sided_surface(cells)
    return [
        {
            "exists": surface.exists,
            "surrounds": surface.exists and surrounds_origin(surface, cells, p.D),
            "bad_fraction": cells.bad_fraction(),
        }
    ]


register(
    Experiment(
        name="surface",
        statement="A two-sided Lipschitz surface of good cells exists and surrounds the origin.",
        params_model=SurfaceParams,
        replica=_surface,
        needs_field=False,
    )
)
